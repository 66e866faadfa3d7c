"""Declarative scenario configuration.

A scenario is a JSON document (or a named built-in preset) describing
the virtual deployment: hosts and links, which hosts run masters,
actors, and remote loggers, the applications, the users, and every
tunable knob. Validation failures raise ConfigError carrying the path
of the offending field, e.g. ``users[2].frame_count``.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

from .actor_runtime import ActorConfig
from .discovery import DiscoveryConfig
from .errors import ConfigError
from .ga_policies import POLICIES, GaParams
from .netsim import DEFAULT_LINK, HostSpec, LinkSpec, Topology, host_from_class
from .protocol import MASTER_PORT, Address
from .scheduler import SchedulerConfig
from .taskgraph import AppSpec, app_from_config, builtin_apps
from .telemetry import PROFILE_PERIOD_MS
from .user_sim import UserConfig

__all__ = ["ScenarioConfig", "parse_scenario", "load_scenario", "preset_names", "preset_tree"]

EXPERIMENT_KINDS = ("single", "convergence", "scalability", "reuse", "response", "discovery")


@dataclass
class ScenarioConfig:
    name: str
    seed: int
    experiment: dict
    policy: str
    scaling_enabled: bool
    time_limit_ms: float
    topology: Topology
    host_specs: dict[str, HostSpec]
    loggers: list[str]
    masters: list[str]
    actors: list[tuple[str, set, list]]  # (host, image set, initial master hosts)
    apps: dict[str, AppSpec]
    users: list[UserConfig]
    ga: GaParams
    scheduler: SchedulerConfig
    discovery: DiscoveryConfig
    actor_runtime: ActorConfig
    profile_period_ms: float = PROFILE_PERIOD_MS

    def clone(self, **overrides) -> "ScenarioConfig":
        """Independent copy with shallow overrides; list fields are re-listed."""
        fresh = replace(self)
        fresh.loggers = list(self.loggers)
        fresh.masters = list(self.masters)
        fresh.actors = [(host, set(images), list(masters)) for host, images, masters in self.actors]
        fresh.users = list(self.users)
        fresh.experiment = dict(self.experiment)
        fresh.discovery = replace(self.discovery)
        fresh.ga = replace(self.ga)
        fresh.scheduler = replace(self.scheduler)
        fresh.actor_runtime = replace(self.actor_runtime)
        for key, value in overrides.items():
            setattr(fresh, key, value)
        return fresh


def _need(tree: dict, key: str, path: str, kind=None):
    if key not in tree:
        raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
    value = tree[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"{path}.{key}" if path else key, f"expected {getattr(kind, '__name__', kind)}")
    return value


def _opt(tree: dict, key: str, default, path: str, kind=None):
    if key not in tree:
        return default
    return _need(tree, key, path, kind)


def _fill(target, tree: dict, path: str) -> None:
    """Copy known scalar fields from a config subtree onto a dataclass."""
    for key, value in tree.items():
        if not hasattr(target, key):
            raise ConfigError(f"{path}.{key}", "unknown field")
        setattr(target, key, value)
    try:
        target.validate()
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from exc


def _parse_topology(tree: dict, path: str):
    hosts_tree = _need(tree, "hosts", path, list)
    if not hosts_tree:
        raise ConfigError(f"{path}.hosts", "at least one host required")
    specs: dict[str, HostSpec] = {}
    for i, entry in enumerate(hosts_tree):
        hpath = f"{path}.hosts[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(hpath, "expected object")
        host = _need(entry, "host", hpath, str)
        if host in specs:
            raise ConfigError(hpath, f"duplicate host {host!r}")
        fields = {k: v for k, v in entry.items() if k not in ("host", "class")}
        try:
            if "class" in entry:
                specs[host] = host_from_class(host, entry["class"], **fields)
            else:
                specs[host] = HostSpec(host=host, **fields)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(hpath, str(exc)) from exc
    default_tree = _opt(tree, "default_link", None, path, dict)
    default = DEFAULT_LINK
    if default_tree is not None:
        default = LinkSpec(
            latency_ms=_need(default_tree, "latency_ms", f"{path}.default_link", (int, float)),
            data_rate_bps=_need(default_tree, "data_rate_bps", f"{path}.default_link", (int, float)),
        )
    links: dict[tuple, LinkSpec] = {}
    for i, entry in enumerate(_opt(tree, "links", [], path, list)):
        lpath = f"{path}.links[{i}]"
        a = _need(entry, "a", lpath, str)
        b = _need(entry, "b", lpath, str)
        for end in (a, b):
            if end not in specs:
                raise ConfigError(lpath, f"unknown host {end!r}")
        links[(a, b)] = LinkSpec(
            latency_ms=_need(entry, "latency_ms", lpath, (int, float)),
            data_rate_bps=_need(entry, "data_rate_bps", lpath, (int, float)),
        )
    topology = Topology(list(specs.values()), links=links, default_link=default)
    return topology, specs


def _parse_apps(tree: dict, path: str) -> dict[str, AppSpec]:
    apps = dict(builtin_apps())
    for i, entry in enumerate(_opt(tree, "custom", [], path, list)):
        apath = f"{path}.custom[{i}]"
        try:
            app = app_from_config(entry)
        except Exception as exc:
            raise ConfigError(apath, str(exc)) from exc
        apps[app.name] = app
    return apps


def _parse_users(tree_list: list, path: str, apps: dict, specs: dict, masters: list) -> list[UserConfig]:
    users = []
    for i, entry in enumerate(tree_list):
        upath = f"{path}[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(upath, "expected object")
        host = _need(entry, "host", upath, str)
        if host not in specs:
            raise ConfigError(f"{upath}.host", f"unknown host {host!r}")
        app = _need(entry, "app", upath, str)
        if app not in apps:
            raise ConfigError(f"{upath}.app", f"unknown app {app!r}")
        master_host = _opt(entry, "master", masters[0], upath, str)
        if master_host not in masters:
            raise ConfigError(f"{upath}.master", f"host {master_host!r} runs no master")
        cfg = UserConfig(host=host, app=app, master=Address(master_host, MASTER_PORT))
        for key in (
            "frame_count",
            "frame_interval_ms",
            "frame_size_bytes",
            "start_at_ms",
            "timeout_ms",
            "start_after_user",
            "start_after_delay_ms",
        ):
            if key in entry:
                setattr(cfg, key, entry[key])
        after = cfg.start_after_user
        if after is not None and not (isinstance(after, int) and 0 <= after < i):
            raise ConfigError(f"{upath}.start_after_user", "must reference an earlier user index")
        try:
            cfg.validate()
        except ValueError as exc:
            raise ConfigError(upath, str(exc)) from exc
        users.append(cfg)
    return users


def parse_scenario(tree: dict) -> ScenarioConfig:
    if not isinstance(tree, dict):
        raise ConfigError("", "scenario root must be an object")
    name = _opt(tree, "name", "scenario", "", str)
    seed = _opt(tree, "seed", 0, "", int)
    policy = _opt(tree, "policy", "ohnsga", "", str)
    if policy not in POLICIES:
        raise ConfigError("policy", f"unknown policy {policy!r}; choices: {sorted(POLICIES)}")
    scaling = _opt(tree, "scaling_enabled", True, "", bool)
    time_limit = _opt(tree, "time_limit_ms", 600000.0, "", (int, float))
    if time_limit <= 0:
        raise ConfigError("time_limit_ms", "must be positive")

    experiment = _opt(tree, "experiment", {"kind": "single"}, "", dict)
    kind = _opt(experiment, "kind", "single", "experiment", str)
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError("experiment.kind", f"unknown kind {kind!r}; choices: {EXPERIMENT_KINDS}")
    experiment = dict(experiment, kind=kind)

    topology, specs = _parse_topology(_need(tree, "topology", "", dict), "topology")
    apps = _parse_apps(_opt(tree, "apps", {}, "", dict), "apps")

    components = _need(tree, "components", "", dict)
    loggers = _opt(components, "remote_loggers", [], "components", list)
    if not loggers:
        raise ConfigError("components.remote_loggers", "at least one remote logger required")
    masters = _need(components, "masters", "components", list)
    if not masters:
        raise ConfigError("components.masters", "at least one master required")
    for group, hosts in (("remote_loggers", loggers), ("masters", masters)):
        for host in hosts:
            if host not in specs:
                raise ConfigError(f"components.{group}", f"unknown host {host!r}")
        if len(set(hosts)) != len(hosts):
            raise ConfigError(f"components.{group}", "duplicate hosts")

    actors: list[tuple[str, set, list]] = []
    seen_actor_hosts = set()
    for i, entry in enumerate(_opt(components, "actors", [], "components", list)):
        apath = f"components.actors[{i}]"
        if isinstance(entry, str):
            host, images, initial = entry, {"*"}, list(masters)
        elif isinstance(entry, dict):
            host = _need(entry, "host", apath, str)
            images = set(_opt(entry, "images", ["*"], apath, list))
            initial = _opt(entry, "masters", list(masters), apath, list)
            for m in initial:
                if m not in masters:
                    raise ConfigError(f"{apath}.masters", f"host {m!r} runs no master")
        else:
            raise ConfigError(apath, "expected host string or object")
        if host not in specs:
            raise ConfigError(apath, f"unknown host {host!r}")
        if host in seen_actor_hosts:
            raise ConfigError(apath, f"host {host!r} already runs an actor")
        seen_actor_hosts.add(host)
        actors.append((host, images, initial))

    users = _parse_users(_opt(tree, "users", [], "", list), "users", apps, specs, masters)

    ga = GaParams()
    _fill(ga, _opt(tree, "ga", {}, "", dict), "ga")
    sched = SchedulerConfig()
    _fill(sched, _opt(tree, "scheduler", {}, "", dict), "scheduler")
    disc = DiscoveryConfig()
    _fill(disc, _opt(tree, "discovery", {}, "", dict), "discovery")
    actor_cfg = ActorConfig()
    _fill(actor_cfg, _opt(tree, "actor_runtime", {}, "", dict), "actor_runtime")
    period = _opt(tree, "profile_period_ms", PROFILE_PERIOD_MS, "", (int, float))
    if period <= 0:
        raise ConfigError("profile_period_ms", "must be positive")

    return ScenarioConfig(
        name=name,
        seed=seed,
        experiment=experiment,
        policy=policy,
        scaling_enabled=scaling,
        time_limit_ms=float(time_limit),
        topology=topology,
        host_specs=specs,
        loggers=list(loggers),
        masters=list(masters),
        actors=actors,
        apps=apps,
        users=users,
        ga=ga,
        scheduler=sched,
        discovery=disc,
        actor_runtime=actor_cfg,
        profile_period_ms=float(period),
    )


def load_scenario(ref: str) -> ScenarioConfig:
    """Load a scenario from a JSON file path or a built-in preset name."""
    if os.path.exists(ref):
        try:
            with open(ref, encoding="utf-8") as fh:
                tree = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(ref, f"not valid JSON: {exc}") from exc
        return parse_scenario(tree)
    if ref in PRESETS:
        return parse_scenario(preset_tree(ref))
    raise ConfigError("scenario", f"{ref!r} is neither a file nor a preset; presets: {preset_names()}")


# ---------------------------------------------------------------------------
# Built-in presets
# ---------------------------------------------------------------------------


def _host(host: str, klass: str, **extra) -> dict:
    entry = {"host": host, "class": klass}
    entry.update(extra)
    return entry


def _smoke_tree() -> dict:
    return {
        "name": "smoke",
        "seed": 7,
        "experiment": {"kind": "single"},
        "policy": "ohnsga",
        "time_limit_ms": 120000.0,
        "topology": {
            "hosts": [_host("10.0.0.1", "desktop"), _host("10.0.0.2", "rpi4")],
            "default_link": {"latency_ms": 2.0, "data_rate_bps": 100e6},
        },
        "components": {
            "remote_loggers": ["10.0.0.1"],
            "masters": ["10.0.0.1"],
            "actors": ["10.0.0.2"],
        },
        "users": [
            {"host": "10.0.0.1", "app": "VOCR", "frame_count": 2, "frame_interval_ms": 500.0, "start_at_ms": 50.0}
        ],
        "ga": {"pop_size": 16, "max_iteration_num": 20, "n_parents": 6, "n_offsprings": 8},
    }


def _convergence_tree() -> dict:
    # Master and user sit on a gateway host; the five compute hosts mirror
    # the hardware mix of the experiments: two slow edge boards, one fast
    # desktop, and two cloud instances further away.
    edge_link = {"latency_ms": 2.0, "data_rate_bps": 200e6}
    cloud_link = {"latency_ms": 40.0, "data_rate_bps": 40e6}
    gateway = "10.0.0.1"
    edges = ["10.0.0.11", "10.0.0.12", "10.0.0.13"]
    clouds = ["10.0.0.21", "10.0.0.22"]
    links = []
    for h in edges:
        links.append({"a": gateway, "b": h, **edge_link})
    for h in clouds:
        links.append({"a": gateway, "b": h, **cloud_link})
    return {
        "name": "convergence",
        "seed": 11,
        "experiment": {"kind": "convergence", "seeds": 20, "policies": ["ohnsga", "nsga2", "random"]},
        "policy": "ohnsga",
        "time_limit_ms": 600000.0,
        "topology": {
            "hosts": [
                _host(gateway, "desktop"),
                _host(edges[0], "rpi4"),
                _host(edges[1], "rpi4"),
                _host(edges[2], "desktop"),
                _host(clouds[0], "cloud-2c"),
                _host(clouds[1], "cloud-4c"),
            ],
            "default_link": {"latency_ms": 8.0, "data_rate_bps": 80e6},
            "links": links,
        },
        "components": {
            "remote_loggers": [gateway],
            "masters": [gateway],
            "actors": edges + clouds,
        },
        "users": [{"host": gateway, "app": "GameOfLife", "frame_count": 1, "start_at_ms": 50.0}]
        + [
            {
                "host": gateway,
                "app": "GameOfLife",
                "frame_count": 1,
                "start_after_user": k,
                "start_after_delay_ms": 500.0,
            }
            for k in range(3)
        ],
        "ga": {"pop_size": 20, "max_iteration_num": 30, "n_parents": 6, "n_offsprings": 10},
    }


def _scalability_tree() -> dict:
    # One parent master plus five desktop workers; sixteen users ask for a
    # mix of both applications at the same instant.
    master = "10.0.1.1"
    workers = [f"10.0.1.{10 + i}" for i in range(5)]
    device = "10.0.1.100"
    users = []
    for i in range(16):
        app = "GameOfLife" if i % 2 == 0 else "VOCR"
        users.append(
            {
                "host": device,
                "app": app,
                "frame_count": 1,
                "start_at_ms": 100.0,
                "timeout_ms": 400000.0,
            }
        )
    return {
        "name": "scalability",
        "seed": 13,
        "experiment": {"kind": "scalability", "counts": [1, 2, 4, 8, 16]},
        "policy": "ohnsga",
        "time_limit_ms": 900000.0,
        "topology": {
            "hosts": [_host(master, "desktop"), _host(device, "rpi4")]
            + [_host(h, "desktop") for h in workers],
            "default_link": {"latency_ms": 2.0, "data_rate_bps": 200e6},
        },
        "components": {
            "remote_loggers": [master],
            "masters": [master],
            "actors": workers,
        },
        "users": users,
        "ga": {"pop_size": 24, "max_iteration_num": 40, "n_parents": 8, "n_offsprings": 12},
        "scheduler": {"max_sched_count": 2},
        "actor_runtime": {"master_startup_ms": 300.0, "scale_grace_ms": 50.0},
    }


def _reuse_tree() -> dict:
    # Everything on one desktop host: the reuse effect is then pure startup
    # and scheduling time, with no network noise.
    box = "10.0.2.1"
    return {
        "name": "reuse",
        "seed": 17,
        "experiment": {"kind": "reuse", "apps": ["GameOfLife", "VOCR"]},
        "policy": "ohnsga",
        "time_limit_ms": 1500000.0,
        "topology": {"hosts": [_host(box, "desktop")]},
        "components": {
            "remote_loggers": [box],
            "masters": [box],
            "actors": [box],
        },
        "users": [
            {"host": box, "app": "GameOfLife", "frame_count": 1, "start_at_ms": 50.0, "timeout_ms": 600000.0},
            {
                "host": box,
                "app": "GameOfLife",
                "frame_count": 1,
                "start_after_user": 0,
                "start_after_delay_ms": 500.0,
                "timeout_ms": 600000.0,
            },
        ],
    }


def _response_tree() -> dict:
    # Heterogeneous trio of actor hosts, linear VOCR pipeline, one warm-up
    # request and one measured request after the profiles settle.
    master = "10.0.3.1"
    actors = ["10.0.3.11", "10.0.3.12", "10.0.3.13"]
    return {
        "name": "response",
        "seed": 19,
        "experiment": {"kind": "response", "seeds": 20, "policies": ["ohnsga", "nsga2", "random"]},
        "policy": "ohnsga",
        "time_limit_ms": 600000.0,
        "topology": {
            "hosts": [
                _host(master, "desktop"),
                _host(actors[0], "rpi4"),
                _host(actors[1], "desktop"),
                _host(actors[2], "cloud-2c"),
            ],
            "default_link": {"latency_ms": 5.0, "data_rate_bps": 100e6},
            "links": [
                {"a": master, "b": actors[2], "latency_ms": 35.0, "data_rate_bps": 50e6}
            ],
        },
        "components": {
            "remote_loggers": [master],
            "masters": [master],
            "actors": actors,
        },
        "users": [
            {"host": master, "app": "VOCR", "frame_count": 1, "start_at_ms": 50.0},
            {
                "host": master,
                "app": "VOCR",
                "frame_count": 1,
                "start_after_user": 0,
                "start_after_delay_ms": 2500.0,
            },
        ],
        "ga": {"pop_size": 16, "max_iteration_num": 20, "n_parents": 6, "n_offsprings": 8},
    }


def _discovery_tree() -> dict:
    # Two masters with disjoint halves of the actor fleet; discovery makes
    # both registries converge to the full set.
    hosts = [f"10.0.4.{i}" for i in range(1, 9)]
    m1, m2 = hosts[0], hosts[1]
    half1, half2 = hosts[2:5], hosts[5:]
    return {
        "name": "discovery",
        "seed": 23,
        "experiment": {"kind": "discovery", "ticks": 3},
        "time_limit_ms": 60000.0,
        "topology": {
            "hosts": [_host(h, "rpi4") for h in hosts],
            "default_link": {"latency_ms": 3.0, "data_rate_bps": 100e6},
        },
        "components": {
            "remote_loggers": [m1],
            "masters": [m1, m2],
            "actors": [{"host": h, "masters": [m1]} for h in half1]
            + [{"host": h, "masters": [m2]} for h in half2],
        },
        "users": [],
        "discovery": {"enabled": True, "interval_ms": 1000.0, "net_mask": 24, "grace_ms": 50.0},
    }


PRESETS = {
    "smoke": _smoke_tree,
    "convergence": _convergence_tree,
    "scalability": _scalability_tree,
    "reuse": _reuse_tree,
    "response": _response_tree,
    "discovery": _discovery_tree,
}


def preset_names() -> list[str]:
    return sorted(PRESETS)


def preset_tree(name: str) -> dict:
    return PRESETS[name]()
