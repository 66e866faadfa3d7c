"""Placement scheduling: candidate maps, the response estimator, GA glue.

The response model here is the single source of truth for end-to-end timing.
A frame travels user -> master -> entry executors, flows down the task DAG
(an edge between co-located tasks is free), and results return exit ->
master -> user.  Node cost is compute_cost divided by the profiled host rate;
edge cost is link latency plus whole-frame transmission time.  The simulator
enacts exactly these hops with the same arithmetic, so measured response
times match estimates by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ga_policies import GaParams
from .taskgraph import AppSpec
from .telemetry import TelemetryView


@dataclass
class SchedulerConfig:
    max_cpu_util: float = 0.8
    max_sched_count: int = 4
    sched_base_units: float = 100.0
    sched_eval_units: float = 50.0

    def validate(self):
        if not 0.0 < self.max_cpu_util <= 1.0:
            raise ValueError("max_cpu_util must lie in (0, 1]")
        if self.max_sched_count < 0:
            raise ValueError("max_sched_count must be non-negative")
        if self.sched_base_units < 0 or self.sched_eval_units < 0:
            raise ValueError("scheduling work units must be non-negative")


def nominal_evals(policy_name: str, params: GaParams) -> int:
    """Evaluation budget a policy burns, used to charge scheduling time.

    Deliberately independent of app size and memoization: the scheduler pays
    for its configured search budget, not for lucky cache hits.
    """

    if policy_name == "random":
        return params.max_iteration_num
    return params.pop_size + params.max_iteration_num * params.n_offsprings


def scheduling_work_units(policy_name: str, params: GaParams, config: SchedulerConfig) -> float:
    return config.sched_base_units + config.sched_eval_units * nominal_evals(policy_name, params)


def build_task_actors_map(app: AppSpec, actors) -> dict[str, list]:
    """Candidate actors per task: those that hold the task's image.

    `actors` is an iterable of registry entries with .images (task names or
    "*") in registration order, which keeps candidate indices deterministic.
    """

    candidates: dict[str, list] = {name: [] for name in app.task_names()}
    for actor in actors:
        images = set(actor.images)
        for task in app.task_names():
            if "*" in images or task in images:
                candidates[task].append(actor)
    return candidates


class ResponseModel:
    """Estimates end-to-end response for assignments of one placement request.

    Precomputes per-candidate node costs and memoizes link costs so a GA can
    afford tens of thousands of evaluations.
    """

    def __init__(self, app: AppSpec, candidates: dict[str, list], user_host: str,
                 master_host: str, view: TelemetryView, frame_size_bytes: int):
        self.app = app
        self.tasks = app.task_names()
        self.user_host = user_host
        self.master_host = master_host
        self.view = view
        self.frame_size_bytes = int(frame_size_bytes)
        self.candidate_hosts: list[list[str]] = [
            [actor.addr.host for actor in candidates[task]] for task in self.tasks
        ]
        self.counts = [len(hosts) for hosts in self.candidate_hosts]
        index = {name: i for i, name in enumerate(self.tasks)}
        self._parents = [[index[p] for p in app.parents(name)] for name in self.tasks]
        self._order = [index[name] for level in app.levels for name in level]
        self._entry = [index[name] for name in app.entry_tasks]
        self._exit = [index[name] for name in app.exit_tasks]
        rates: dict[str, float] = {}
        self._node_cost: list[list[float]] = []
        for i, name in enumerate(self.tasks):
            cost = app.tasks[name].compute_cost
            row = []
            for host in self.candidate_hosts[i]:
                if host not in rates:
                    rates[host] = view.host_rate(host)
                row.append(cost / rates[host])
            self._node_cost.append(row)
        self._out_bytes = [app.tasks[name].output_size_bytes for name in self.tasks]
        self._edge_cache: dict[tuple, float] = {}
        self._ingress_cache: dict[str, float] = {}
        self._egress_cache: dict[tuple, float] = {}

    def _edge_ms(self, src_host: str, dst_host: str, size: int) -> float:
        if src_host == dst_host:
            return 0.0
        key = (src_host, dst_host, size)
        cached = self._edge_cache.get(key)
        if cached is None:
            cached = self.view.link_transfer_ms(src_host, dst_host, size)
            self._edge_cache[key] = cached
        return cached

    def ingress_ms(self, entry_host: str) -> float:
        """User frame to an entry executor, relayed through the master."""

        cached = self._ingress_cache.get(entry_host)
        if cached is None:
            cached = self.view.link_transfer_ms(
                self.user_host, self.master_host, self.frame_size_bytes
            ) + self.view.link_transfer_ms(self.master_host, entry_host, self.frame_size_bytes)
            self._ingress_cache[entry_host] = cached
        return cached

    def egress_ms(self, exit_host: str, size: int) -> float:
        """Exit result back to the user, relayed through the master."""

        key = (exit_host, size)
        cached = self._egress_cache.get(key)
        if cached is None:
            cached = self.view.link_transfer_ms(exit_host, self.master_host, size) \
                + self.view.link_transfer_ms(self.master_host, self.user_host, size)
            self._egress_cache[key] = cached
        return cached

    def estimate(self, assignment) -> float:
        """Critical-path response time of one assignment, in virtual ms."""

        hosts = [self.candidate_hosts[i][assignment[i]] for i in range(len(self.tasks))]
        finish = [0.0] * len(self.tasks)
        for i in self._order:
            host = hosts[i]
            if self._parents[i]:
                start = 0.0
                for p in self._parents[i]:
                    arrival = finish[p] + self._edge_ms(hosts[p], host, self._out_bytes[p])
                    if arrival > start:
                        start = arrival
            else:
                start = self.ingress_ms(host)
            finish[i] = start + self._node_cost[i][assignment[i]]
        response = 0.0
        for i in self._exit:
            arrival = finish[i] + self.egress_ms(hosts[i], self._out_bytes[i])
            if arrival > response:
                response = arrival
        return response

    def hosts_for(self, assignment) -> dict[str, str]:
        return {
            name: self.candidate_hosts[i][assignment[i]] for i, name in enumerate(self.tasks)
        }


def estimate_response(app: AppSpec, placement: dict[str, object], user_host: str,
                      master_host: str, view: TelemetryView, frame_size_bytes: int) -> float:
    """One-shot estimate for an explicit task -> actor placement."""

    candidates = {task: [placement[task]] for task in app.task_names()}
    model = ResponseModel(app, candidates, user_host, master_host, view, frame_size_bytes)
    return model.estimate(tuple(0 for _ in app.task_names()))


def dependency_lists(app: AppSpec, actor_addr_by_task: dict) -> dict[str, list]:
    """Per task, the (neighbor task, neighbor actor address) wiring list.

    Lists both parents and children: an executor probes every distinct peer
    actor while connecting, forwards outputs to its children's actors, and
    join-counts frames per parent.
    """

    out: dict[str, list] = {}
    for task in app.task_names():
        neighbors = app.parents(task) + app.children(task)
        out[task] = [(peer, actor_addr_by_task[peer]) for peer in neighbors]
    return out
