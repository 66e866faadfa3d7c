"""The Master component.

One master owns a registry of actors and users, takes placement
requests in FIFO order, prices its own scheduling work on the host it
runs on, and dispatches executor init/reuse messages. When saturated it
forwards users to a known sub-master or asks an actor to start a new
master on its host. It also relays the data path: user frames fan out
to entry actors, exit results flow back to the user, and the final
result of every exit task marks the request complete (which is what
feeds the reuse pool view).
"""
from __future__ import annotations

import zlib
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .discovery import Discovery, DiscoveryConfig
from .ga_policies import POLICIES, GaParams, HistoryStore
from .netsim import HostCompute, HostSpec, SimKernel
from .protocol import (
    MASTER_PORT,
    Address,
    AdvertiseMaster,
    ComponentId,
    ComponentKind,
    Data,
    ExecutorReady,
    ForwardToMaster,
    HostProfile,
    InitNewMaster,
    InitTaskExecutor,
    LogUpload,
    MessageEnvelope,
    PlacementRequest,
    Probe,
    ProbeReply,
    RegisterActor,
    RegisterUser,
    ResourcesReady,
    Result,
    ReuseTaskExecutor,
    WarnNoResources,
)
from .scaler import ScaleCandidate, select_scale_target
from .scheduler import (
    ResponseModel,
    SchedulerConfig,
    build_task_actors_map,
    dependency_lists,
    scheduling_work_units,
)
from .taskgraph import AppSpec
from .telemetry import PROFILE_PERIOD_MS, STALE_PERIODS, TelemetryView, sample_host

__all__ = ["RegisteredActor", "PlacementState", "Master"]


@dataclass
class RegisteredActor:
    """Registry row for one actor."""

    id: ComponentId
    addr: Address
    profile: HostProfile
    images: set
    last_seen: float


@dataclass
class PlacementState:
    """Everything this master knows about one placement request."""

    request_id: str
    app: str
    user_addr: Address
    frame_size_bytes: int
    enqueued_at: float
    status: str = "queued"
    sched_started_at: float | None = None
    decided_at: float | None = None
    ready_at: float | None = None
    completed_at: float | None = None
    first_data_at: float | None = None
    estimate: float | None = None
    evals: int = 0
    series: list = field(default_factory=list)
    assignment: dict = field(default_factory=dict)  # task -> actor Address
    reused: dict = field(default_factory=dict)  # task -> bool
    expected: set = field(default_factory=set)
    ready: set = field(default_factory=set)
    final_exits: set = field(default_factory=set)


class Master:
    """Registry, scheduler pump, relay, scaler hook, and discovery owner."""

    def __init__(
        self,
        kernel: SimKernel,
        spec: HostSpec,
        compute: HostCompute,
        apps: dict[str, AppSpec],
        logger: Address | None = None,
        policy: str = "ohnsga",
        ga_params: GaParams | None = None,
        sched_config: SchedulerConfig | None = None,
        discovery_config: DiscoveryConfig | None = None,
        scaling_enabled: bool = True,
        cool_off_ms: float = 30000.0,
        profile_period_ms: float = PROFILE_PERIOD_MS,
        seed: int = 0,
    ):
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}")
        self.kernel = kernel
        self.spec = spec
        self.compute = compute
        self.apps = apps
        self.logger = logger
        self.policy = policy
        self.ga_params = ga_params or GaParams()
        self.sched_config = sched_config or SchedulerConfig()
        self.scaling_enabled = scaling_enabled
        self.cool_off_ms = cool_off_ms
        self.period = profile_period_ms
        self.seed = seed
        self.address = Address(spec.host, MASTER_PORT)

        self._serial = 0
        self.id = self._next_id(ComponentKind.Master)
        self.actors: dict[Address, RegisteredActor] = {}
        self.users: dict[Address, ComponentId] = {}
        self.executor_ids: dict[tuple, ComponentId] = {}
        self.requests: dict[str, PlacementState] = {}
        self.queue: deque = deque()
        self.in_flight = 0
        self._sched_seq = 0
        self.known_masters: list[Address] = []
        self.pending_scale = False
        self.parked: deque = deque()
        self.history = HistoryStore()
        self.view = TelemetryView(kernel.topology)
        self.pool_view: dict[tuple, deque] = {}

        self.warns = 0
        self.forwards = 0
        self.scales_requested = 0
        self.reuses_dispatched = 0
        self.completed = 0
        self.protocol_anomalies = 0

        self.discovery = Discovery(
            kernel,
            kernel.topology,
            self.address,
            discovery_config or DiscoveryConfig(),
            send=self._send,
            is_registered=lambda addr: addr in self.actors,
            on_master=self._note_master,
            advertise=lambda addr: self._send(addr, AdvertiseMaster(master=self.address)),
        )

    # -- identity & plumbing ----------------------------------------------------

    def _next_id(self, kind: ComponentKind) -> ComponentId:
        cid = ComponentId(kind=kind, serial=self._serial, origin=self.address)
        self._serial += 1
        return cid

    def _send(self, dest: Address, payload, sender_id: ComponentId | None = None) -> None:
        self.kernel.send(MessageEnvelope(self.address, dest, payload, sender_id=sender_id))

    def start(self) -> None:
        self.kernel.bind(self.address, self._on_message)
        self.kernel.schedule(self.period, self._profile_tick)

    def adopt_scale_context(self, actor_addrs: list, requesters: list, grace_ms: float) -> None:
        """Bootstrap sequence for a master spawned by a scale request.

        Advertise to the parent's actors immediately so registrations are
        underway, then (one grace later) to the requesting masters, which
        unpark their queued users toward us.
        """
        for addr in actor_addrs:
            self._send(addr, AdvertiseMaster(master=self.address))
        for parent in requesters:
            self._note_master(parent)  # requesters are masters: forward targets

        def notify_parents():
            for parent in requesters:
                self._send(parent, AdvertiseMaster(master=self.address))

        self.kernel.schedule(grace_ms, notify_parents)

    def _profile_tick(self) -> None:
        profile = sample_host(self.spec, self.compute, self.kernel.now, self.period)
        self.view.observe(profile)
        if self.logger is not None:
            self._send(self.logger, LogUpload(records=[profile]), sender_id=self.id)
        self.discovery.maybe_tick(self.kernel.now)
        self._pump()
        self.kernel.schedule(self.period, self._profile_tick)

    # -- registry -----------------------------------------------------------------

    def _live_actors(self) -> list[RegisteredActor]:
        horizon = self.kernel.now - STALE_PERIODS * self.period
        return [entry for entry in self.actors.values() if entry.last_seen >= horizon]

    def _register_actor(self, source: Address, msg: RegisterActor) -> None:
        entry = self.actors.get(source)
        if entry is None:
            entry = RegisteredActor(
                id=self._next_id(ComponentKind.Actor),
                addr=source,
                profile=msg.profile,
                images=set(msg.images),
                last_seen=self.kernel.now,
            )
            self.actors[source] = entry
        else:
            entry.profile = msg.profile
            entry.images = set(msg.images)
            entry.last_seen = self.kernel.now
        self.view.observe(msg.profile)

    def _register_user(self, source: Address, msg: RegisterUser) -> None:
        if source not in self.users:
            self.users[source] = self._next_id(ComponentKind.User)
        seq = sum(1 for state in self.requests.values() if state.user_addr == source)
        request_id = f"{source.host}:{source.port}#{seq}"
        self._enqueue(request_id, msg.app, source, msg.frame_size_bytes)

    def _enqueue(self, request_id: str, app: str, user_addr: Address, frame_size: int) -> None:
        state = self.requests.get(request_id)
        if state is not None:
            # A request we forwarded away may bounce back when every master
            # is saturated; it re-enters the queue with its original clock.
            if state.status == "forwarded":
                state.status = "queued"
                self.queue.append(state)
                self._pump()
            return
        state = PlacementState(
            request_id=request_id,
            app=app,
            user_addr=user_addr,
            frame_size_bytes=frame_size,
            enqueued_at=self.kernel.now,
        )
        self.requests[request_id] = state
        self.queue.append(state)
        self._pump()

    # -- scheduling pump -----------------------------------------------------------

    def _pump(self) -> None:
        while self.queue:
            state = self.queue[0]
            live = self._live_actors()
            if not live or self.apps.get(state.app) is None:
                self.queue.popleft()
                self._warn(state)
                continue
            busy = (
                self.compute.utilization(self.period) > self.sched_config.max_cpu_util
                or self.in_flight > self.sched_config.max_sched_count
            )
            if not busy:
                self.queue.popleft()
                self._start_schedule(state, live)
                continue
            if not self.scaling_enabled:
                return
            self.queue.popleft()
            self._forward_or_scale(state)

    def _warn(self, state: PlacementState) -> None:
        state.status = "warned"
        self.warns += 1
        self._send(state.user_addr, WarnNoResources(request_id=state.request_id))

    def _start_schedule(self, state: PlacementState, live: list) -> None:
        app = self.apps[state.app]
        candidates = build_task_actors_map(app, live)
        if any(not lst for lst in candidates.values()):
            self._warn(state)
            return
        state.status = "scheduling"
        state.sched_started_at = self.kernel.now
        self.in_flight += 1
        self._sched_seq += 1
        model = ResponseModel(
            app,
            candidates,
            user_host=state.user_addr.host,
            master_host=self.spec.host,
            view=self.view,
            frame_size_bytes=state.frame_size_bytes,
        )
        rng = np.random.default_rng(
            [self.seed, zlib.crc32(self.spec.host.encode()), self._sched_seq]
        )
        policy_fn = POLICIES[self.policy]
        result = policy_fn(
            model.counts, model.estimate, self.ga_params, rng, history=self.history, app=state.app
        )
        work = scheduling_work_units(self.policy, self.ga_params, self.sched_config)
        self.compute.submit(work, lambda: self._commit(state, app, candidates, result))

    def _commit(self, state: PlacementState, app: AppSpec, candidates: dict, result) -> None:
        self.in_flight -= 1
        state.decided_at = self.kernel.now
        state.estimate = result.fitness
        state.series = list(result.series)
        state.evals = result.evals
        names = app.task_names()
        actor_by_task = {
            task: candidates[task][result.assignment[i]].addr for i, task in enumerate(names)
        }
        state.assignment = dict(actor_by_task)
        state.expected = set(names)
        state.ready = set()
        state.status = "waiting_ready"
        deps = dependency_lists(app, actor_by_task)
        now = self.kernel.now
        for task in names:
            addr = actor_by_task[task]
            idle = self.pool_view.get((addr, task))
            while idle and idle[0] <= now:
                idle.popleft()
            if idle:
                idle.popleft()
                state.reused[task] = True
                self.reuses_dispatched += 1
                self._send(
                    addr,
                    ReuseTaskExecutor(
                        request_id=state.request_id, app=state.app, task=task, dependencies=deps[task]
                    ),
                )
            else:
                state.reused[task] = False
                self._send(
                    addr,
                    InitTaskExecutor(
                        request_id=state.request_id, app=state.app, task=task, dependencies=deps[task]
                    ),
                )
        self._pump()

    # -- saturation: forward or scale ------------------------------------------------

    def _best_submaster(self) -> Address | None:
        best = None
        best_key = None
        for addr in self.known_masters:
            if addr == self.address:
                continue
            latency = self.view.link_latency_ms(self.spec.host, addr.host)
            profile = self.view.host_profile(addr.host)
            util = profile.cpu_util if profile is not None else 0.0
            key = (latency, util, addr)
            if best_key is None or key < best_key:
                best, best_key = addr, key
        return best

    def _forward_or_scale(self, state: PlacementState) -> None:
        target = self._best_submaster()
        if target is not None:
            state.status = "forwarded"
            self.forwards += 1
            self._send(state.user_addr, ForwardToMaster(sub_master=target))
            return
        self.parked.append(state)
        if self.pending_scale:
            return
        live = self._live_actors()
        master_hosts = {self.spec.host} | {addr.host for addr in self.known_masters}
        eligible = [entry for entry in live if entry.addr.host not in master_hosts]
        if not eligible:
            return  # nowhere to scale; stays parked until a master appears
        choice = select_scale_target(
            [
                ScaleCandidate(
                    address=entry.addr,
                    profile=entry.profile,
                    latency_ms=self.view.link_latency_ms(state.user_addr.host, entry.addr.host),
                )
                for entry in eligible
            ]
        )
        self.pending_scale = True
        self.scales_requested += 1
        self._send(
            choice.address,
            InitNewMaster(requester=self.address, actors=[entry.addr for entry in live]),
        )

    def _note_master(self, addr: Address) -> None:
        if addr != self.address and addr not in self.known_masters:
            self.known_masters.append(addr)
        self._unpark()

    def _unpark(self) -> None:
        if not self.parked or not any(a != self.address for a in self.known_masters):
            return
        parked, self.parked = self.parked, deque()
        for state in parked:
            self._forward_or_scale(state)

    # -- data path -------------------------------------------------------------------

    def _relay_data(self, msg: Data) -> None:
        state = self.requests.get(msg.request_id)
        if state is None or state.status not in ("streaming", "waiting_ready"):
            self.protocol_anomalies += 1
            return
        if state.first_data_at is None:
            state.first_data_at = self.kernel.now
        app = self.apps[state.app]
        seen: list[Address] = []
        for task in app.entry_tasks:
            addr = state.assignment[task]
            if addr not in seen:
                seen.append(addr)
                self._send(addr, msg)

    def _relay_result(self, msg: Result) -> None:
        state = self.requests.get(msg.request_id)
        if state is None:
            self.protocol_anomalies += 1
            return
        self._send(state.user_addr, msg)
        if not msg.final:
            return
        state.final_exits.add(msg.task)
        app = self.apps[state.app]
        if state.status == "streaming" and state.final_exits >= set(app.exit_tasks):
            state.status = "completed"
            state.completed_at = self.kernel.now
            self.completed += 1
            deadline = self.kernel.now + self.cool_off_ms
            for task, addr in state.assignment.items():
                self.pool_view.setdefault((addr, task), deque()).append(deadline)

    def _on_executor_ready(self, msg: ExecutorReady) -> None:
        state = self.requests.get(msg.request_id)
        if state is None or msg.task not in state.expected:
            self.protocol_anomalies += 1
            return
        if msg.task in state.ready:
            return
        state.ready.add(msg.task)
        key = (msg.request_id, msg.task)
        if key not in self.executor_ids:
            self.executor_ids[key] = self._next_id(ComponentKind.TaskExecutor)
        if state.status == "waiting_ready" and state.ready == state.expected:
            state.status = "streaming"
            state.ready_at = self.kernel.now
            self._send(state.user_addr, ResourcesReady(request_id=msg.request_id))

    # -- dispatch ---------------------------------------------------------------------

    def _on_message(self, env: MessageEnvelope) -> None:
        payload = env.payload
        if isinstance(payload, RegisterActor):
            self._register_actor(env.source, payload)
        elif isinstance(payload, RegisterUser):
            self._register_user(env.source, payload)
        elif isinstance(payload, PlacementRequest):
            self._enqueue(payload.request_id, payload.app, env.source, payload.frame_size_bytes)
        elif isinstance(payload, ExecutorReady):
            self._on_executor_ready(payload)
        elif isinstance(payload, Data):
            self._relay_data(payload)
        elif isinstance(payload, Result):
            self._relay_result(payload)
        elif isinstance(payload, Probe):
            self._send(
                env.source, ProbeReply(kind=ComponentKind.Master, actors=list(self.actors))
            )
        elif isinstance(payload, ProbeReply):
            self.discovery.on_probe_reply(env.source, payload)
        elif isinstance(payload, AdvertiseMaster):
            self.pending_scale = False
            self._note_master(payload.master)
        elif isinstance(payload, LogUpload):
            self._on_log_upload(env.source, payload)
        else:
            self.protocol_anomalies += 1

    def _on_log_upload(self, source: Address, msg: LogUpload) -> None:
        self.view.observe_all(msg.records)
        entry = self.actors.get(source)
        if entry is not None:
            entry.last_seen = self.kernel.now
            for record in msg.records:
                if isinstance(record, HostProfile) and record.host == source.host:
                    entry.profile = record
            return
        if source in self.users and self.logger is not None:
            self._send(self.logger, LogUpload(records=msg.records))
