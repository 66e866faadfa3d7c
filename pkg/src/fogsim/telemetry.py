"""Telemetry: append-only log stores, profile views, and the remote logger.

Three databases mirror what the orchestration components record about the
system: task images present on hosts, host resource profiles, and performance
samples (link, processing, response).  Ingestion validates each record
individually and reports a reason per rejected record; accepted records are
append-only.  The freshest view of any host is the record with the largest
sampled_at, later insertion winning ties.
"""

from __future__ import annotations

import math

from . import protocol
from .protocol import (
    Address,
    ComponentKind,
    HostProfile,
    ImageRecord,
    LinkSample,
    LogUpload,
    MessageEnvelope,
    Probe,
    ProbeReply,
    ProcessingSample,
    ResponseSample,
    PERF_RECORD_TYPES,
    RECORD_TYPES,
)

PROFILE_PERIOD_MS = 1000.0
STALE_PERIODS = 3


def validate_record(record) -> str | None:
    """Reason the record is unacceptable, or None if it is fine."""

    if not isinstance(record, RECORD_TYPES):
        return f"not a telemetry record: {type(record).__name__}"
    if record.sampled_at < 0 or not math.isfinite(record.sampled_at):
        return "sampled_at must be a finite non-negative time"
    if isinstance(record, HostProfile):
        if record.cpu_cores <= 0:
            return "cpu_cores must be positive"
        if record.cpu_freq_ghz <= 0 or not math.isfinite(record.cpu_freq_ghz):
            return "cpu_freq_ghz must be positive and finite"
        if record.mem_capacity_mb <= 0:
            return "mem_capacity_mb must be positive"
        if not 0.0 <= record.cpu_util <= 1.0:
            return "cpu_util must lie in [0, 1]"
        if not 0.0 <= record.mem_util <= 1.0:
            return "mem_util must lie in [0, 1]"
    elif isinstance(record, ImageRecord):
        if not record.task:
            return "task name must be non-empty"
    elif isinstance(record, LinkSample):
        if record.latency_ms < 0:
            return "latency_ms must be non-negative"
        if record.data_rate_bps <= 0:
            return "data_rate_bps must be positive"
    elif isinstance(record, ProcessingSample):
        if record.processing_ms < 0:
            return "processing_ms must be non-negative"
    elif isinstance(record, ResponseSample):
        if record.response_ms < 0:
            return "response_ms must be non-negative"
    return None


def latest_profiles(records) -> dict:
    """Freshest record per key; larger sampled_at wins, insertion order breaks ties."""

    best: dict = {}
    for record in records:
        if isinstance(record, HostProfile):
            key = record.host
        elif isinstance(record, ImageRecord):
            key = (record.host, record.task)
        elif isinstance(record, LinkSample):
            key = (record.host_a, record.host_b)
        elif isinstance(record, ProcessingSample):
            key = (record.task, record.host)
        elif isinstance(record, ResponseSample):
            key = record.request_id
        else:
            continue
        held = best.get(key)
        if held is None or record.sampled_at >= held.sampled_at:
            best[key] = record
    return best


class LogStore:
    """Append-only record databases with validating ingestion."""

    def __init__(self):
        self.images: list[ImageRecord] = []
        self.resources: list[HostProfile] = []
        self.perf: list = []

    def ingest(self, records) -> tuple[int, list]:
        """Returns (accepted count, [(record, reason), ...] for rejects)."""

        accepted = 0
        rejected = []
        for record in records:
            reason = validate_record(record)
            if reason is not None:
                rejected.append((record, reason))
                continue
            if isinstance(record, ImageRecord):
                self.images.append(record)
            elif isinstance(record, HostProfile):
                self.resources.append(record)
            else:
                self.perf.append(record)
            accepted += 1
        return accepted, rejected

    def all_records(self) -> list:
        return list(self.images) + list(self.resources) + list(self.perf)

    def latest_host_profiles(self) -> dict[str, HostProfile]:
        return latest_profiles(self.resources)

    def latest_links(self) -> dict[tuple[str, str], LinkSample]:
        return latest_profiles(r for r in self.perf if isinstance(r, LinkSample))

    def latest_images(self) -> dict[tuple[str, str], ImageRecord]:
        return latest_profiles(self.images)

    def snapshot(self) -> list:
        """Latest record per key, deterministically ordered; feeds master syncs."""

        out = []
        profiles = self.latest_host_profiles()
        out.extend(profiles[key] for key in sorted(profiles))
        images = self.latest_images()
        out.extend(images[key] for key in sorted(images))
        links = self.latest_links()
        out.extend(links[key] for key in sorted(links))
        return out

    # -- persistence --------------------------------------------------------

    def save(self, path: str):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for record in self.all_records():
                fh.write(protocol.encode_record(record) + "\n")

    @classmethod
    def load(cls, path: str) -> "LogStore":
        store = cls()
        with open(path, "r", encoding="utf-8") as fh:
            records = [protocol.decode_record(line) for line in fh if line.strip()]
        store.ingest(records)
        return store


def rate_from_profile(profile: HostProfile) -> float:
    """Work units per ms a host offers according to its latest profile."""

    return profile.cpu_freq_ghz * profile.cpu_cores * (1.0 - profile.cpu_util)


def sample_host(spec, compute, now: float, period_ms: float = PROFILE_PERIOD_MS) -> HostProfile:
    """Synthesize the profile an on-host profiler would report right now."""

    return HostProfile(
        host=spec.host,
        cpu_cores=spec.cpu_cores,
        cpu_freq_ghz=spec.cpu_freq_ghz,
        mem_capacity_mb=spec.mem_capacity_mb,
        cpu_util=compute.utilization(period_ms) if compute is not None else spec.base_cpu_util,
        mem_util=spec.base_mem_util,
        sampled_at=now,
    )


class TelemetryView:
    """One component's current knowledge of hosts, links, and images.

    Masters are constructed with the topology as ground truth (the desk-scale
    stand-in for an initial profiling pass) and then fold in uploaded records,
    freshest sample winning.
    """

    def __init__(self, topology=None):
        self.topology = topology
        self.host_profiles: dict[str, HostProfile] = {}
        self.links: dict[tuple[str, str], LinkSample] = {}
        self.images: dict[tuple[str, str], ImageRecord] = {}
        self.processing: dict[tuple[str, str], ProcessingSample] = {}
        if topology is not None:
            for spec in topology.hosts.values():
                self.observe(
                    HostProfile(
                        host=spec.host,
                        cpu_cores=spec.cpu_cores,
                        cpu_freq_ghz=spec.cpu_freq_ghz,
                        mem_capacity_mb=spec.mem_capacity_mb,
                        cpu_util=spec.base_cpu_util,
                        mem_util=spec.base_mem_util,
                        sampled_at=0.0,
                    )
                )

    def observe(self, record):
        if isinstance(record, HostProfile):
            held = self.host_profiles.get(record.host)
            if held is None or record.sampled_at >= held.sampled_at:
                self.host_profiles[record.host] = record
        elif isinstance(record, LinkSample):
            key = (record.host_a, record.host_b)
            held = self.links.get(key)
            if held is None or record.sampled_at >= held.sampled_at:
                self.links[key] = record
        elif isinstance(record, ImageRecord):
            key = (record.host, record.task)
            held = self.images.get(key)
            if held is None or record.sampled_at >= held.sampled_at:
                self.images[key] = record
        elif isinstance(record, ProcessingSample):
            key = (record.task, record.host)
            held = self.processing.get(key)
            if held is None or record.sampled_at >= held.sampled_at:
                self.processing[key] = record

    def observe_all(self, records):
        for record in records:
            self.observe(record)

    def host_profile(self, host: str) -> HostProfile | None:
        return self.host_profiles.get(host)

    def host_rate(self, host: str) -> float:
        profile = self.host_profiles.get(host)
        if profile is None:
            raise KeyError(f"no profile for host {host}")
        return rate_from_profile(profile)

    def link_latency_ms(self, src: str, dst: str) -> float:
        if src == dst:
            return 0.0
        sample = self.links.get((src, dst)) or self.links.get((dst, src))
        if sample is not None:
            return sample.latency_ms
        if self.topology is not None:
            return self.topology.link(src, dst).latency_ms
        return 0.0

    def link_transfer_ms(self, src: str, dst: str, frame_bytes: int) -> float:
        if src == dst:
            return 0.0
        sample = self.links.get((src, dst)) or self.links.get((dst, src))
        if sample is not None:
            if frame_bytes <= 0:
                return sample.latency_ms
            return sample.latency_ms + frame_bytes * 8.0 / sample.data_rate_bps * 1000.0
        if self.topology is not None:
            return self.topology.transfer_ms(src, dst, frame_bytes)
        return 0.0


class RemoteLogger:
    """Central log sink.  Masters that upload get the latest snapshot back."""

    def __init__(self, kernel, host: str, port: int = protocol.LOGGER_PORT):
        self.kernel = kernel
        self.addr = Address(host, port)
        self.store = LogStore()
        self.rejections: list = []
        kernel.bind(self.addr, self.on_message)

    def on_message(self, envelope: MessageEnvelope):
        payload = envelope.payload
        if isinstance(payload, Probe):
            self.kernel.send(
                MessageEnvelope(
                    source=self.addr,
                    destination=envelope.source,
                    payload=ProbeReply(kind=ComponentKind.RemoteLogger, actors=[]),
                )
            )
        elif isinstance(payload, LogUpload):
            _, rejected = self.store.ingest(payload.records)
            self.rejections.extend(rejected)
            sender = envelope.sender_id
            if sender is not None and sender.kind == ComponentKind.Master:
                self.kernel.send(
                    MessageEnvelope(
                        source=self.addr,
                        destination=envelope.source,
                        payload=LogUpload(records=self.store.snapshot()),
                    )
                )
