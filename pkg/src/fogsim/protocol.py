"""Wire protocol: component identities, message payloads, and the frame codec.

Every byte that crosses a host boundary is a frame: a 4-byte big-endian length
prefix followed by a canonical tagged text body (JSON with sorted keys and
compact separators).  Equal envelopes always encode to identical bytes, which
is what makes simulated runs byte-reproducible and lets the loopback TCP
transport share one codec with the simulator.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, fields
from enum import Enum

from .errors import EncodingOverflow, NeedMoreBytes, ProtocolError

LENGTH_PREFIX = struct.Struct(">I")
MAX_BODY_BYTES = 2**32 - 1

# Conventional listening ports.  Discovery probes subnet hosts at the master
# and actor ports; everything else learns addresses from message traffic.
MASTER_PORT = 5000
ACTOR_PORT = 5001
LOGGER_PORT = 5002
USER_PORT_BASE = 5100
EXECUTOR_PORT_BASE = 5200

# Pseudo producer task for frames that originate at a user device.
SENSOR_TASK = "__sensor__"


class ComponentKind(Enum):
    Master = "Master"
    Actor = "Actor"
    TaskExecutor = "TaskExecutor"
    User = "User"
    RemoteLogger = "RemoteLogger"


@dataclass(frozen=True, order=True)
class Address:
    """Location of one component endpoint: IPv4 host plus port."""

    host: str
    port: int

    def __str__(self):
        return f"{self.host}:{self.port}"

    @classmethod
    def parse(cls, text: str) -> "Address":
        host, _, port = text.rpartition(":")
        return cls(host, int(port))


@dataclass(frozen=True, order=True)
class ComponentId:
    """Identity issued by a registering master: (kind, serial, issuing master)."""

    kind: ComponentKind
    serial: int
    origin: Address

    def __str__(self):
        return f"{self.kind.value.lower()}#{self.serial}@{self.origin}"


# ---------------------------------------------------------------------------
# Telemetry records.  They live here because they cross the wire inside
# RegisterActor and LogUpload; the telemetry module re-exports them.


@dataclass(frozen=True)
class HostProfile:
    """Capabilities and load of one host as reported by its profiler."""

    host: str
    cpu_cores: int
    cpu_freq_ghz: float
    mem_capacity_mb: float
    cpu_util: float
    mem_util: float
    sampled_at: float


@dataclass(frozen=True)
class ImageRecord:
    """One task image known (or known missing) on a host."""

    host: str
    task: str
    available: bool
    sampled_at: float


@dataclass(frozen=True)
class LinkSample:
    """Measured latency and data rate between an ordered host pair."""

    host_a: str
    host_b: str
    latency_ms: float
    data_rate_bps: float
    packet_size: int
    sampled_at: float


@dataclass(frozen=True)
class ProcessingSample:
    """Observed processing duration of one task on one host."""

    task: str
    host: str
    processing_ms: float
    sampled_at: float


@dataclass(frozen=True)
class ResponseSample:
    """End-to-end response observation for one request."""

    request_id: str
    app: str
    response_ms: float
    sampled_at: float


PERF_RECORD_TYPES = (LinkSample, ProcessingSample, ResponseSample)
RECORD_TYPES = (HostProfile, ImageRecord) + PERF_RECORD_TYPES


# ---------------------------------------------------------------------------
# Message payloads.  This is the complete vocabulary: every payload used
# anywhere in the system is one of these sixteen variants.


@dataclass
class RegisterActor:
    profile: HostProfile
    images: list = field(default_factory=list)  # task names, "*" = any


@dataclass
class RegisterUser:
    app: str
    entry: Address
    frame_size_bytes: int = 65536


@dataclass
class PlacementRequest:
    request_id: str
    app: str
    frame_size_bytes: int = 65536


@dataclass
class InitTaskExecutor:
    request_id: str
    app: str
    task: str
    dependencies: list = field(default_factory=list)  # (task name, actor Address)


@dataclass
class ReuseTaskExecutor:
    request_id: str
    app: str
    task: str
    dependencies: list = field(default_factory=list)


@dataclass
class ExecutorReady:
    request_id: str
    task: str


@dataclass
class ResourcesReady:
    request_id: str


@dataclass
class Data:
    """One frame of streamed input, or an intermediate task output."""

    request_id: str
    frame_seq: int
    size_bytes: int
    task: str = SENSOR_TASK  # producer task of this frame
    final: bool = False
    payload: str = ""


@dataclass
class Result:
    request_id: str
    frame_seq: int
    task: str = ""
    size_bytes: int = 0
    final: bool = False


@dataclass
class Probe:
    pass


@dataclass
class ProbeReply:
    kind: ComponentKind
    actors: list = field(default_factory=list)  # actor Addresses, masters only


@dataclass
class AdvertiseMaster:
    master: Address


@dataclass
class InitNewMaster:
    requester: Address
    actors: list = field(default_factory=list)  # parent's registered actor addresses


@dataclass
class ForwardToMaster:
    sub_master: Address


@dataclass
class WarnNoResources:
    request_id: str


@dataclass
class LogUpload:
    records: list = field(default_factory=list)


PAYLOAD_TYPES = (
    RegisterActor,
    RegisterUser,
    PlacementRequest,
    InitTaskExecutor,
    ReuseTaskExecutor,
    ExecutorReady,
    ResourcesReady,
    Data,
    Result,
    Probe,
    ProbeReply,
    AdvertiseMaster,
    InitNewMaster,
    ForwardToMaster,
    WarnNoResources,
    LogUpload,
)

MessagePayload = (
    RegisterActor | RegisterUser | PlacementRequest | InitTaskExecutor
    | ReuseTaskExecutor | ExecutorReady | ResourcesReady | Data | Result
    | Probe | ProbeReply | AdvertiseMaster | InitNewMaster | ForwardToMaster
    | WarnNoResources | LogUpload
)


@dataclass
class MessageEnvelope:
    """Addressed, timestamped carrier for exactly one payload."""

    source: Address
    destination: Address
    payload: MessagePayload
    sent_at: float = 0.0
    sender_id: ComponentId | None = None


# ---------------------------------------------------------------------------
# Value <-> wire-tree conversion.  The wire tree is plain JSON-compatible
# data; tagged dicts make the body self-describing.

_BY_NAME = {cls.__name__: cls for cls in PAYLOAD_TYPES + RECORD_TYPES}


def _to_tree(value):
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, Address):
        return str(value)
    if isinstance(value, ComponentKind):
        return value.value
    if isinstance(value, ComponentId):
        return {"kind": value.kind.value, "origin": str(value.origin), "serial": value.serial}
    if isinstance(value, (list, tuple)):
        return [_to_tree(item) for item in value]
    if type(value) in _BY_NAME.values():
        tree = {"type": type(value).__name__}
        for f in fields(value):
            tree[f.name] = _to_tree(getattr(value, f.name))
        return tree
    raise EncodingOverflow(f"cannot encode value of type {type(value).__name__}")


# Fields whose wire value needs reconstruction into a richer type than JSON
# gives back.  Everything not listed decodes as the plain JSON value.
_ADDRESS_FIELDS = {
    ("RegisterUser", "entry"),
    ("AdvertiseMaster", "master"),
    ("InitNewMaster", "requester"),
    ("ForwardToMaster", "sub_master"),
}
_ADDRESS_LIST_FIELDS = {("ProbeReply", "actors"), ("InitNewMaster", "actors")}
_DEP_LIST_FIELDS = {("InitTaskExecutor", "dependencies"), ("ReuseTaskExecutor", "dependencies")}
_RECORD_FIELDS = {("RegisterActor", "profile")}
_RECORD_LIST_FIELDS = {("LogUpload", "records")}
_KIND_FIELDS = {("ProbeReply", "kind")}


def _struct_from_tree(tree, offset):
    if not isinstance(tree, dict) or "type" not in tree:
        raise ProtocolError("expected a tagged struct", offset)
    name = tree["type"]
    cls = _BY_NAME.get(name)
    if cls is None:
        raise ProtocolError(f"unknown struct tag {name!r}", offset)
    kwargs = {}
    for f in fields(cls):
        if f.name not in tree:
            raise ProtocolError(f"{name} is missing field {f.name!r}", offset)
        raw = tree[f.name]
        key = (name, f.name)
        try:
            if key in _ADDRESS_FIELDS:
                kwargs[f.name] = Address.parse(raw)
            elif key in _ADDRESS_LIST_FIELDS:
                kwargs[f.name] = [Address.parse(item) for item in raw]
            elif key in _DEP_LIST_FIELDS:
                kwargs[f.name] = [(task, Address.parse(addr)) for task, addr in raw]
            elif key in _RECORD_FIELDS:
                kwargs[f.name] = _struct_from_tree(raw, offset)
            elif key in _RECORD_LIST_FIELDS:
                kwargs[f.name] = [_struct_from_tree(item, offset) for item in raw]
            elif key in _KIND_FIELDS:
                kwargs[f.name] = ComponentKind(raw)
            else:
                kwargs[f.name] = raw
        except (ValueError, TypeError) as exc:
            raise ProtocolError(f"bad value for {name}.{f.name}: {exc}", offset) from exc
    extras = set(tree) - {"type"} - {f.name for f in fields(cls)}
    if extras:
        raise ProtocolError(f"{name} has unknown fields {sorted(extras)}", offset)
    return cls(**kwargs)


def encode(envelope: MessageEnvelope) -> bytes:
    """Serialize one envelope to a length-prefixed frame."""

    sender = None if envelope.sender_id is None else _to_tree(envelope.sender_id)
    tree = {
        "source": str(envelope.source),
        "destination": str(envelope.destination),
        "sender_id": sender,
        "sent_at": envelope.sent_at,
        "payload": _to_tree(envelope.payload),
    }
    body = json.dumps(tree, sort_keys=True, separators=(",", ":")).encode("utf-8")
    if len(body) > MAX_BODY_BYTES:
        raise EncodingOverflow(f"body of {len(body)} bytes exceeds the length prefix")
    return LENGTH_PREFIX.pack(len(body)) + body


def frame_length(buffer: bytes) -> int:
    """Total frame size announced by the prefix at the start of the buffer."""

    if len(buffer) < LENGTH_PREFIX.size:
        raise NeedMoreBytes(LENGTH_PREFIX.size - len(buffer))
    (body_len,) = LENGTH_PREFIX.unpack_from(buffer)
    return LENGTH_PREFIX.size + body_len


def decode(buffer: bytes) -> MessageEnvelope:
    """Decode the first frame in the buffer; trailing bytes are ignored."""

    total = frame_length(buffer)
    if len(buffer) < total:
        raise NeedMoreBytes(total - len(buffer))
    body = buffer[LENGTH_PREFIX.size:total]
    try:
        tree = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        offset = LENGTH_PREFIX.size + getattr(exc, "pos", getattr(exc, "start", 0))
        raise ProtocolError(f"body is not canonical text: {exc}", offset) from exc
    if not isinstance(tree, dict):
        raise ProtocolError("body is not an envelope object", LENGTH_PREFIX.size)
    try:
        source = Address.parse(tree["source"])
        destination = Address.parse(tree["destination"])
        sent_at = float(tree["sent_at"])
        sender_tree = tree["sender_id"]
        payload_tree = tree["payload"]
    except (KeyError, ValueError, TypeError) as exc:
        raise ProtocolError(f"bad envelope header: {exc}", LENGTH_PREFIX.size) from exc
    sender = None
    if sender_tree is not None:
        try:
            sender = ComponentId(
                kind=ComponentKind(sender_tree["kind"]),
                serial=int(sender_tree["serial"]),
                origin=Address.parse(sender_tree["origin"]),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ProtocolError(f"bad sender id: {exc}", LENGTH_PREFIX.size) from exc
    payload = _struct_from_tree(payload_tree, LENGTH_PREFIX.size)
    if not isinstance(payload, PAYLOAD_TYPES):
        raise ProtocolError(f"{type(payload).__name__} is not a message payload", LENGTH_PREFIX.size)
    return MessageEnvelope(source, destination, payload, sent_at, sender)


def encode_record(record) -> str:
    """Canonical single-line text form of a telemetry record."""

    return json.dumps(_to_tree(record), sort_keys=True, separators=(",", ":"))


def decode_record(line: str):
    try:
        tree = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"bad record line: {exc}", exc.pos) from exc
    record = _struct_from_tree(tree, 0)
    if not isinstance(record, RECORD_TYPES):
        raise ProtocolError(f"{type(record).__name__} is not a telemetry record")
    return record


class FrameBuffer:
    """Accumulates a byte stream and yields complete envelopes in order."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list:
        self._buf.extend(data)
        out = []
        while True:
            try:
                total = frame_length(bytes(self._buf))
            except NeedMoreBytes:
                break
            if len(self._buf) < total:
                break
            out.append(decode(bytes(self._buf[:total])))
            del self._buf[:total]
        return out

    def pending(self) -> int:
        return len(self._buf)


def message_wire_bytes(envelope: MessageEnvelope) -> int:
    """Bytes a transport charges for the envelope.

    Data and Result frames are charged at their declared logical size (the
    synthetic payload stands in for real content); control traffic is charged
    at its encoded size.
    """

    if isinstance(envelope.payload, (Data, Result)):
        return int(envelope.payload.size_bytes)
    return len(encode(envelope))
