"""One behavioral contract, two carriers: simulated kernel and loopback TCP.

Every check runs against both transports: delivery intactness, per-pair
FIFO order, interleaving across pairs, large frames, unbind semantics,
and silent drops for unbound destinations.
"""
import threading
import time

import pytest

from fogsim.netsim import HostSpec, LinkSpec, SimKernel, Topology
from fogsim.protocol import Address, Data, MessageEnvelope, Probe, WarnNoResources
from fogsim.tcpnet import RealtimeKernel, TcpTransport

HOSTS = ["10.9.0.1", "10.9.0.2", "10.9.0.3"]


class SimHarness:
    name = "sim"

    def __init__(self):
        topo = Topology([HostSpec(host=h) for h in HOSTS], default_link=LinkSpec(1.0, 1e9))
        self.kernel = SimKernel(topo)

    def bind(self, addr, handler):
        self.kernel.bind(addr, handler)

    def unbind(self, addr):
        self.kernel.unbind(addr)

    def is_bound(self, addr):
        return self.kernel.is_bound(addr)

    def send(self, envelope):
        self.kernel.send(envelope)

    def flush(self, expected):
        self.kernel.run()

    def close(self):
        pass


class TcpHarness:
    name = "tcp"

    def __init__(self):
        self.transport = TcpTransport()
        self._count = 0
        self._cond = threading.Condition()

    def bind(self, addr, handler):
        def counting(envelope):
            handler(envelope)
            with self._cond:
                self._count += 1
                self._cond.notify_all()

        self.transport.bind(addr, counting)

    def unbind(self, addr):
        self.transport.unbind(addr)

    def is_bound(self, addr):
        return self.transport.is_bound(addr)

    def send(self, envelope):
        self.transport.send(envelope)

    def flush(self, expected):
        deadline = time.monotonic() + 10.0
        with self._cond:
            while self._count < expected:
                remaining = deadline - time.monotonic()
                assert remaining > 0, f"only {self._count} of {expected} envelopes arrived"
                self._cond.wait(timeout=remaining)

    def close(self):
        self.transport.close()


@pytest.fixture(params=[SimHarness, TcpHarness], ids=["sim", "tcp"])
def harness(request):
    h = request.param()
    yield h
    h.close()


def _seen(payload):
    return (type(payload).__name__, getattr(payload, "frame_seq", None), getattr(payload, "payload", None))


def test_delivers_envelope_intact(harness):
    got = []
    dst = Address(HOSTS[1], 7000)
    harness.bind(dst, lambda env: got.append(env))
    sent = MessageEnvelope(Address(HOSTS[0], 7001), dst, Data(request_id="r", frame_seq=9, size_bytes=64, payload="hi"))
    harness.send(sent)
    harness.flush(1)
    assert len(got) == 1
    assert got[0].source == sent.source
    assert got[0].destination == dst
    assert got[0].payload == sent.payload


def test_per_pair_order_is_fifo(harness):
    got = []
    dst = Address(HOSTS[1], 7000)
    src = Address(HOSTS[0], 7001)
    harness.bind(dst, lambda env: got.append(env.payload.frame_seq))
    for seq in range(50):
        harness.send(MessageEnvelope(src, dst, Data(request_id="r", frame_seq=seq, size_bytes=16)))
    harness.flush(50)
    assert got == list(range(50))


def test_interleaved_sources_each_stay_ordered(harness):
    got = []
    dst = Address(HOSTS[2], 7000)
    a = Address(HOSTS[0], 7001)
    b = Address(HOSTS[1], 7002)
    harness.bind(dst, lambda env: got.append((env.source, env.payload.frame_seq)))
    for seq in range(20):
        harness.send(MessageEnvelope(a, dst, Data(request_id="r", frame_seq=seq, size_bytes=16)))
        harness.send(MessageEnvelope(b, dst, Data(request_id="r", frame_seq=seq, size_bytes=16)))
    harness.flush(40)
    assert [seq for src, seq in got if src == a] == list(range(20))
    assert [seq for src, seq in got if src == b] == list(range(20))


def test_large_frame_survives(harness):
    got = []
    dst = Address(HOSTS[1], 7000)
    harness.bind(dst, lambda env: got.append(env.payload))
    blob = "x" * 1_000_000
    harness.send(
        MessageEnvelope(
            Address(HOSTS[0], 7001), dst, Data(request_id="r", frame_seq=0, size_bytes=16, payload=blob)
        )
    )
    harness.flush(1)
    assert got[0].payload == blob


def test_distinct_ports_on_one_host_are_distinct_endpoints(harness):
    got_a, got_b = [], []
    pa = Address(HOSTS[1], 7000)
    pb = Address(HOSTS[1], 7010)
    harness.bind(pa, lambda env: got_a.append(env))
    harness.bind(pb, lambda env: got_b.append(env))
    src = Address(HOSTS[0], 7001)
    harness.send(MessageEnvelope(src, pa, Probe()))
    harness.send(MessageEnvelope(src, pb, WarnNoResources(request_id="r")))
    harness.flush(2)
    assert [type(e.payload).__name__ for e in got_a] == ["Probe"]
    assert [type(e.payload).__name__ for e in got_b] == ["WarnNoResources"]


def test_unbound_destination_drops_silently(harness):
    got = []
    bound = Address(HOSTS[1], 7000)
    harness.bind(bound, lambda env: got.append(env))
    src = Address(HOSTS[0], 7001)
    harness.send(MessageEnvelope(src, Address(HOSTS[2], 7999), Probe()))
    harness.send(MessageEnvelope(src, bound, Probe()))
    harness.flush(1)
    assert len(got) == 1


def test_is_bound_tracks_bind_and_unbind(harness):
    addr = Address(HOSTS[0], 7000)
    assert not harness.is_bound(addr)
    harness.bind(addr, lambda env: None)
    assert harness.is_bound(addr)
    harness.unbind(addr)
    assert not harness.is_bound(addr)


def test_two_way_traffic(harness):
    a = Address(HOSTS[0], 7000)
    b = Address(HOSTS[1], 7001)
    got_a, got_b = [], []
    harness.bind(a, lambda env: got_a.append(env.payload.frame_seq))
    harness.bind(b, lambda env: got_b.append(env.payload.frame_seq))
    for seq in range(10):
        harness.send(MessageEnvelope(a, b, Data(request_id="r", frame_seq=seq, size_bytes=16)))
        harness.send(MessageEnvelope(b, a, Data(request_id="r", frame_seq=seq, size_bytes=16)))
    harness.flush(20)
    assert got_a == list(range(10))
    assert got_b == list(range(10))


# -- wall-clock kernel on top of the TCP transport ---------------------------------


def test_realtime_kernel_fires_timers_in_order():
    kernel = RealtimeKernel()
    try:
        log = []
        kernel.schedule(30.0, lambda: log.append("late"))
        kernel.schedule(5.0, lambda: log.append("early"))
        cancelled = kernel.schedule(10.0, lambda: log.append("never"))
        cancelled.cancel()
        kernel.run(stop_when=lambda: len(log) == 2)
        assert log == ["early", "late"]
    finally:
        kernel.close()


def test_realtime_kernel_request_reply():
    kernel = RealtimeKernel()
    try:
        server = Address(HOSTS[0], 7000)
        client = Address(HOSTS[1], 7001)
        got = []

        def serve(env):
            kernel.send(MessageEnvelope(server, env.source, Data(request_id="r", frame_seq=1, size_bytes=8)))

        kernel.bind(server, serve)
        kernel.bind(client, lambda env: got.append(env.payload.frame_seq))
        kernel.schedule(1.0, lambda: kernel.send(MessageEnvelope(client, server, Probe())))
        kernel.run(until_ms=5000.0, stop_when=lambda: bool(got))
        assert got == [1]
    finally:
        kernel.close()
