"""Build a three-host scenario from scratch and stream one OCR request through it.

A user on a Raspberry Pi class device sends two camera frames to a master on
a desktop; the master schedules the three-task OCR pipeline onto the one
registered actor, executors boot, frames flow, results come back.
"""
from fogsim.runner import run_scenario
from fogsim.scenario import parse_scenario

tree = {
    "name": "corridor-camera",
    "seed": 42,
    "experiment": {"kind": "single"},
    "time_limit_ms": 120000.0,
    "topology": {
        "hosts": [
            {"host": "10.0.0.1", "class": "rpi4"},      # camera device
            {"host": "10.0.0.2", "class": "desktop"},   # master
            {"host": "10.0.0.3", "class": "desktop"},   # worker
        ],
        "links": [
            {"a": "10.0.0.1", "b": "10.0.0.2", "latency_ms": 8.0, "data_rate_bps": 50e6},
            {"a": "10.0.0.2", "b": "10.0.0.3", "latency_ms": 1.0, "data_rate_bps": 1e9},
        ],
        "default_link": {"latency_ms": 5.0, "data_rate_bps": 100e6},
    },
    "components": {
        "remote_loggers": ["10.0.0.2"],
        "masters": ["10.0.0.2"],
        "actors": ["10.0.0.3"],
    },
    "users": [
        {"host": "10.0.0.1", "app": "VOCR", "frame_count": 2, "frame_interval_ms": 500.0},
    ],
}

report = run_scenario(parse_scenario(tree))

for row in report.requests:
    print(f"request {row['request_id']}: {row['outcome']}")
    print(f"  ready after {row['rrt_ms']:.1f} ms (executors booted and wired)")
    print(f"  scheduled in {row['sft_ms']:.1f} ms, {row['frames']} frames streamed")
    print(f"  mean frame response {row['mean_response_ms']:.1f} ms")

counters = report.summary["counters"]
print(f"cold executor starts: {counters['actors']['cold_starts']}")
print(f"requests completed:   {counters['masters']['completed']}")
