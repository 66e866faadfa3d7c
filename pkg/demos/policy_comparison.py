"""Compare scheduling policies on the response-time preset.

Runs the same placement problem under each policy over twenty seeds and
prints how well the response estimator predicted the measured times, and
which policy produced the fastest pipeline.
"""
from fogsim.runner import run_scenario
from fogsim.scenario import load_scenario

report = run_scenario(load_scenario("response"))

print(f"{report.summary['seeds']} seeds, app pipeline under three policies")
print()
print(f"{'policy':<10} {'mean measured (ms)':>20} {'worst estimate err':>20}")
for policy in sorted(report.summary["mean_measured_ms"]):
    mean = report.summary["mean_measured_ms"][policy]
    err = report.summary["max_err_pct"][policy]
    print(f"{policy:<10} {mean:>20.2f} {err:>19.2e}%")
print()
wins = report.summary["ohnsga_wins"]
seeds = report.summary["seeds"]
print(f"history-seeded search was best or tied on {wins}/{seeds} seeds")
