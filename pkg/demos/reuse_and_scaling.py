"""Show the two load-relief mechanisms: warm executor reuse and master scaling.

First runs the reuse preset (cold request, then an identical one that finds
warm executors pooled), then the scalability preset (request bursts with and
without permission to spawn extra masters).
"""
from fogsim.runner import run_scenario
from fogsim.scenario import load_scenario

reuse = run_scenario(load_scenario("reuse"))
print("warm executors vs cold starts (request ready time, lower is better)")
for app, row in sorted(reuse.summary["apps"].items()):
    print(f"  {app}: cold {row['cold_rrt_ms']:.0f} ms, warm {row['warm_rrt_ms']:.0f} ms "
          f"(x{row['ratio']:.2f}, {row['warm_reuses']} executors reused)")
print()

scal = run_scenario(load_scenario("scalability"))
print("simultaneous requests vs scheduling delay (mean, ms)")
print(f"  {'burst':>5} {'scaling on':>12} {'scaling off':>12} {'off/on':>8}")
for count in sorted(scal.summary["counts"], key=int):
    row = scal.summary["counts"][count]
    print(f"  {count:>5} {row['mean_sft_scaling_ms']:>12.0f} "
          f"{row['mean_sft_no_scaling_ms']:>12.0f} "
          f"{row['ratio_no_scaling_over_scaling']:>8.2f}")
masters = scal.summary["counts"]["16"]["masters_scaling"]
print(f"the 16-request burst ran with {masters} masters once scaling kicked in")
