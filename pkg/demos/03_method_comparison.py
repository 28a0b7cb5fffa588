"""Head-to-head comparison of every strategy on one simulated design.

Runs a small correlated-exposure study (a few replications only, so it
finishes in about a minute) and prints posterior means and distances to
the oracle-gibbs benchmark posterior.
"""

import dataclasses

from twostage.experiments import builtin_designs, run_study

design = dataclasses.replace(builtin_designs()["example2"], reps=3, n=120,
                             n_test=0, n_draws=300, total_sweeps=1200,
                             burn_in=200)
print(f"design: n={design.n}, rho={design.rho}, draws={design.n_draws}, "
      f"reps={design.reps}")
result = run_study(design, parallel=2)

print(f"\n{'method':20s}{'mean theta':>12s}{'mean sig2':>12s}"
      f"{'W2 theta':>10s}{'W2 sig2':>10s}{'cover':>7s}")
for method, agg in result.aggregates.items():
    w2t = "   ref" if agg.w2_theta_mean is None else f"{agg.w2_theta_mean:10.3f}"
    w2s = "   ref" if agg.w2_sigma_mean is None else f"{agg.w2_sigma_mean:10.3f}"
    print(f"{method:20s}{agg.mean_theta:12.3f}{agg.mean_sigma_eps_sq:12.3f}"
          f"{w2t:>10s}{w2s:>10s}{agg.coverage_theta:7.2f}")

print("\nTruth: theta=4, sigma_eps^2=2. The plug-in and partial-posterior")
print("columns sit near the attenuated slope (2) with inflated variance,")
print("vanilla importance sampling lands in between, and the per-unit")
print("and adjusted variants track the oracle.")
