"""Hybrid synthetic outcomes: real-data texture, chosen signal strength.

Starting from a fitted chain that stored its exposure draws, each retained
sweep yields a synthetic outcome vector that keeps that sweep's residuals
but installs a chosen exposure coefficient. Refitting on these datasets
shows how the partial-posterior strategy's attenuation grows with the
injected signal.
"""

import numpy as np

from twostage import PriorConfig, SeededStream
from twostage.engines import ChainConfig, MethodSpec, run_chain
from twostage.experiments import HybridDesign, hybrid_generate, mortality_standin
from twostage.weights import estimate_moments

dataset, draws, meta = mortality_standin()
print(f"stand-in data: n={dataset.n} units, p={dataset.p} covariates, "
      f"S={draws.n_draws} stage-one draws (log-scale outcome)")

prior = PriorConfig(ig_shape=0.01, ig_rate=0.01, learn_coef_sd=True)
source = run_chain(dataset, draws, MethodSpec("ais"), prior,
                   ChainConfig(total_sweeps=900, burn_in=300, store_zeta=True),
                   SeededStream(11), moments=estimate_moments(draws))
print(f"source fit: posterior mean exposure effect "
      f"{source.theta_zeta.mean():.4f} (moment shrinkage "
      f"gamma={source.shrink_gamma})")

fit_chain = ChainConfig(total_sweeps=700, burn_in=100)
for theta_star in (0.05, 0.2):
    design = HybridDesign(source, dataset, theta_star=theta_star,
                          num_datasets=8, seed=3)
    gaps = []
    for k, hybrid in enumerate(hybrid_generate(design)):
        refit = run_chain(hybrid, draws, MethodSpec("partial-posterior"),
                          prior, fit_chain, SeededStream(12, k))
        gaps.append(theta_star - refit.theta_zeta.mean())
    print(f"theta* = {theta_star:4.2f}: mean partial-posterior attenuation "
          f"gap = {np.mean(gaps):+.4f}")

print("\nThe gap grows with the injected signal: uncorrected strategies look")
print("fine when the true effect is tiny and drift as it strengthens.")
