"""Joint Bayesian inference for two-stage models from stage-one posterior draws.

The package fits a stage-two regression whose exposure covariate is only
known through posterior draws from an upstream stage-one model. Seven
zeta-update strategies share one Gibbs driver: two plug-in variants, the
partial-posterior substitution, vanilla importance sampling, independent
importance sampling (iis), adjusted importance sampling (ais), and an
oracle Gibbs sampler for the tractable benchmark model.
"""

from ._version import __version__
from .engines import (ChainConfig, MethodSpec, PosteriorSample, StageOneInfo,
                      METHOD_KINDS, oracle_zeta_conditional,
                      posterior_predictive, run_chain)
from .errors import (ConfigError, DimensionMismatchError, MethodInputError,
                     NotPositiveDefiniteError, ParseError, TwoStageError)
from .evaluation import (MethodSummary, ParameterSummary, StudySummary,
                         coverage_and_width, equal_tailed_interval, rmse,
                         summarize_parameter, wasserstein2)
from .experiments import (HybridDesign, ReplicationRecord, SimulationDesign,
                          StudyResult, builtin_designs, design_hash,
                          hybrid_generate, hybrid_mean_variant,
                          mortality_standin, run_replication, run_study)
from .model import (PartialPosteriorDraws, PriorConfig, RegressionState,
                    StageOneSimulation, TheoreticalEstimands, TwoStageDataset,
                    analytic_partial_posterior, equicorrelation,
                    regression_conditional_sweep,
                    sample_partial_posterior_draws, simulate_stage_one,
                    theoretical_estimands)
from .rng import (CholeskyFactor, SeededStream, categorical_resample,
                  cholesky, inverse_gamma_sample, log_sum_exp, mvn_sample,
                  normalize_log_weights)
from .weights import (MomentEstimate, WeightReport, ais_log_weights,
                      estimate_moments, iis_log_weights, is_log_weights,
                      moments_from_gaussian, weight_report)
