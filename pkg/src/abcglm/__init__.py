"""ABC-GLM: posteriors and Bayes factors from ABC rejection samples.

The rejection sample is summarized by a general linear model of the
statistics on the parameters; combined with a Gaussian smoothing of the
retained parameters this gives the posterior as a Gaussian mixture in
closed form.
"""

__version__ = "0.1.0"

from .core import (DistanceSpec, ParameterDomain, Prior, ReferenceTable, SimulableModel,
                   TruncatedNormal, Uniform, UniformUnion, load_table, normalize_parameters,
                   denormalize_parameters, prior_density, prior_sample, save_table)
from .curves import DensityCurve
from .errors import (AbcError, ConfigError, DegenerateError, EmptyTableError,
                     NotPositiveDefiniteError, RankDeficiencyError)
from .glm import (GlmFit, PosteriorMixture, SmoothingSpec, build_posterior, choose_smoothing,
                  fit_glm, marginal_posterior, posterior_density, truncated_prior_density)
from .modelselect import (BayesFactorResult, MarginalDensityEstimate, bayes_factor,
                          estimate_acceptance_rate, model_marginal_density, stability_sweep)
from .models import IdentityModel, LinearGaussianModel, make_model
from .regbaseline import hamilton_inverse, hamilton_transform, kde_posterior, reg_adjust
from .rng import RandomStream, derive_key
from .sampler import FixedEpsilon, PcaProjection, RetainBest, distance, fit_pca, run_rejection
from .toymodel import (AnalyticPosterior, CoalescentToyModel, PoissonToyModel,
                       analytic_posterior, l1_distance, run_comparison_grid, simulate_S,
                       watterson_likelihood)

__all__ = [
    "DistanceSpec", "ParameterDomain", "Prior", "ReferenceTable", "SimulableModel",
    "TruncatedNormal", "Uniform", "UniformUnion", "load_table", "normalize_parameters",
    "denormalize_parameters", "prior_density", "prior_sample", "save_table", "DensityCurve",
    "AbcError", "ConfigError", "DegenerateError", "EmptyTableError",
    "NotPositiveDefiniteError", "RankDeficiencyError", "GlmFit", "PosteriorMixture",
    "SmoothingSpec", "build_posterior", "choose_smoothing", "fit_glm", "marginal_posterior",
    "posterior_density", "truncated_prior_density", "BayesFactorResult",
    "MarginalDensityEstimate", "bayes_factor", "estimate_acceptance_rate",
    "model_marginal_density", "stability_sweep", "IdentityModel", "LinearGaussianModel",
    "make_model", "hamilton_inverse", "hamilton_transform", "kde_posterior", "reg_adjust",
    "RandomStream", "derive_key", "FixedEpsilon", "PcaProjection", "RetainBest", "distance",
    "fit_pca", "run_rejection", "AnalyticPosterior", "CoalescentToyModel",
    "PoissonToyModel", "analytic_posterior", "l1_distance", "run_comparison_grid",
    "simulate_S", "watterson_likelihood"
]
