"""Flexible stochastic conditional duration model.

Library and command line tools for modeling times between financial
transactions: a two-regime (cluster/regular) duration mixture whose
regular component follows a log Ornstein-Uhlenbeck intensity with a
B-spline diurnal pattern and a Bernstein-polynomial duration density.
Includes forward simulation, full Bayesian estimation by a block Gibbs
sampler, a prior-invariance correctness harness, tick data preparation,
and posterior diagnostics.
"""

from fscd.splines import SplineBasis, make_diurnal_basis, eval_basis, eval_diurnal
from fscd.density import BernsteinWeights, ClusterLaw
from fscd.model import DurationData, LatentPath, ModelParams, simulate
from fscd.priors import PriorHyper, Preset, load_preset, sample_prior
from fscd.mcmc import DrawStore, GibbsSampler, SamplerConfig, adapt_and_run
from fscd.gir import GirConfig, GirResult, run_gir
from fscd.data import (
    CleanConfig,
    TickRecord,
    aggregate_gw,
    aggregate_same_second,
    clean,
    descriptive_stats,
    read_durations,
    read_ticks,
    to_durations,
    write_durations,
)
from fscd.diagnostics import (
    classification_summary,
    curve_export,
    half_life,
    obm_nse,
    rne,
    summarize,
    write_curves,
)

__all__ = [
    "SplineBasis",
    "make_diurnal_basis",
    "eval_basis",
    "eval_diurnal",
    "BernsteinWeights",
    "ClusterLaw",
    "DurationData",
    "LatentPath",
    "ModelParams",
    "simulate",
    "PriorHyper",
    "Preset",
    "load_preset",
    "sample_prior",
    "DrawStore",
    "GibbsSampler",
    "SamplerConfig",
    "adapt_and_run",
    "GirConfig",
    "GirResult",
    "run_gir",
    "CleanConfig",
    "TickRecord",
    "aggregate_gw",
    "aggregate_same_second",
    "clean",
    "descriptive_stats",
    "read_durations",
    "read_ticks",
    "to_durations",
    "write_durations",
    "classification_summary",
    "curve_export",
    "half_life",
    "obm_nse",
    "rne",
    "summarize",
    "write_curves",
]

__version__ = "0.1.0"
