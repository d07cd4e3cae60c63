"""Adaptive-bias MCMC for multimodal Bayesian mixture posteriors.

Pipeline: learn a bias along a reaction coordinate (adapt), sample the
flattened posterior (sample), reweight back to the true posterior and
estimate expectations, efficiency factors and evidence ratios (report).
"""

from ._backend import backend_name, get_kernels
from .bias import BiasGrid, read_profile, write_profile
from .errors import AbmixError, ConfigError, NumericError, OutOfSupportError
from .estimators import (Diagnostics, EvidenceEstimate, RunReport,
                         WeightedSample, diagnostics, ef_numerical,
                         expectation, log_evidence_ratio, reweight)
from .model import (Observations, PriorConfig, TargetModel, Theta,
                    default_prior, load_observations, log_likelihood,
                    log_posterior_potential, mixture_target,
                    partial_potential, toy_names, toy_target)
from .reaction import (OUT_OF_RANGE, ReactionCoordinateSpec, bin_index,
                       default_interval, evaluate, scheme_for)
from .sampler import (AdaptConfig, AdaptResult, ChainState, ChainTrace,
                      ProposalScales, adapt_run, convergence_distance,
                      default_adapt_scales, default_sample_scales, mh_step,
                      sample_run)

__version__ = "0.1.0"
