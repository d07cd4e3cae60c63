"""Reaction coordinates: scalar projections of the state, binned intervals.

A coordinate is one of ``beta``, ``q1``, ``mu1`` (single parameters of the
mixture), ``neglogpost`` (the potential V itself), or ``toy`` (a raw state
coordinate of a toy target, selected by index).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels as K
from .errors import ConfigError
from .model import Observations, PriorConfig, Theta, log_posterior_potential

KINDS = ("beta", "q1", "mu1", "neglogpost", "toy")

KIND_IDS = {
    "beta": K.RC_BETA,
    "q1": K.RC_Q1,
    "mu1": K.RC_MU1,
    "neglogpost": K.RC_NEGLOGPOST,
    "toy": K.RC_TOY,
}

#: bin_index return value for coordinates outside [z_min, z_max]
OUT_OF_RANGE = -1


@dataclass(frozen=True)
class ReactionCoordinateSpec:
    """Which coordinate, its truncation interval, and the bin geometry."""

    kind: str
    z_min: float
    z_max: float
    n_bins: int
    toy_index: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown coordinate kind {self.kind!r}")
        if not self.z_min < self.z_max:
            raise ConfigError("z_min must be strictly below z_max")
        if self.n_bins < 2:
            raise ConfigError("need at least 2 bins")

    @property
    def kind_id(self) -> int:
        return KIND_IDS[self.kind]

    @property
    def delta_z(self) -> float:
        return (self.z_max - self.z_min) / self.n_bins

    def edges(self) -> np.ndarray:
        return self.z_min + self.delta_z * np.arange(self.n_bins + 1)

    def midpoints(self) -> np.ndarray:
        return self.z_min + self.delta_z * (np.arange(self.n_bins) + 0.5)


def evaluate(spec: ReactionCoordinateSpec, theta, obs: Observations = None,
             prior: PriorConfig = None) -> float:
    """xi(theta).  Accepts a Theta or a raw state vector."""
    if spec.kind == "toy":
        x = np.asarray(theta, dtype=np.float64)
        return float(x[spec.toy_index])
    if not isinstance(theta, Theta):
        raise TypeError("mixture coordinates require a Theta")
    if spec.kind == "beta":
        return theta.beta
    if spec.kind == "q1":
        if theta.K < 2:
            raise ConfigError("q1 coordinate requires K >= 2")
        return float(theta.q[0])
    if spec.kind == "mu1":
        return float(theta.mu[0])
    return log_posterior_potential(theta, obs, prior)


def bin_index(spec: ReactionCoordinateSpec, z: float) -> int:
    """Bin containing z; OUT_OF_RANGE outside [z_min, z_max].

    Bins are half-open [z_i, z_{i+1}) except the last, which includes z_max.
    """
    return K.bin_of(float(z), spec.z_min, spec.z_max, spec.delta_z, spec.n_bins)


def default_interval(kind: str, obs: Observations = None) -> tuple[float, float]:
    """Truncation interval that works without pilot runs.

    beta scales with the squared data range; q1 is a probability; mu1 spans
    the data.  neglogpost has no a-priori default and must be user-supplied.
    """
    if kind == "beta":
        if obs is None:
            raise ConfigError("beta interval needs the dataset (range)")
        return (obs.R**2 / 2000.0, obs.R**2 / 20.0)
    if kind == "q1":
        return (0.0, 1.0)
    if kind == "mu1":
        if obs is None:
            raise ConfigError("mu1 interval needs the dataset (min/max)")
        return (float(obs.values.min()), float(obs.values.max()))
    raise ConfigError(
        f"no default interval for coordinate {kind!r}; supply z_min/z_max"
    )


def scheme_for(kind: str, override: str = None) -> str:
    """'abf' or 'abp'.  The potential coordinate forces 'abp' (no analytic
    force is available for it); any coordinate may be overridden to 'abp'."""
    if override is not None:
        override = override.lower()
        if override not in ("abf", "abp"):
            raise ConfigError(f"unknown scheme {override!r}")
        if override == "abf" and kind == "neglogpost":
            raise ConfigError("neglogpost requires the force-free scheme (abp)")
        return override
    return "abp" if kind == "neglogpost" else "abf"
