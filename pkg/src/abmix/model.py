"""Gaussian mixture posterior: data ingestion, priors, potential, derivatives.

The posterior over theta = (q_1..q_{K-1}, mu_1..mu_K, lambda_1..lambda_K,
beta) combines a symmetric prior (Gaussian means, Gamma precisions with a
Gamma-distributed rate beta, flat Dirichlet weights) with an i.i.d. Gaussian
mixture likelihood.  All densities are handled through their potential
V = -log(prior * likelihood), defined up to an additive constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels as K
from .errors import ConfigError, OutOfSupportError

COORD_IDS = {"beta": K.RC_BETA, "q1": K.RC_Q1, "mu1": K.RC_MU1}

_EMPTY = np.empty(0, dtype=np.float64)


@dataclass(frozen=True)
class Observations:
    """Raw data vector plus its derived summaries (count, range, mean)."""

    values: np.ndarray
    n: int
    R: float
    M: float

    @classmethod
    def from_values(cls, values) -> "Observations":
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("observations must be a nonempty 1-D sequence")
        return cls(values=arr, n=int(arr.size),
                   R=float(arr.max() - arr.min()), M=float(arr.mean()))


def load_observations(path) -> Observations:
    """Read one number per line; '#' comments and blank lines are skipped.

    Raises ValueError with the offending 1-based line number on parse
    failure, and for an empty dataset.
    """
    values = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                text = line.strip()
                if not text or text.startswith("#"):
                    continue
                try:
                    values.append(float(text))
                except ValueError:
                    raise ValueError(
                        f"{path}: line {lineno}: not a number: {text!r}"
                    ) from None
    except OSError as exc:
        raise ValueError(f"cannot read dataset {path}: {exc}") from exc
    if not values:
        raise ValueError(f"{path}: empty dataset")
    return Observations.from_values(values)


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters of the symmetric mixture prior.

    mu_k ~ N(m, 1/kappa), lambda_k ~ Gamma(alpha, beta), beta ~ Gamma(g, h),
    (q_1..q_{K-1}) ~ flat Dirichlet.
    """

    K: int
    m: float
    kappa: float
    alpha: float
    g: float
    h: float

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        for name in ("kappa", "alpha", "g", "h"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def default_prior(obs: Observations, K: int) -> PriorConfig:
    """Data-driven prior: m = mean, kappa = 4/R^2, alpha = 2, g = 0.2,
    h = 100*g/(alpha*R^2)."""
    if obs.R <= 0:
        raise ValueError("degenerate data: range is zero")
    alpha = 2.0
    g = 0.2
    return PriorConfig(K=K, m=obs.M, kappa=4.0 / obs.R**2, alpha=alpha,
                       g=g, h=100.0 * g / (alpha * obs.R**2))


@dataclass
class Theta:
    """Mixture parameter point.

    q holds the K-1 free weights; the last weight is implicit
    (1 - sum(q)).  lam stores the component precisions.
    """

    q: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    beta: float

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.lam = np.asarray(self.lam, dtype=np.float64)
        self.beta = float(self.beta)

    @property
    def K(self) -> int:
        return self.mu.size

    @property
    def q_full(self) -> np.ndarray:
        return np.append(self.q, 1.0 - self.q.sum())

    def in_support(self) -> bool:
        return bool(K.support_mixture(self.to_vector(), self.K))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.mu, self.lam, [self.beta]])

    @classmethod
    def from_vector(cls, K_components: int, vec) -> "Theta":
        vec = np.asarray(vec, dtype=np.float64)
        k = K_components
        if vec.size != 3 * k:
            raise ValueError(f"state vector must have length {3 * k}")
        return cls(q=vec[: k - 1].copy(), mu=vec[k - 1 : 2 * k - 1].copy(),
                   lam=vec[2 * k - 1 : 3 * k - 1].copy(), beta=float(vec[-1]))


def log_posterior_potential(theta: Theta, obs: Observations,
                            prior: PriorConfig) -> float:
    """V(theta) = -log{p(theta) p(y|theta)} up to an additive constant."""
    if theta.K != prior.K:
        raise ValueError("theta and prior disagree on K")
    if not theta.in_support():
        raise OutOfSupportError("theta outside the parameter space")
    return K.potential_mixture(theta.to_vector(), obs.values, prior.K,
                               prior.m, prior.kappa, prior.alpha,
                               prior.g, prior.h)


def log_likelihood(theta: Theta, obs: Observations) -> float:
    """log p(y|theta) dropping the (2*pi)^(-n/2) factor."""
    if not theta.in_support():
        raise OutOfSupportError("theta outside the parameter space")
    return K.loglik_mixture(theta.to_vector(), obs.values, theta.K)


def partial_potential(theta: Theta, coord: str, obs: Observations,
                      prior: PriorConfig) -> float:
    """Analytic dV/dcoord for coord in {'beta', 'q1', 'mu1'}."""
    if coord not in COORD_IDS:
        raise ValueError(f"unknown coordinate {coord!r}; expected beta/q1/mu1")
    if coord == "q1" and theta.K < 2:
        raise ValueError("q1 requires at least two components")
    if not theta.in_support():
        raise OutOfSupportError("theta outside the parameter space")
    return K.partial_mixture(theta.to_vector(), COORD_IDS[coord], obs.values,
                             prior.K, prior.m, prior.kappa, prior.alpha,
                             prior.g, prior.h)


# ---------------------------------------------------------------------------
# Pluggable target abstraction: what the samplers actually consume.
# ---------------------------------------------------------------------------

@dataclass
class TargetModel:
    """A sampleable target: potential, per-coordinate derivatives, support.

    kind_id/params/data describe the target to the chunk kernels;
    the callables expose the same functions at the Python level.
    """

    name: str
    kind_id: int
    dimension: int
    params: np.ndarray = field(default_factory=lambda: _EMPTY)
    data: np.ndarray = field(default_factory=lambda: _EMPTY)
    K: int = 0
    prior: PriorConfig | None = None
    obs: Observations | None = None

    def potential(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        p = self.prior
        if self.kind_id == K.TK_MIXTURE:
            return K.potential_mixture(x, self.data, self.K, p.m, p.kappa,
                                       p.alpha, p.g, p.h)
        return K.potential_toy(self.kind_id, self.params, x)

    def partial(self, x, index: int) -> float:
        """dV/dx[index] for toys; dV/d{beta,q1,mu1} (index 0/1/2) for mixtures."""
        x = np.asarray(x, dtype=np.float64)
        p = self.prior
        if self.kind_id == K.TK_MIXTURE:
            return K.partial_mixture(x, index, self.data, self.K, p.m,
                                     p.kappa, p.alpha, p.g, p.h)
        return K.partial_toy(self.kind_id, self.params, x, index)

    def is_valid(self, x) -> bool:
        if self.kind_id == K.TK_MIXTURE:
            return bool(K.support_mixture(np.asarray(x, dtype=np.float64), self.K))
        return bool(np.all(np.isfinite(x)))

    @property
    def is_mixture(self) -> bool:
        return self.kind_id == K.TK_MIXTURE


def mixture_target(obs: Observations, prior: PriorConfig) -> TargetModel:
    return TargetModel(name=f"mixture-K{prior.K}", kind_id=K.TK_MIXTURE,
                       dimension=3 * prior.K, data=obs.values, K=prior.K,
                       prior=prior, obs=obs)


# toy registry: name -> (kind_id, params, dimension)
_TOYS = {
    "two_mode_1d": (K.TK_TWO_MODE_1D, np.array([2.0]), 1),
    "two_mode_2d": (K.TK_TWO_MODE_2D, np.array([0.7, 1.5, 2.0, 0.7]), 2),
}


def toy_target(name: str) -> TargetModel:
    """Look up a registered toy target by name."""
    try:
        kind_id, params, dim = _TOYS[name]
    except KeyError:
        raise ConfigError(
            f"unknown toy target {name!r}; available: {sorted(_TOYS)}"
        ) from None
    return TargetModel(name=name, kind_id=kind_id, dimension=dim,
                       params=params.copy())


def toy_names():
    return sorted(_TOYS)
