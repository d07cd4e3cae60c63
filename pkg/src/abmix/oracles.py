"""Independent reference computations for verifying the sampler.

Everything here deliberately avoids the chain machinery: free energies come
from dense quadrature of the target density, conditional mean forces from
closed-form boundary terms, and evidence values from exact allocation sums
with nested quadrature.  These oracles back the test suite and the
``abmix oracle`` CLI command.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import ConfigError
from .model import Observations, PriorConfig, TargetModel
from .reaction import ReactionCoordinateSpec

_SPAN = 12.0        # toy densities are numerically zero beyond +/- span
_QUAD_POINTS = 10_001


def _toy_density_1d(target: TargetModel):
    """Unnormalized marginal density of coordinate 0 on a z-grid.

    Built from the registry parameters with plain numpy expressions, on
    purpose not sharing any code with the sampling kernels.
    """
    p = target.params
    if target.dimension == 1:
        a = p[0]

        def dens(z):
            z = np.atleast_1d(np.asarray(z, dtype=np.float64))
            return 0.5 * (np.exp(-0.5 * (z + a) ** 2)
                          + np.exp(-0.5 * (z - a) ** 2)) / np.sqrt(2 * np.pi)

        return dens

    w1, a, b, s = p
    ugrid = np.linspace(-_SPAN, _SPAN, _QUAD_POINTS)
    py = 0.5 * (np.exp(-0.5 * ((ugrid + b) / s) ** 2)
                + np.exp(-0.5 * ((ugrid - b) / s) ** 2)) / (s * np.sqrt(2 * np.pi))

    def dens(z):
        z = np.atleast_1d(np.asarray(z, dtype=np.float64))
        px = (w1 * np.exp(-0.5 * (z + a) ** 2)
              + (1 - w1) * np.exp(-0.5 * (z - a) ** 2)) / np.sqrt(2 * np.pi)
        return px * np.trapezoid(py, ugrid)

    return dens


def free_energy_curve(target: TargetModel, z_grid) -> np.ndarray:
    """A(z) = -log marginal density of coordinate 0, up to a constant."""
    dens = _toy_density_1d(target)
    return -np.log(dens(np.asarray(z_grid, dtype=np.float64)))


def binned_free_energy(target: TargetModel, spec: ReactionCoordinateSpec) -> np.ndarray:
    """Oracle profile at the bin midpoints, gauge-anchored to min 0."""
    a = free_energy_curve(target, spec.midpoints())
    return a - a.min()


def conditional_mean_force(target: TargetModel, spec: ReactionCoordinateSpec,
                           subgrid: int = 400) -> np.ndarray:
    """Exact per-bin mean of dV/dz under the target: for each bin,
    (exp(-A(z_i)) - exp(-A(z_{i+1}))) / integral of exp(-A) over the bin."""
    dens = _toy_density_1d(target)
    edges = spec.edges()
    out = np.empty(spec.n_bins)
    for i in range(spec.n_bins):
        zz = np.linspace(edges[i], edges[i + 1], subgrid)
        p = dens(zz)
        out[i] = (p[0] - p[-1]) / np.trapezoid(p, zz)
    return out


def toy_coordinate_mean(target: TargetModel) -> float:
    """E[coordinate 0] under the (normalized) toy target, by quadrature."""
    zz = np.linspace(-_SPAN, _SPAN, _QUAD_POINTS)
    p = _toy_density_1d(target)(zz)
    return float(np.trapezoid(zz * p, zz) / np.trapezoid(p, zz))


def draw_toy_1d(target: TargetModel, n: int, rng) -> np.ndarray:
    """Exact i.i.d. draws from the 1-D two-mode toy (component + normal)."""
    if target.dimension != 1:
        raise ConfigError("exact draws only implemented for the 1-D toy")
    a = float(target.params[0])
    comp = rng.random(n) < 0.5
    return np.where(comp, -a, a) + rng.standard_normal(n)


# ---------------------------------------------------------------------------
# Evidence by exhaustive allocation sum.
#
# Expanding the likelihood product over per-observation component labels c,
#   Z_K = int p(beta) sum_c W(c) prod_k I(S_k(c), beta) dbeta,
# where W(c) = (K-1)! prod_k n_k! / (n+K-1)! is the flat-Dirichlet moment
# and I(S, beta) integrates one component's Gaussian factors against its
# N(m, 1/kappa) x Gamma(alpha, beta) prior.  I(S, beta) is evaluated by
# quadrature in log lambda (grid centered on the decay scale beta + ss/2);
# the beta integral uses the substitution beta = v^(1/g), which flattens
# the beta^(g-1) prior singularity at 0.
# ---------------------------------------------------------------------------

_N_V = 2001
_N_W = 701
_W_SPAN = 35.0


def _subset_stats(y: np.ndarray, mask: int):
    idx = [i for i in range(y.size) if mask >> i & 1]
    if not idx:
        return 0, 0.0, 0.0
    sub = y[idx]
    return len(idx), float(sub.mean()), float(((sub - sub.mean()) ** 2).sum())


def _log_component_integral(stats, beta: np.ndarray, prior: PriorConfig,
                            n_w: int = _N_W) -> np.ndarray:
    """log I(S, beta) on a beta grid for one subset's sufficient stats."""
    s, ybar, ss = stats
    if s == 0:
        return np.zeros(beta.size)
    al, kap, m = prior.alpha, prior.kappa, prior.m
    w = np.linspace(-_W_SPAN, _W_SPAN, n_w)
    dw = w[1] - w[0]
    log_trap = np.full(n_w, math.log(dw))
    log_trap[0] = log_trap[-1] = math.log(dw / 2.0)
    bscale = beta + 0.5 * ss  # decay scale of the lambda integrand
    lam = np.exp(w)[None, :] / bscale[:, None]
    loglam = np.log(lam)
    drift = kap * s * (ybar - m) ** 2 / 2.0
    e = (al * np.log(beta)[:, None] - math.lgamma(al) + al * loglam
         - beta[:, None] * lam
         + 0.5 * s * (loglam - math.log(2.0 * math.pi))
         + 0.5 * (math.log(kap) - np.log(kap + lam * s))
         - 0.5 * ss * lam
         - drift * lam / (kap + lam * s)
         + log_trap[None, :])
    mx = e.max(axis=1)
    return mx + np.log(np.exp(e - mx[:, None]).sum(axis=1))


def log_evidence_bruteforce(obs: Observations, prior: PriorConfig,
                            n_v: int = _N_V, n_w: int = _N_W) -> float:
    """log of the marginal likelihood Z_K for small n and K (cost K^n)."""
    y = obs.values
    n = y.size
    kk = prior.K
    if kk**n > 200_000:
        raise ConfigError("allocation sum too large; reduce n or K")
    g, h = prior.g, prior.h

    v_max = 1e5**g
    v = np.linspace(v_max * 1e-9, v_max, n_v)
    beta = v ** (1.0 / g)

    cache: dict[int, np.ndarray] = {}

    def logi(mask: int) -> np.ndarray:
        if mask not in cache:
            cache[mask] = _log_component_integral(_subset_stats(y, mask),
                                                  beta, prior, n_w)
        return cache[mask]

    log_w_norm = (math.lgamma(kk) - math.lgamma(kk + n))
    parts = []
    for c in itertools.product(range(kk), repeat=n):
        masks = [0] * kk
        counts = [0] * kk
        for i, ci in enumerate(c):
            masks[ci] |= 1 << i
            counts[ci] += 1
        logw = log_w_norm + sum(math.lgamma(nk + 1) for nk in counts)
        total = np.full(n_v, logw)
        for k in range(kk):
            total = total + logi(masks[k])
        parts.append(total)
    stack = np.asarray(parts)
    mx = stack.max(axis=0)
    logf = mx + np.log(np.exp(stack - mx).sum(axis=0))

    # outer integral over v (beta = v^(1/g)); prior in v-space:
    # p(beta) dbeta = h^g/Gamma(g) * exp(-h beta) / g * dv
    dv = v[1] - v[0]
    log_trap = np.full(n_v, math.log(dv))
    log_trap[0] = log_trap[-1] = math.log(dv / 2.0)
    e = (g * math.log(h) - math.lgamma(g) - math.log(g)
         - h * beta + logf + log_trap)
    mx = e.max()
    return float(mx + np.log(np.exp(e - mx).sum()))


def log_evidence_ratio_bruteforce(obs: Observations, prior_k: PriorConfig,
                                  prior_km1: PriorConfig, **kw) -> float:
    """Oracle log(Z_K / Z_{K-1})."""
    return (log_evidence_bruteforce(obs, prior_k, **kw)
            - log_evidence_bruteforce(obs, prior_km1, **kw))


def mixture_beta_free_energy(obs: Observations, prior: PriorConfig,
                             beta_grid, n_w: int = _N_W) -> np.ndarray:
    """Exact free energy along beta for small n and K: minus the log of
    p(beta) * sum_c W(c) prod_k I(S_k(c), beta), up to a constant.  Same
    allocation sum as the evidence oracle, with beta held fixed."""
    y = obs.values
    n = y.size
    kk = prior.K
    if kk**n > 200_000:
        raise ConfigError("allocation sum too large; reduce n or K")
    beta = np.asarray(beta_grid, dtype=np.float64)

    cache: dict[int, np.ndarray] = {}

    def logi(mask: int) -> np.ndarray:
        if mask not in cache:
            cache[mask] = _log_component_integral(_subset_stats(y, mask),
                                                  beta, prior, n_w)
        return cache[mask]

    log_w_norm = math.lgamma(kk) - math.lgamma(kk + n)
    parts = []
    for c in itertools.product(range(kk), repeat=n):
        masks = [0] * kk
        counts = [0] * kk
        for i, ci in enumerate(c):
            masks[ci] |= 1 << i
            counts[ci] += 1
        logw = log_w_norm + sum(math.lgamma(nk + 1) for nk in counts)
        total = np.full(beta.size, logw)
        for k in range(kk):
            total = total + logi(masks[k])
        parts.append(total)
    stack = np.asarray(parts)
    mx = stack.max(axis=0)
    logf = mx + np.log(np.exp(stack - mx).sum(axis=0))
    log_prior = (prior.g - 1.0) * np.log(beta) - prior.h * beta
    return -(log_prior + logf)
