"""Importance-sampling estimators over biased-chain traces.

Weights are w = exp(-A(xi)); expectations are self-normalized, so every
estimator here is invariant under adding a constant to the bias profile.
Evidence ratios compare a K-component model against K-1 components by
dropping one component at a time and renormalizing the weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import json

import numpy as np

from .bias import BiasGrid
from .errors import ConfigError
from .reaction import ReactionCoordinateSpec
from .sampler import ChainTrace

_REC_CHUNK = 4096


@dataclass
class WeightedSample:
    """Trace plus its importance weights back to the unbiased posterior."""

    trace: ChainTrace
    weights: np.ndarray
    log_weights: np.ndarray

    def __len__(self):
        return self.weights.size


def _clamped_bins(xi, spec: ReactionCoordinateSpec) -> np.ndarray:
    idx = np.floor((xi - spec.z_min) / spec.delta_z).astype(np.int64)
    return np.clip(idx, 0, spec.n_bins - 1)


def reweight(trace: ChainTrace, grid: BiasGrid) -> WeightedSample:
    """Attach w = exp(-bias) to a trace, verifying it was produced against
    this grid (checksum, or exact bias-column match as fallback)."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    if trace.grid_checksum is not None:
        if trace.grid_checksum != grid.checksum():
            raise ConfigError("trace was sampled against a different bias grid")
    else:
        expected = grid.profile()[_clamped_bins(trace.xi, grid.spec)]
        if not np.array_equal(expected, trace.bias):
            raise ConfigError("trace bias column does not match this grid")
    lw = -trace.bias
    return WeightedSample(trace=trace, weights=np.exp(lw), log_weights=lw)


def _h_values(ws: WeightedSample, h) -> np.ndarray:
    if callable(h):
        return np.asarray([h(row) for row in ws.trace.states], dtype=np.float64)
    return np.asarray(h, dtype=np.float64)


def expectation(ws: WeightedSample, h) -> float:
    """Self-normalized estimate of E[h] under the unbiased target.

    h may be a per-record value array or a callable on state rows.
    """
    if len(ws) == 0:
        raise ValueError("empty sample")
    vals = _h_values(ws, h)
    lw = ws.log_weights
    w = np.exp(lw - lw.max())
    denom = w.sum()
    if denom == 0.0:
        raise ValueError("all importance weights vanished")
    return float((vals * w).sum() / denom)


def ef_numerical(ws: WeightedSample) -> float:
    """Normalized effective sample size (sum w)^2 / (T sum w^2)."""
    lw = ws.log_weights
    w = np.exp(lw - lw.max())
    return float(w.sum() ** 2 / (w.size * (w**2).sum()))


# ---------------------------------------------------------------------------
# Evidence ratios by component removal
# ---------------------------------------------------------------------------

def _loglik_rows(states: np.ndarray, y: np.ndarray, k: int) -> np.ndarray:
    """Mixture log-likelihood (2pi-free) per state row, vectorized."""
    n = states.shape[0]
    out = np.empty(n)
    for lo in range(0, n, _REC_CHUNK):
        hi = min(n, lo + _REC_CHUNK)
        s = states[lo:hi]
        q = s[:, : k - 1]
        qf = np.concatenate([q, 1.0 - q.sum(axis=1, keepdims=True)], axis=1)
        mu = s[:, k - 1 : 2 * k - 1]
        lam = s[:, 2 * k - 1 : 3 * k - 1]
        with np.errstate(divide="ignore"):
            lq = np.log(qf)
            t = (lq + 0.5 * np.log(lam))[:, None, :] \
                - 0.5 * lam[:, None, :] * (y[None, :, None] - mu[:, None, :]) ** 2
        tmax = t.max(axis=2)
        lse = tmax + np.log(np.exp(t - tmax[:, :, None]).sum(axis=2))
        out[lo:hi] = lse.sum(axis=1)
    return out


def _drop_component(states: np.ndarray, k_all: int, k_drop: int):
    """States of the (K-1)-component model after removing component k_drop
    (0-based) and renormalizing the weights.  Returns (states, q_k)."""
    q = states[:, : k_all - 1]
    qf = np.concatenate([q, 1.0 - q.sum(axis=1, keepdims=True)], axis=1)
    qk = qf[:, k_drop]
    keep = [j for j in range(k_all) if j != k_drop]
    with np.errstate(divide="ignore", invalid="ignore"):
        qt = qf[:, keep] / (1.0 - qk)[:, None]
    mu = states[:, k_all - 1 : 2 * k_all - 1][:, keep]
    lam = states[:, 2 * k_all - 1 : 3 * k_all - 1][:, keep]
    beta = states[:, -1:]
    return np.concatenate([qt[:, : k_all - 2], mu, lam, beta], axis=1), qk


@dataclass
class EvidenceEstimate:
    estimate: float
    std_error: float
    per_chain: np.ndarray
    excluded: int


def _log_mean_exp(v: np.ndarray) -> float:
    v = v[np.isfinite(v) | (v == -math.inf)]
    if v.size == 0 or (mx := v.max()) == -math.inf:
        return -math.inf
    return float(mx + np.log(np.exp(v - mx).mean()))


def _chain_parts(ws: WeightedSample, y: np.ndarray, k: int):
    """Per-record log w and, per dropped component, log w_{-k} (NaN where
    the drop is undefined because q_k = 1)."""
    states = ws.trace.states
    lw = ws.log_weights
    ll_full = _loglik_rows(states, y, k)
    per_k = []
    excluded = 0
    for k_drop in range(k):
        sub, qk = _drop_component(states, k, k_drop)
        valid = qk != 1.0
        excluded += int((~valid).sum())
        vals = np.full(lw.size, np.nan)
        if valid.any():
            vals[valid] = (_loglik_rows(sub[valid], y, k - 1)
                           - ll_full[valid] + lw[valid])
        per_k.append(vals)
    return lw, per_k, excluded


def _log_i_km1(per_k, sl=slice(None)) -> float:
    """log of (1/K) sum_k mean_t exp(log w_{-k}), skipping NaN records."""
    lks = []
    for vals in per_k:
        v = vals[sl]
        lks.append(_log_mean_exp(v[~np.isnan(v)]))
    lks = np.asarray(lks)
    mx = lks.max()
    if mx == -math.inf:
        return -math.inf
    return float(mx + np.log(np.exp(lks - mx).mean()))


def log_evidence_ratio(ws, target_k, target_km1,
                       batches: int = 20) -> EvidenceEstimate:
    """log(Z_K / Z_{K-1}) through the biased chain.

    ws is a WeightedSample or a list of them (independent chains).  With
    several chains the standard error comes from the spread of per-chain
    estimates; a single chain falls back to batch means.
    """
    if target_k.K != target_km1.K + 1:
        raise ConfigError("evidence comparison needs K and K-1 component models")
    y = target_k.data
    samples = ws if isinstance(ws, (list, tuple)) else [ws]
    per_chain = []
    excluded = 0
    pieces = []
    for s in samples:
        lw, per_k, exc = _chain_parts(s, y, target_k.K)
        excluded += exc
        pieces.append((lw, per_k))
        per_chain.append(_log_mean_exp(lw) - _log_i_km1(per_k))
    per_chain = np.asarray(per_chain)
    if len(samples) > 1:
        est = float(per_chain.mean())
        se = float(per_chain.std(ddof=1) / math.sqrt(len(samples)))
        return EvidenceEstimate(est, se, per_chain, excluded)

    lw, per_k = pieces[0]
    est = float(per_chain[0])
    n = lw.size
    nb = max(2, min(batches, n // 2))
    edges = np.linspace(0, n, nb + 1).astype(int)
    batch_vals = []
    for b in range(nb):
        sl = slice(edges[b], edges[b + 1])
        batch_vals.append(_log_mean_exp(lw[sl]) - _log_i_km1(per_k, sl))
    batch_vals = np.asarray(batch_vals)
    se = float(batch_vals.std(ddof=1) / math.sqrt(nb))
    return EvidenceEstimate(est, se, per_chain, excluded)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

@dataclass
class Diagnostics:
    switch_count: int | None
    xi_uniformity_stat: float | None
    label_symmetry_stat: float | None


def diagnostics(trace: ChainTrace, spec: ReactionCoordinateSpec = None) -> Diagnostics:
    """Label-switching count, coordinate-marginal flatness, and symmetry of
    the per-component reweighted mu summaries."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    spec = spec or trace.spec

    switch = None
    symmetry = None
    mu_cols = [j for j, c in enumerate(trace.columns) if c.startswith("mu")]
    if mu_cols:
        mu = trace.states[:, mu_cols]
        if mu.shape[1] > 1 and mu.shape[0] > 1:
            order = np.argsort(mu, axis=1)
            switch = int((order[1:] != order[:-1]).any(axis=1).sum())
        else:
            switch = 0
        lw = -trace.bias
        w = np.exp(lw - lw.max())
        w = w / w.sum()
        means = (w[:, None] * mu).sum(axis=0)
        sds = np.sqrt((w[:, None] * (mu - means) ** 2).sum(axis=0))
        k = mu.shape[1]
        worst = 0.0
        for a in range(k):
            for b in range(a + 1, k):
                worst = max(worst, math.hypot(means[a] - means[b],
                                              sds[a] - sds[b]))
        symmetry = float(worst)

    uniformity = None
    if spec is not None:
        xi = trace.xi
        inside = (xi >= spec.z_min) & (xi <= spec.z_max)
        if inside.any():
            idx = _clamped_bins(xi[inside], spec)
            freq = np.bincount(idx, minlength=spec.n_bins) / inside.sum()
            uniformity = float(np.abs(freq * spec.n_bins - 1.0).max())

    return Diagnostics(switch_count=switch, xi_uniformity_stat=uniformity,
                       label_symmetry_stat=symmetry)


# ---------------------------------------------------------------------------
# Run report
# ---------------------------------------------------------------------------

@dataclass
class RunReport:
    """Everything the report phase publishes, JSON-serializable with a
    stable key order."""

    ef_numerical: float
    ef_theoretical: float
    posterior_expectations: dict = field(default_factory=dict)
    log_evidence_ratios: dict = field(default_factory=dict)
    switch_count: int | None = None
    xi_uniformity_stat: float | None = None
    label_symmetry_stat: float | None = None
    seeds: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ef_numerical": self.ef_numerical,
            "ef_theoretical": self.ef_theoretical,
            "posterior_expectations": self.posterior_expectations,
            "log_evidence_ratios": self.log_evidence_ratios,
            "switch_count": self.switch_count,
            "xi_uniformity_stat": self.xi_uniformity_stat,
            "label_symmetry_stat": self.label_symmetry_stat,
            "seeds": self.seeds,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)
