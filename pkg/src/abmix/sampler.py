"""Random-walk Metropolis kernels and the two-phase drivers.

``adapt_run`` learns the bias: a Metropolis chain targets the time-varying
biased density exp(-V + A_t(xi)) restricted to the coordinate window, and
every iteration records into the bias grid (force for ABF, weight for ABP).
``sample_run`` then targets the frozen-bias density over the full space.

Both drivers draw their randomness in fixed-size blocks from a seeded
numpy PCG64 generator and hand the blocks to the active kernel backend,
so runs are reproducible bit for bit for a given (config, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._backend import kernels as K
from .bias import BiasGrid
from .errors import ConfigError, NumericError
from .model import TargetModel
from .reaction import OUT_OF_RANGE, ReactionCoordinateSpec

CHUNK = 65536

FAMILIES = ("gaussian", "cauchy")

# posterior-range reference for rescaling the published random-walk scales
_R_REF = 10.5


@dataclass(frozen=True)
class ProposalScales:
    """Per-block random walk scales.

    Mixture states use tau_q / tau_mu / tau_v / tau_beta for the weight,
    mean, precision and beta blocks; toy states use tau_mu for every
    coordinate.  family chooses the standard noise distribution.
    """

    tau_q: float = 5e-4
    tau_mu: float = 0.025
    tau_v: float = 0.05
    tau_beta: float = 5e-3
    family: str = "gaussian"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown proposal family {self.family!r}")
        for name in ("tau_q", "tau_mu", "tau_v", "tau_beta"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    def vector_for(self, target: TargetModel) -> np.ndarray:
        if target.is_mixture:
            k = target.K
            return np.concatenate([
                np.full(k - 1, self.tau_q),
                np.full(k, self.tau_mu),
                np.full(k, self.tau_v),
                [self.tau_beta],
            ])
        return np.full(target.dimension, self.tau_mu)


def default_adapt_scales(obs) -> ProposalScales:
    """Gaussian adaptive-phase scales, rescaled from the reference run by
    the data range (mu ~ R, precision ~ 1/R^2, beta ~ R^2)."""
    r = obs.R
    return ProposalScales(tau_q=5e-4,
                          tau_mu=0.025 * (r / _R_REF),
                          tau_v=0.05 * (_R_REF / r) ** 2,
                          tau_beta=5e-3 * (r / _R_REF) ** 2,
                          family="gaussian")


def default_sample_scales(obs, prior) -> ProposalScales:
    """Cauchy sampling-phase scales: tau_mu = R/1000, tau_v = 2/R^2,
    tau_beta = 2e-5 * alpha * R^2."""
    r = obs.R
    return ProposalScales(tau_q=5e-4,
                          tau_mu=r / 1000.0,
                          tau_v=2.0 / r**2,
                          tau_beta=2e-5 * prior.alpha * r**2,
                          family="cauchy")


def _resolve_scales(target, scales):
    if isinstance(scales, ProposalScales):
        return scales.vector_for(target), scales.family
    arr = np.asarray(scales, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(target.dimension, float(arr))
    if arr.size != target.dimension:
        raise ConfigError("scale vector length does not match the state")
    return arr.copy(), "gaussian"


@dataclass
class ChainState:
    """Current chain position with cached coordinate/potential/bin."""

    x: np.ndarray
    potential: float
    xi: float = math.nan
    bin: int = OUT_OF_RANGE


@dataclass(frozen=True)
class AdaptConfig:
    """Adaptive-phase budget: total iterations, convergence cadence, stop
    threshold, RNG seed.  thin=0 picks a stride giving ~10^4 trace rows."""

    total_iters: int
    check_interval: int
    epsilon_stop: float = 0.01
    seed: int = 0
    thin: int = 0
    debug: bool = False
    walk_in_max: int = 1_000_000

    def __post_init__(self):
        if not self.total_iters >= self.check_interval >= 1:
            raise ConfigError("need total_iters >= check_interval >= 1")
        if self.epsilon_stop <= 0:
            raise ConfigError("epsilon_stop must be positive")


@dataclass
class ChainTrace:
    """Thinned chain record: iteration, coordinate, potential, bias, state."""

    iters: np.ndarray
    xi: np.ndarray
    potential: np.ndarray
    bias: np.ndarray
    states: np.ndarray
    columns: list[str]
    grid_checksum: str | None = None
    spec: ReactionCoordinateSpec | None = None

    def __len__(self):
        return self.iters.size

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("iter,xi,V,bias," + ",".join(self.columns) + "\n")
            for i in range(len(self)):
                row = [str(int(self.iters[i])), repr(float(self.xi[i])),
                       repr(float(self.potential[i])), repr(float(self.bias[i]))]
                row += [repr(float(v)) for v in self.states[i]]
                fh.write(",".join(row) + "\n")

    @classmethod
    def from_csv(cls, path, spec: ReactionCoordinateSpec = None) -> "ChainTrace":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            if header[:4] != ["iter", "xi", "V", "bias"]:
                raise ConfigError(f"{path}: not a trace file")
            columns = header[4:]
            rows = [line.strip().split(",") for line in fh if line.strip()]
        data = np.asarray(rows, dtype=np.float64)
        if data.size == 0:
            data = data.reshape(0, 4 + len(columns))
        return cls(iters=data[:, 0].astype(np.int64), xi=data[:, 1],
                   potential=data[:, 2], bias=data[:, 3], states=data[:, 4:],
                   columns=columns, spec=spec)


def state_columns(target: TargetModel) -> list[str]:
    if target.is_mixture:
        k = target.K
        return ([f"q{i + 1}" for i in range(k - 1)]
                + [f"mu{i + 1}" for i in range(k)]
                + [f"lambda{i + 1}" for i in range(k)]
                + ["beta"])
    return [f"x{i}" for i in range(target.dimension)]


def convergence_distance(profile_now, profile_prev) -> tuple[float, float]:
    """Shift-minimized L2 distance between bias snapshots and its relative
    form: delta = sqrt(sum((A_now - A_prev - c)^2)) with c the difference of
    the profile means, epsilon = delta / sqrt(sum(A_now^2))."""
    a = np.asarray(profile_now, dtype=np.float64)
    b = np.asarray(profile_prev, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("profile length mismatch")
    c = a.mean() - b.mean()
    delta = float(np.sqrt(((a - b - c) ** 2).sum()))
    denom = float(np.sqrt((a**2).sum()))
    if denom == 0.0:
        return delta, 0.0 if delta == 0.0 else math.inf
    return delta, delta / denom


def mh_step(state: ChainState, scales, log_density, rng,
            family: str = "gaussian") -> tuple[ChainState, bool]:
    """One symmetric random-walk Metropolis step against log_density.

    state.potential must cache -log_density(state.x).  The evaluator
    signals out-of-support points by returning -inf (their proposals are
    rejected outright).  Each call consumes dim + 1 variates.
    """
    d = state.x.size
    if family == "cauchy":
        noise = rng.standard_cauchy(d)
    else:
        noise = rng.standard_normal(d)
    u = rng.random()
    xp = state.x + np.asarray(scales) * noise
    lp = log_density(xp)
    logr = lp - (-state.potential)
    lu = math.log(u) if u > 0.0 else -math.inf
    if lu < logr:
        return replace(state, x=xp, potential=-lp), True
    return state, False


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def initial_state(target: TargetModel, spec: ReactionCoordinateSpec, rng,
                  in_window: bool = True, tau=None, family: str = "gaussian",
                  walk_in_max: int = 1_000_000) -> np.ndarray:
    """Starting vector: prior draw with quantile-placed means (mixture) or
    the window midpoint (toys).  With in_window, the coordinate is forced
    into [z_min, z_max]; neglogpost walks in with unrecorded MH steps."""
    if not target.is_mixture:
        x = np.zeros(target.dimension)
        x[spec.toy_index if spec.kind == "toy" else 0] = \
            0.5 * (spec.z_min + spec.z_max)
        return x

    prior = target.prior
    obs = target.obs
    k = prior.K
    mu = np.quantile(obs.values, (np.arange(k) + 1.0) / (k + 1.0))
    # beta clamped to the data-scaled range before drawing the precisions,
    # so no start has delta-spike components the walk cannot leave
    blo, bhi = obs.R**2 / 2000.0, obs.R**2 / 20.0

    def draw():
        q = rng.dirichlet(np.ones(k))[: k - 1]
        beta = min(max(rng.gamma(prior.g, 1.0 / prior.h), blo), bhi)
        lam = rng.gamma(prior.alpha, 1.0 / beta, size=k)
        return np.concatenate([q, mu, lam, [beta]])

    x = draw()
    if not in_window:
        return x

    def xi_of(v):
        if spec.kind == "neglogpost":
            return target.potential(v)
        return K._project_rc(v, spec.kind_id, spec.toy_index, k)

    for _ in range(200):
        z = xi_of(x)
        if spec.z_min <= z <= spec.z_max and math.isfinite(target.potential(x)):
            return x
        x = draw()

    mid = 0.5 * (spec.z_min + spec.z_max)
    if spec.kind == "beta":
        x[3 * k - 1] = math.exp(0.5 * (math.log(spec.z_min) + math.log(spec.z_max)))
    elif spec.kind == "q1":
        x[: k - 1] = (1.0 - mid) / k
        x[0] = mid
    elif spec.kind == "mu1":
        x[k - 1] = mid
    if spec.z_min <= xi_of(x) <= spec.z_max:
        return x

    # neglogpost: drift toward the window with plain (unbiased, unrecorded)
    # MH steps before adaptation starts
    if tau is None:
        raise ConfigError("cannot place the start inside the coordinate window")
    v = target.potential(x)
    st = ChainState(x=x, potential=v)
    logdens = lambda y: (-target.potential(y)) if target.is_valid(y) else -math.inf
    for _ in range(walk_in_max):
        if spec.z_min <= st.potential <= spec.z_max:
            return st.x
        st, _acc = mh_step(st, tau, logdens, rng, family)
    raise NumericError(
        "chain failed to reach the coordinate window during initialization; "
        "widen [z_min, z_max] or supply a custom start", st.x)


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------

@dataclass
class AdaptResult:
    grid: BiasGrid
    trace: ChainTrace
    convergence: np.ndarray  # rows (iteration, delta, epsilon)
    iterations: int
    accepted: int
    stopped_early: bool


def _target_args(target: TargetModel):
    if target.is_mixture:
        p = target.prior
        return (target.kind_id, target.params, target.data, target.K,
                p.m, p.kappa, p.alpha, p.g, p.h)
    return (target.kind_id, target.params, target.data, 0,
            0.0, 0.0, 0.0, 0.0, 0.0)


def _validate_pair(target: TargetModel, spec: ReactionCoordinateSpec):
    if spec.kind == "toy":
        if target.is_mixture:
            raise ConfigError("toy coordinate on a mixture target")
        if not 0 <= spec.toy_index < target.dimension:
            raise ConfigError("toy coordinate index out of range")
    elif not target.is_mixture:
        raise ConfigError(f"{spec.kind!r} coordinate needs a mixture target")
    elif spec.kind == "q1" and target.K < 2:
        raise ConfigError("q1 coordinate requires K >= 2")


def _make_rng(seed):
    """Build the run generator; seed is an int, a (base, index...) tuple for
    derived per-chain streams, or a ready SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    elif isinstance(seed, (tuple, list)):
        ss = np.random.SeedSequence(int(seed[0]),
                                    spawn_key=tuple(int(v) for v in seed[1:]))
    else:
        ss = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.PCG64(ss))


def _noise_block(rng, n, d, family):
    if family == "cauchy":
        return rng.standard_cauchy((n, d))
    return rng.standard_normal((n, d))


def _auto_thin(total):
    return max(1, total // 10_000)


def adapt_run(target: TargetModel, spec: ReactionCoordinateSpec, scheme: str,
              scales, config: AdaptConfig, x0=None) -> AdaptResult:
    """Learn the bias grid with the adaptive loop; returns the frozen grid,
    a thinned trace, and the convergence log."""
    _validate_pair(target, spec)
    if scheme not in ("abf", "abp"):
        raise ConfigError(f"unknown scheme {scheme!r}")
    if scheme == "abf" and spec.kind == "neglogpost":
        raise ConfigError("neglogpost has no analytic force; use scheme abp")
    tau, family = _resolve_scales(target, scales)
    d = target.dimension
    nb = spec.n_bins
    rng = _make_rng(config.seed)

    if x0 is None:
        x = initial_state(target, spec, rng, in_window=True, tau=tau,
                          family=family, walk_in_max=config.walk_in_max)
    else:
        x = np.array(x0, dtype=np.float64)
    v = target.potential(x)
    if not math.isfinite(v):
        raise NumericError("non-finite potential at the initial state", x, 0)
    xi = v if spec.kind == "neglogpost" else \
        float(K._project_rc(x, spec.kind_id, spec.toy_index, target.K))
    b0 = K.bin_of(xi, spec.z_min, spec.z_max, spec.delta_z, nb)
    if b0 < 0:
        raise ConfigError("initial state lies outside the coordinate window")

    grid = BiasGrid(spec, scheme)
    mode = K.MODE_ABF if scheme == "abf" else K.MODE_ABP

    total = int(config.total_iters)
    thin = config.thin if config.thin > 0 else _auto_thin(total)
    nrec = total // thin
    tr_iter = np.zeros(nrec, dtype=np.int64)
    tr_xi = np.zeros(nrec)
    tr_v = np.zeros(nrec)
    tr_bias = np.zeros(nrec)
    tr_x = np.zeros((nrec, d))
    pbox = np.zeros(1, dtype=np.int64)
    abox = np.zeros(1, dtype=np.int64)
    cache = np.array([xi, v, 0.0])
    ibox = np.array([b0, 0], dtype=np.int64)
    sbox = np.array([math.log(nb)])

    targs = _target_args(target)
    ncvg = int(config.check_interval)
    conv_rows = []
    prev_profile = grid.profile().copy()
    t = 0
    stopped = False
    while t < total:
        next_check = ((t // ncvg) + 1) * ncvg
        n = min(total, next_check, t + CHUNK) - t
        noise = _noise_block(rng, n, d, family)
        unif = rng.random(n)
        K.run_adapt_chunk(*targs,
                          spec.kind_id, spec.toy_index, spec.z_min, spec.z_max,
                          spec.delta_z, nb, mode,
                          x, tau, cache, ibox,
                          grid.force_sum, grid.hit_count, grid.log_weight, sbox,
                          noise, unif, t, thin,
                          tr_iter, tr_xi, tr_v, tr_bias, tr_x, pbox, abox,
                          1 if config.debug else 0)
        grid._dirty = True
        t += n
        if t % ncvg == 0:
            prof = grid.profile().copy()
            delta, eps = convergence_distance(prof, prev_profile)
            conv_rows.append((t, delta, eps))
            prev_profile = prof
            if scheme == "abp":
                # clear accumulated drift in the running total
                lw = grid.log_weight
                mx = lw.max()
                sbox[0] = mx + math.log(np.exp(lw - mx).sum())
            # a stalled chain also yields a tiny delta: only trust the
            # stopping rule once the whole window has been visited
            if eps < config.epsilon_stop and grid.hit_count.min() > 0:
                stopped = True
                break

    grid.freeze()
    npos = int(pbox[0])
    trace = ChainTrace(iters=tr_iter[:npos], xi=tr_xi[:npos],
                       potential=tr_v[:npos], bias=tr_bias[:npos],
                       states=tr_x[:npos], columns=state_columns(target),
                       spec=spec)
    conv = np.asarray(conv_rows, dtype=np.float64).reshape(-1, 3)
    return AdaptResult(grid=grid, trace=trace, convergence=conv,
                       iterations=t, accepted=int(abox[0]),
                       stopped_early=stopped)


def sample_run(target: TargetModel, grid: BiasGrid, scales, t_max: int,
               thin: int, seed: int, x0=None, debug: bool = False) -> ChainTrace:
    """Metropolis chain against the frozen-bias density over the full
    parameter space; emits a thinned trace carrying the bias values."""
    _validate_pair(target, grid.spec)
    if not grid.frozen:
        raise ConfigError("sample_run needs a frozen bias grid")
    spec = grid.spec
    tau, family = _resolve_scales(target, scales)
    d = target.dimension
    rng = _make_rng(seed)
    if x0 is None:
        x = initial_state(target, spec, rng, in_window=False)
    else:
        x = np.array(x0, dtype=np.float64)
    v = target.potential(x)
    if not math.isfinite(v):
        raise NumericError("non-finite potential at the initial state", x, 0)
    xi = v if spec.kind == "neglogpost" else \
        float(K._project_rc(x, spec.kind_id, spec.toy_index, target.K))
    b0 = K.bin_clamped(xi, spec.z_min, spec.z_max, spec.delta_z, spec.n_bins)

    total = int(t_max)
    thin = int(thin) if thin > 0 else _auto_thin(total)
    nrec = total // thin
    tr_iter = np.zeros(nrec, dtype=np.int64)
    tr_xi = np.zeros(nrec)
    tr_v = np.zeros(nrec)
    tr_bias = np.zeros(nrec)
    tr_x = np.zeros((nrec, d))
    pbox = np.zeros(1, dtype=np.int64)
    abox = np.zeros(1, dtype=np.int64)
    cache = np.array([xi, v, 0.0])
    ibox = np.array([b0, 0], dtype=np.int64)
    aprof = grid.profile()

    targs = _target_args(target)
    t = 0
    while t < total:
        n = min(total, t + CHUNK) - t
        noise = _noise_block(rng, n, d, family)
        unif = rng.random(n)
        K.run_sample_chunk(*targs,
                           spec.kind_id, spec.toy_index, spec.z_min,
                           spec.z_max, spec.delta_z, spec.n_bins,
                           aprof,
                           x, tau, cache, ibox,
                           noise, unif, t, thin,
                           tr_iter, tr_xi, tr_v, tr_bias, tr_x, pbox, abox,
                           1 if debug else 0)
        t += n

    npos = int(pbox[0])
    return ChainTrace(iters=tr_iter[:npos], xi=tr_xi[:npos],
                      potential=tr_v[:npos], bias=tr_bias[:npos],
                      states=tr_x[:npos], columns=state_columns(target),
                      grid_checksum=grid.checksum(), spec=spec)
