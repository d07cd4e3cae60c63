"""Binned bias state: force accumulators (ABF), log-weight accumulators
(ABP), profile reconstruction, and the profile-level efficiency factor.

Profiles are reported gauge-anchored (minimum value 0); the bias is only
ever defined up to an additive constant.  Outside the truncation interval
the profile is extended by its boundary values.
"""

from __future__ import annotations

import hashlib

import numpy as np

from ._backend import kernels as K
from .errors import ConfigError
from .reaction import ReactionCoordinateSpec

MODES = ("abf", "abp")


class BiasGrid:
    """Running bias along a binned reaction coordinate.

    ABF accumulates per-bin force sums; the bias is the mean force
    integrated to each bin midpoint.  ABP accumulates per-bin weights
    exp(-bias at sampling time), starting from 1 per bin; the bias is minus
    the log of the normalized accumulator.
    """

    def __init__(self, spec: ReactionCoordinateSpec, mode: str):
        if mode not in MODES:
            raise ConfigError(f"unknown bias mode {mode!r}")
        self.spec = spec
        self.mode = mode
        nb = spec.n_bins
        self.force_sum = np.zeros(nb)
        self.hit_count = np.zeros(nb, dtype=np.int64)
        self.log_weight = np.zeros(nb)
        self.frozen = False
        self._frozen_profile = None
        self._cache = None
        self._dirty = True

    # -- recording ----------------------------------------------------------

    def record_force(self, bin_index: int, force: float) -> "BiasGrid":
        """ABF update: add one force observation to a bin."""
        self._require_live("abf")
        self.force_sum[bin_index] += force
        self.hit_count[bin_index] += 1
        self._dirty = True
        return self

    def record_weight(self, bin_index: int, bias_at_sample: float) -> "BiasGrid":
        """ABP update: add exp(-bias_at_sample) to a bin's accumulator."""
        self._require_live("abp")
        self.log_weight[bin_index] = K.logaddexp(self.log_weight[bin_index],
                                                 -bias_at_sample)
        self.hit_count[bin_index] += 1
        self._dirty = True
        return self

    def _require_live(self, mode):
        if self.frozen:
            raise ConfigError("cannot record into a frozen bias grid")
        if self.mode != mode:
            raise ConfigError(f"grid mode is {self.mode!r}, not {mode!r}")

    # -- profiles -----------------------------------------------------------

    def mean_force(self) -> np.ndarray:
        """Per-bin running mean force; 0 in never-visited bins (ABF)."""
        out = np.zeros(self.spec.n_bins)
        seen = self.hit_count > 0
        out[seen] = self.force_sum[seen] / self.hit_count[seen]
        return out

    def profile(self) -> np.ndarray:
        """Bias at bin midpoints, gauge-anchored so its minimum is 0."""
        if self.frozen:
            return self._frozen_profile
        if self._dirty or self._cache is None:
            if self.mode == "abf":
                f = self.mean_force()
                cum = np.concatenate(([0.0], np.cumsum(f)[:-1]))
                raw = self.spec.delta_z * (cum + 0.5 * f)
            else:
                raw = -self.log_weight
            self._cache = raw - raw.min()
            self._dirty = False
        return self._cache

    def normalized_profile(self) -> np.ndarray:
        """ABP profile in the gauge where dz * sum(exp(-A)) = 1."""
        if self.mode != "abp":
            raise ConfigError("normalized profile only defined for abp grids")
        lw = self.log_weight
        mx = lw.max()
        log_total = mx + np.log(np.exp(lw - mx).sum())
        return -lw + np.log(self.spec.delta_z) + log_total

    def bias_at(self, z: float) -> float:
        """Profile value at z, constantly extended outside [z_min, z_max]."""
        s = self.spec
        i = K.bin_clamped(float(z), s.z_min, s.z_max, s.delta_z, s.n_bins)
        return float(self.profile()[i])

    # -- lifecycle ----------------------------------------------------------

    def freeze(self) -> "BiasGrid":
        """Fix the current profile; the grid becomes read-only."""
        if not self.frozen:
            self._frozen_profile = self.profile().copy()
            self.frozen = True
        return self

    def clip(self, max_range: float) -> "BiasGrid":
        """Clamp profile values to min + max_range (frozen grids only).

        Cuts off sharply rising bias in barely-visited bins, which would
        otherwise starve the importance sampling step.
        """
        if max_range <= 0:
            raise ConfigError("max_range must be positive")
        if not self.frozen:
            self.freeze()
        p = self._frozen_profile
        np.minimum(p, p.min() + max_range, out=p)
        return self

    def theoretical_ef(self) -> float:
        """Predicted importance-sampling efficiency from the profile alone:
        (integral of exp(-A))^2 over (width * integral of exp(-2A))."""
        p = self.profile()
        w = np.exp(-(p - p.min()))  # gauge-free; exactly 1 for a flat profile
        return float(w.sum() ** 2 / (self.spec.n_bins * (w**2).sum()))

    def checksum(self) -> str:
        s = self.spec
        meta = f"{s.kind}:{s.toy_index}:{s.z_min!r}:{s.z_max!r}:{s.n_bins}"
        digest = hashlib.sha256(meta.encode() + self.profile().tobytes())
        return digest.hexdigest()[:16]

    @classmethod
    def from_profile(cls, spec: ReactionCoordinateSpec, profile,
                     mode: str = "abf") -> "BiasGrid":
        """Frozen grid from explicit profile values (anchored to min 0)."""
        grid = cls(spec, mode)
        profile = np.asarray(profile, dtype=np.float64)
        if profile.size != spec.n_bins:
            raise ConfigError("profile length does not match n_bins")
        grid._frozen_profile = profile - profile.min()
        grid.frozen = True
        return grid


# ---------------------------------------------------------------------------
# Profile files: CSV `z_mid,A`, one row per bin, exact float round-trip.
# ---------------------------------------------------------------------------

def write_profile(grid: BiasGrid, path) -> None:
    mids = grid.spec.midpoints()
    prof = grid.profile()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("z_mid,A\n")
        for z, a in zip(mids, prof):
            fh.write(f"{float(z)!r},{float(a)!r}\n")


def read_profile(path, spec: ReactionCoordinateSpec) -> BiasGrid:
    mids = []
    prof = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "z_mid,A":
            raise ConfigError(f"{path}: expected header 'z_mid,A'")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            z, a = line.split(",")
            mids.append(float(z))
            prof.append(float(a))
    if len(prof) != spec.n_bins:
        raise ConfigError(
            f"{path}: {len(prof)} bins, config says {spec.n_bins}")
    if not np.array_equal(np.asarray(mids), spec.midpoints()):
        raise ConfigError(f"{path}: bin midpoints do not match the configured "
                          "interval (z_min/z_max/n_bins)")
    return BiasGrid.from_profile(spec, np.asarray(prof))
