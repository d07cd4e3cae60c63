import os
import warnings

import numpy as np
import pytest

import abmix as ab

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")

FISHERY = os.path.join(DATA_DIR, "fishery.csv")
HIDALGO = os.path.join(DATA_DIR, "hidalgo.csv")


def require_dataset(path, expected_n):
    """Skip (with a warning) when an external benchmark dataset is absent."""
    if not os.path.exists(path):
        warnings.warn(f"dataset {path} not found; skipping benchmark check")
        pytest.skip(f"requires {os.path.basename(path)} ({expected_n} points) "
                    f"in {DATA_DIR}")
    obs = ab.load_observations(path)
    if obs.n != expected_n:
        warnings.warn(f"{path}: expected {expected_n} points, found {obs.n}")
        pytest.skip(f"{os.path.basename(path)} has wrong size")
    return obs


@pytest.fixture
def tiny_obs():
    return ab.Observations.from_values([1.0, 2.0, 3.0])


@pytest.fixture
def clump_obs():
    # two clear clumps; the standing fixture for evidence checks
    return ab.Observations.from_values([-1.1, -0.9, -1.2, 0.95, 1.1, 0.85])


@pytest.fixture
def small_mixture(clump_obs):
    prior = ab.default_prior(clump_obs, 2)
    return ab.mixture_target(clump_obs, prior)


def batch_se(values, weights, n_batches=20):
    """Batch-means standard error of a self-normalized weighted mean."""
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    n = values.size
    nb = max(2, min(n_batches, n // 2))
    edges = np.linspace(0, n, nb + 1).astype(int)
    est = []
    for b in range(nb):
        sl = slice(edges[b], edges[b + 1])
        w = weights[sl]
        est.append((values[sl] * w).sum() / w.sum())
    return float(np.std(est, ddof=1) / np.sqrt(nb))
