import numpy as np
import pytest

import abmix as ab
from abmix.errors import ConfigError
from abmix.reaction import OUT_OF_RANGE


def spec(**kw):
    base = dict(kind="q1", z_min=0.0, z_max=1.0, n_bins=4)
    base.update(kw)
    return ab.ReactionCoordinateSpec(**base)


class TestEvaluate:
    def test_projections(self, tiny_obs):
        prior = ab.default_prior(tiny_obs, 3)
        theta = ab.Theta(q=[0.3, 0.2], mu=[1.0, 2.0, 3.0],
                         lam=[1.0, 1.0, 1.0], beta=0.25)
        assert ab.evaluate(spec(kind="beta"), theta) == 0.25
        assert ab.evaluate(spec(kind="q1"), theta) == 0.3
        assert ab.evaluate(spec(kind="mu1", z_min=0, z_max=5), theta) == 1.0

    def test_neglogpost_bit_equal(self, tiny_obs):
        prior = ab.default_prior(tiny_obs, 2)
        theta = ab.Theta(q=[0.4], mu=[1.5, 2.5], lam=[t for t in (1.0, 2.0)],
                         beta=0.5)
        s = spec(kind="neglogpost", z_min=0, z_max=100)
        assert ab.evaluate(s, theta, tiny_obs, prior) == \
            ab.log_posterior_potential(theta, tiny_obs, prior)

    def test_toy_coordinate(self):
        s = spec(kind="toy", z_min=-5, z_max=5, toy_index=1)
        assert ab.evaluate(s, np.array([1.0, 2.0])) == 2.0

    def test_q1_needs_k2(self, tiny_obs):
        theta = ab.Theta(q=[], mu=[1.0], lam=[1.0], beta=1.0)
        with pytest.raises(ConfigError):
            ab.evaluate(spec(kind="q1"), theta)


class TestBinIndex:
    def test_examples(self):
        s = spec()
        assert ab.bin_index(s, 0.3) == 1
        assert ab.bin_index(s, 1.0) == 3          # right edge closed
        assert ab.bin_index(s, 1.0001) == OUT_OF_RANGE
        assert ab.bin_index(s, -0.0001) == OUT_OF_RANGE
        assert ab.bin_index(s, 0.0) == 0

    def test_midpoint_consistency(self):
        s = spec(z_min=-2.5, z_max=7.5, n_bins=37)
        for i, mid in enumerate(s.midpoints()):
            assert ab.bin_index(s, mid) == i

    def test_edges_partition(self):
        s = spec(z_min=0.05, z_max=4.0, n_bins=395)
        e = s.edges()
        assert e[0] == s.z_min and e[-1] == pytest.approx(s.z_max)
        assert len(e) == s.n_bins + 1


class TestDefaults:
    def test_beta_interval(self):
        obs = ab.Observations(values=np.array([0.0, 10.0]), n=2, R=10.0, M=5.0)
        assert ab.default_interval("beta", obs) == (0.05, 5.0)

    def test_q1_interval(self):
        assert ab.default_interval("q1") == (0.0, 1.0)

    def test_mu1_interval(self):
        obs = ab.Observations.from_values([2.5, 7.0, 13.0])
        assert ab.default_interval("mu1", obs) == (2.5, 13.0)

    def test_neglogpost_no_default(self):
        with pytest.raises(ConfigError, match="no default"):
            ab.default_interval("neglogpost")

    def test_beta_interval_scales_with_r_squared(self):
        a = ab.Observations.from_values([0.0, 1.0, 10.0])
        b = ab.Observations.from_values([0.0, 2.0, 20.0])
        lo1, hi1 = ab.default_interval("beta", a)
        lo2, hi2 = ab.default_interval("beta", b)
        assert lo2 == pytest.approx(4 * lo1) and hi2 == pytest.approx(4 * hi1)


class TestScheme:
    def test_defaults(self):
        assert ab.scheme_for("neglogpost") == "abp"
        assert ab.scheme_for("beta") == "abf"
        assert ab.scheme_for("q1") == "abf"
        assert ab.scheme_for("mu1") == "abf"
        assert ab.scheme_for("toy") == "abf"

    def test_override(self):
        assert ab.scheme_for("q1", override="abp") == "abp"
        with pytest.raises(ConfigError):
            ab.scheme_for("neglogpost", override="abf")

    def test_spec_validation(self):
        with pytest.raises(ConfigError):
            ab.ReactionCoordinateSpec(kind="beta", z_min=1.0, z_max=0.0, n_bins=4)
        with pytest.raises(ConfigError):
            ab.ReactionCoordinateSpec(kind="beta", z_min=0.0, z_max=1.0, n_bins=1)
        with pytest.raises(ConfigError):
            ab.ReactionCoordinateSpec(kind="nope", z_min=0.0, z_max=1.0, n_bins=4)
