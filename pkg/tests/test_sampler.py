import math

import numpy as np
import pytest

import abmix as ab
from abmix._backend import get_kernels
from abmix.bias import BiasGrid
from abmix.errors import ConfigError
from abmix.sampler import ChainState, initial_state, state_columns


def toy_spec(n_bins=30, lo=-4.0, hi=4.0):
    return ab.ReactionCoordinateSpec(kind="toy", z_min=lo, z_max=hi, n_bins=n_bins)


def quick_cfg(total=30_000, ncvg=10_000, seed=1, **kw):
    return ab.AdaptConfig(total_iters=total, check_interval=ncvg,
                          epsilon_stop=1e-12, seed=seed, **kw)


class TestConvergenceDistance:
    def test_gauge_shift_absorbed(self):
        now = np.array([1.0, 2.0, 3.0])
        delta, eps = ab.convergence_distance(now, now + 10.0)
        assert delta == 0.0 and eps == 0.0

    def test_hand_case(self):
        delta, eps = ab.convergence_distance([0.0, 1.0], [1.0, 0.0])
        assert delta == pytest.approx(math.sqrt(2.0))
        assert eps == pytest.approx(math.sqrt(2.0))

    def test_identical(self):
        delta, eps = ab.convergence_distance([0.5, 0.7], [0.5, 0.7])
        assert delta == 0.0 and eps == 0.0

    def test_zero_denominator(self):
        delta, eps = ab.convergence_distance([0.0, 0.0], [1.0, 2.0])
        assert eps == math.inf
        delta, eps = ab.convergence_distance([0.0, 0.0], [3.0, 3.0])
        assert delta == 0.0 and eps == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            ab.convergence_distance([1.0], [1.0, 2.0])


class TestMhStep:
    def test_zero_noise_always_accepts(self):
        rng = np.random.default_rng(0)
        st = ChainState(x=np.array([0.3]), potential=1.7)
        logdens = lambda x: -1.7
        for _ in range(20):
            st2, acc = ab.mh_step(st, np.array([0.0]), logdens, rng)
            assert acc

    def test_out_of_support_rejected(self):
        rng = np.random.default_rng(0)
        st = ChainState(x=np.array([0.5]), potential=0.0)
        logdens = lambda x: -math.inf
        for _ in range(20):
            st2, acc = ab.mh_step(st, np.array([2.0]), logdens, rng)
            assert not acc and st2.x[0] == 0.5

    def test_matches_zero_bias_sample_run(self):
        # sample_run against a flat profile is plain MH; the reference
        # single-step kernel must reproduce it given the same noise blocks
        # (the driver draws noise and uniforms in per-chunk blocks)
        target = ab.toy_target("two_mode_1d")
        spec = toy_spec()
        grid = BiasGrid.from_profile(spec, np.zeros(spec.n_bins))
        n = 2_000
        tr = ab.sample_run(target, grid, ab.ProposalScales(tau_mu=0.8),
                           t_max=n, thin=1, seed=42)

        class BlockRng:
            def __init__(self, rng, n, d):
                self.noise = rng.standard_normal((n, d))
                self.unif = rng.random(n)
                self.i = 0

            def standard_normal(self, d):
                return self.noise[self.i]

            def random(self):
                u = self.unif[self.i]
                self.i += 1
                return u

        rng = ab.sampler._make_rng(42)
        x0 = initial_state(target, spec, rng, in_window=False)
        blocks = BlockRng(rng, n, 1)
        st = ChainState(x=x0, potential=target.potential(x0))
        logdens = lambda x: -target.potential(x)
        xs = []
        for _ in range(n):
            st, _ = ab.mh_step(st, np.array([0.8]), logdens, blocks)
            xs.append(st.x[0])
        assert np.array_equal(np.asarray(xs), tr.states[:, 0])


class TestAdaptRun:
    def test_seed_determinism(self):
        target = ab.toy_target("two_mode_1d")
        spec = toy_spec()
        a = ab.adapt_run(target, spec, "abf", ab.ProposalScales(tau_mu=0.8),
                         quick_cfg())
        b = ab.adapt_run(target, spec, "abf", ab.ProposalScales(tau_mu=0.8),
                         quick_cfg())
        assert np.array_equal(a.grid.profile(), b.grid.profile())
        assert np.array_equal(a.trace.states, b.trace.states)
        assert np.array_equal(a.convergence, b.convergence)
        c = ab.adapt_run(target, spec, "abf", ab.ProposalScales(tau_mu=0.8),
                         quick_cfg(seed=2))
        assert not np.array_equal(a.grid.profile(), c.grid.profile())

    def test_truncation_all_records_in_window(self):
        target = ab.toy_target("two_mode_1d")
        spec = toy_spec(20, -2.0, 2.0)
        res = ab.adapt_run(target, spec, "abf", ab.ProposalScales(tau_mu=1.5),
                           quick_cfg(thin=1))
        assert np.all(res.trace.xi >= spec.z_min)
        assert np.all(res.trace.xi <= spec.z_max)
        assert res.grid.hit_count.sum() == res.iterations

    def test_neglogpost_with_abf_rejected_before_stepping(self, small_mixture):
        spec = ab.ReactionCoordinateSpec(kind="neglogpost", z_min=0.0,
                                         z_max=50.0, n_bins=10)
        with pytest.raises(ConfigError, match="abp"):
            ab.adapt_run(small_mixture, spec, "abf",
                         ab.ProposalScales(), quick_cfg())

    def test_debug_cache_checks_pass(self):
        target = ab.toy_target("two_mode_1d")
        res = ab.adapt_run(target, toy_spec(), "abp",
                           ab.ProposalScales(tau_mu=0.8),
                           quick_cfg(total=25_000, ncvg=25_000, debug=True))
        assert res.iterations == 25_000

    def test_early_stop_requires_coverage(self):
        # huge epsilon would stop at the first check, but only once every
        # bin has been visited
        target = ab.toy_target("two_mode_1d")
        res = ab.adapt_run(target, toy_spec(40), "abf",
                           ab.ProposalScales(tau_mu=0.6),
                           ab.AdaptConfig(total_iters=200_000,
                                          check_interval=1_000,
                                          epsilon_stop=1e9, seed=3))
        assert res.stopped_early
        assert res.grid.hit_count.min() > 0

    def test_mixture_beta_adapt(self, small_mixture):
        obs = small_mixture.obs
        spec = ab.ReactionCoordinateSpec(kind="beta", z_min=0.05, z_max=1.25,
                                         n_bins=24)
        res = ab.adapt_run(small_mixture, spec, "abf",
                           ab.ProposalScales(tau_q=0.02, tau_mu=0.12,
                                             tau_v=0.35, tau_beta=0.01),
                           quick_cfg(total=60_000, ncvg=30_000))
        assert res.grid.frozen
        assert 0 < res.accepted < res.iterations
        assert state_columns(small_mixture) == \
            ["q1", "mu1", "mu2", "lambda1", "lambda2", "beta"]


class TestSampleRun:
    def test_seed_determinism(self):
        target = ab.toy_target("two_mode_1d")
        grid = BiasGrid.from_profile(toy_spec(), np.zeros(30))
        a = ab.sample_run(target, grid, ab.ProposalScales(tau_mu=0.8),
                          t_max=20_000, thin=10, seed=9)
        b = ab.sample_run(target, grid, ab.ProposalScales(tau_mu=0.8),
                          t_max=20_000, thin=10, seed=9)
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.bias, b.bias)

    def test_requires_frozen(self):
        target = ab.toy_target("two_mode_1d")
        with pytest.raises(ConfigError, match="frozen"):
            ab.sample_run(target, BiasGrid(toy_spec(), "abf"),
                          ab.ProposalScales(), t_max=10, thin=1, seed=0)

    def test_no_truncation_rejection(self):
        # with a narrow window the chain must still roam outside it
        target = ab.toy_target("two_mode_1d")
        spec = toy_spec(10, -0.5, 0.5)
        grid = BiasGrid.from_profile(spec, np.zeros(10))
        tr = ab.sample_run(target, grid, ab.ProposalScales(tau_mu=1.0),
                           t_max=50_000, thin=5, seed=4)
        assert (tr.xi < spec.z_min).any() and (tr.xi > spec.z_max).any()

    def test_detailed_balance_frozen_kernel(self):
        # 3-bin discretized check of pi(a) P(a->b) = pi(b) P(b->a)
        target = ab.toy_target("two_mode_1d")
        spec = toy_spec(3, -3.0, 3.0)
        grid = BiasGrid.from_profile(spec, np.array([0.0, 0.9, 0.4]))
        tr = ab.sample_run(target, grid, ab.ProposalScales(tau_mu=1.2),
                           t_max=400_000, thin=1, seed=12)
        bins = np.clip(((tr.xi - spec.z_min) / spec.delta_z).astype(int), 0, 2)
        counts = np.zeros((3, 3))
        for a, b in zip(bins[:-1], bins[1:]):
            counts[a, b] += 1
        for a in range(3):
            for b in range(a + 1, 3):
                flow_ab, flow_ba = counts[a, b], counts[b, a]
                sigma = math.sqrt(flow_ab + flow_ba)
                assert abs(flow_ab - flow_ba) < 3 * sigma + 1e-9


class TestTraceIO:
    def test_round_trip(self, tmp_path):
        target = ab.toy_target("two_mode_2d")
        spec = toy_spec(8, -4.0, 4.0)
        grid = BiasGrid.from_profile(spec, np.linspace(0, 1, 8))
        tr = ab.sample_run(target, grid, ab.ProposalScales(tau_mu=0.7),
                           t_max=5_000, thin=7, seed=5)
        path = tmp_path / "trace.csv"
        tr.to_csv(path)
        back = ab.ChainTrace.from_csv(path, spec=spec)
        assert back.columns == tr.columns
        assert np.array_equal(back.iters, tr.iters)
        assert np.array_equal(back.states, tr.states)
        assert np.array_equal(back.bias, tr.bias)

    def test_thin_count(self):
        target = ab.toy_target("two_mode_1d")
        grid = BiasGrid.from_profile(toy_spec(), np.zeros(30))
        tr = ab.sample_run(target, grid, ab.ProposalScales(tau_mu=0.8),
                           t_max=10_000, thin=100, seed=0)
        assert len(tr) == 100
        assert tr.iters[0] == 100 and tr.iters[-1] == 10_000


class TestInitialState:
    @pytest.mark.parametrize("kind", ["beta", "q1", "mu1"])
    def test_mixture_in_window(self, small_mixture, kind):
        obs = small_mixture.obs
        if kind == "beta":
            lo, hi = 0.05, 1.25
        elif kind == "q1":
            lo, hi = 0.0, 1.0
        else:
            lo, hi = obs.values.min(), obs.values.max()
        spec = ab.ReactionCoordinateSpec(kind=kind, z_min=lo, z_max=hi, n_bins=8)
        for seed in range(5):
            rng = ab.sampler._make_rng(seed)
            x = initial_state(small_mixture, spec, rng, in_window=True,
                              tau=np.full(small_mixture.dimension, 0.1))
            z = x[-1] if kind == "beta" else (x[0] if kind == "q1" else x[1])
            assert lo <= z <= hi
            assert small_mixture.is_valid(x)

    def test_neglogpost_walk_in(self, small_mixture):
        obs = small_mixture.obs
        # compute a plausible V window from a quick unbiased run
        v0 = small_mixture.potential(
            initial_state(small_mixture,
                          ab.ReactionCoordinateSpec(kind="beta", z_min=0.05,
                                                    z_max=1.25, n_bins=8),
                          ab.sampler._make_rng(0), in_window=False))
        spec = ab.ReactionCoordinateSpec(kind="neglogpost", z_min=v0 - 30,
                                         z_max=v0 + 30, n_bins=12)
        rng = ab.sampler._make_rng(1)
        x = initial_state(small_mixture, spec, rng, in_window=True,
                          tau=ab.ProposalScales(tau_q=0.02, tau_mu=0.12,
                                                tau_v=0.35, tau_beta=0.01
                                                ).vector_for(small_mixture))
        assert spec.z_min <= small_mixture.potential(x) <= spec.z_max


class _BackendSwap:
    """Temporarily point every kernel-using module at another backend."""

    MODULES = ("sampler", "bias", "model", "reaction")

    def __init__(self, name):
        self.kern = get_kernels(name)

    def __enter__(self):
        import abmix.bias, abmix.model, abmix.reaction, abmix.sampler
        self.saved = {m: getattr(getattr(ab, m), "K") for m in self.MODULES}
        for m in self.MODULES:
            setattr(getattr(ab, m), "K", self.kern)
        return self

    def __exit__(self, *exc):
        for m, kern in self.saved.items():
            setattr(getattr(ab, m), "K", kern)
        return False


@pytest.mark.skipif(ab.backend_name() != "compiled",
                    reason="compiled backend not built")
class TestBackendEquivalence:
    @pytest.mark.parametrize("scheme", ["abf", "abp"])
    def test_toy_bitwise_equal(self, scheme):
        target = ab.toy_target("two_mode_1d")
        spec = toy_spec()
        cfg = quick_cfg(total=20_000, ncvg=10_000, thin=50)
        results = {}
        for name in ("python", "compiled"):
            with _BackendSwap(name):
                res = ab.adapt_run(target, spec, scheme,
                                   ab.ProposalScales(tau_mu=0.8), cfg)
                tr = ab.sample_run(target, res.grid,
                                   ab.ProposalScales(tau_mu=0.8),
                                   t_max=10_000, thin=20, seed=77)
                results[name] = (res, tr)
        ra, rb = results["python"][0], results["compiled"][0]
        ta, tb = results["python"][1], results["compiled"][1]
        assert np.array_equal(ra.grid.profile(), rb.grid.profile())
        assert np.array_equal(ra.trace.states, rb.trace.states)
        assert np.array_equal(ra.convergence, rb.convergence)
        assert np.array_equal(ta.states, tb.states)
        assert np.array_equal(ta.bias, tb.bias)

    def test_mixture_bitwise_equal(self, small_mixture):
        spec = ab.ReactionCoordinateSpec(kind="beta", z_min=0.05, z_max=1.25,
                                         n_bins=16)
        scales = ab.ProposalScales(tau_q=0.02, tau_mu=0.12, tau_v=0.35,
                                   tau_beta=0.01)
        cfg = quick_cfg(total=15_000, ncvg=15_000, thin=100)
        out = {}
        for name in ("python", "compiled"):
            with _BackendSwap(name):
                out[name] = ab.adapt_run(small_mixture, spec, "abf", scales, cfg)
        assert np.array_equal(out["python"].grid.force_sum,
                              out["compiled"].grid.force_sum)
        assert np.array_equal(out["python"].trace.states,
                              out["compiled"].trace.states)
