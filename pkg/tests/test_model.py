"""Transition structure, joint density assembly, and forward simulation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fscd.density import BernsteinWeights, ClusterLaw, cluster_loglik, regular_loglik
from fscd.model import (
    DayStructure,
    DurationData,
    LatentPath,
    ModelParams,
    ar_decays,
    build_structures,
    day_structure,
    indicator_logpdf,
    indicator_stationary,
    joint_log_density,
    observation_loglik,
    ou_step,
    simulate,
    state_transition_logpdf,
)
from fscd.priors import load_preset
from fscd.splines import SplineBasis, eval_diurnal


def gir_params(**kw):
    base = dict(
        phi=0.03,
        sigma=0.25,
        delta=np.array([1.0, 0.9, 1.1, 1.0]),
        tau=200.0,
        beta=BernsteinWeights([0.5, 0.3, 0.2]),
        xi00=0.4,
        xi11=0.8,
        cluster=ClusterLaw.continuous(100.0, 50.0, 0.5),
    )
    base.update(kw)
    return ModelParams(**base)


BASIS = SplineBasis(0.0, 600.0, 2)


class TestModelParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            gir_params(phi=-0.1)
        with pytest.raises(ValueError):
            gir_params(sigma=0.0)
        with pytest.raises(ValueError):
            gir_params(xi00=1.5)
        with pytest.raises(ValueError):
            gir_params(xi00=None)  # xi11 still set
        with pytest.raises(ValueError):
            gir_params(xi00=None, xi11=None)  # cluster still set

    def test_theta_roundtrip(self):
        p = gir_params()
        np.testing.assert_allclose(p.theta, [np.log(0.03), np.log(0.25)])
        q = p.with_theta(np.array([-3.0, -1.0]))
        assert q.phi == pytest.approx(np.exp(-3.0))
        assert q.sigma == pytest.approx(np.exp(-1.0))
        assert q.beta is p.beta

    def test_regular_only(self):
        p = gir_params(xi00=None, xi11=None, cluster=None)
        assert p.regular_only
        assert not gir_params().regular_only

    def test_replace_keeps_rest(self):
        p = gir_params()
        q = p.replace(tau=5.0)
        assert q.tau == 5.0
        assert q.phi == p.phi and q.xi11 == p.xi11


class TestDurationData:
    def test_basic(self):
        d = DurationData([np.array([0.0, 1.5, 4.0]), np.array([0.0, 2.0])])
        assert d.D == 2
        assert d.n(0) == 2 and d.n(1) == 1
        np.testing.assert_allclose(d.durations(0), [1.5, 2.5])
        np.testing.assert_array_equal(d.counts, [2, 1])
        assert d.total == 3
        np.testing.assert_allclose(d.all_durations(), [1.5, 2.5, 2.0])

    def test_validation(self):
        with pytest.raises(ValueError):
            DurationData([np.array([0.0, 2.0, 1.0])])
        with pytest.raises(ValueError):
            DurationData([np.array([0.0, 1.5])], discrete=True)
        with pytest.raises(ValueError):
            DurationData([np.zeros(0)])

    def test_zero_durations_allowed(self):
        d = DurationData([np.array([0.0, 3.0, 3.0, 5.0])], discrete=True)
        np.testing.assert_allclose(d.durations(0), [3.0, 0.0, 2.0])


class TestIndicatorChain:
    def test_stationary_example(self):
        xi0, xi1 = indicator_stationary(0.4, 0.8)
        assert xi0 == pytest.approx(0.25)
        assert xi1 == pytest.approx(0.75)

    def test_stationary_is_fixed_point(self):
        xi0, xi1 = indicator_stationary(0.7, 0.9)
        P = np.array([[0.7, 0.3], [0.1, 0.9]])
        np.testing.assert_allclose(np.array([xi0, xi1]) @ P, [xi0, xi1])

    def test_degenerate_raises(self):
        with pytest.raises(ValueError):
            indicator_stationary(1.0, 1.0)

    def test_logpdf_by_hand(self):
        p = gir_params()
        s = np.array([1, 1, 0])
        want = np.log(0.75) + np.log(0.8) + np.log(1.0 - 0.8)
        assert indicator_logpdf(s, p) == pytest.approx(want)

    def test_logpdf_normalizes(self):
        p = gir_params()
        total = 0.0
        for code in range(2**4):
            s = np.array([(code >> k) & 1 for k in range(4)])
            total += np.exp(indicator_logpdf(s, p))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_empty_day(self):
        assert indicator_logpdf(np.zeros(0, dtype=int), gir_params()) == 0.0


class TestOuStep:
    def test_zero_gap_degenerates(self):
        p = gir_params()
        mean, var = ou_step(0.7, 0.0, 50.0, 50.0, p, BASIS)
        assert mean == pytest.approx(0.7)
        assert var == 0.0

    def test_long_gap_forgets(self):
        p = gir_params()
        mean, var = ou_step(5.0, 1e6, 300.0, 200.0, p, BASIS)
        assert mean == pytest.approx(eval_diurnal(BASIS, p.delta, 300.0))
        assert var == pytest.approx(p.sigma**2)

    def test_formula(self):
        p = gir_params()
        mean, var = ou_step(1.3, 12.0, 112.0, 100.0, p, BASIS)
        e = np.exp(-p.phi * 12.0)
        m_now = eval_diurnal(BASIS, p.delta, 112.0)
        m_prev = eval_diurnal(BASIS, p.delta, 100.0)
        assert mean == pytest.approx(m_now + e * (1.3 - m_prev))
        assert var == pytest.approx(p.sigma**2 * (1.0 - e**2))

    def test_negative_duration_raises(self):
        with pytest.raises(ValueError):
            ou_step(0.0, -1.0, 10.0, 11.0, gir_params(), BASIS)


class TestDayStructure:
    def test_grouping_with_ties(self):
        times = np.array([0.0, 3.0, 3.0, 3.0, 7.0, 9.0])
        struct = day_structure(times, BASIS)
        assert struct.n == 5
        np.testing.assert_array_equal(struct.gidx, [0, 1, 1, 1, 2])
        np.testing.assert_allclose(struct.gt, [0.0, 3.0, 7.0])
        np.testing.assert_allclose(struct.gaps, [3.0, 4.0])
        assert struct.G == 3
        assert struct.B.shape == (3, BASIS.L)

    def test_group_values_and_expand(self):
        times = np.array([0.0, 3.0, 3.0, 7.0])
        struct = day_structure(times, BASIS)
        x = np.array([0.5, -0.2, -0.2])
        np.testing.assert_allclose(struct.group_values(x), [0.5, -0.2])
        np.testing.assert_allclose(struct.expand(np.array([0.5, -0.2])), x)
        assert struct.consistent(x)
        assert not struct.consistent(np.array([0.5, -0.2, -0.3]))

    def test_reduce_sum(self):
        struct = day_structure(np.array([0.0, 3.0, 3.0, 7.0]), BASIS)
        np.testing.assert_allclose(
            struct.reduce_sum(np.array([1.0, 10.0, 100.0])), [1.0, 110.0]
        )

    def test_homogeneous_ignores_ties(self):
        times = np.array([0.0, 3.0, 3.0, 7.0])
        struct = day_structure(times, BASIS, homogeneous=True)
        assert struct.G == struct.n == 3
        np.testing.assert_array_equal(struct.gidx, [0, 1, 2])
        e, sd = ar_decays(struct, 0.5, 2.0)
        np.testing.assert_allclose(e, np.exp(-0.5) * np.ones(2))
        np.testing.assert_allclose(sd[1:], 2.0 * np.sqrt(1 - np.exp(-1.0)) * np.ones(2))
        assert sd[0] == 2.0

    def test_empty_day(self):
        struct = day_structure(np.array([0.0]), BASIS)
        assert struct.n == 0 and struct.G == 0

    def test_ar_decays_heterogeneous(self):
        struct = day_structure(np.array([0.0, 3.0, 7.0, 9.0]), BASIS)
        e, sd = ar_decays(struct, 0.03, 0.25)
        np.testing.assert_allclose(e, np.exp(-0.03 * np.array([3.0, 4.0])))
        np.testing.assert_allclose(sd**2, 0.25**2 * np.concatenate([[1.0], 1 - e**2]))

    @given(
        st.lists(st.integers(min_value=0, max_value=3), min_size=1, max_size=12),
    )
    @settings(max_examples=60, deadline=None)
    def test_grouping_invariants(self, gaps):
        times = np.concatenate([[0.0], np.cumsum(gaps, dtype=float)])
        struct = day_structure(times, BASIS)
        sizes = struct.reduce_sum(np.ones(struct.n))
        assert sizes.sum() == struct.n
        assert (sizes >= 1).all()
        v = np.linspace(-1.0, 1.0, struct.G)
        x = struct.expand(v)
        assert struct.consistent(x)
        np.testing.assert_allclose(struct.group_values(x), v)


def sequential_state_logpdf(times, x, p, basis, homogeneous=False):
    """Chain the one-step transitions directly as a cross-check."""
    st_times = times[:-1]
    if homogeneous:
        keep = np.arange(st_times.size)
    else:
        keep = np.concatenate([[0], np.flatnonzero(np.diff(st_times) > 0) + 1])
    v = x[keep]
    tv = st_times[keep]
    lp = stats.norm.logpdf(v[0], eval_diurnal(basis, p.delta, tv[0]), p.sigma)
    for g in range(1, v.size):
        gap = 1.0 if homogeneous else tv[g] - tv[g - 1]
        mean, var = ou_step(v[g - 1], gap, tv[g], tv[g - 1], p, basis)
        lp += stats.norm.logpdf(v[g], mean, np.sqrt(var))
    return float(lp)


class TestStateTransitionLogpdf:
    def test_matches_sequential_no_ties(self):
        rng = np.random.default_rng(3)
        p = gir_params()
        times = np.concatenate([[0.0], np.sort(rng.uniform(1.0, 599.0, 8))])
        x = rng.normal(1.0, 0.3, 8)
        struct = day_structure(times, BASIS)
        got = state_transition_logpdf(struct, x, p)
        want = sequential_state_logpdf(times, x, p, BASIS)
        assert got == pytest.approx(want, rel=1e-12)

    def test_matches_sequential_with_ties(self):
        p = gir_params()
        times = np.array([0.0, 2.0, 5.0, 5.0, 5.0, 9.0, 9.0, 14.0])
        rng = np.random.default_rng(4)
        struct = day_structure(times, BASIS)
        x = struct.expand(rng.normal(1.0, 0.3, struct.G))
        got = state_transition_logpdf(struct, x, p)
        want = sequential_state_logpdf(times, x, p, BASIS)
        assert got == pytest.approx(want, rel=1e-12)

    def test_homogeneous_dynamics(self):
        p = gir_params()
        times = np.array([0.0, 2.0, 2.0, 9.0])
        rng = np.random.default_rng(5)
        x = rng.normal(1.0, 0.3, 3)
        struct = day_structure(times, BASIS, homogeneous=True)
        got = state_transition_logpdf(struct, x, p)
        want = sequential_state_logpdf(times, x, p, BASIS, homogeneous=True)
        assert got == pytest.approx(want, rel=1e-12)

    def test_inconsistent_ties_impossible(self):
        p = gir_params()
        struct = day_structure(np.array([0.0, 4.0, 4.0, 8.0]), BASIS)
        assert state_transition_logpdf(struct, np.array([0.1, 0.2, 0.3]), p) == -np.inf

    def test_empty_day(self):
        struct = day_structure(np.array([0.0]), BASIS)
        assert state_transition_logpdf(struct, np.zeros(0), gir_params()) == 0.0


class TestObservationLoglik:
    def test_splits_by_regime(self):
        p = gir_params()
        y = np.array([3.0, 0.004, 11.0, 0.02])
        s = np.array([1, 0, 1, 0])
        x = np.array([1.1, 0.0, 0.8, 0.0])
        want = regular_loglik(y[s == 1], x[s == 1], p.coeffs).sum()
        want += cluster_loglik(y[s == 0], p.cluster).sum()
        got = observation_loglik(y, s, x, p, discrete=False)
        assert got == pytest.approx(float(want))

    def test_discrete_flag_passes_through(self):
        p = gir_params(cluster=ClusterLaw.discrete(0.95))
        y = np.array([3.0, 0.0, 1.0])
        s = np.array([1, 0, 0])
        x = np.array([1.1, 0.0, 0.0])
        want = regular_loglik(y[:1], x[:1], p.coeffs, discrete=True).sum()
        want += cluster_loglik(y[1:], p.cluster).sum()
        got = observation_loglik(y, s, x, p, discrete=True)
        assert got == pytest.approx(float(want))

    def test_cluster_without_law(self):
        p = gir_params(xi00=None, xi11=None, cluster=None)
        out = observation_loglik(
            np.array([1.0]), np.array([0]), np.array([0.0]), p, discrete=False
        )
        assert out == -np.inf


class TestJointLogDensity:
    def setup_method(self):
        self.hyper = load_preset("gir").hyper
        self.p = gir_params()
        rng = np.random.default_rng(11)
        self.data, self.path = simulate(self.p, 2, BASIS, rng)

    def test_additive_assembly(self):
        from fscd.priors import log_prior

        got = joint_log_density(self.p, self.hyper, self.path, self.data, BASIS)
        want = log_prior(self.p, self.hyper)
        for d in range(self.data.D):
            struct = day_structure(self.data.times[d], BASIS)
            want += state_transition_logpdf(struct, self.path.x[d], self.p)
            want += indicator_logpdf(self.path.s[d], self.p)
            want += observation_loglik(
                self.data.durations(d), self.path.s[d], self.path.x[d], self.p, False
            )
        assert got == pytest.approx(want, rel=1e-12)
        assert np.isfinite(got)

    def test_length_mismatch_raises(self):
        bad = LatentPath(
            [s[:-1] for s in self.path.s], [x[:-1] for x in self.path.x]
        )
        with pytest.raises(ValueError):
            joint_log_density(self.p, self.hyper, bad, self.data, BASIS)

    def test_regular_only_rejects_cluster_regime(self):
        p = gir_params(xi00=None, xi11=None, cluster=None)
        path = self.path.copy()
        if not (path.s[0] == 0).any():
            path.s[0][0] = 0
        with pytest.raises(ValueError):
            joint_log_density(p, self.hyper, path, self.data, BASIS)


class TestSimulate:
    def test_deterministic_given_seed(self):
        p = gir_params()
        d1, p1 = simulate(p, 2, BASIS, np.random.default_rng(42))
        d2, p2 = simulate(p, 2, BASIS, np.random.default_rng(42))
        for a, b in zip(d1.times, d2.times):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(p1.x, p2.x):
            np.testing.assert_array_equal(a, b)

    def test_times_inside_session(self):
        data, path = simulate(gir_params(), 3, BASIS, np.random.default_rng(1))
        for d in range(data.D):
            t = data.times[d]
            assert t[0] == BASIS.t_open
            assert t[-1] <= BASIS.t_close
            assert (np.diff(t) > 0).all()  # continuous ties have measure zero
            assert path.s[d].size == path.x[d].size == data.n(d)

    def test_discrete_records_whole_seconds(self):
        p = gir_params(cluster=ClusterLaw.discrete(0.9))
        data, path = simulate(p, 3, BASIS, np.random.default_rng(7), discrete=True)
        assert data.discrete
        total = data.total
        assert total > 50
        y = data.all_durations()
        assert np.all(y == np.floor(y))
        assert (y == 0.0).sum() > 0
        # grouped-state consistency must hold by construction
        for d in range(data.D):
            struct = day_structure(data.times[d], BASIS)
            assert struct.consistent(path.x[d])

    def test_regular_mean_matches_lognormal(self):
        # flat diurnal level: every state is marginally N(m, sigma^2), so
        # E[y] = exp(m + sigma^2/2); boundary censoring is the only slack
        wide = SplineBasis(0.0, 40000.0, 2)
        p = gir_params(
            xi00=None,
            xi11=None,
            cluster=None,
            delta=np.full(4, 1.2),
            phi=0.5,
            sigma=0.3,
        )
        data, _ = simulate(p, 1, wide, np.random.default_rng(21))
        y = data.all_durations()
        assert y.size > 5000
        want = np.exp(1.2 + 0.3**2 / 2)
        se = y.std() / np.sqrt(y.size)
        assert abs(y.mean() - want) < 4 * se + 0.02 * want

    def test_cluster_fraction_near_stationary(self):
        p = gir_params()
        data, path = simulate(p, 5, BASIS, np.random.default_rng(33))
        s = np.concatenate(path.s)
        assert s.size > 1000
        frac = (s == 0).mean()
        assert abs(frac - 0.25) < 0.05

    def test_build_structures_covers_days(self):
        data, _ = simulate(gir_params(), 2, BASIS, np.random.default_rng(2))
        structs = build_structures(data, BASIS)
        assert len(structs) == data.D
        for d, struct in enumerate(structs):
            assert struct.n == data.n(d)
