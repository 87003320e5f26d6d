"""Correctness-harness tests: the per-transaction forward draw, the
data-redraw move, the monitored-column bookkeeping, and short runs of
the full prior-invariant chain."""

import numpy as np
import pytest

from fscd.density import BernsteinWeights, ClusterLaw
from fscd.diagnostics import obm_nse
from fscd.gir import (
    GirConfig,
    GirResult,
    gir_simulate,
    gir_state_step,
    monitored_names,
    prior_means,
    redraw_data,
    run_gir,
)
from fscd.mcmc import ChainState
from fscd.model import (
    LatentPath,
    ModelParams,
    day_structure,
    eval_diurnal,
    state_transition_logpdf,
)
from fscd.priors import load_preset
from fscd.splines import SplineBasis

PRESET = load_preset("gir")
HYPER = PRESET.hyper
BASIS = SplineBasis(PRESET.t_open, PRESET.t_close, HYPER.M)


def flat_params(level=0.0, cluster=None):
    # constant diurnal level so the redraw anchors contribute nothing
    return ModelParams(
        phi=np.exp(-3.5),
        sigma=np.exp(-1.5),
        delta=np.full(HYPER.L, level),
        tau=200.0,
        beta=BernsteinWeights([0.5, 0.3, 0.2]),
        xi00=0.4,
        xi11=0.8,
        cluster=cluster or ClusterLaw.continuous(100.0, 50.0, 0.5),
    )


class TestMonitoredColumns:
    def test_continuous_names(self):
        names = monitored_names(HYPER, discrete=False)
        assert names == [
            "theta1", "theta2", "tau", "level",
            "beta1", "beta2", "beta3",
            "xi00", "xi11", "lam1", "lam2", "pi",
        ]

    def test_discrete_names(self):
        names = monitored_names(HYPER, discrete=True)
        assert names[-1] == "zeta"
        assert len(names) == 10
        assert "lam1" not in names

    def test_continuous_prior_means(self):
        want = [-3.5, -1.5, 200.0, 1.0, 0.5, 0.3, 0.2, 0.4, 0.8, 100.0, 50.0, 0.5]
        assert np.allclose(prior_means(HYPER, discrete=False), want)

    def test_discrete_prior_means(self):
        want = [-3.5, -1.5, 200.0, 1.0, 0.5, 0.3, 0.2, 0.4, 0.8, 0.95]
        assert np.allclose(prior_means(HYPER, discrete=True), want)


class TestStateStep:
    def test_flat_level_recursion(self):
        p = flat_params(level=0.7)
        mean, var = gir_state_step(1.3, 250.0, 180.0, p, BASIS)
        e = np.exp(-p.phi)
        assert mean == pytest.approx(0.7 + e * (1.3 - 0.7), rel=1e-12)
        assert var == pytest.approx(p.sigma**2 * (1.0 - np.exp(-2.0 * p.phi)))

    def test_decay_ignores_elapsed_time(self):
        # per-transaction dynamics: only the anchor points see the clock
        p = flat_params()
        a = gir_state_step(0.5, 100.0, 99.0, p, BASIS)
        b = gir_state_step(0.5, 500.0, 10.0, p, BASIS)
        assert a == b

    def test_moving_anchor_shifts_mean(self):
        p = flat_params()
        delta = np.array([0.0, 0.5, 1.0, 1.5])
        p = p.replace(delta=delta)
        mean, _ = gir_state_step(0.2, 400.0, 100.0, p, BASIS)
        m_now = eval_diurnal(BASIS, delta, 400.0)
        m_prev = eval_diurnal(BASIS, delta, 100.0)
        e = np.exp(-p.phi)
        assert mean == pytest.approx(m_now + e * (0.2 - m_prev), rel=1e-12)


class TestSimulate:
    def test_shapes_and_session_bounds(self):
        p = flat_params()
        data, path = gir_simulate(p, 50, BASIS, np.random.default_rng(0))
        t = data.times[0]
        assert t.size == 51
        assert t[0] == BASIS.t_open and t[-1] <= BASIS.t_close
        assert np.all(np.diff(t) > 0.0)
        assert path.s[0].shape == (50,) and set(path.s[0]) <= {0, 1}
        assert np.all(np.isfinite(path.x[0]))

    def test_discrete_times_are_integers(self):
        p = flat_params(cluster=ClusterLaw.discrete(0.95))
        data, _ = gir_simulate(p, 30, BASIS, np.random.default_rng(1), discrete=True)
        t = data.times[0]
        assert data.discrete
        assert np.all(t == np.floor(t))
        assert np.all(np.diff(t) >= 0.0)

    def test_replay_is_deterministic(self):
        p = flat_params()
        a, pa = gir_simulate(p, 40, BASIS, np.random.default_rng(2))
        b, pb = gir_simulate(p, 40, BASIS, np.random.default_rng(2))
        assert np.array_equal(a.times[0], b.times[0])
        assert np.array_equal(pa.x[0], pb.x[0])

    def test_impossible_session_raises(self):
        # mean durations around e^8 seconds cannot fit 50 into a session
        p = flat_params(level=8.0, cluster=ClusterLaw.continuous(1e-3, 1e-3, 0.5))
        with pytest.raises(RuntimeError, match="no admissible path"):
            gir_simulate(p, 50, BASIS, np.random.default_rng(3), max_tries=5)


class TestRedraw:
    def test_flat_level_makes_anchor_terms_cancel(self):
        p = flat_params(level=0.4)
        rng = np.random.default_rng(4)
        n = 20
        t_a = np.concatenate([[0.0], np.sort(rng.uniform(1.0, 599.0, n))])
        t_b = np.concatenate([[0.0], np.sort(rng.uniform(1.0, 599.0, n))])
        x = rng.normal(0.4, 0.2, n)
        la = state_transition_logpdf(day_structure(t_a, BASIS, homogeneous=True), x, p)
        lb = state_transition_logpdf(day_structure(t_b, BASIS, homogeneous=True), x, p)
        assert la == pytest.approx(lb, rel=1e-12)

    def test_always_accepts_under_flat_level(self):
        p = flat_params()
        rng = np.random.default_rng(5)
        data, path = gir_simulate(p, 40, BASIS, rng)
        state = ChainState(p, path)
        for _ in range(30):
            new, accepted, overflow = redraw_data(data, state, BASIS, rng)
            assert accepted and not overflow
            t = new.times[0]
            assert t.size == 41 and t[0] == BASIS.t_open
            assert t[-1] <= BASIS.t_close
            data = new

    def test_overflow_is_rejected_outright(self):
        # states around 8 give durations that blow through the close
        p = flat_params()
        rng = np.random.default_rng(6)
        data, path = gir_simulate(p, 50, BASIS, rng)
        state = ChainState(p, LatentPath(path.s, [np.full(50, 8.0)]))
        new, accepted, overflow = redraw_data(data, state, BASIS, rng)
        assert new is None and not accepted and overflow

    def test_discrete_redraw_preserves_flag(self):
        p = flat_params(cluster=ClusterLaw.discrete(0.95))
        rng = np.random.default_rng(7)
        data, path = gir_simulate(p, 25, BASIS, rng, discrete=True)
        state = ChainState(p, path)
        for _ in range(20):
            new, accepted, _ = redraw_data(data, state, BASIS, rng, discrete=True)
            if accepted:
                assert new.discrete
                assert np.all(new.times[0] == np.floor(new.times[0]))
                data = new
        assert data.discrete


class TestResultAndReport:
    def fabricated(self):
        rng = np.random.default_rng(8)
        series = np.column_stack([
            rng.normal(0.5, 0.1, 400),
            rng.normal(2.0, 0.3, 400),
        ])
        return GirResult(
            names=["a", "b"],
            series=series,
            prior_mean=np.array([0.5, 1.9]),
            discrete=False,
            n_obs=50,
            seed=8,
            redraw_accepted=390,
            redraw_overflow=2,
            acc_counts={"acc_x_theta": 100},
        )

    def test_report_tstats_match_batch_means(self):
        res = self.fabricated()
        rep = res.report(batch_len=20)
        for i, name in enumerate(res.names):
            col = res.column(name)
            nse = obm_nse(col, 20)
            assert rep.nse[i] == pytest.approx(nse, rel=1e-12)
            t = (col.mean() - res.prior_mean[i]) / nse
            assert rep.tstat[i] == pytest.approx(t, rel=1e-12)
        assert rep.max_abs_t == pytest.approx(np.max(np.abs(rep.tstat)))
        assert rep.n_above(0.0) == 2
        assert rep.n_above(rep.max_abs_t) == 0

    def test_format_mentions_each_column(self):
        text = self.fabricated().report().format()
        assert "a" in text and "b" in text and "sweeps" in text

    def test_save_load_round_trip(self, tmp_path):
        res = self.fabricated()
        path = tmp_path / "gir.npz"
        res.save(path)
        back = GirResult.load(path)
        assert back.names == res.names
        assert np.array_equal(back.series, res.series)
        assert np.array_equal(back.prior_mean, res.prior_mean)
        assert back.redraw_accepted == 390 and back.redraw_overflow == 2
        assert back.acc_counts == {"acc_x_theta": 100}
        assert back.seed == 8 and back.n_obs == 50 and back.discrete is False


class TestRunGir:
    def test_continuous_smoke(self):
        res = run_gir(GirConfig(sweeps=40, seed=3))
        assert res.series.shape == (40, 12)
        assert np.all(np.isfinite(res.series))
        assert res.redraw_accepted <= 40
        assert set(res.acc_counts) == {"acc_x_theta", "acc_x_beta", "acc_x", "acc_xi"}
        assert np.allclose(res.prior_mean, prior_means(HYPER, discrete=False))

    def test_discrete_smoke(self):
        res = run_gir(GirConfig(sweeps=30, discrete=True, seed=4))
        assert res.series.shape == (30, 10)
        zeta = res.column("zeta")
        assert np.all((zeta > 0.0) & (zeta < 1.0))
        betas = np.column_stack([res.column(f"beta{j}") for j in (1, 2, 3)])
        assert np.allclose(betas.sum(axis=1), 1.0)

    def test_replay_is_deterministic(self):
        a = run_gir(GirConfig(sweeps=25, seed=9))
        b = run_gir(GirConfig(sweeps=25, seed=9))
        assert np.array_equal(a.series, b.series)
        assert a.redraw_accepted == b.redraw_accepted

    def test_checkpoint_holds_final_result(self, tmp_path):
        path = tmp_path / "ck.npz"
        res = run_gir(GirConfig(sweeps=50, seed=10, checkpoint_path=str(path),
                                checkpoint_every=20))
        assert path.exists()
        back = GirResult.load(path)
        assert np.array_equal(back.series, res.series)
        assert back.acc_counts == res.acc_counts

    def test_short_chain_stays_near_prior(self):
        # wiring check only: catastrophic drift shows up fast
        res = run_gir(GirConfig(sweeps=1500, seed=11))
        assert res.report().max_abs_t < 6.0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            GirConfig(sweeps=1)
        with pytest.raises(ValueError):
            GirConfig(sweeps=10, n_obs=1)
