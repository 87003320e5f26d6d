"""Chain summaries: batch-mean standard errors, efficiency ratios,
persistence half-life, regime classification tables, and curve export."""

import numpy as np
import pytest

from fscd.diagnostics import (
    QUANTILES,
    classification_summary,
    curve_export,
    format_summary,
    half_life,
    half_life_summary,
    obm_nse,
    rne,
    summarize,
    write_curves,
)
from fscd.splines import SplineBasis, basis_matrix


class TestObmNse:
    def test_matches_loop_assembly(self):
        # the vectorized cumulative-sum batches against a literal loop
        rng = np.random.default_rng(0)
        y = rng.normal(size=73)
        n, b = y.size, 9
        means = np.array([y[i : i + b].mean() for i in range(n - b + 1)])
        dev = means - y.mean()
        var = n * b / ((n - b) * (n - b + 1.0)) * float(dev @ dev)
        expect = np.sqrt(var / n)
        assert obm_nse(y, batch_len=b) == pytest.approx(expect, rel=1e-12)

    def test_iid_close_to_classic_rate(self):
        rng = np.random.default_rng(1)
        y = rng.normal(size=100_000)
        classic = y.std(ddof=1) / np.sqrt(y.size)
        assert obm_nse(y) == pytest.approx(classic, rel=0.15)

    def test_ar1_inflation(self):
        # stationary AR(1): var of the mean inflates by (1+rho)/(1-rho)
        rho = 0.9
        rng = np.random.default_rng(2)
        e = rng.normal(size=100_000)
        y = np.empty_like(e)
        y[0] = e[0] / np.sqrt(1.0 - rho**2)
        for i in range(1, e.size):
            y[i] = rho * y[i - 1] + e[i]
        marginal = 1.0 / (1.0 - rho**2)
        truth = np.sqrt(marginal * (1.0 + rho) / (1.0 - rho) / y.size)
        assert obm_nse(y) == pytest.approx(truth, rel=0.2)

    def test_default_batch_is_root_n(self):
        rng = np.random.default_rng(3)
        y = rng.normal(size=400)
        assert obm_nse(y) == obm_nse(y, batch_len=20)

    def test_rejects_degenerate_input(self):
        with pytest.raises(ValueError):
            obm_nse([1.0])
        with pytest.raises(ValueError):
            obm_nse(np.ones(10), batch_len=0)
        with pytest.raises(ValueError):
            obm_nse(np.ones(10), batch_len=10)


class TestRne:
    def test_iid_near_one(self):
        rng = np.random.default_rng(4)
        y = rng.normal(size=100_000)
        assert rne(y) == pytest.approx(1.0, abs=0.15)

    def test_ar1_near_mixing_ratio(self):
        # rho = 0.9 gives (1-rho)/(1+rho) = 1/19
        rho = 0.9
        rng = np.random.default_rng(5)
        e = rng.normal(size=100_000)
        y = np.empty_like(e)
        y[0] = e[0] / np.sqrt(1.0 - rho**2)
        for i in range(1, e.size):
            y[i] = rho * y[i - 1] + e[i]
        assert rne(y) == pytest.approx(1.0 / 19.0, rel=0.3)

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError):
            rne(np.ones(50))


class TestHalfLife:
    def test_reference_value(self):
        assert round(half_life(0.00296), 1) == 234.2

    def test_log_two_gives_one_second(self):
        assert half_life(np.log(2.0)) == pytest.approx(1.0, rel=1e-15)

    def test_vectorized(self):
        phi = np.array([0.1, 0.2, 0.4])
        out = half_life(phi)
        assert out.shape == (3,)
        assert np.allclose(out, np.log(2.0) / phi)
        # halving the decay rate doubles the half-life
        assert out[0] == pytest.approx(2.0 * out[1], rel=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            half_life(0.0)
        with pytest.raises(ValueError):
            half_life(np.array([0.1, -0.2]))

    def test_summary_fields(self):
        rng = np.random.default_rng(6)
        phi = rng.gamma(5.0, 0.01, size=2000)
        out = half_life_summary(phi)
        t = np.log(2.0) / phi
        assert out["mean"] == pytest.approx(t.mean(), rel=1e-12)
        assert out["sd"] == pytest.approx(t.std(ddof=1), rel=1e-12)
        for q in QUANTILES:
            assert out[f"q{100 * q:g}"] == pytest.approx(
                np.quantile(t, q), rel=1e-12
            )


class TestClassification:
    def hand_case(self):
        s = np.array([[1, 0, 1, 0], [1, 1, 0, 0], [1, 0, 0, 1]])
        y = np.array([0.0, 0.0, 1.0, 5.0])
        return s, y

    def test_prob_regular_is_column_mean(self):
        s, y = self.hand_case()
        out = classification_summary(s, y)
        assert np.allclose(out.prob_regular, [1.0, 1 / 3, 1 / 3, 1 / 3])

    def test_count_posteriors(self):
        s, y = self.hand_case()
        out = classification_summary(s, y)
        zero = out.counts[0]
        assert zero["n_recorded"] == 2
        # regular-classified zeros per sweep: 1, 2, 1
        assert zero["mean"] == pytest.approx(4 / 3)
        assert zero["sd"] == pytest.approx(np.std([1, 2, 1], ddof=1))
        one = out.counts[1]
        assert one["n_recorded"] == 1
        assert one["mean"] == pytest.approx(1 / 3)

    def test_table_renders(self):
        s, y = self.hand_case()
        text = classification_summary(s, y).count_table()
        assert "recorded" in text and "0s" in text and "1s" in text

    def test_misaligned_shapes_rejected(self):
        with pytest.raises(ValueError):
            classification_summary(np.zeros((5, 3)), np.zeros(4))


class FakeStore:
    """Minimal stand-in exposing the store read interface."""

    def __init__(self, cols, meta=None):
        self._cols = {k: np.asarray(v, dtype=float) for k, v in cols.items()}
        self.meta = meta or {}

    @property
    def names(self):
        return list(self._cols)

    @property
    def length(self):
        return len(next(iter(self._cols.values())))

    def column(self, name):
        return self._cols[name]


class TestSummarize:
    def small_store(self):
        rng = np.random.default_rng(7)
        n = 40
        return FakeStore(
            {
                "theta1": rng.normal(-3.5, 0.1, n),
                "theta2": rng.normal(-1.5, 0.1, n),
                "tau": rng.normal(200.0, 5.0, n),
                "acc_x_theta": rng.integers(0, 2, n),
            }
        )

    def test_rows_and_derived_names(self):
        rows = summarize(self.small_store())
        names = [r.name for r in rows]
        assert "acc_x_theta" not in names
        for want in ("theta1", "theta2", "tau", "phi", "sigma", "half_life"):
            assert want in names
        assert "lam_hi" not in names

    def test_derived_values(self):
        store = self.small_store()
        rows = {r.name: r for r in summarize(store)}
        phi = np.exp(store.column("theta1"))
        assert rows["phi"].mean == pytest.approx(phi.mean(), rel=1e-12)
        assert rows["half_life"].mean == pytest.approx(
            (np.log(2.0) / phi).mean(), rel=1e-12
        )

    def test_hazard_ordering_resolves_switched_labels(self):
        # draws where the component labels swap mid-chain
        store = FakeStore(
            {
                "theta1": [-3.5, -3.4],
                "theta2": [-1.5, -1.6],
                "lam1": [10.0, 2.0],
                "lam2": [3.0, 8.0],
                "pi": [0.7, 0.1],
            }
        )
        rows = {r.name: r for r in summarize(store)}
        assert rows["lam_hi"].mean == pytest.approx(9.0)
        assert rows["lam_lo"].mean == pytest.approx(2.5)
        assert rows["pi_hi"].mean == pytest.approx(0.8)

    def test_constant_series_row(self):
        store = FakeStore({"theta1": [-3.5] * 10, "theta2": [-1.5] * 10})
        row = {r.name: r for r in summarize(store)}["theta1"]
        assert row.sd == 0.0 and row.nse == 0.0 and np.isnan(row.rne)

    def test_format_has_header_and_rows(self):
        rows = summarize(self.small_store())
        text = format_summary(rows)
        lines = text.splitlines()
        assert "parameter" in lines[0] and "rne" in lines[0]
        assert len(lines) == len(rows) + 1


class TestCurveExport:
    def store_and_basis(self, n_draws=30):
        basis = SplineBasis(0.0, 600.0, 2)
        rng = np.random.default_rng(8)
        cols = {"theta1": rng.normal(-3.5, 0.1, n_draws)}
        for i in range(1, basis.L + 1):
            cols[f"delta{i}"] = rng.normal(1.0, 0.05, n_draws)
        w = rng.dirichlet([5.0, 3.0, 2.0], size=n_draws)
        for j in range(3):
            cols[f"beta{j + 1}"] = w[:, j]
        return FakeStore(cols, meta={"L": basis.L, "J": 3}), basis

    def test_keys_and_shapes(self):
        store, basis = self.store_and_basis()
        out = curve_export(store, basis, n_curves=10, n_grid=50)
        assert out["diurnal_t"].shape == (50,)
        assert out["diurnal_mean"].shape == (50,)
        assert out["diurnal_draws"].shape == (10, 50)
        assert out["density_draws"].shape == (10, 50)
        assert out["hazard_draws"].shape == (10, 50)
        assert out["eps"][0] == 0.0 and out["eps"][-1] == 30.0

    def test_diurnal_mean_is_basis_times_mean_weights(self):
        store, basis = self.store_and_basis()
        out = curve_export(store, basis, n_grid=40)
        B = basis_matrix(basis, out["diurnal_t"])
        dbar = np.column_stack(
            [store.column(f"delta{i}") for i in range(1, basis.L + 1)]
        ).mean(axis=0)
        assert np.allclose(out["diurnal_mean"], B @ dbar, atol=1e-12)

    def test_seed_controls_draw_selection(self):
        store, basis = self.store_and_basis()
        a = curve_export(store, basis, n_curves=5, n_grid=30, seed=0)
        b = curve_export(store, basis, n_curves=5, n_grid=30, seed=0)
        c = curve_export(store, basis, n_curves=5, n_grid=30, seed=1)
        assert np.array_equal(a["density_draws"], b["density_draws"])
        assert not np.array_equal(a["density_draws"], c["density_draws"])

    def test_hazard_curves_positive(self):
        store, basis = self.store_and_basis()
        out = curve_export(store, basis, n_curves=8, n_grid=60)
        assert np.all(out["hazard_mean"] > 0.0)
        assert np.all(out["hazard_draws"] > 0.0)

    def test_fewer_draws_than_requested(self):
        store, basis = self.store_and_basis(n_draws=4)
        out = curve_export(store, basis, n_curves=25, n_grid=20)
        assert out["diurnal_draws"].shape == (4, 20)

    def test_write_curves_layout(self, tmp_path):
        store, basis = self.store_and_basis()
        out = curve_export(store, basis, n_curves=3, n_grid=25)
        written = write_curves(out, tmp_path)
        # one mean plus three draws for each of the three families
        assert len(written) == 3 * (1 + 3)
        assert sorted(written)[0] == "density_draw_01.tsv"
        loaded = np.loadtxt(tmp_path / "hazard_mean.tsv", delimiter="\t")
        assert loaded.shape == (25, 2)
        assert np.allclose(loaded[:, 0], out["eps"])
        assert np.allclose(loaded[:, 1], out["hazard_mean"])
