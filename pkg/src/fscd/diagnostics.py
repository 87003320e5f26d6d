"""Posterior summaries: numerical standard errors, efficiency,
persistence half-life, regime classification, and curve exports.

The mean's Monte Carlo variance is estimated by overlapping batch
means: with batch length b and n draws, the n - b + 1 overlapping
batch averages Y-bar_j(b) give

    sigma2 = n b / ((n - b)(n - b + 1)) * sum_j (Ybar_j - Ybar)^2,

NSE = sqrt(sigma2 / n).  Relative numerical efficiency compares that
against the iid variance: RNE = (s^2 / n) / NSE^2, so RNE times the
chain length is the size of an iid sample of equal precision.

Quantiles use linear interpolation of order statistics throughout, so
reported tables are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fscd.density import BernsteinWeights, bernstein_to_expmix, hazard, normalized_pdf
from fscd.splines import SplineBasis, basis_matrix

QUANTILES = (0.025, 0.5, 0.975)


def obm_nse(series, batch_len: int | None = None) -> float:
    """Numerical standard error of the series mean, overlapping batches."""
    y = np.asarray(series, dtype=float)
    n = y.size
    if n < 2:
        raise ValueError("need at least two draws")
    b = int(batch_len) if batch_len is not None else max(1, int(np.sqrt(n)))
    if not 1 <= b < n:
        raise ValueError(f"batch length {b} outside [1, {n})")
    cs = np.concatenate([[0.0], np.cumsum(y)])
    batches = (cs[b:] - cs[:-b]) / b
    dev = batches - y.mean()
    var = n * b / ((n - b) * (n - b + 1.0)) * float(dev @ dev)
    return float(np.sqrt(var / n))


def rne(series, batch_len: int | None = None) -> float:
    """Relative numerical efficiency of the series mean."""
    y = np.asarray(series, dtype=float)
    s2 = float(y.var(ddof=1))
    if s2 == 0.0:
        raise ValueError("series has zero variance")
    nse = obm_nse(y, batch_len)
    return s2 / y.size / nse**2


def half_life(phi):
    """Seconds until the intensity autocorrelation falls to one half."""
    phi = np.asarray(phi, dtype=float)
    if np.any(phi <= 0.0):
        raise ValueError("phi must be positive")
    out = np.log(2.0) / phi
    return float(out) if out.ndim == 0 else out


def half_life_summary(phi_draws, quantiles=QUANTILES) -> dict:
    t = half_life(np.asarray(phi_draws, dtype=float))
    qs = np.quantile(t, quantiles)
    return {
        "mean": float(t.mean()),
        "sd": float(t.std(ddof=1)),
        **{f"q{100 * q:g}": float(v) for q, v in zip(quantiles, qs)},
    }


@dataclass(frozen=True)
class ClassificationSummary:
    """Posterior regime classification against recorded durations."""

    prob_regular: np.ndarray
    counts: dict[int, dict]

    def count_table(self) -> str:
        hdr = f"{'recorded':>9s} {'mean':>9s} {'sd':>8s}" + "".join(
            f" {'q' + f'{100 * q:g}':>8s}" for q in QUANTILES
        )
        lines = [hdr]
        for rec, row in sorted(self.counts.items()):
            lines.append(
                f"{rec:>8d}s {row['mean']:>9.1f} {row['sd']:>8.1f}"
                + "".join(f" {row[f'q{100 * q:g}']:>8.1f}" for q in QUANTILES)
            )
        return "\n".join(lines)


def classification_summary(
    s_draws: np.ndarray, durations: np.ndarray, recorded=(0, 1)
) -> ClassificationSummary:
    """Per-observation regular probabilities and, for each recorded
    value, the posterior of the count of such durations classified
    regular."""
    s_draws = np.asarray(s_draws)
    y = np.asarray(durations)
    if s_draws.ndim != 2 or s_draws.shape[1] != y.size:
        raise ValueError("indicator draws do not align with the durations")
    prob = s_draws.mean(axis=0)
    counts = {}
    for rec in recorded:
        mask = y == rec
        per_sweep = s_draws[:, mask].sum(axis=1)
        qs = np.quantile(per_sweep, QUANTILES)
        counts[int(rec)] = {
            "n_recorded": int(mask.sum()),
            "mean": float(per_sweep.mean()),
            "sd": float(per_sweep.std(ddof=1)),
            **{f"q{100 * q:g}": float(v) for q, v in zip(QUANTILES, qs)},
        }
    return ClassificationSummary(prob_regular=prob, counts=counts)


@dataclass(frozen=True)
class SummaryRow:
    name: str
    mean: float
    sd: float
    nse: float
    rne: float


def _series_row(name, y, batch_len) -> SummaryRow:
    y = np.asarray(y, dtype=float)
    sd = float(y.std(ddof=1))
    if sd == 0.0:
        return SummaryRow(name, float(y.mean()), 0.0, 0.0, float("nan"))
    return SummaryRow(
        name, float(y.mean()), sd, obm_nse(y, batch_len), rne(y, batch_len)
    )


def summarize(store, batch_len: int | None = None) -> list[SummaryRow]:
    """Mean / sd / NSE / RNE for every stored scalar, plus derived
    rows: phi, sigma, the persistence half-life, and (continuous
    clusters) the hazard-ordered mixture components."""
    rows = []
    for name in store.names:
        if name.startswith("acc_"):
            continue
        rows.append(_series_row(name, store.column(name), batch_len))
    phi = np.exp(store.column("theta1"))
    sigma = np.exp(store.column("theta2"))
    rows.append(_series_row("phi", phi, batch_len))
    rows.append(_series_row("sigma", sigma, batch_len))
    rows.append(_series_row("half_life", half_life(phi), batch_len))
    if "lam1" in store.names:
        lam1 = store.column("lam1")
        lam2 = store.column("lam2")
        pi = store.column("pi")
        hi = np.maximum(lam1, lam2)
        lo = np.minimum(lam1, lam2)
        pi_hi = np.where(lam1 >= lam2, pi, 1.0 - pi)
        rows.append(_series_row("lam_hi", hi, batch_len))
        rows.append(_series_row("lam_lo", lo, batch_len))
        rows.append(_series_row("pi_hi", pi_hi, batch_len))
    return rows


def format_summary(rows: list[SummaryRow]) -> str:
    lines = [f"{'parameter':>12s} {'mean':>12s} {'sd':>11s} {'nse':>11s} {'rne':>8s}"]
    for r in rows:
        lines.append(
            f"{r.name:>12s} {r.mean:>12.6f} {r.sd:>11.6f} {r.nse:>11.6f} {r.rne:>8.3f}"
        )
    return "\n".join(lines)


def curve_export(
    store,
    basis: SplineBasis,
    n_curves: int = 25,
    n_grid: int = 200,
    eps_max: float = 30.0,
    seed: int = 0,
) -> dict[str, np.ndarray]:
    """Plot data at the posterior mean with spaghetti draws: diurnal
    level m(t), the unit-mean duration density, and its hazard."""
    L = int(store.meta["L"])
    J = int(store.meta["J"])
    n_draws = store.length
    k = min(n_curves, n_draws)
    idx = np.random.default_rng(seed).choice(n_draws, size=k, replace=False)
    idx.sort()

    t = np.linspace(basis.t_open, basis.t_close, n_grid)
    B = basis_matrix(basis, t)
    deltas = np.column_stack([store.column(f"delta{i}") for i in range(1, L + 1)])
    betas = np.column_stack([store.column(f"beta{j}") for j in range(1, J + 1)])

    eps = np.linspace(0.0, eps_max, n_grid)
    out = {
        "diurnal_t": t,
        "diurnal_mean": B @ deltas.mean(axis=0),
        "diurnal_draws": deltas[idx] @ B.T,
        "eps": eps,
    }

    def dens_haz(beta):
        c = bernstein_to_expmix(BernsteinWeights(beta / beta.sum()))
        return normalized_pdf(eps, c), hazard(eps, c)

    out["density_mean"], out["hazard_mean"] = dens_haz(betas.mean(axis=0))
    dens = np.empty((k, n_grid))
    haz = np.empty((k, n_grid))
    for row, i in enumerate(idx):
        dens[row], haz[row] = dens_haz(betas[i])
    out["density_draws"] = dens
    out["hazard_draws"] = haz
    return out


def write_curves(curves: dict[str, np.ndarray], outdir) -> list[str]:
    """Two-column delimited file per curve; returns the file names."""
    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, xcol, ycol):
        path = outdir / f"{name}.tsv"
        np.savetxt(path, np.column_stack([xcol, ycol]), delimiter="\t")
        written.append(path.name)

    for family, xkey in (("diurnal", "diurnal_t"), ("density", "eps"), ("hazard", "eps")):
        x = curves[xkey]
        put(f"{family}_mean", x, curves[f"{family}_mean"])
        for i, row in enumerate(curves[f"{family}_draws"], start=1):
            put(f"{family}_draw_{i:02d}", x, row)
    return written
