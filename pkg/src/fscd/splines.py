"""Cubic B-spline basis for the diurnal pattern.

The deterministic time-of-day component of log trading intensity is

    m(t) = sum_l delta_l B_l(t),    t in [t_open, t_close],

where B_1, ..., B_L are cubic B-splines on M equally spaced distinct
knots with the two end knots repeated to multiplicity four.  Clamping
gives L = M + 2 basis functions and pins the boundary values, so that
m(t_open) = delta_1 and m(t_close) = delta_L.

Evaluation uses the Cox-de Boor recursion in its triangular form: only
the (at most) four B-splines supported on the span containing t are
computed, and they are nonnegative and sum to one by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEGREE = 3


@dataclass(frozen=True)
class SplineBasis:
    """Clamped cubic B-spline basis on an equally spaced knot grid."""

    t_open: float
    t_close: float
    M: int
    L: int = field(init=False)
    knots: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.M < 2:
            raise ValueError(f"need at least 2 distinct knots, got M={self.M}")
        if not self.t_open < self.t_close:
            raise ValueError(
                f"empty session: t_open={self.t_open} >= t_close={self.t_close}"
            )
        breaks = np.linspace(self.t_open, self.t_close, self.M)
        knots = np.concatenate(
            [np.repeat(breaks[0], DEGREE), breaks, np.repeat(breaks[-1], DEGREE)]
        )
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "L", self.M + 2)

    @property
    def breakpoints(self) -> np.ndarray:
        """The M distinct knots."""
        return self.knots[DEGREE:-DEGREE]


def make_diurnal_basis(t_open: float, t_close: float, M: int) -> SplineBasis:
    """Basis of L = M + 2 cubic polynomials on [t_open, t_close]."""
    return SplineBasis(float(t_open), float(t_close), int(M))


def _check_domain(basis: SplineBasis, t: np.ndarray) -> None:
    if t.size and (t.min() < basis.t_open or t.max() > basis.t_close):
        raise ValueError(
            f"time outside [{basis.t_open}, {basis.t_close}]: "
            f"range [{t.min()}, {t.max()}]"
        )


def basis_matrix(basis: SplineBasis, t) -> np.ndarray:
    """Evaluate all basis functions at the given times.

    Returns an array of shape (len(t), L); each row is nonnegative, has
    at most four nonzero entries, and sums to one.  t = t_close is
    evaluated as the limit from the left.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    _check_domain(basis, t)
    knots = basis.knots
    breaks = basis.breakpoints
    # interval index into the distinct grid; the right endpoint joins the
    # last interval so the basis is defined on the closed session
    span = np.searchsorted(breaks, t, side="right") - 1
    span = np.clip(span, 0, basis.M - 2) + DEGREE

    npt = t.shape[0]
    vals = np.zeros((npt, DEGREE + 1))
    vals[:, 0] = 1.0
    left = np.empty((npt, DEGREE))
    right = np.empty((npt, DEGREE))
    for j in range(1, DEGREE + 1):
        left[:, j - 1] = t - knots[span + 1 - j]
        right[:, j - 1] = knots[span + j] - t
        saved = np.zeros(npt)
        for r in range(j):
            denom = right[:, r] + left[:, j - r - 1]
            term = np.where(denom > 0.0, vals[:, r] / np.where(denom > 0, denom, 1.0), 0.0)
            vals[:, r] = saved + right[:, r] * term
            saved = left[:, j - r - 1] * term
        vals[:, j] = saved

    out = np.zeros((npt, basis.L))
    cols = span[:, None] - DEGREE + np.arange(DEGREE + 1)[None, :]
    np.put_along_axis(out, cols, vals, axis=1)
    return out


def eval_basis(basis: SplineBasis, t: float) -> np.ndarray:
    """Weight vector (B_1(t), ..., B_L(t)) at a single time."""
    return basis_matrix(basis, [t])[0]


def eval_diurnal(basis: SplineBasis, delta, t) -> np.ndarray | float:
    """m(t) = sum_l delta_l B_l(t) at one or many times."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (basis.L,):
        raise ValueError(f"delta has shape {delta.shape}, expected ({basis.L},)")
    scalar = np.isscalar(t) or np.ndim(t) == 0
    out = basis_matrix(basis, t) @ delta
    return float(out[0]) if scalar else out
