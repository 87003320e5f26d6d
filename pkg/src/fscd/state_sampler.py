"""Single-block sampling of one day's intensity path.

The grouped state vector v (one coordinate per distinct transaction
time) has a Gaussian prior whose precision is tridiagonal, since the
chain is first-order autoregressive.  Its conditional posterior given
durations and regimes adds one concave-ish log-likelihood term per
regular observation, each a function of a single coordinate, so the
Hessian of the log posterior stays tridiagonal.

The block proposal is a Laplace approximation: Newton iterations with
the exact gradient and tridiagonal Hessian find the conditional mode,
and the Gaussian with that curvature is used as an independence
Metropolis-Hastings proposal.  The observation interface supplies
derivatives of log p(y | s, x) to any order, so a higher-order
proposal density could be swapped in without touching callers.

All factor/solve/sample operations run in O(n) through banded
Cholesky routines.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import linalg

from fscd.model import DayStructure, ModelParams, ar_decays

NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 50

# observation interface: v -> (log-likelihood, gradient, second derivative),
# all on the grouped coordinates
ObsDerivs = Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]]


class TridiagGaussian:
    """Gaussian in precision form: precision Omega tridiagonal, mean
    Omega^{-1} c for the covector c."""

    def __init__(self, diag: np.ndarray, off: np.ndarray, cov: np.ndarray):
        self.diag = np.asarray(diag, dtype=float)
        self.off = np.asarray(off, dtype=float)
        self.cov = np.asarray(cov, dtype=float)
        n = self.diag.size
        if self.off.size != max(n - 1, 0) or self.cov.size != n:
            raise ValueError("inconsistent tridiagonal dimensions")
        ab = np.zeros((2, n))
        ab[0, 1:] = self.off
        ab[1] = self.diag
        # upper Cholesky factor U with Omega = U'U, banded layout
        self._factor = linalg.cholesky_banded(ab, lower=False)

    @property
    def n(self) -> int:
        return self.diag.size

    @property
    def log_det(self) -> float:
        return float(2.0 * np.log(self._factor[1]).sum())

    def mean(self) -> np.ndarray:
        return linalg.cho_solve_banded((self._factor, False), self.cov)

    def quad(self, v: np.ndarray) -> float:
        """v' Omega v."""
        out = np.sum(self.diag * v * v)
        if self.n > 1:
            out += 2.0 * np.sum(self.off * v[:-1] * v[1:])
        return float(out)

    def mult(self, v: np.ndarray) -> np.ndarray:
        """Omega v."""
        out = self.diag * v
        if self.n > 1:
            out[:-1] += self.off * v[1:]
            out[1:] += self.off * v[:-1]
        return out

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal(self.n)
        return self.mean() + linalg.solve_banded((0, 1), self._factor, z)

    def logpdf(self, v: np.ndarray) -> float:
        r = v - self.mean()
        return 0.5 * (self.log_det - self.n * np.log(2.0 * np.pi) - self.quad(r))


def state_prior(struct: DayStructure, p: ModelParams) -> TridiagGaussian:
    """Exact Gaussian law of one day's grouped states, precision form.

    Groups carry distinct times, so every conditional variance is
    strictly positive; recorded zero gaps never reach this function.
    """
    if struct.G == 0:
        raise ValueError("empty day has no state law")
    m = struct.B @ p.delta
    e, sd = ar_decays(struct, p.phi, p.sigma)
    w = sd**2
    diag = 1.0 / w
    diag[:-1] += e**2 / w[1:]
    off = -e / w[1:]
    g = TridiagGaussian(diag, off, np.zeros(struct.G))
    g.cov = g.mult(m)  # prior mean is exactly the diurnal curve
    return g


@dataclass(frozen=True)
class StateProposal:
    """Mode-centered Gaussian block proposal."""

    mode: np.ndarray
    gauss: TridiagGaussian
    iterations: int


def _laplace_gaussian(prior: TridiagGaussian, curv: np.ndarray, mode: np.ndarray) -> TridiagGaussian:
    """Precision = prior precision + diagonal observation curvature,
    inflated Levenberg style if the factorization fails."""
    bump = 0.0
    base = prior.diag - curv
    for _ in range(60):
        try:
            g = TridiagGaussian(base + bump, prior.off, np.zeros(prior.n))
        except np.linalg.LinAlgError:
            bump = max(2.0 * bump, 1e-8, 1.25 * np.max(curv, initial=0.0))
            continue
        g.cov = g.mult(mode)
        return g
    raise np.linalg.LinAlgError("proposal precision not positive definite")


def build_proposal(
    prior: TridiagGaussian,
    obs: ObsDerivs,
    v0: np.ndarray,
    newton_tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> StateProposal:
    """Newton search for the conditional mode of v | durations, regimes.

    Objective f(v) = c'v - v'Omega v / 2 + log p(y | v); steps are
    halved until f does not decrease, and an indefinite Hessian is
    inflated toward the prior curvature.
    """
    v = np.asarray(v0, dtype=float).copy()
    val, grad_obs, curv = obs(v)
    f = float(prior.cov @ v) - 0.5 * prior.quad(v) + val
    for it in range(1, max_iter + 1):
        grad = prior.cov - prior.mult(v) + grad_obs
        if np.max(np.abs(grad)) < newton_tol:
            return StateProposal(v, _laplace_gaussian(prior, curv, v), it - 1)
        hess = _laplace_gaussian(prior, curv, np.zeros(prior.n))
        step = linalg.cho_solve_banded((hess._factor, False), grad)
        scale = 1.0
        # accept anything down to accumulation-noise level, so tiny
        # fluctuations near the mode never masquerade as regressions
        f_band = 1e-9 * max(1.0, abs(f))
        for _ in range(40):
            v_try = v + scale * step
            val, grad_obs, curv = obs(v_try)
            f_try = float(prior.cov @ v_try) - 0.5 * prior.quad(v_try) + val
            if np.isfinite(f_try) and f_try >= f - f_band:
                break
            scale *= 0.5
        else:
            raise RuntimeError("state mode search cannot make progress")
        v, f = v_try, f_try
    grad = prior.cov - prior.mult(v) + grad_obs
    if np.max(np.abs(grad)) < newton_tol:
        return StateProposal(v, _laplace_gaussian(prior, curv, v), max_iter)
    raise RuntimeError(
        f"state mode search did not converge: |grad| = {np.max(np.abs(grad)):.2e}"
    )


def conditional_logpdf(prior: TridiagGaussian, obs: ObsDerivs, v: np.ndarray) -> float:
    """Unnormalized log target of the grouped state block."""
    val, _, _ = obs(v)
    return float(prior.cov @ v) - 0.5 * prior.quad(v) + val


def propose_and_accept(
    v_cur: np.ndarray,
    prior: TridiagGaussian,
    obs: ObsDerivs,
    rng: np.random.Generator,
    newton_tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> tuple[np.ndarray, bool]:
    """One independence-MH refresh of the state block."""
    prop = build_proposal(prior, obs, v_cur, newton_tol, max_iter)
    v_new = prop.gauss.sample(rng)
    log_alpha = (
        conditional_logpdf(prior, obs, v_new)
        - conditional_logpdf(prior, obs, v_cur)
        + prop.gauss.logpdf(v_cur)
        - prop.gauss.logpdf(v_new)
    )
    if np.log(rng.random()) < log_alpha:
        return v_new, True
    return v_cur.copy(), False


def observation_closure(
    struct: DayStructure,
    y: np.ndarray,
    s: np.ndarray,
    p: ModelParams,
    discrete: bool,
) -> ObsDerivs:
    """Bundle one day's regular observations into the derivative
    interface on grouped coordinates.

    Cluster durations do not involve x, so they contribute constants
    that cancel from every ratio this interface feeds; they are
    omitted.
    """
    from fscd.density import regular_derivs

    reg = s == 1
    idx = np.flatnonzero(reg)
    y_reg = y[idx]
    gidx = struct.gidx[idx]

    def obs(v: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        if idx.size == 0:
            return 0.0, np.zeros(struct.G), np.zeros(struct.G)
        d = regular_derivs(y_reg, v[gidx], p.coeffs, discrete, orders=2)
        grad = np.bincount(gidx, weights=d[1], minlength=struct.G)
        curv = np.bincount(gidx, weights=d[2], minlength=struct.G)
        return float(d[0].sum()), grad, curv

    return obs
