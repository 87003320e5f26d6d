"""Duration densities: the Bernstein regular-duration law and the cluster law.

The normalized regular-duration density is built by perturbing a unit
exponential.  With F(eps) = 1 - exp(-lt*eps) and a Bernstein density
g(z) = sum_j beta_j Be(z | j, J-j+1) on [0,1], the distribution
function G(F(eps)) has density

    p(eps) = sum_j alpha_j * j*lt * exp(-j*lt*eps),

a signed combination of exponential densities whose coefficients come
from a linear map alpha = T beta (binomial expansion of the beta
kernels in powers of exp(-lt*eps)).  The unit-mean normalization pins
the base hazard at lt = sum_j alpha_j / j, so beta is the only free
shape parameter; uniform beta recovers the unit exponential.

Durations scale multiplicatively with the latent log intensity x:
a regular duration is y = e^x * eps.  On a clock truncated to whole
seconds the recorded value y has pmf

    P(y) = (1/2) [ P_eps((y+1) e^{-x}) - P_eps((y-1) e^{-x}) ],  y >= 1,
    P(0) = (1/2) P_eps(e^{-x}),

which telescopes to total mass one; the half weight on the boundary
cells is what makes the normalization exact.

Cluster durations (related trades) follow a two-exponential mixture in
the continuous model and a Bernoulli law on {0s, 1s} in the discrete
model.

The block state sampler needs derivatives of psi(x) = log p(y | s, x)
up to order five.  Both the continuous density and the discrete pmf are
signed combinations of terms w_k exp(h_k(x)) whose exponents have
closed-form derivatives of every order, so the ladder is computed
bottom-up: h-derivatives, then exp via the Leibniz product recurrence,
then the weighted sum, then log on top.  All sums factor out the
largest exponent to avoid underflow; cluster terms do not involve x, so
their derivatives vanish identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

MAX_ORDER = 5
_BINOM = np.array([[comb(r, k) for k in range(MAX_ORDER)] for r in range(MAX_ORDER)])


@dataclass(frozen=True)
class BernsteinWeights:
    """Simplex weights of the Bernstein density g."""

    beta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        object.__setattr__(self, "beta", beta)
        if beta.ndim != 1 or beta.size < 1:
            raise ValueError("beta must be a nonempty vector")
        if beta.min() < 0.0:
            raise ValueError(f"negative Bernstein weight: {beta.min()}")
        if abs(beta.sum() - 1.0) > 1e-12:
            raise ValueError(f"Bernstein weights sum to {beta.sum()}, not 1")

    @property
    def J(self) -> int:
        return self.beta.size


@dataclass(frozen=True)
class ExpMixCoeffs:
    """Coefficients of the exponential-combination form of p_eps."""

    alpha: np.ndarray
    lam_tilde: float

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        object.__setattr__(self, "alpha", alpha)
        if abs(alpha.sum() - 1.0) > 1e-10:
            raise ValueError(f"alpha sums to {alpha.sum()}, not 1")
        if not self.lam_tilde > 0.0:
            raise ValueError(f"nonpositive limiting hazard {self.lam_tilde}")

    @property
    def J(self) -> int:
        return self.alpha.size

    @property
    def lam(self) -> np.ndarray:
        """Component hazards lambda_j = j * lam_tilde."""
        return np.arange(1, self.J + 1) * self.lam_tilde


@dataclass(frozen=True)
class ClusterLaw:
    """Duration law of related trades.

    Continuous model: mixture pi * Exp(lam1) + (1 - pi) * Exp(lam2).
    Discrete model: recorded value is 0s with probability zeta, else 1s.
    """

    lam1: float | None = None
    lam2: float | None = None
    pi: float | None = None
    zeta: float | None = None

    def __post_init__(self):
        if self.zeta is not None:
            if not 0.0 < self.zeta < 1.0:
                raise ValueError(f"zeta={self.zeta} outside (0,1)")
            if any(v is not None for v in (self.lam1, self.lam2, self.pi)):
                raise ValueError("discrete cluster law takes zeta only")
        else:
            if self.lam1 is None or self.lam2 is None or self.pi is None:
                raise ValueError("continuous cluster law needs lam1, lam2, pi")
            if self.lam1 <= 0.0 or self.lam2 <= 0.0:
                raise ValueError("cluster hazards must be positive")
            if not 0.0 < self.pi < 1.0:
                raise ValueError(f"pi={self.pi} outside (0,1)")

    @classmethod
    def continuous(cls, lam1: float, lam2: float, pi: float) -> "ClusterLaw":
        return cls(lam1=float(lam1), lam2=float(lam2), pi=float(pi))

    @classmethod
    def discrete(cls, zeta: float) -> "ClusterLaw":
        return cls(zeta=float(zeta))

    @property
    def is_discrete(self) -> bool:
        return self.zeta is not None


@dataclass(frozen=True)
class LogDensityDerivs:
    """psi(x) = log p(y | s, x) and its first five x-derivatives."""

    value: float
    derivs: np.ndarray = field(default_factory=lambda: np.zeros(MAX_ORDER))


def transition_matrix(J: int) -> np.ndarray:
    """The J x J map T with alpha = T beta.

    Row k collects the coefficient of exp(-k*lt*eps) in the expansion of
    each scaled beta kernel j*C(J,j) F^{j-1} (1-F)^{J-j} f, divided by k
    so that the k-th component reads alpha_k * k*lt * exp(-k*lt*eps).
    """
    if J < 1:
        raise ValueError("J must be positive")
    T = np.zeros((J, J))
    for j in range(1, J + 1):
        lead = j * comb(J, j)
        for r in range(j):
            k = J - j + 1 + r
            T[k - 1, j - 1] = lead * comb(j - 1, r) * (-1.0) ** r / k
    return T


def bernstein_to_expmix(w: BernsteinWeights) -> ExpMixCoeffs:
    """Map simplex weights to exponential-combination coefficients."""
    alpha = transition_matrix(w.J) @ w.beta
    lam_tilde = float(np.sum(alpha / np.arange(1, w.J + 1)))
    return ExpMixCoeffs(alpha=alpha, lam_tilde=lam_tilde)


def _check_nonneg(eps) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    if eps.size and eps.min() < 0.0:
        raise ValueError(f"negative argument {eps.min()}")
    return eps


def normalized_pdf(eps, c: ExpMixCoeffs):
    """p_eps(eps) = sum_j alpha_j * lambda_j * exp(-lambda_j * eps)."""
    eps = _check_nonneg(eps)
    e = -c.lam * eps[..., None]
    return np.exp(e) @ (c.alpha * c.lam)


def normalized_cdf(eps, c: ExpMixCoeffs):
    """P_eps(eps) = sum_j alpha_j (1 - exp(-lambda_j * eps))."""
    return 1.0 - normalized_survival(eps, c)


def normalized_survival(eps, c: ExpMixCoeffs):
    eps = _check_nonneg(eps)
    return np.exp(-c.lam * eps[..., None]) @ c.alpha


def hazard(eps, c: ExpMixCoeffs):
    """Instantaneous event rate; tends to lam_tilde as eps grows."""
    return normalized_pdf(eps, c) / normalized_survival(eps, c)


def cluster_logpdf(y, law: ClusterLaw):
    """Log density of the two-exponential cluster mixture."""
    if law.is_discrete:
        raise ValueError("continuous density requested from a discrete cluster law")
    y = _check_nonneg(y)
    a = np.log(law.pi) + np.log(law.lam1) - law.lam1 * y
    b = np.log1p(-law.pi) + np.log(law.lam2) - law.lam2 * y
    return np.logaddexp(a, b)


def cluster_logpmf_discrete(y: int, law: ClusterLaw) -> float:
    """Log probability of a recorded cluster duration (0s or 1s)."""
    if not law.is_discrete:
        raise ValueError("discrete pmf requested from a continuous cluster law")
    if y == 0:
        return float(np.log(law.zeta))
    if y == 1:
        return float(np.log1p(-law.zeta))
    raise ValueError(f"cluster durations are recorded as 0s or 1s, got {y}")


def cluster_loglik(y, law: ClusterLaw) -> np.ndarray:
    """Vectorized cluster log-likelihood; impossible values map to -inf."""
    y = np.asarray(y, dtype=float)
    if law.is_discrete:
        out = np.full(y.shape, -np.inf)
        out[y == 0] = np.log(law.zeta)
        out[y == 1] = np.log1p(-law.zeta)
        return out
    return cluster_logpdf(y, law)


def regular_loglik(y, x, c: ExpMixCoeffs, discrete: bool = False) -> np.ndarray:
    """Vectorized log p(y | regular, x), continuous density or discrete pmf."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if discrete:
        return _discrete_terms(y, x, c)[0]
    u = np.exp(-x)
    e = -c.lam[:, None] * (y * u)[None, :]
    big = e.max(axis=0)
    s = np.einsum("j,jn->n", c.alpha * c.lam, np.exp(e - big))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -x + big + np.log(s)
    return np.where(s > 0.0, out, -np.inf)


def regular_logpdf(y: float, x: float, c: ExpMixCoeffs) -> float:
    """Log density of a continuous regular duration y at log intensity x."""
    if y < 0.0:
        raise ValueError(f"negative duration {y}")
    return float(regular_loglik(np.array([y]), np.array([x]), c)[0])


def regular_logpmf_discrete(y: int, x: float, c: ExpMixCoeffs) -> float:
    """Log probability of a recorded regular duration of y whole seconds."""
    if y != int(y) or y < 0:
        raise ValueError(f"recorded durations are nonnegative integers, got {y}")
    return float(regular_loglik(np.array([float(y)]), np.array([x]), c, discrete=True)[0])


def _discrete_terms(y, x, c: ExpMixCoeffs):
    """Log pmf plus the term arrays shared with the derivative ladder.

    The pmf is (1/2) sum_j alpha_j [exp(-lambda_j c_lo u) - exp(-lambda_j c_hi u)]
    with u = e^{-x}, c_lo = max(y-1, 0), c_hi = y+1; at y = 0 the lower
    terms collapse to the constant 1/2 because the alpha sum to one.
    Returns (logpmf, scaled p0, big, weights, b, exponents_minus_big)
    where the last three stack the 2J lower/upper terms.
    """
    u = np.exp(-x)
    c_lo = np.maximum(y - 1.0, 0.0)
    c_hi = y + 1.0
    b_lo = c.lam[:, None] * (c_lo * u)[None, :]
    b_hi = c.lam[:, None] * (c_hi * u)[None, :]
    big = (-b_lo).max(axis=0)
    # pairing through expm1 avoids cancellation when both exponents are tiny
    p0 = np.einsum(
        "j,jn->n", 0.5 * c.alpha, np.exp(-b_lo - big) * (-np.expm1(b_lo - b_hi))
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = big + np.log(p0)
    logp = np.where(p0 > 0.0, logp, -np.inf)
    wts = np.concatenate([0.5 * c.alpha, -0.5 * c.alpha])
    b = np.concatenate([b_lo, b_hi], axis=0)
    shifted = np.concatenate([-b_lo - big, -b_hi - big], axis=0)
    return logp, p0, big, wts, b, shifted


def discrete_cum(y, x, c: ExpMixCoeffs) -> np.ndarray:
    """Pr[Y <= y] for the recorded regular duration, in closed form."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    u = np.exp(-x)
    return 0.5 * (normalized_cdf((y + 1.0) * u, c) + normalized_cdf(y * u, c))


def _ladder(wts, g0, hd, orders):
    """Leibniz recurrence for derivatives of sum_k w_k exp(h_k).

    g0: scaled exp(h_k - big), shape (K, n); hd[r]: r-th derivative of
    h_k, shape (orders, K, n).  Returns p[r] = scaled r-th derivative of
    the sum, shape (orders + 1, n).
    """
    K, n = g0.shape
    g = np.empty((orders + 1, K, n))
    g[0] = g0
    for r in range(orders):
        acc = np.zeros((K, n))
        for k in range(r + 1):
            acc += _BINOM[r, k] * hd[k] * g[r - k]
        g[r + 1] = acc
    return np.einsum("k,rkn->rn", wts, g)


def _log_on_top(p, psi0, orders):
    """Derivatives of log p from derivatives of p (shared scale cancels)."""
    n = p.shape[1]
    q = np.empty((orders + 1, n))
    q[0] = psi0
    with np.errstate(divide="ignore", invalid="ignore"):
        for r in range(orders):
            acc = p[r + 1].copy()
            for k in range(r):
                acc -= _BINOM[r, k] * p[r - k] * q[k + 1]
            q[r + 1] = acc / p[0]
    return q


def regular_derivs(y, x, c: ExpMixCoeffs, discrete: bool = False, orders: int = MAX_ORDER):
    """psi(x) = log p(y | regular, x) and derivatives, vectorized.

    Returns shape (orders + 1, n): row 0 is psi, row r its r-th
    x-derivative.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if orders < 0 or orders > MAX_ORDER:
        raise ValueError(f"orders must lie in [0, {MAX_ORDER}]")
    if not discrete:
        a = c.lam[:, None] * (y * np.exp(-x))[None, :]
        h = -x[None, :] - a
        big = h.max(axis=0)
        g0 = np.exp(h - big)
        # h' = -1 + a, then derivatives alternate -a, +a, ...
        hd = np.empty((orders, *a.shape))
        for r in range(orders):
            hd[r] = (a - 1.0) if r == 0 else (-1.0) ** r * a
        p = _ladder(c.alpha * c.lam, g0, hd, orders)
        with np.errstate(divide="ignore", invalid="ignore"):
            psi0 = np.where(p[0] > 0.0, big + np.log(p[0]), -np.inf)
        return _log_on_top(p, psi0, orders)

    logp, p0, big, wts, b, shifted = _discrete_terms(y, x, c)
    g0 = np.exp(shifted)
    hd = np.empty((orders, *b.shape))
    for r in range(orders):
        # d/dx of -lambda c e^{-x} alternates +b, -b, ...
        hd[r] = (-1.0) ** r * b
    p = _ladder(wts, g0, hd, orders)
    p[0] = p0  # the paired form is the accurate one
    return _log_on_top(p, logp, orders)


def logpdf_derivs(
    y: float,
    x: float,
    regime: int,
    c: ExpMixCoeffs,
    cluster: ClusterLaw | None = None,
    discrete: bool = False,
) -> LogDensityDerivs:
    """psi and five derivatives for one observation.

    regime 0 is cluster (psi constant in x, derivatives identically
    zero), regime 1 is regular.
    """
    if regime == 0:
        if cluster is None:
            raise ValueError("cluster regime needs a ClusterLaw")
        if discrete:
            value = cluster_logpmf_discrete(int(y), cluster)
        else:
            value = float(cluster_logpdf(np.array([y]), cluster)[0])
        return LogDensityDerivs(value=value, derivs=np.zeros(MAX_ORDER))
    if regime != 1:
        raise ValueError(f"regime must be 0 (cluster) or 1 (regular), got {regime}")
    if discrete and (y != int(y) or y < 0):
        raise ValueError(f"recorded durations are nonnegative integers, got {y}")
    if y < 0.0:
        raise ValueError(f"negative duration {y}")
    q = regular_derivs(np.array([float(y)]), np.array([float(x)]), c, discrete)
    return LogDensityDerivs(value=float(q[0, 0]), derivs=q[1:, 0].copy())


def sample_regular_eps(w: BernsteinWeights, c: ExpMixCoeffs, rng, size: int) -> np.ndarray:
    """Draw normalized durations by composition: component, beta, quantile."""
    j = rng.choice(np.arange(1, w.J + 1), size=size, p=w.beta)
    z = rng.beta(j, w.J - j + 1)
    return -np.log1p(-z) / c.lam_tilde


def sample_regular(w: BernsteinWeights, c: ExpMixCoeffs, x, rng) -> np.ndarray:
    """Continuous regular durations at log intensities x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return np.exp(x) * sample_regular_eps(w, c, rng, x.size)


def sample_regular_discrete(c: ExpMixCoeffs, x, rng) -> np.ndarray:
    """Recorded regular durations drawn exactly from the censored pmf."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    u = rng.random(n)
    lo = np.full(n, -1, dtype=np.int64)
    hi = np.zeros(n, dtype=np.int64)
    # establish cum(lo) < u <= cum(hi) by doubling, then bisect
    for _ in range(64):
        need = discrete_cum(hi, x, c) < u
        if not need.any():
            break
        lo[need] = hi[need]
        hi[need] = np.maximum(1, hi[need] * 2)
    while (hi - lo > 1).any():
        mid = np.where(hi - lo > 1, (lo + hi) // 2, hi)
        ge = discrete_cum(mid, x, c) >= u
        hi = np.where(ge, mid, hi)
        lo = np.where(ge, lo, mid)
    return hi.astype(float)


def sample_cluster(law: ClusterLaw, rng, size: int) -> np.ndarray:
    """Continuous cluster durations from the two-exponential mixture."""
    if law.is_discrete:
        raise ValueError("continuous draw requested from a discrete cluster law")
    first = rng.random(size) < law.pi
    scale = np.where(first, 1.0 / law.lam1, 1.0 / law.lam2)
    return rng.exponential(scale)


def sample_cluster_discrete(law: ClusterLaw, rng, size: int) -> np.ndarray:
    """Recorded cluster durations: 0s with probability zeta, else 1s."""
    if not law.is_discrete:
        raise ValueError("discrete draw requested from a continuous cluster law")
    return (rng.random(size) >= law.zeta).astype(float)
