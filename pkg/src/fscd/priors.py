"""Prior distributions and named hyperparameter presets.

Blocks are a priori independent: a bivariate normal on
theta = (log phi, log sigma); a partially improper-looking but proper
Gaussian on the diurnal coefficients, delta | tau ~ N(mu, H^{-1}) with

    H = h v v' + tau D'D,    v = (1/L, ..., 1/L),  mu = delta_loc * 1,

where D is the first-difference operator, so the level v'delta has
prior N(delta_loc, 1/h) and tau penalizes roughness; a scaled
chi-square on the smoothing precision, s*tau ~ chi2(nu), equivalently
tau ~ Gamma(shape nu/2, rate s/2); a Dirichlet with concentration conc
and mean vector on the Bernstein weights; betas on the indicator
self-transition probabilities and on pi or zeta; gammas (shape, rate)
on the cluster hazards.

The log-ratio transform of the Dirichlet,
vartheta_j = log(beta_j / beta_J), has closed-form moments through the
digamma and trigamma functions; they parameterize the independence
proposals of the correctness harness.
"""

from __future__ import annotations

import importlib.resources
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import special, stats

from fscd.density import BernsteinWeights, ClusterLaw
from fscd.model import ModelParams

_TWO = (2,)


@dataclass(frozen=True)
class PriorHyper:
    theta_mean: np.ndarray
    theta_cov: np.ndarray
    delta_loc: float
    delta_prec: float
    tau_scale: float
    tau_dof: float
    bernstein_conc: float
    bernstein_mean: np.ndarray
    xi0_beta: np.ndarray | None = None
    xi1_beta: np.ndarray | None = None
    lambda1_gamma: np.ndarray | None = None
    lambda2_gamma: np.ndarray | None = None
    pi_beta: np.ndarray | None = None
    zeta_beta: np.ndarray | None = None
    J: int = 3
    M: int = 2
    discrete: bool | None = None

    def __post_init__(self):
        arr = lambda v: None if v is None else np.asarray(v, dtype=float)
        for name in (
            "theta_mean",
            "theta_cov",
            "bernstein_mean",
            "xi0_beta",
            "xi1_beta",
            "lambda1_gamma",
            "lambda2_gamma",
            "pi_beta",
            "zeta_beta",
        ):
            object.__setattr__(self, name, arr(getattr(self, name)))
        if self.theta_mean.shape != _TWO or self.theta_cov.shape != (2, 2):
            raise ValueError("theta prior must be bivariate")
        if np.linalg.eigvalsh(self.theta_cov).min() <= 0.0:
            raise ValueError("theta_cov is not positive definite")
        for name in ("delta_prec", "tau_scale", "tau_dof", "bernstein_conc"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.bernstein_mean.shape != (self.J,):
            raise ValueError(
                f"bernstein_mean has length {self.bernstein_mean.size}, J={self.J}"
            )
        if abs(self.bernstein_mean.sum() - 1.0) > 1e-10 or self.bernstein_mean.min() <= 0.0:
            raise ValueError("bernstein_mean must be a positive simplex vector")
        for name in ("xi0_beta", "xi1_beta", "lambda1_gamma", "lambda2_gamma", "pi_beta", "zeta_beta"):
            v = getattr(self, name)
            if v is not None and (v.shape != _TWO or v.min() <= 0.0):
                raise ValueError(f"{name} must be two positive numbers")
        if self.M < 2:
            raise ValueError(f"M={self.M} too small")

    @property
    def L(self) -> int:
        return self.M + 2

    @property
    def tau_mean(self) -> float:
        return self.tau_dof / self.tau_scale


def difference_matrix(L: int) -> np.ndarray:
    """First-difference operator, shape (L-1, L)."""
    D = np.zeros((L - 1, L))
    idx = np.arange(L - 1)
    D[idx, idx] = -1.0
    D[idx, idx + 1] = 1.0
    return D


def delta_prior(hyper: PriorHyper, tau: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean, precision, and covector of the conditional Gaussian on delta."""
    if not tau > 0.0:
        raise ValueError(f"tau={tau} must be positive")
    L = hyper.L
    v = np.full(L, 1.0 / L)
    D = difference_matrix(L)
    H = hyper.delta_prec * np.outer(v, v) + tau * (D.T @ D)
    mu = np.full(L, hyper.delta_loc)
    c = H @ mu  # equals delta_loc * delta_prec * v since D @ 1 = 0
    return mu, H, c


def _beta_logpdf(x: float, ab: np.ndarray) -> float:
    if not 0.0 < x < 1.0:
        return -np.inf
    return float(stats.beta.logpdf(x, ab[0], ab[1]))


def _gamma_logpdf(x: float, shape_rate: np.ndarray) -> float:
    if not x > 0.0:
        return -np.inf
    a, b = shape_rate
    return float(a * np.log(b) - special.gammaln(a) + (a - 1.0) * np.log(x) - b * x)


def log_prior(p: ModelParams, hyper: PriorHyper) -> float:
    """Joint log prior of a parameter set; -inf outside the support."""
    if p.delta.size != hyper.L:
        raise ValueError(f"delta has length {p.delta.size}, prior expects {hyper.L}")
    if p.beta.J != hyper.J:
        raise ValueError(f"beta has {p.beta.J} components, prior expects {hyper.J}")
    lp = float(
        stats.multivariate_normal.logpdf(p.theta, hyper.theta_mean, hyper.theta_cov)
    )
    # tau then delta | tau
    lp += _gamma_logpdf(p.tau, np.array([hyper.tau_dof / 2.0, hyper.tau_scale / 2.0]))
    if not np.isfinite(lp):
        return -np.inf
    mu, H, _ = delta_prior(hyper, p.tau)
    sign, logdet = np.linalg.slogdet(H)
    r = p.delta - mu
    lp += 0.5 * (logdet - hyper.L * np.log(2.0 * np.pi) - r @ H @ r)
    # Dirichlet on the Bernstein weights
    a = hyper.bernstein_conc * hyper.bernstein_mean
    lgB = special.gammaln(a).sum() - special.gammaln(a.sum())
    with np.errstate(divide="ignore"):
        terms = (a - 1.0) * np.log(p.beta.beta)
    terms = np.where((p.beta.beta == 0.0) & (a == 1.0), 0.0, terms)
    lp += float(terms.sum() - lgB)
    if p.xi00 is not None:
        if hyper.xi0_beta is None or hyper.xi1_beta is None:
            raise ValueError("indicator parameters present but no indicator prior")
        lp += _beta_logpdf(p.xi00, hyper.xi0_beta) + _beta_logpdf(p.xi11, hyper.xi1_beta)
    if p.cluster is not None:
        if p.cluster.is_discrete:
            if hyper.zeta_beta is None:
                raise ValueError("zeta present but no zeta prior")
            lp += _beta_logpdf(p.cluster.zeta, hyper.zeta_beta)
        else:
            if hyper.lambda1_gamma is None or hyper.lambda2_gamma is None or hyper.pi_beta is None:
                raise ValueError("cluster mixture present but no lambda/pi prior")
            lp += _gamma_logpdf(p.cluster.lam1, hyper.lambda1_gamma)
            lp += _gamma_logpdf(p.cluster.lam2, hyper.lambda2_gamma)
            lp += _beta_logpdf(p.cluster.pi, hyper.pi_beta)
    return float(lp)


def sample_prior(
    hyper: PriorHyper,
    rng: np.random.Generator,
    discrete: bool = False,
    regular_only: bool = False,
) -> ModelParams:
    """Independent draw of every parameter block."""
    theta = rng.multivariate_normal(hyper.theta_mean, hyper.theta_cov)
    tau = rng.gamma(hyper.tau_dof / 2.0, 2.0 / hyper.tau_scale)
    mu, H, _ = delta_prior(hyper, tau)
    delta = mu + np.linalg.solve(
        np.linalg.cholesky(H).T, rng.standard_normal(hyper.L)
    )
    beta = BernsteinWeights(rng.dirichlet(hyper.bernstein_conc * hyper.bernstein_mean))
    if regular_only:
        return ModelParams(
            phi=float(np.exp(theta[0])),
            sigma=float(np.exp(theta[1])),
            delta=delta,
            tau=float(tau),
            beta=beta,
        )
    xi00 = float(rng.beta(*hyper.xi0_beta))
    xi11 = float(rng.beta(*hyper.xi1_beta))
    if discrete:
        cluster = ClusterLaw.discrete(float(rng.beta(*hyper.zeta_beta)))
    else:
        cluster = ClusterLaw.continuous(
            float(rng.gamma(hyper.lambda1_gamma[0], 1.0 / hyper.lambda1_gamma[1])),
            float(rng.gamma(hyper.lambda2_gamma[0], 1.0 / hyper.lambda2_gamma[1])),
            float(rng.beta(*hyper.pi_beta)),
        )
    return ModelParams(
        phi=float(np.exp(theta[0])),
        sigma=float(np.exp(theta[1])),
        delta=delta,
        tau=float(tau),
        beta=beta,
        xi00=xi00,
        xi11=xi11,
        cluster=cluster,
    )


def dirichlet_logistic_moments(conc: float, mean) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of vartheta_j = log(beta_j / beta_J).

    Exact for the Dirichlet: E = digamma(a_j) - digamma(a_J),
    Cov_jk = trigamma(a_J) + trigamma(a_j) [j == k].
    """
    a = conc * np.asarray(mean, dtype=float)
    if a.min() <= 0.0:
        raise ValueError("all concentration components must be positive")
    mu = special.digamma(a[:-1]) - special.digamma(a[-1])
    tri = special.polygamma(1, a)
    cov = np.full((a.size - 1, a.size - 1), tri[-1]) + np.diag(tri[:-1])
    return mu, cov


@dataclass(frozen=True)
class Preset:
    """Named hyperparameter bundle and its trading session."""

    name: str
    hyper: PriorHyper
    t_open: float
    t_close: float


_PRESET_KEYS = {
    "name",
    "J",
    "M",
    "t_open",
    "t_close",
    "theta_mean",
    "theta_cov",
    "delta_loc",
    "delta_prec",
    "tau_scale",
    "tau_dof",
    "bernstein_conc",
    "bernstein_mean",
    "xi0_beta",
    "xi1_beta",
    "lambda1_gamma",
    "lambda2_gamma",
    "pi_beta",
    "zeta_beta",
}


def load_preset(name_or_path: str, J: int | None = None, M: int | None = None) -> Preset:
    """Load a packaged preset by name ("gir", "tsx", "synthetic") or a
    config file by path.

    Unknown keys are rejected.  Overriding J is supported when the
    preset's Bernstein mean is uniform: the concentration per component
    is preserved, so e.g. the empirical preset keeps conc = 10 * J.
    """
    if name_or_path in ("gir", "tsx", "synthetic"):
        raw = (
            importlib.resources.files("fscd")
            .joinpath(f"presets/{name_or_path}.json")
            .read_text()
        )
    else:
        raw = Path(name_or_path).read_text()
    cfg = json.loads(raw)
    unknown = set(cfg) - _PRESET_KEYS
    if unknown:
        raise ValueError(f"unknown preset keys: {sorted(unknown)}")
    name = cfg.pop("name", Path(str(name_or_path)).stem)
    t_open = float(cfg.pop("t_open"))
    t_close = float(cfg.pop("t_close"))
    if M is not None:
        cfg["M"] = int(M)
    if J is not None and J != cfg["J"]:
        mean = np.asarray(cfg["bernstein_mean"], dtype=float)
        if not np.allclose(mean, mean[0]):
            raise ValueError(
                "J override needs an explicit bernstein_mean unless the preset mean is uniform"
            )
        per = float(cfg["bernstein_conc"]) / cfg["J"]
        cfg["bernstein_conc"] = per * J
        cfg["bernstein_mean"] = [1.0 / J] * J
        cfg["J"] = int(J)
    hyper = PriorHyper(**cfg)
    return Preset(name=name, hyper=hyper, t_open=t_open, t_close=t_close)
