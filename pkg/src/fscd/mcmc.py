"""Six-block Gibbs sampler for the duration model.

Sweep layout, all-duration variants:

  1. (x, theta)   joint Metropolis-Hastings move: theta from an adaptive
                  random walk during burn-in and from a frozen Student-t
                  independence proposal afterwards; x from the Laplace
                  block proposal under the candidate theta.
  2. (x, beta)    same pattern in the log-ratio coordinates
                  vartheta_j = log(beta_j / beta_J); the inverse map has
                  Jacobian prod_j beta_j, applied in the ratio.
  3. (delta, tau) exact conditionals: s * tau | delta is chi-square with
                  nu-bar + L - 1 degrees of freedom, then delta | tau, x
                  is Gaussian with precision H-bar(tau) + W'W from the
                  whitened state regression.
  4. s            one-at-a-time exact conditionals; the two interleaved
                  colorings are conditionally independent, so each
                  coloring updates as one vectorized draw.
  5. (xi00, xi11) beta proposals assembled from transition counts,
                  accepted against the day-initial stationary factors
                  the proposal ignores.
  6. lambda/pi/z  (continuous clusters) or zeta (discrete): exact
                  conditionals; component indicators z are drawn inside
                  the block and carry no state across sweeps.

The regular-duration variant runs blocks 1-3 only.  All state algebra
works on grouped coordinates (one per distinct transaction time), and
the harness's homogeneous dynamics drop the grouping entirely.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special

from fscd.density import BernsteinWeights, ClusterLaw, cluster_loglik, regular_loglik
from fscd.model import (
    DayStructure,
    DurationData,
    LatentPath,
    ModelParams,
    ar_decays,
    build_structures,
    indicator_stationary,
)
from fscd.priors import PriorHyper, delta_prior, difference_matrix
from fscd.splines import SplineBasis
from fscd.state_sampler import (
    build_proposal,
    observation_closure,
    propose_and_accept,
    state_prior,
)

STORE_FORMAT = 1


def _tau_dof(nu_bar: float, L: int) -> float:
    """Posterior degrees of freedom of the smoothing precision."""
    return nu_bar + L - 1


@dataclass
class ChainState:
    params: ModelParams
    path: LatentPath
    z: list[np.ndarray] | None = None
    sweep: int = 0


@dataclass(frozen=True)
class SamplerConfig:
    burn_in: int = 15000
    retained: int = 50000
    proposal_dof: float = 15.0
    target_rate: float = 0.234
    seed: int = 0
    regular_only: bool = False
    discrete: bool = False
    thinning: int = 1

    def __post_init__(self):
        if self.burn_in < 0 or self.retained <= 0 or self.thinning < 1:
            raise ValueError("nonpositive run lengths")
        if not self.proposal_dof > 2.0:
            raise ValueError("proposal dof must exceed 2")
        if self.regular_only and self.discrete:
            raise ValueError("regular-duration variant is continuous only")


class GaussianProposal:
    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float)
        self.chol = np.linalg.cholesky(np.asarray(cov, dtype=float))
        d = self.mean.size
        self._const = -0.5 * (
            d * np.log(2.0 * np.pi) + 2.0 * np.log(np.diag(self.chol)).sum()
        )

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return self.mean + self.chol @ rng.standard_normal(self.mean.size)

    def logpdf(self, x) -> float:
        r = linalg.solve_triangular(self.chol, np.asarray(x) - self.mean, lower=True)
        return float(self._const - 0.5 * r @ r)


class StudentTProposal:
    def __init__(self, mean, cov, dof):
        self.mean = np.asarray(mean, dtype=float)
        self.chol = np.linalg.cholesky(np.asarray(cov, dtype=float))
        self.dof = float(dof)
        d = self.mean.size
        self._const = float(
            special.gammaln((self.dof + d) / 2.0)
            - special.gammaln(self.dof / 2.0)
            - 0.5 * d * np.log(self.dof * np.pi)
            - np.log(np.diag(self.chol)).sum()
        )

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        d = self.mean.size
        z = self.chol @ rng.standard_normal(d)
        g = rng.chisquare(self.dof) / self.dof
        return self.mean + z / np.sqrt(g)

    def logpdf(self, x) -> float:
        d = self.mean.size
        r = linalg.solve_triangular(self.chol, np.asarray(x) - self.mean, lower=True)
        return float(self._const - 0.5 * (self.dof + d) * np.log1p(r @ r / self.dof))


class RamAdapter:
    """Robust adaptive-scaling random walk (Vihola 2012 recursion)."""

    def __init__(self, cov0, target=0.234):
        cov0 = np.atleast_2d(np.asarray(cov0, dtype=float))
        self.S = np.linalg.cholesky(cov0)
        self.target = target
        self.count = 0

    @property
    def dim(self) -> int:
        return self.S.shape[0]

    def propose(self, cur, rng) -> tuple[np.ndarray, np.ndarray]:
        u = rng.standard_normal(self.dim)
        return np.asarray(cur) + self.S @ u, u

    def update(self, u: np.ndarray, alpha: float) -> None:
        self.count += 1
        eta = min(1.0, self.dim * self.count ** (-2.0 / 3.0))
        w = self.S @ u
        M = self.S @ self.S.T + eta * (alpha - self.target) * np.outer(w, w) / (u @ u)
        try:
            self.S = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            pass


def vartheta_of(beta: np.ndarray) -> np.ndarray:
    """Log-ratio coordinates of a simplex point."""
    return np.log(beta[:-1]) - np.log(beta[-1])

def beta_of(vartheta: np.ndarray) -> np.ndarray:
    full = np.concatenate([vartheta, [0.0]])
    full -= full.max()
    w = np.exp(full)
    return w / w.sum()


def indicator_counts(s_list: list[np.ndarray]) -> np.ndarray:
    """Within-day transition counts N[l, k]."""
    N = np.zeros((2, 2))
    for s in s_list:
        if s.size > 1:
            np.add.at(N, (s[:-1], s[1:]), 1.0)
    return N


def xi_proposal_params(
    N: np.ndarray, hyper: PriorHyper
) -> tuple[tuple[float, float], tuple[float, float]]:
    """Beta proposal parameters for (xi00, xi11) from transition counts."""
    return (
        (hyper.xi0_beta[0] + N[0, 0], hyper.xi0_beta[1] + N[0, 1]),
        (hyper.xi1_beta[0] + N[1, 1], hyper.xi1_beta[1] + N[1, 0]),
    )


def cluster_posterior_params(hyper: PriorHyper, z: np.ndarray, y: np.ndarray) -> dict:
    """Conditional-posterior parameters of the continuous cluster law
    given component indicators: gamma (shape, rate) pairs and the beta
    pair for the mixing weight."""
    n1 = int((z == 1).sum())
    n2 = z.size - n1
    sum1 = float(y[z == 1].sum())
    sum2 = float(y[z == 2].sum())
    return {
        "lam1": (hyper.lambda1_gamma[0] + n1, hyper.lambda1_gamma[1] + sum1),
        "lam2": (hyper.lambda2_gamma[0] + n2, hyper.lambda2_gamma[1] + sum2),
        "pi": (hyper.pi_beta[0] + n1, hyper.pi_beta[1] + n2),
    }


def delta_posterior(
    hyper: PriorHyper,
    p: ModelParams,
    structs,
    x_list,
    tau: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Precision and covector of delta given tau and the state paths.

    Each day contributes whitened rows: the day-initial row B(t_0)/sigma
    and, per later group, (B_g - e_g B_{g-1}) / sd_g, matched against the
    identically whitened state values.
    """
    _, H, c = delta_prior(hyper, tau)
    H = H.copy()
    c = c.copy()
    for struct, x in zip(structs, x_list):
        if not struct.G:
            continue
        v = struct.group_values(x)
        e, sd = ar_decays(struct, p.phi, p.sigma)
        W = struct.B.copy()
        W[1:] -= e[:, None] * struct.B[:-1]
        W /= sd[:, None]
        target = v.copy()
        target[1:] -= e * v[:-1]
        target /= sd
        H += W.T @ W
        c += W.T @ target
    return H, c


def initial_state(
    data: DurationData,
    hyper: PriorHyper,
    basis: SplineBasis,
    discrete: bool = False,
    regular_only: bool = False,
) -> ChainState:
    """Deterministic start at the prior centers, all durations regular."""
    delta = np.full(hyper.L, hyper.delta_loc)
    kw = dict(
        phi=float(np.exp(hyper.theta_mean[0])),
        sigma=float(np.exp(hyper.theta_mean[1])),
        delta=delta,
        tau=hyper.tau_mean,
        beta=BernsteinWeights(hyper.bernstein_mean),
    )
    if not regular_only:
        kw["xi00"] = float(hyper.xi0_beta[0] / hyper.xi0_beta.sum())
        kw["xi11"] = float(hyper.xi1_beta[0] / hyper.xi1_beta.sum())
        if discrete:
            kw["cluster"] = ClusterLaw.discrete(
                float(hyper.zeta_beta[0] / hyper.zeta_beta.sum())
            )
        else:
            kw["cluster"] = ClusterLaw.continuous(
                float(hyper.lambda1_gamma[0] / hyper.lambda1_gamma[1]),
                float(hyper.lambda2_gamma[0] / hyper.lambda2_gamma[1]),
                float(hyper.pi_beta[0] / hyper.pi_beta.sum()),
            )
    params = ModelParams(**kw)
    structs = build_structures(data, basis)
    xs, ss = [], []
    for struct in structs:
        xs.append(struct.expand(struct.B @ delta) if struct.G else np.zeros(0))
        ss.append(np.ones(struct.n, dtype=np.int8))
    return ChainState(params=params, path=LatentPath(ss, xs))


class GibbsSampler:
    """One chain over one data set; blocks mutate a ChainState in place."""

    def __init__(
        self,
        data: DurationData,
        hyper: PriorHyper,
        basis: SplineBasis,
        config: SamplerConfig,
        homogeneous: bool = False,
    ):
        self.hyper = hyper
        self.basis = basis
        self.config = config
        self.homogeneous = homogeneous
        self.discrete = config.discrete
        self.regular_only = config.regular_only
        self._DtD = difference_matrix(hyper.L).T @ difference_matrix(hyper.L)
        self._theta_prior = GaussianProposal(hyper.theta_mean, hyper.theta_cov)
        self._dir_conc = hyper.bernstein_conc * hyper.bernstein_mean
        self.theta_proposal = None
        self.vartheta_proposal = None
        self.ram_theta = RamAdapter(hyper.theta_cov, config.target_rate)
        if hyper.J > 1:
            from fscd.priors import dirichlet_logistic_moments

            _, cov = dirichlet_logistic_moments(hyper.bernstein_conc, hyper.bernstein_mean)
            self.ram_vartheta = RamAdapter(cov, config.target_rate)
        else:
            self.ram_vartheta = None
        self.set_data(data)

    def set_data(self, data: DurationData) -> None:
        if data.discrete != self.discrete:
            raise ValueError("data precision does not match the sampler variant")
        self.data = data
        self.structs = build_structures(data, self.basis, self.homogeneous)
        self._y = [data.durations(d) for d in range(data.D)]

    # ---- helpers -----------------------------------------------------

    def _days(self):
        for d, struct in enumerate(self.structs):
            if struct.G:
                yield d, struct

    def _dirichlet_logpdf_kernel(self, beta: np.ndarray) -> float:
        # normalizer omitted: both sides of every ratio share it
        return float(np.sum((self._dir_conc - 1.0) * np.log(beta)))

    def _joint_x_move(self, state, rng, p_new, log_alpha0, obs_new_differs):
        """Shared machinery of blocks 1 and 2: propose x under p_new for
        every day, assemble the joint acceptance ratio, mutate on accept.
        Returns the realized acceptance probability."""
        p = state.params
        log_alpha = log_alpha0
        draws = []
        for d, struct in self._days():
            v_cur = struct.group_values(state.path.x[d])
            s_d = state.path.s[d]
            obs_cur = observation_closure(struct, self._y[d], s_d, p, self.discrete)
            obs_new = (
                observation_closure(struct, self._y[d], s_d, p_new, self.discrete)
                if obs_new_differs
                else obs_cur
            )
            prior_cur = state_prior(struct, p)
            prior_new = state_prior(struct, p_new) if p_new is not p else prior_cur
            prop_new = build_proposal(prior_new, obs_new, v_cur)
            v_star = prop_new.gauss.sample(rng)
            prop_cur = build_proposal(prior_cur, obs_cur, v_cur)
            log_alpha += (
                prior_new.logpdf(v_star)
                + obs_new(v_star)[0]
                - prior_cur.logpdf(v_cur)
                - obs_cur(v_cur)[0]
                + prop_cur.gauss.logpdf(v_cur)
                - prop_new.gauss.logpdf(v_star)
            )
            draws.append((d, struct, v_star))
        alpha = float(np.exp(min(0.0, log_alpha)))
        if rng.random() < alpha:
            state.params = p_new
            for d, struct, v_star in draws:
                state.path.x[d] = struct.expand(v_star)
            return alpha, True
        return alpha, False

    # ---- block 1: (x, theta) ----------------------------------------

    def block_x_theta(self, state: ChainState, rng) -> bool:
        p = state.params
        adaptive = self.theta_proposal is None
        if adaptive:
            theta_new, u = self.ram_theta.propose(p.theta, rng)
            q_diff = 0.0
        else:
            theta_new = self.theta_proposal.draw(rng)
            q_diff = self.theta_proposal.logpdf(p.theta) - self.theta_proposal.logpdf(
                theta_new
            )
        p_new = p.with_theta(theta_new)
        log_alpha0 = (
            self._theta_prior.logpdf(theta_new)
            - self._theta_prior.logpdf(p.theta)
            + q_diff
        )
        alpha, accepted = self._joint_x_move(
            state, rng, p_new, log_alpha0, obs_new_differs=False
        )
        if adaptive:
            self.ram_theta.update(u, alpha)
        return accepted

    # ---- block 2: (x, beta) -----------------------------------------

    def block_x_beta(self, state: ChainState, rng) -> bool:
        p = state.params
        if self.hyper.J == 1:
            _, accepted = self._joint_x_move(state, rng, p, 0.0, obs_new_differs=False)
            return accepted
        vt_cur = vartheta_of(p.beta.beta)
        adaptive = self.vartheta_proposal is None
        if adaptive:
            vt_new, u = self.ram_vartheta.propose(vt_cur, rng)
            q_diff = 0.0
        else:
            vt_new = self.vartheta_proposal.draw(rng)
            q_diff = self.vartheta_proposal.logpdf(vt_cur) - self.vartheta_proposal.logpdf(
                vt_new
            )
        beta_new = beta_of(vt_new)
        p_new = p.replace(beta=BernsteinWeights(beta_new))
        # Dirichlet kernel plus the log-ratio transform Jacobian prod(beta)
        log_alpha0 = (
            self._dirichlet_logpdf_kernel(beta_new)
            - self._dirichlet_logpdf_kernel(p.beta.beta)
            + np.log(beta_new).sum()
            - np.log(p.beta.beta).sum()
            + q_diff
        )
        alpha, accepted = self._joint_x_move(
            state, rng, p_new, log_alpha0, obs_new_differs=True
        )
        if adaptive:
            self.ram_vartheta.update(u, alpha)
        return accepted

    # ---- per-day path refresh ---------------------------------------

    def block_x_refresh(self, state: ChainState, rng) -> float:
        """Independence refresh of each day's path at fixed parameters.

        The joint blocks accept or reject all days at once, so a single
        day whose current path sits in the upper tail of its proposal's
        density ratio vetoes every parameter move.  Refreshing days one
        at a time caps the damage at one day and restores the joint
        acceptance rates; returns the accepted fraction of days.
        """
        p = state.params
        hits = 0
        days = 0
        for d, struct in self._days():
            days += 1
            v_cur = struct.group_values(state.path.x[d])
            obs = observation_closure(
                struct, self._y[d], state.path.s[d], p, self.discrete
            )
            prior = state_prior(struct, p)
            v_new, accepted = propose_and_accept(v_cur, prior, obs, rng)
            if accepted:
                state.path.x[d] = struct.expand(v_new)
                hits += 1
        return hits / days if days else 1.0

    # ---- block 3: (delta, tau), exact -------------------------------

    def block_delta_tau(self, state: ChainState, rng) -> None:
        p = state.params
        hyper = self.hyper
        rough = float(p.delta @ self._DtD @ p.delta)
        tau_new = rng.chisquare(_tau_dof(hyper.tau_dof, hyper.L)) / (
            hyper.tau_scale + rough
        )
        H, c = delta_posterior(
            hyper, p, self.structs, state.path.x, tau_new
        )
        chol = np.linalg.cholesky(H)
        mean = linalg.cho_solve((chol, True), c)
        delta_new = mean + linalg.solve_triangular(
            chol.T, rng.standard_normal(hyper.L), lower=False
        )
        state.params = p.replace(delta=delta_new, tau=float(tau_new))

    # ---- block 4: regime indicators ---------------------------------

    def block_s(self, state: ChainState, rng) -> None:
        p = state.params
        logxi = np.log(
            np.array([[p.xi00, 1.0 - p.xi00], [1.0 - p.xi11, p.xi11]])
        )
        logstat = np.log(np.array(indicator_stationary(p.xi00, p.xi11)))
        for d, struct in self._days():
            y = self._y[d]
            x = state.path.x[d]
            s = state.path.s[d]
            lp1 = regular_loglik(y, x, p.coeffs, self.discrete)
            lp0 = cluster_loglik(y, p.cluster)
            n = s.size
            for color in (0, 1):
                idx = np.arange(color, n, 2)
                if idx.size == 0:
                    continue
                left0 = np.where(idx > 0, logxi[s[idx - 1], 0], logstat[0])
                left1 = np.where(idx > 0, logxi[s[idx - 1], 1], logstat[1])
                last = idx == n - 1
                right0 = np.where(last, 0.0, logxi[0, s[np.minimum(idx + 1, n - 1)]])
                right1 = np.where(last, 0.0, logxi[1, s[np.minimum(idx + 1, n - 1)]])
                diff = (lp1[idx] + left1 + right1) - (lp0[idx] + left0 + right0)
                with np.errstate(over="ignore"):
                    prob1 = 1.0 / (1.0 + np.exp(-diff))
                s[idx] = (rng.random(idx.size) < prob1).astype(np.int8)

    # ---- block 5: indicator chain parameters ------------------------

    def block_xi(self, state: ChainState, rng) -> bool:
        p = state.params
        hyper = self.hyper
        N = indicator_counts(state.path.s)
        (a0, b0), (a1, b1) = xi_proposal_params(N, hyper)
        xi00_new = float(rng.beta(a0, b0))
        xi11_new = float(rng.beta(a1, b1))
        stat_cur = np.array(indicator_stationary(p.xi00, p.xi11))
        stat_new = np.array(indicator_stationary(xi00_new, xi11_new))
        log_alpha = 0.0
        for s in state.path.s:
            if s.size:
                log_alpha += np.log(stat_new[s[0]]) - np.log(stat_cur[s[0]])
        if np.log(rng.random()) < log_alpha:
            state.params = p.replace(xi00=xi00_new, xi11=xi11_new)
            return True
        return False

    # ---- block 6: cluster law ---------------------------------------

    def _cluster_durations(self, state) -> np.ndarray:
        parts = [
            self._y[d][state.path.s[d] == 0] for d, _ in self._days()
        ]
        return np.concatenate(parts) if parts else np.zeros(0)

    def block_lambda_pi(self, state: ChainState, rng) -> None:
        hyper = self.hyper
        cl = state.params.cluster
        y = self._cluster_durations(state)
        if y.size:
            lw1 = np.log(cl.pi) + np.log(cl.lam1) - cl.lam1 * y
            lw2 = np.log1p(-cl.pi) + np.log(cl.lam2) - cl.lam2 * y
            with np.errstate(over="ignore"):
                p1 = 1.0 / (1.0 + np.exp(lw2 - lw1))
            z = np.where(rng.random(y.size) < p1, 1, 2)
        else:
            z = np.zeros(0, dtype=int)
        post = cluster_posterior_params(hyper, z, y)
        lam1 = float(rng.gamma(post["lam1"][0], 1.0 / post["lam1"][1]))
        lam2 = float(rng.gamma(post["lam2"][0], 1.0 / post["lam2"][1]))
        pi = float(rng.beta(*post["pi"]))
        state.params = state.params.replace(
            cluster=ClusterLaw.continuous(lam1, lam2, pi)
        )
        # scatter z back into day-aligned slots (0 where regular)
        state.z = []
        used = 0
        for d in range(self.data.D):
            s = state.path.s[d]
            zd = np.zeros(s.size, dtype=int)
            k = int((s == 0).sum())
            zd[s == 0] = z[used : used + k]
            used += k
            state.z.append(zd)

    def block_zeta(self, state: ChainState, rng) -> None:
        hyper = self.hyper
        y = self._cluster_durations(state)
        if (y > 1.0).any():
            raise RuntimeError("cluster regime assigned to a duration above 1s")
        n0 = int((y == 0.0).sum())
        n1 = int((y == 1.0).sum())
        zeta = float(rng.beta(hyper.zeta_beta[0] + n0, n1 + hyper.zeta_beta[1]))
        state.params = state.params.replace(cluster=ClusterLaw.discrete(zeta))

    # ---- orchestration ----------------------------------------------

    def sweep(self, state: ChainState, rng) -> dict:
        flags = {
            "acc_x_theta": self.block_x_theta(state, rng),
            "acc_x_beta": self.block_x_beta(state, rng),
            "acc_x": self.block_x_refresh(state, rng),
        }
        self.block_delta_tau(state, rng)
        if not self.regular_only:
            self.block_s(state, rng)
            flags["acc_xi"] = self.block_xi(state, rng)
            if self.discrete:
                self.block_zeta(state, rng)
            else:
                self.block_lambda_pi(state, rng)
        state.sweep += 1
        return flags

    def freeze_proposals(self, theta_draws: np.ndarray, vt_draws: np.ndarray) -> None:
        """Fix the post-burn-in Student-t proposals from burn-in draws."""
        dof = self.config.proposal_dof
        cov = np.cov(theta_draws.T) + 1e-9 * np.eye(2)
        self.theta_proposal = StudentTProposal(theta_draws.mean(axis=0), cov, dof)
        if self.hyper.J > 1:
            d = vt_draws.shape[1]
            cov = np.atleast_2d(np.cov(vt_draws.T)) + 1e-9 * np.eye(d)
            self.vartheta_proposal = StudentTProposal(vt_draws.mean(axis=0), cov, dof)


class DrawStore:
    """Columnar record of retained sweeps.

    Scalar series per parameter, per-sweep acceptance flags, and (for
    all-duration variants) the regime indicators packed eight per byte.
    Persisted as a compressed .npz with a JSON metadata entry; reload
    is bit-exact.
    """

    def __init__(self, meta: dict):
        self.meta = dict(meta)
        self.meta.setdefault("format", STORE_FORMAT)
        self._cols: dict[str, list] = {}
        self._s_rows: list[np.ndarray] = []

    @property
    def length(self) -> int:
        if not self._cols:
            return 0
        return len(next(iter(self._cols.values())))

    @property
    def names(self) -> list[str]:
        return list(self._cols)

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self._cols[name])

    def append(self, state: ChainState, flags: dict) -> None:
        p = state.params
        row = {
            "theta1": p.theta[0],
            "theta2": p.theta[1],
            "tau": p.tau,
            "level": p.delta.mean(),
        }
        for i, v in enumerate(p.delta, start=1):
            row[f"delta{i}"] = v
        for j, v in enumerate(p.beta.beta, start=1):
            row[f"beta{j}"] = v
        if p.xi00 is not None:
            row["xi00"] = p.xi00
            row["xi11"] = p.xi11
        if p.cluster is not None:
            if p.cluster.is_discrete:
                row["zeta"] = p.cluster.zeta
            else:
                row["lam1"] = p.cluster.lam1
                row["lam2"] = p.cluster.lam2
                row["pi"] = p.cluster.pi
        for k, v in flags.items():
            row[k] = float(v)
        for k, v in row.items():
            self._cols.setdefault(k, []).append(float(v))
        if p.xi00 is not None:
            s_all = np.concatenate(state.path.s) if state.path.s else np.zeros(0, np.int8)
            self._s_rows.append(np.packbits(s_all.astype(np.uint8)))

    def s_draws(self) -> np.ndarray:
        """Unpacked indicator draws, shape (length, total durations)."""
        total = int(self.meta["total"])
        if not self._s_rows:
            raise ValueError("store holds no indicator draws")
        bits = np.unpackbits(np.stack(self._s_rows), axis=1)
        return bits[:, :total]

    def save(self, path) -> None:
        payload = {f"col_{k}": np.asarray(v) for k, v in self._cols.items()}
        if self._s_rows:
            payload["s_bits"] = np.stack(self._s_rows)
        payload["meta_json"] = np.frombuffer(
            json.dumps(self.meta, sort_keys=True).encode(), dtype=np.uint8
        )
        np.savez_compressed(path, **payload)

    @classmethod
    def load(cls, path) -> "DrawStore":
        with np.load(path) as z:
            meta = json.loads(bytes(z["meta_json"]).decode())
            store = cls(meta)
            for key in z.files:
                if key.startswith("col_"):
                    store._cols[key[4:]] = list(z[key])
            if "s_bits" in z.files:
                store._s_rows = list(z["s_bits"])
        return store


def adapt_and_run(
    data: DurationData,
    hyper: PriorHyper,
    basis: SplineBasis,
    config: SamplerConfig,
    progress=None,
) -> DrawStore:
    """Burn in with adaptation, freeze the proposals, record the chain."""
    rng = np.random.default_rng(config.seed)
    sampler = GibbsSampler(data, hyper, basis, config)
    state = initial_state(
        data, hyper, basis, discrete=config.discrete, regular_only=config.regular_only
    )
    half = config.burn_in // 2
    theta_hist, vt_hist = [], []
    acc = {"acc_x_theta": 0.0, "acc_x_beta": 0.0, "acc_x": 0.0}
    for i in range(config.burn_in):
        flags = sampler.sweep(state, rng)
        if i >= half:
            theta_hist.append(state.params.theta)
            vt_hist.append(vartheta_of(state.params.beta.beta))
            for k in acc:
                acc[k] += flags.get(k, 0.0)
        if progress is not None and (i + 1) % 1000 == 0:
            progress("burn-in", i + 1, config.burn_in)
    adapt_ok = True
    if config.burn_in:
        n_half = config.burn_in - half
        for k, hits in acc.items():
            rate = hits / n_half
            # near-1 is ideal for the independence refresh, a defect for
            # the adapted random-walk blocks
            bad = rate <= 0.05 if k == "acc_x" else not 0.05 < rate < 0.95
            if bad:
                adapt_ok = False
                warnings.warn(
                    f"burn-in acceptance for {k} was {rate:.3f}; "
                    "frozen proposals may be poor"
                )
        sampler.freeze_proposals(np.array(theta_hist), np.array(vt_hist))
    meta = {
        "variant": "regular" if config.regular_only else "all",
        "discrete": config.discrete,
        "J": hyper.J,
        "L": hyper.L,
        "seed": config.seed,
        "burn_in": config.burn_in,
        "retained": config.retained,
        "thinning": config.thinning,
        "counts": [int(c) for c in data.counts],
        "total": int(data.total),
        "adapt_ok": adapt_ok,
    }
    store = DrawStore(meta)
    for i in range(config.retained * config.thinning):
        flags = sampler.sweep(state, rng)
        if (i + 1) % config.thinning == 0:
            store.append(state, flags)
        if progress is not None and (i + 1) % 1000 == 0:
            progress("sampling", i + 1, config.retained * config.thinning)
    return store
