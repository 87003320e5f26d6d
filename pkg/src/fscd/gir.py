"""Sampler correctness harness.

Alternates every transition kernel of the posterior sampler with a
data-redraw move, so the chain's invariant law is the full joint prior
over (parameters, states, regimes, durations).  Marginal averages of
the parameters must then match their analytic prior means up to Monte
Carlo error; a t statistic per parameter quantifies the discrepancy.
Any coding error that breaks a single block's invariance shows up as a
drifting marginal.

The harness runs a deliberately small configuration: one session of n
transactions, and state dynamics that decay per transaction rather
than per elapsed second.  The latter keeps every state its own free
coordinate (ties in recorded times do not collapse), so the redraw
move only has to account for the diurnal anchor points moving with the
proposed times:

    log alpha = log p(x | t*, theta) - log p(x | t, theta),

durations being proposed exactly from their conditional law.  A
proposal whose cumulative time passes the session close has zero
density under the model and is rejected outright.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from fscd.density import (
    sample_cluster,
    sample_cluster_discrete,
    sample_regular,
    sample_regular_discrete,
)
from fscd.diagnostics import obm_nse
from fscd.mcmc import ChainState, GaussianProposal, GibbsSampler, SamplerConfig
from fscd.model import (
    DurationData,
    LatentPath,
    ModelParams,
    day_structure,
    eval_diurnal,
    indicator_stationary,
    state_transition_logpdf,
)
from fscd.priors import PriorHyper, dirichlet_logistic_moments, load_preset, sample_prior
from fscd.splines import SplineBasis


@dataclass(frozen=True)
class GirConfig:
    sweeps: int
    preset: str = "gir"
    discrete: bool = False
    seed: int = 0
    n_obs: int = 50
    max_tries: int = 1000
    checkpoint_path: str | None = None
    checkpoint_every: int = 20000

    def __post_init__(self):
        if self.sweeps < 2:
            raise ValueError("need at least two sweeps")
        if self.n_obs < 2:
            raise ValueError("need at least two transactions")


def monitored_names(hyper: PriorHyper, discrete: bool) -> list[str]:
    names = ["theta1", "theta2", "tau", "level"]
    names += [f"beta{j}" for j in range(1, hyper.J + 1)]
    names += ["xi00", "xi11"]
    names += ["zeta"] if discrete else ["lam1", "lam2", "pi"]
    return names


def prior_means(hyper: PriorHyper, discrete: bool) -> np.ndarray:
    """Analytic prior mean of every monitored scalar, in column order."""

    def beta_mean(ab):
        return ab[0] / (ab[0] + ab[1])

    vals = [
        hyper.theta_mean[0],
        hyper.theta_mean[1],
        hyper.tau_mean,
        hyper.delta_loc,
        *hyper.bernstein_mean,
        beta_mean(hyper.xi0_beta),
        beta_mean(hyper.xi1_beta),
    ]
    if discrete:
        vals.append(beta_mean(hyper.zeta_beta))
    else:
        g1, g2 = hyper.lambda1_gamma, hyper.lambda2_gamma
        vals += [g1[0] / g1[1], g2[0] / g2[1], beta_mean(hyper.pi_beta)]
    return np.array(vals)


def _param_row(p: ModelParams) -> list[float]:
    row = [p.theta[0], p.theta[1], p.tau, float(p.delta.mean())]
    row += list(p.beta.beta)
    row += [p.xi00, p.xi11]
    if p.cluster.is_discrete:
        row.append(p.cluster.zeta)
    else:
        row += [p.cluster.lam1, p.cluster.lam2, p.cluster.pi]
    return row


def gir_state_step(
    x_prev: float, t_now: float, t_prev: float, p: ModelParams, basis: SplineBasis
) -> tuple[float, float]:
    """Per-transaction state step: fixed decay, diurnal anchor moves."""
    e = np.exp(-p.phi)
    m_now = eval_diurnal(basis, p.delta, t_now)
    m_prev = eval_diurnal(basis, p.delta, t_prev)
    mean = m_now + e * (x_prev - m_prev)
    var = p.sigma**2 * -np.expm1(-2.0 * p.phi)
    return float(mean), float(var)


def _draw_duration(s: int, x: float, p: ModelParams, rng, discrete: bool) -> float:
    if s == 1:
        xv = np.array([x])
        if discrete:
            return float(sample_regular_discrete(p.coeffs, xv, rng)[0])
        return float(sample_regular(p.beta, p.coeffs, xv, rng)[0])
    if discrete:
        return float(sample_cluster_discrete(p.cluster, rng, 1)[0])
    return float(sample_cluster(p.cluster, rng, 1)[0])


def gir_simulate(
    p: ModelParams,
    n: int,
    basis: SplineBasis,
    rng: np.random.Generator,
    discrete: bool = False,
    max_tries: int = 1000,
) -> tuple[DurationData, LatentPath]:
    """Fixed-length forward draw under the per-transaction dynamics.

    All or nothing: a path whose clock passes the session close is
    discarded and redrawn from scratch.
    """
    xi0, _ = indicator_stationary(p.xi00, p.xi11)
    m_open = eval_diurnal(basis, p.delta, basis.t_open)
    sd0 = p.sigma
    sd = p.sigma * np.sqrt(-np.expm1(-2.0 * p.phi))
    e = np.exp(-p.phi)
    for _ in range(max_tries):
        t = [basis.t_open]
        s_day = np.empty(n, dtype=np.int8)
        x_day = np.empty(n)
        s_cur = 0 if rng.random() < xi0 else 1
        x_cur = float(rng.normal(m_open, sd0))
        ok = True
        for i in range(n):
            y = _draw_duration(s_cur, x_cur, p, rng, discrete)
            t_new = t[-1] + y
            if t_new > basis.t_close:
                ok = False
                break
            s_day[i] = s_cur
            x_day[i] = x_cur
            t.append(t_new)
            if i < n - 1:
                stay = p.xi11 if s_cur == 1 else p.xi00
                s_cur = s_cur if rng.random() < stay else 1 - s_cur
                m_now = eval_diurnal(basis, p.delta, t[-1])
                m_prev = eval_diurnal(basis, p.delta, t[-2])
                x_cur = float(rng.normal(m_now + e * (x_cur - m_prev), sd))
        if ok:
            return DurationData([np.array(t)], discrete=discrete), LatentPath(
                [s_day], [x_day]
            )
    raise RuntimeError(f"no admissible path in {max_tries} tries")


def redraw_data(
    data: DurationData,
    state: ChainState,
    basis: SplineBasis,
    rng: np.random.Generator,
    discrete: bool = False,
) -> tuple[DurationData | None, bool, bool]:
    """Propose a full replacement set of durations given (params, x, s).

    Each duration is drawn from its conditional law, so those factors
    cancel and the ratio reduces to the state density under the new
    versus old anchor times.  Returns (data, accepted, overflowed).
    """
    p = state.params
    x = state.path.x[0]
    s = state.path.s[0]
    n = x.size
    y_new = np.empty(n)
    reg = s == 1
    if reg.any():
        if discrete:
            y_new[reg] = sample_regular_discrete(p.coeffs, x[reg], rng)
        else:
            y_new[reg] = sample_regular(p.beta, p.coeffs, x[reg], rng)
    n_clu = int(n - reg.sum())
    if n_clu:
        if discrete:
            y_new[~reg] = sample_cluster_discrete(p.cluster, rng, n_clu)
        else:
            y_new[~reg] = sample_cluster(p.cluster, rng, n_clu)
    times = np.concatenate([[basis.t_open], basis.t_open + np.cumsum(y_new)])
    if times[-1] > basis.t_close:
        return None, False, True
    struct_new = day_structure(times, basis, homogeneous=True)
    struct_cur = day_structure(data.times[0], basis, homogeneous=True)
    log_alpha = state_transition_logpdf(struct_new, x, p) - state_transition_logpdf(
        struct_cur, x, p
    )
    if np.log(rng.random()) < log_alpha:
        return DurationData([times], discrete=discrete), True, False
    return None, False, False


@dataclass
class GirReport:
    """Prior-mean discrepancies with their Monte Carlo uncertainty."""

    names: list[str]
    mean: np.ndarray
    prior_mean: np.ndarray
    nse: np.ndarray
    tstat: np.ndarray
    sweeps: int
    batch_len: int | None = None

    @property
    def max_abs_t(self) -> float:
        return float(np.max(np.abs(self.tstat)))

    def n_above(self, z: float) -> int:
        return int(np.sum(np.abs(self.tstat) > z))

    def format(self) -> str:
        lines = [
            f"{'parameter':>10s} {'prior':>10s} {'chain':>12s} "
            f"{'diff':>11s} {'nse':>10s} {'t':>7s}"
        ]
        for i, name in enumerate(self.names):
            d = self.mean[i] - self.prior_mean[i]
            lines.append(
                f"{name:>10s} {self.prior_mean[i]:>10.4f} {self.mean[i]:>12.6f} "
                f"{d:>11.6f} {self.nse[i]:>10.6f} {self.tstat[i]:>7.2f}"
            )
        lines.append(
            f"{self.sweeps} sweeps; max |t| = {self.max_abs_t:.2f}; "
            f"{self.n_above(1.96)} of {len(self.names)} above 1.96"
        )
        return "\n".join(lines)


@dataclass
class GirResult:
    """Raw harness output: one row of monitored scalars per sweep."""

    names: list[str]
    series: np.ndarray
    prior_mean: np.ndarray
    discrete: bool
    n_obs: int
    seed: int
    redraw_accepted: int = 0
    redraw_overflow: int = 0
    acc_counts: dict[str, int] = field(default_factory=dict)

    @property
    def sweeps(self) -> int:
        return self.series.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.series[:, self.names.index(name)]

    def report(self, batch_len: int | None = None) -> GirReport:
        mean = self.series.mean(axis=0)
        nse = np.array([obm_nse(col, batch_len) for col in self.series.T])
        return GirReport(
            names=list(self.names),
            mean=mean,
            prior_mean=self.prior_mean.copy(),
            nse=nse,
            tstat=(mean - self.prior_mean) / nse,
            sweeps=self.sweeps,
            batch_len=batch_len,
        )

    def save(self, path) -> None:
        meta = {
            "names": self.names,
            "discrete": self.discrete,
            "n_obs": self.n_obs,
            "seed": self.seed,
            "redraw_accepted": self.redraw_accepted,
            "redraw_overflow": self.redraw_overflow,
            "acc_counts": self.acc_counts,
        }
        np.savez_compressed(
            path,
            series=self.series,
            prior_mean=self.prior_mean,
            meta_json=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
        )

    @classmethod
    def load(cls, path) -> "GirResult":
        with np.load(path) as z:
            meta = json.loads(bytes(z["meta_json"]).decode())
            return cls(
                names=meta["names"],
                series=z["series"],
                prior_mean=z["prior_mean"],
                discrete=meta["discrete"],
                n_obs=meta["n_obs"],
                seed=meta["seed"],
                redraw_accepted=meta["redraw_accepted"],
                redraw_overflow=meta["redraw_overflow"],
                acc_counts=meta["acc_counts"],
            )


def run_gir(config: GirConfig, progress=None) -> GirResult:
    """Run the joint chain and record the monitored scalars per sweep.

    Proposals are fixed at the analytic prior (Gaussian for theta, the
    digamma/trigamma Gaussian for the log-ratio simplex coordinates),
    so no adaptation phase is involved and every sweep leaves the
    joint prior invariant.
    """
    preset = load_preset(config.preset)
    hyper = preset.hyper
    if hyper.xi0_beta is None or (not config.discrete and hyper.lambda1_gamma is None):
        raise ValueError("preset lacks the priors for this variant")
    if config.discrete and hyper.zeta_beta is None:
        raise ValueError("preset lacks a discretized-cluster prior")
    basis = SplineBasis(preset.t_open, preset.t_close, hyper.M)
    rng = np.random.default_rng(config.seed)

    params = sample_prior(hyper, rng, discrete=config.discrete)
    data, path = gir_simulate(
        params, config.n_obs, basis, rng, config.discrete, config.max_tries
    )
    state = ChainState(params, path)

    scfg = SamplerConfig(
        burn_in=1, retained=1, seed=config.seed, discrete=config.discrete
    )
    sampler = GibbsSampler(data, hyper, basis, scfg, homogeneous=True)
    sampler.theta_proposal = GaussianProposal(hyper.theta_mean, hyper.theta_cov)
    if hyper.J > 1:
        mean, cov = dirichlet_logistic_moments(
            hyper.bernstein_conc, hyper.bernstein_mean
        )
        sampler.vartheta_proposal = GaussianProposal(mean, cov)

    names = monitored_names(hyper, config.discrete)
    result = GirResult(
        names=names,
        series=np.empty((config.sweeps, len(names))),
        prior_mean=prior_means(hyper, config.discrete),
        discrete=config.discrete,
        n_obs=config.n_obs,
        seed=config.seed,
    )
    acc_counts: dict[str, int] = {}
    for t in range(config.sweeps):
        flags = sampler.sweep(state, rng)
        for k, v in flags.items():
            acc_counts[k] = acc_counts.get(k, 0) + int(v)
        new, accepted, overflow = redraw_data(data, state, basis, rng, config.discrete)
        if accepted:
            data = new
            sampler.set_data(data)
        result.redraw_accepted += int(accepted)
        result.redraw_overflow += int(overflow)
        result.series[t] = _param_row(state.params)
        done = t + 1
        if progress is not None and done % 1000 == 0:
            progress(done, config.sweeps)
        if (
            config.checkpoint_path is not None
            and done % config.checkpoint_every == 0
            and done < config.sweeps
        ):
            partial = GirResult(
                names=names,
                series=result.series[:done].copy(),
                prior_mean=result.prior_mean,
                discrete=config.discrete,
                n_obs=config.n_obs,
                seed=config.seed,
                redraw_accepted=result.redraw_accepted,
                redraw_overflow=result.redraw_overflow,
                acc_counts=dict(acc_counts),
            )
            partial.save(config.checkpoint_path)
    result.acc_counts = acc_counts
    if config.checkpoint_path is not None:
        result.save(config.checkpoint_path)
    return result
