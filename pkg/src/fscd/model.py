"""The all-duration data generating process.

Transaction times t_{d,0} < ... < t_{d,n_d} on day d define durations
y_{d,i} = t_{d,i} - t_{d,i-1}.  Each duration carries a latent regime
s_{d,i} (0 = cluster, 1 = regular) following a stationary two-state
Markov chain that restarts every day, and a latent log intensity
x_{d,i}, the value at time t_{d,i-1} of an Ornstein-Uhlenbeck process
reverting to the diurnal level m(t).  Sampled at trade times the OU
process is a heterogeneous AR(1):

    x_{d,i+1} | x_{d,i} ~ N( m(t_{d,i}) + e^{-phi y_{d,i}} (x_{d,i} - m(t_{d,i-1})),
                             sigma^2 (1 - e^{-2 phi y_{d,i}}) ),

with day-initial state x_{d,1} ~ N(m(t_{d,0}), sigma^2).  Given regime
and state, a regular duration is y = e^x * eps with eps from the
Bernstein density; a cluster duration follows the cluster law.  The
discrete variant records times truncated to whole seconds and uses the
censored pmf.

A recorded gap of zero seconds collapses the transition: the variance
vanishes and the two states are equal with probability one.  States
sharing a transaction time therefore form a single free value, and all
state-space algebra here works on the grouped path (one coordinate per
distinct time); `DayStructure` carries the grouping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fscd.density import (
    BernsteinWeights,
    ClusterLaw,
    ExpMixCoeffs,
    bernstein_to_expmix,
    cluster_loglik,
    regular_loglik,
    sample_cluster,
    sample_cluster_discrete,
    sample_regular,
    sample_regular_discrete,
)
from fscd.splines import SplineBasis, basis_matrix, eval_diurnal


@dataclass(frozen=True)
class ModelParams:
    """Full parameter set; cluster and indicator blocks are optional so
    the regular-duration-only variant can drop them."""

    phi: float
    sigma: float
    delta: np.ndarray
    tau: float
    beta: BernsteinWeights
    xi00: float | None = None
    xi11: float | None = None
    cluster: ClusterLaw | None = None
    coeffs: ExpMixCoeffs = field(init=False)

    def __post_init__(self):
        if not self.phi > 0.0:
            raise ValueError(f"phi={self.phi} must be positive")
        if not self.sigma > 0.0:
            raise ValueError(f"sigma={self.sigma} must be positive")
        if not self.tau > 0.0:
            raise ValueError(f"tau={self.tau} must be positive")
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=float))
        for name in ("xi00", "xi11"):
            v = getattr(self, name)
            if v is not None and not 0.0 < v < 1.0:
                raise ValueError(f"{name}={v} outside (0,1)")
        if (self.xi00 is None) != (self.xi11 is None):
            raise ValueError("xi00 and xi11 must be set together")
        if (self.xi00 is None) != (self.cluster is None):
            raise ValueError("indicator chain and cluster law go together")
        object.__setattr__(self, "coeffs", bernstein_to_expmix(self.beta))

    @property
    def theta(self) -> np.ndarray:
        """(log phi, log sigma), the pair the sampler moves."""
        return np.array([np.log(self.phi), np.log(self.sigma)])

    @property
    def regular_only(self) -> bool:
        return self.cluster is None

    def replace(self, **kw) -> "ModelParams":
        base = dict(
            phi=self.phi,
            sigma=self.sigma,
            delta=self.delta,
            tau=self.tau,
            beta=self.beta,
            xi00=self.xi00,
            xi11=self.xi11,
            cluster=self.cluster,
        )
        base.update(kw)
        return ModelParams(**base)

    def with_theta(self, theta) -> "ModelParams":
        return self.replace(phi=float(np.exp(theta[0])), sigma=float(np.exp(theta[1])))


@dataclass
class LatentPath:
    """Per-day regime indicators and log intensities."""

    s: list[np.ndarray]
    x: list[np.ndarray]

    def copy(self) -> "LatentPath":
        return LatentPath([a.copy() for a in self.s], [a.copy() for a in self.x])


@dataclass(frozen=True)
class DurationData:
    """Per-day transaction times; durations are the first differences."""

    times: list[np.ndarray]
    discrete: bool = False

    def __post_init__(self):
        clean = []
        for d, t in enumerate(self.times):
            t = np.asarray(t, dtype=float)
            if t.ndim != 1 or t.size < 1:
                raise ValueError(f"day {d}: need at least the opening time")
            if (np.diff(t) < 0.0).any():
                raise ValueError(f"day {d}: transaction times decrease")
            if self.discrete and not np.all(t == np.floor(t)):
                raise ValueError(f"day {d}: discrete data must have integer times")
            clean.append(t)
        object.__setattr__(self, "times", clean)

    @property
    def D(self) -> int:
        return len(self.times)

    def n(self, d: int) -> int:
        return self.times[d].size - 1

    def durations(self, d: int) -> np.ndarray:
        return np.diff(self.times[d])

    @property
    def counts(self) -> np.ndarray:
        return np.array([self.n(d) for d in range(self.D)])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def all_durations(self) -> np.ndarray:
        return np.concatenate([self.durations(d) for d in range(self.D)])


def indicator_stationary(xi00: float, xi11: float) -> tuple[float, float]:
    """Stationary regime probabilities (xi_0, xi_1)."""
    denom = 2.0 - xi00 - xi11
    if denom <= 0.0:
        raise ValueError(f"degenerate indicator chain: xi00+xi11={xi00 + xi11}")
    xi0 = (1.0 - xi11) / denom
    return xi0, 1.0 - xi0


def ou_step(
    x_prev: float,
    y_prev: float,
    t_now: float,
    t_prev: float,
    p: ModelParams,
    basis: SplineBasis,
) -> tuple[float, float]:
    """Gaussian transition moments of the sampled OU state."""
    if y_prev < 0.0:
        raise ValueError(f"negative duration {y_prev}")
    decay = np.exp(-p.phi * y_prev)
    m_now = eval_diurnal(basis, p.delta, t_now)
    m_prev = eval_diurnal(basis, p.delta, t_prev)
    mean = m_now + decay * (x_prev - m_prev)
    var = p.sigma**2 * (1.0 - decay**2)
    return float(mean), float(var)


@dataclass(frozen=True)
class DayStructure:
    """Grouping of one day's states by distinct transaction time.

    State i sits at time t_{d,i-1}; states at equal times are one free
    coordinate.  `gidx` maps state index to group, `gt` holds the group
    times, `B` the spline basis rows at those times.  Under the
    homogeneous harness dynamics every state is its own group
    regardless of recorded gaps.
    """

    n: int
    gidx: np.ndarray
    gt: np.ndarray
    B: np.ndarray
    homogeneous: bool = False

    @property
    def G(self) -> int:
        return self.gt.size

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.gt)

    def group_values(self, x: np.ndarray) -> np.ndarray:
        """First state value of each group."""
        first = np.concatenate([[0], np.flatnonzero(np.diff(self.gidx)) + 1])
        return x[first]

    def expand(self, v: np.ndarray) -> np.ndarray:
        return v[self.gidx]

    def consistent(self, x: np.ndarray) -> bool:
        """Whether equal-time states carry equal values."""
        return bool(np.all(x == self.expand(self.group_values(x))))

    def reduce_sum(self, contrib: np.ndarray) -> np.ndarray:
        """Sum per-state quantities within groups."""
        return np.bincount(self.gidx, weights=contrib, minlength=self.G)


def day_structure(times: np.ndarray, basis: SplineBasis, homogeneous: bool = False) -> DayStructure:
    n = times.size - 1
    st = times[:-1]
    if n == 0:
        return DayStructure(0, np.zeros(0, dtype=np.intp), st[:0], np.zeros((0, basis.L)), homogeneous)
    if homogeneous:
        gidx = np.arange(n, dtype=np.intp)
        gt = st.copy()
    else:
        new = np.concatenate([[True], np.diff(st) > 0.0])
        gidx = np.cumsum(new) - 1
        gt = st[new]
    return DayStructure(n, gidx, gt, basis_matrix(basis, gt), homogeneous)


def build_structures(
    data: DurationData, basis: SplineBasis, homogeneous: bool = False
) -> list[DayStructure]:
    return [day_structure(data.times[d], basis, homogeneous) for d in range(data.D)]


def ar_decays(struct: DayStructure, phi: float, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-transition decay e_g and conditional sd of the grouped chain.

    sd[0] is the day-initial marginal sd sigma; sd[g] for g >= 1 is the
    conditional sd of group g+1 given group g.
    """
    if struct.homogeneous:
        z = np.full(max(struct.G - 1, 0), phi)
    else:
        z = phi * struct.gaps
    e = np.exp(-z)
    sd = np.empty(struct.G)
    if struct.G:
        sd[0] = sigma
        sd[1:] = sigma * np.sqrt(-np.expm1(-2.0 * z))
    return e, sd


def state_transition_logpdf(
    struct: DayStructure, x: np.ndarray, p: ModelParams
) -> float:
    """Log density of one day's state path under the AR(1) dynamics."""
    if struct.n == 0:
        return 0.0
    if not struct.consistent(x):
        return -np.inf
    v = struct.group_values(x)
    m = struct.B @ p.delta
    e, sd = ar_decays(struct, p.phi, p.sigma)
    resid = np.empty(struct.G)
    resid[0] = v[0] - m[0]
    resid[1:] = v[1:] - m[1:] - e * (v[:-1] - m[:-1])
    return float(-0.5 * np.sum((resid / sd) ** 2) - np.sum(np.log(sd)) - 0.5 * struct.G * np.log(2.0 * np.pi))


def indicator_logpdf(s: np.ndarray, p: ModelParams) -> float:
    """Log probability of one day's regime path."""
    if s.size == 0:
        return 0.0
    xi0, xi1 = indicator_stationary(p.xi00, p.xi11)
    lp = np.log(xi0 if s[0] == 0 else xi1)
    if s.size > 1:
        logxi = np.log(
            np.array([[p.xi00, 1.0 - p.xi00], [1.0 - p.xi11, p.xi11]])
        )
        lp += logxi[s[:-1], s[1:]].sum()
    return float(lp)


def observation_loglik(
    y: np.ndarray, s: np.ndarray, x: np.ndarray, p: ModelParams, discrete: bool
) -> float:
    """Sum of log p(y_i | s_i, x_i) over one day."""
    out = 0.0
    reg = s == 1
    if reg.any():
        out += regular_loglik(y[reg], x[reg], p.coeffs, discrete).sum()
    if (~reg).any():
        if p.cluster is None:
            return -np.inf
        out += cluster_loglik(y[~reg], p.cluster).sum()
    return float(out)


def joint_log_density(
    p: ModelParams,
    hyper,
    path: LatentPath,
    data: DurationData,
    basis: SplineBasis,
    homogeneous: bool = False,
) -> float:
    """Log of prior x transitions x indicators x observations.

    The regular-duration variant (params without indicator/cluster
    blocks, all s = 1) drops the corresponding factors.
    """
    from fscd.priors import log_prior

    lp = log_prior(p, hyper)
    if not np.isfinite(lp):
        return -np.inf
    for d in range(data.D):
        if path.s[d].size != data.n(d) or path.x[d].size != data.n(d):
            raise ValueError(f"day {d}: path length does not match durations")
        struct = day_structure(data.times[d], basis, homogeneous)
        lp += state_transition_logpdf(struct, path.x[d], p)
        if not p.regular_only:
            lp += indicator_logpdf(path.s[d], p)
        elif (path.s[d] == 0).any():
            raise ValueError("regular-duration variant cannot hold cluster regimes")
        lp += observation_loglik(
            data.durations(d), path.s[d], path.x[d], p, data.discrete
        )
        if not np.isfinite(lp):
            return -np.inf
    return float(lp)


def simulate(
    p: ModelParams,
    days: int,
    basis: SplineBasis,
    rng: np.random.Generator,
    discrete: bool = False,
) -> tuple[DurationData, LatentPath]:
    """Forward simulation; each day runs from t_open until the next
    transaction would pass t_close (the partial duration is dropped).

    In discrete mode the process evolves in continuous time but times
    are recorded truncated to the second, and the recorded values drive
    the state and regime transitions, mirroring how the censored model
    reads the data.  Cluster durations then advance the clock by their
    recorded 0s/1s value, which preserves the fractional phase.
    """
    if p.regular_only:
        xi0 = 0.0
    else:
        xi0, _ = indicator_stationary(p.xi00, p.xi11)
    times_out, s_out, x_out = [], [], []
    for _ in range(days):
        t_rec = [basis.t_open]
        s_day: list[int] = []
        x_day: list[float] = []
        t_cont = basis.t_open
        s_cur = 0 if (not p.regular_only and rng.random() < xi0) else 1
        m_open = eval_diurnal(basis, p.delta, basis.t_open)
        x_cur = float(rng.normal(m_open, p.sigma))
        t_prev_rec = basis.t_open
        while True:
            if s_cur == 1:
                step = float(sample_regular(p.beta, p.coeffs, np.array([x_cur]), rng)[0])
            elif discrete:
                step = float(sample_cluster_discrete(p.cluster, rng, 1)[0])
            else:
                step = float(sample_cluster(p.cluster, rng, 1)[0])
            t_new = t_cont + step
            t_new_rec = np.floor(t_new) if discrete else t_new
            if t_new_rec > basis.t_close:
                break
            t_rec.append(float(t_new_rec))
            s_day.append(s_cur)
            x_day.append(x_cur)
            y_rec = float(t_new_rec) - t_prev_rec
            # next regime and state, driven by the recorded clock
            if not p.regular_only:
                stay = p.xi11 if s_cur == 1 else p.xi00
                s_cur = s_cur if rng.random() < stay else 1 - s_cur
            if y_rec > 0.0:
                mean, var = ou_step(x_cur, y_rec, float(t_new_rec), t_prev_rec, p, basis)
                x_cur = float(rng.normal(mean, np.sqrt(var)))
            # zero recorded gap: the state repeats bit for bit
            t_prev_rec = float(t_new_rec)
            t_cont = t_new
        times_out.append(np.array(t_rec))
        s_out.append(np.array(s_day, dtype=np.int8))
        x_out.append(np.array(x_day))
    return DurationData(times_out, discrete=discrete), LatentPath(s_out, x_out)
