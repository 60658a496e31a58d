"""Stochastic oracles: exact event-driven simulation and Monte Carlo statistics.

Replicas are simulated in fixed-size chunks. Each chunk draws from its own
Philox stream spawned from ``SeedSequence(seed)``, and the chunk layout depends
only on N, so results are identical for any number of worker threads.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as sps
from scipy.special import logsumexp

from .model import ContinuumModel, LatticeModel, ModelError
from .spectral import cumulant_rates

__all__ = [
    "LatticePath",
    "Endpoints",
    "ReplicaStats",
    "DiffusionEstimate",
    "ScgfPoint",
    "CltResult",
    "simulate_lattice",
    "simulate_lattice_path",
    "simulate_telegrapher",
    "master_equation_rhs",
    "replica_stats",
    "estimate_diffusion",
    "estimate_scgf",
    "clt_check",
    "batch_layout",
]

CHUNK = 32768  # replicas per random stream / vectorized block


# --- samplers ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Endpoints:
    """Positions at each observation time, shape (len(times), N, d), and final velocity index."""

    times: np.ndarray
    x: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class LatticePath:
    times: np.ndarray  # event times, starting with 0
    positions: np.ndarray  # (n_events + 1, d)
    velocities: np.ndarray  # velocity index after each event
    t: float


def _rng(seed_seq) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_seq))


def _initial_velocities(rng, size: int, n: int, mu0) -> np.ndarray:
    if mu0 is None:
        return rng.integers(0, size, n)
    return rng.choice(size, size=n, p=np.asarray(mu0, dtype=float))


def _check_times(times) -> np.ndarray:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("observation times must be nonnegative and nondecreasing")
    return times


class _LatticeTables:
    """Per-velocity rate tables for the Gillespie step."""

    def __init__(self, model: LatticeModel):
        chain = model.velocities
        self.V = chain.velocities
        self.steps = model.kernel.steps
        self.kernel_cum = np.cumsum(model.kernel.probs)
        flips = model.gamma * chain.rates
        self.flip_cum = np.cumsum(flips, axis=1)
        self.flip_total = self.flip_cum[:, -1]
        # last reachable target per row, used if roundoff lands a draw on the row total
        self.flip_last = np.array([np.flatnonzero(r > 0)[-1] for r in flips])
        self.lam = model.lam
        self.passive = model.passive_rate
        self.total = self.lam + self.passive + self.flip_total


def _lattice_block(model: LatticeModel, times: np.ndarray, n: int, seed_seq, mu0) -> Endpoints:
    """Gillespie: one exponential clock at the total rate, then a categorical event choice."""
    rng = _rng(seed_seq)
    tab = _LatticeTables(model)
    d = model.d
    v = _initial_velocities(rng, model.velocities.size, n, mu0)
    x = np.zeros((n, d), dtype=np.int64)
    t = np.zeros(n)
    out = np.empty((times.size, n, d), dtype=np.int64)
    horizon_prev = 0.0
    for k, horizon in enumerate(times):
        # memorylessness: clocks restart at every observation time
        t.fill(horizon_prev)
        active = np.arange(n)
        while active.size:
            va = v[active]
            rate = tab.total[va]
            t_new = t[active] + rng.exponential(1.0, active.size) / rate
            fire = t_new <= horizon
            active, va, rate = active[fire], va[fire], rate[fire]
            t[active] = t_new[fire]
            if not active.size:
                break
            u = rng.random(active.size) * rate
            move = u < tab.lam
            passive = ~move & (u < tab.lam + tab.passive)
            flip = ~(move | passive)
            if move.any():
                x[active[move]] += tab.V[va[move]]
            if passive.any():
                idx = np.searchsorted(tab.kernel_cum, rng.random(passive.sum()) * tab.kernel_cum[-1], "right")
                x[active[passive]] += tab.steps[np.minimum(idx, tab.steps.shape[0] - 1)]
            if flip.any():
                vf = va[flip]
                w = rng.random(vf.size) * tab.flip_total[vf]
                nxt = (tab.flip_cum[vf] <= w[:, None]).sum(axis=1)
                over = nxt >= tab.V.shape[0]
                nxt[over] = tab.flip_last[vf[over]]
                v[active[flip]] = nxt
        out[k] = x
        horizon_prev = horizon
    return Endpoints(times, out, v)


def _telegrapher_block(model: ContinuumModel, times: np.ndarray, n: int, seed_seq, mu0) -> Endpoints:
    """Between flips (rate gamma Poisson stream) X moves by (lam v + 2 kappa E) dt plus Brownian noise."""
    rng = _rng(seed_seq)
    v = _initial_velocities(rng, 2, n, mu0)  # index 0 -> +1, 1 -> -1
    sign = np.array([1.0, -1.0])
    x = np.zeros(n)
    drift = 2.0 * model.kappa * model.E
    noise = np.sqrt(2.0 * model.kappa)
    out = np.empty((times.size, n, 1))
    t = np.zeros(n)
    horizon_prev = 0.0
    for k, horizon in enumerate(times):
        t.fill(horizon_prev)
        active = np.arange(n)
        while active.size:
            hold = rng.exponential(1.0 / model.gamma, active.size)
            remaining = horizon - t[active]
            flipped = hold < remaining
            dt = np.where(flipped, hold, remaining)
            g = rng.standard_normal(active.size)
            x[active] += (model.lam * sign[v[active]] + drift) * dt + noise * np.sqrt(dt) * g
            t[active] += dt
            active = active[flipped]
            v[active] = 1 - v[active]
        out[k, :, 0] = x
        horizon_prev = horizon
    return Endpoints(times, out, v)


def _chunked(block, model, times, N: int, seed: int, threads: int, mu0) -> Endpoints:
    if N < 1:
        raise ValueError("need at least one replica")
    times = _check_times(times)
    sizes = [min(CHUNK, N - s) for s in range(0, N, CHUNK)]
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        parts = list(ex.map(lambda i: block(model, times, sizes[i], seqs[i], mu0), range(len(sizes))))
    return Endpoints(
        times, np.concatenate([p.x for p in parts], axis=1), np.concatenate([p.v for p in parts])
    )


def simulate_lattice(model: LatticeModel, t, N: int = 1, seed: int = 0, threads: int = 1,
                     mu0=None) -> Endpoints:
    """Exact samples of (X_t, v_t) for N replicas started at 0 with v_0 ~ mu0 (uniform by default).

    ``t`` may be a single horizon or an increasing sequence of observation times.
    """
    return _chunked(_lattice_block, model, t, N, seed, threads, mu0)


def simulate_telegrapher(model: ContinuumModel, t, N: int = 1, seed: int = 0, threads: int = 1,
                         mu0=None) -> Endpoints:
    """Exact-in-distribution samples of the telegrapher position, velocities ordered (+1, -1)."""
    return _chunked(_telegrapher_block, model, t, N, seed, threads, mu0)


def simulate_lattice_path(model: LatticeModel, t: float, seed: int = 0, v0: int | None = None) -> LatticePath:
    """Full event history of a single replica (debugging and path-level tests)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    rng = _rng(np.random.SeedSequence(seed))
    tab = _LatticeTables(model)
    v = int(rng.integers(0, model.velocities.size)) if v0 is None else int(v0)
    x = np.zeros(model.d, dtype=np.int64)
    times, pos, vel = [0.0], [x.copy()], [v]
    now = 0.0
    while True:
        now += rng.exponential(1.0 / tab.total[v])
        if now > t:
            break
        u = rng.random() * tab.total[v]
        if u < tab.lam:
            x = x + tab.V[v]
        elif u < tab.lam + tab.passive:
            j = int(np.searchsorted(tab.kernel_cum, rng.random() * tab.kernel_cum[-1], "right"))
            x = x + tab.steps[min(j, tab.steps.shape[0] - 1)]
        else:
            j = int(np.searchsorted(tab.flip_cum[v], rng.random() * tab.flip_total[v], "right"))
            v = j if j < tab.V.shape[0] else int(tab.flip_last[v])
        times.append(now)
        pos.append(x.copy())
        vel.append(v)
    return LatticePath(np.array(times), np.array(pos), np.array(vel), float(t))


def master_equation_rhs(model: LatticeModel, mu: np.ndarray) -> np.ndarray:
    """d mu / dt for mu(x, v) stored on a finite box, shape (*box, |V|).

    Mass that would enter from outside the box is taken as zero, so the
    result is exact at every site whose neighbours all lie in the box.
    """
    mu = np.asarray(mu, dtype=float)
    d = model.d
    if mu.ndim != d + 1 or mu.shape[-1] != model.velocities.size:
        raise ModelError(f"mu must have shape (*box of rank {d}, {model.velocities.size})")

    def shifted(a, z):
        # b(x) = a(x - z), zero where x - z leaves the box
        b = np.zeros_like(a)
        src, dst = [], []
        for zi, L in zip(z, a.shape):
            if abs(zi) >= L:
                return b
            src.append(slice(max(0, -zi), L - max(0, zi)))
            dst.append(slice(max(0, zi), L - max(0, -zi)))
        b[tuple(dst)] = a[tuple(src)]
        return b

    out = np.zeros_like(mu)
    chain = model.velocities
    for j, vel in enumerate(chain.velocities):
        m = mu[..., j]
        out[..., j] += model.lam * (shifted(m, vel) - m)
        for z, p in zip(model.kernel.steps, model.kernel.probs):
            out[..., j] += model.passive_rate * p * (shifted(m, z) - m)
    # velocity flips: gamma * sum_v' (pi(v', v) mu(x, v') - pi(v, v') mu(x, v))
    out += model.gamma * mu @ chain.generator
    return out


# --- statistics -------------------------------------------------------------------------


def batch_layout(N: int) -> np.ndarray:
    """Batch index of every replica: about sqrt(N) contiguous batches."""
    n_batches = max(1, int(np.floor(np.sqrt(N))))
    return np.arange(N) * n_batches // N


@dataclass(frozen=True, eq=False)
class ReplicaStats:
    """Per-batch moments of X_t and exponential-moment accumulators.

    Each batch stores its count, mean and centred sum of squares per
    coordinate, and logsumexp of <alpha, X> and 2<alpha, X> for every alpha.
    Batches carry global ids; merging unions disjoint batch sets, which is
    associative and commutative.
    """

    alphas: np.ndarray  # (m, d)
    ids: np.ndarray  # (B,)
    counts: np.ndarray  # (B,)
    means: np.ndarray  # (B, d)
    m2: np.ndarray  # (B, d)
    lse: np.ndarray  # (B, m)
    lse2: np.ndarray  # (B, m)

    @classmethod
    def from_samples(cls, x, alphas=None, ids=None) -> "ReplicaStats":
        """Stats of one batch (``ids`` is None) or of the batches given per sample."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        d = x.shape[1]
        alphas = np.zeros((0, d)) if alphas is None else np.atleast_2d(np.asarray(alphas, dtype=float))
        ids = np.zeros(x.shape[0], dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
        order = np.argsort(ids, kind="stable")
        uniq, starts = np.unique(ids[order], return_index=True)
        m = alphas.shape[0]
        B = uniq.size
        counts = np.zeros(B, dtype=np.int64)
        means, m2 = np.zeros((B, d)), np.zeros((B, d))
        lse, lse2 = np.zeros((B, m)), np.zeros((B, m))
        for k, xb in enumerate(np.split(x[order], starts[1:])):
            mb = xb.mean(axis=0)
            tilt = xb @ alphas.T
            counts[k] = xb.shape[0]
            means[k] = mb
            m2[k] = ((xb - mb) ** 2).sum(axis=0)
            lse[k] = logsumexp(tilt, axis=0)
            lse2[k] = logsumexp(2 * tilt, axis=0)
        return cls(alphas, uniq, counts, means, m2, lse, lse2)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def merge(self, other: "ReplicaStats") -> "ReplicaStats":
        if self.alphas.shape != other.alphas.shape or not np.array_equal(self.alphas, other.alphas):
            raise ValueError("cannot merge stats accumulated at different alphas")
        if np.intersect1d(self.ids, other.ids).size:
            raise ValueError("batch ids overlap; each batch may be counted once")
        ids = np.concatenate([self.ids, other.ids])
        order = np.argsort(ids, kind="stable")

        def cat(a, b):
            return np.concatenate([a, b])[order]

        return ReplicaStats(
            self.alphas,
            ids[order],
            cat(self.counts, other.counts),
            cat(self.means, other.means),
            cat(self.m2, other.m2),
            cat(self.lse, other.lse),
            cat(self.lse2, other.lse2),
        )

    def mean(self) -> np.ndarray:
        return (self.counts[:, None] * self.means).sum(axis=0) / self.n

    def variance(self) -> np.ndarray:
        """Pooled sample variance (ddof = 1) via the parallel-update formula."""
        mu = self.mean()
        total = self.m2.sum(axis=0) + (self.counts[:, None] * (self.means - mu) ** 2).sum(axis=0)
        return total / (self.n - 1)

    def batch_variances(self) -> np.ndarray:
        return self.m2 / np.maximum(self.counts[:, None] - 1, 1)

    def log_mean_exp(self) -> np.ndarray:
        """log of the empirical mean of exp(<alpha, X>) for every alpha."""
        return logsumexp(self.lse, axis=0) - np.log(self.n)

    def log_mean_exp_loo(self) -> np.ndarray:
        """Delete-one-batch values of log_mean_exp, shape (B, m)."""
        B = self.ids.size
        out = np.empty_like(self.lse)
        for b in range(B):
            keep = np.arange(B) != b
            out[b] = logsumexp(self.lse[keep], axis=0) - np.log(self.n - self.counts[b])
        return out

    def effective_sample_size(self) -> np.ndarray:
        """(sum w)^2 / sum w^2 for the weights w = exp(<alpha, X>)."""
        return np.exp(2 * logsumexp(self.lse, axis=0) - logsumexp(self.lse2, axis=0))


def replica_stats(endpoints: np.ndarray, alphas=None) -> ReplicaStats:
    """ReplicaStats of an (N, d) sample with the standard sqrt(N) batch layout."""
    x = np.asarray(endpoints)
    return ReplicaStats.from_samples(x, alphas, batch_layout(x.shape[0]))


def _simulate(model, t, N, seed, threads, mu0=None) -> Endpoints:
    if isinstance(model, ContinuumModel):
        return simulate_telegrapher(model, t, N, seed, threads, mu0)
    return simulate_lattice(model, t, N, seed, threads, mu0)


@dataclass(frozen=True)
class DiffusionEstimate:
    sigma2: np.ndarray  # per-coordinate Var(X_t)/t
    stderr: np.ndarray
    velocity: np.ndarray  # per-coordinate mean(X_t)/t
    velocity_stderr: np.ndarray
    n: int
    n_batches: int
    reliable: bool

    def covers(self, target, k: float = 4.0) -> bool:
        return bool(np.all(np.abs(self.sigma2 - np.asarray(target)) <= k * self.stderr))

    def velocity_covers(self, target, k: float = 4.0) -> bool:
        return bool(np.all(np.abs(self.velocity - np.asarray(target)) <= k * self.velocity_stderr))


def _diffusion_from_stats(st: ReplicaStats, t: float) -> DiffusionEstimate:
    B = st.ids.size
    bv = st.batch_variances() / t
    bm = st.means / t
    err = bv.std(axis=0, ddof=1) / np.sqrt(B) if B > 1 else np.full(bv.shape[1], np.nan)
    verr = bm.std(axis=0, ddof=1) / np.sqrt(B) if B > 1 else np.full(bm.shape[1], np.nan)
    return DiffusionEstimate(st.variance() / t, err, st.mean() / t, verr, st.n, B, st.n >= 100)


def estimate_diffusion(model, t: float, N: int, seed: int = 0, threads: int = 1) -> DiffusionEstimate:
    """Var(X_t)/t and mean(X_t)/t with batch-means standard errors over ~sqrt(N) batches.

    ``reliable`` is False when N < 100 (too few batches for a usable error bar).
    """
    if t <= 0:
        raise ValueError("t must be positive")
    ends = _simulate(model, t, N, seed, threads)
    return _diffusion_from_stats(replica_stats(ends.x[0]), t)


@dataclass(frozen=True)
class ScgfPoint:
    alpha: np.ndarray
    F_hat: float  # at horizon t
    stderr: float
    F_hat_2t: float
    stderr_2t: float
    bias_bound: float  # 2 |F_hat(t) - F_hat(2t)|: if F_t - F ~ c/t then F_t - F ~ 2 (F_t - F_2t)
    ess: float  # effective sample size at horizon 2t (the smaller of the two)
    reliable: bool

    def covers(self, value: float, k: float = 3.0) -> bool:
        return abs(self.F_hat - value) <= k * self.stderr + self.bias_bound


def estimate_scgf(model, alphas: Sequence, t: float, N: int, seed: int = 0, threads: int = 1,
                  min_ess: float = 1000.0) -> list[ScgfPoint]:
    """(1/t) log mean exp(<alpha, X_t>) at horizons t and 2t from one set of paths.

    Errors are delete-one-batch jackknife values in the log domain. Points
    whose weights have an effective sample size below ``min_ess`` are
    returned with ``reliable=False``.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    A = np.asarray(alphas, dtype=float).reshape(-1, model.d)
    ends = _simulate(model, [t, 2 * t], N, seed, threads)
    ids = batch_layout(N)
    res = []
    for horizon, x in zip((t, 2 * t), ends.x):
        st = ReplicaStats.from_samples(x, A, ids)
        est = st.log_mean_exp() / horizon
        loo = st.log_mean_exp_loo() / horizon
        B = loo.shape[0]
        err = np.sqrt((B - 1) / B * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0)) if B > 1 else np.full(len(A), np.nan)
        res.append((est, err, st.effective_sample_size()))
    (f1, e1, ess1), (f2, e2, ess2) = res
    out = []
    for i, a in enumerate(A):
        ess = float(min(ess1[i], ess2[i]))
        out.append(
            ScgfPoint(a, float(f1[i]), float(e1[i]), float(f2[i]), float(e2[i]),
                      float(2.0 * abs(f1[i] - f2[i])), ess, ess >= min_ess)
        )
    return out


@dataclass(frozen=True)
class CltResult:
    ks_statistic: float
    critical_value: float
    passed: bool


def clt_check(model, t: float, N: int, seed: int = 0, threads: int = 1, coordinate: int = 0,
              level: float = 0.01) -> CltResult:
    """Kolmogorov-Smirnov distance of (X_t - v t)/sqrt(sigma^2 t) from N(0, 1).

    Lattice positions are integers; a uniform jitter on (-1/2, 1/2) turns the
    empirical law into a continuous one whose CDF interpolates the lattice
    CDF, so the KS distance measures the Gaussian shape, not the grid.
    Passes iff the statistic is below the exact finite-N critical value at
    ``level``.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    ends = _simulate(model, t, N, seed, threads)
    x = ends.x[0][:, coordinate].astype(float)
    velocity, D = cumulant_rates(model)
    sigma2, vel = float(D[coordinate, coordinate]), float(velocity[coordinate])
    if not isinstance(model, ContinuumModel):
        jitter = _rng(np.random.SeedSequence([seed, 1])).random(N) - 0.5
        x = x + jitter
    z = (x - vel * t) / np.sqrt(sigma2 * t)
    ks = float(sps.kstest(z, "norm").statistic)
    crit = float(sps.kstwo.ppf(1.0 - level, N))
    return CltResult(ks, crit, ks < crit)
