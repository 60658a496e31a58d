"""Tilted generator, Perron eigenvalue and occupation-time variational formula.

Conventions
-----------
* ``A`` is the unit-rate flip generator, A(v, v') = pi(v, v') off the diagonal.
  The flip rate gamma multiplies it everywhere, so the Donsker-Varadhan rate
  I_A is that of the unit-rate chain and enters the variational formula as
  gamma * I_A(mu).
* The tilted matrix acts on columns indexed by velocity (forward equation):
  M(alpha) = gamma A^T + diag(psi_alpha). Its Perron root equals that of the
  backward form gamma A + diag(psi_alpha).
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.special import logsumexp

from .model import (
    ContinuumModel,
    LatticeModel,
    ModelError,
    NumericalError,
    OccupationMeasure,
    VelocityChain,
    kernel_cumulant,
    stationary_measure,
)
from .free_energy import free_energy_continuum_derivatives
from .stats import jackknife, jackknife_mean, log_mean_exp_loo
from .transforms import fit_order

__all__ = [
    "TiltedMatrix",
    "VariationalResult",
    "FeynmanKacEstimate",
    "SlowFastLimit",
    "tilt_potential",
    "tilt_gradient",
    "free_energy_spectral",
    "free_energy_gradient",
    "tilted_matrix",
    "principal_eigenvalue",
    "donsker_varadhan_rate",
    "variational_objective",
    "variational_free_energy",
    "feynman_kac_estimate",
    "slow_fast_limit",
    "asymptotic_velocity",
    "diffusion_matrix",
    "cumulant_rates",
]


@dataclass(frozen=True, eq=False)
class TiltedMatrix:
    alpha: np.ndarray
    matrix: np.ndarray
    psi: np.ndarray
    symmetric: bool


def _alpha(model: LatticeModel, alpha) -> np.ndarray:
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    if a.shape != (model.d,):
        raise ModelError(f"alpha must have shape ({model.d},), got {a.shape}")
    return a


def tilt_potential(model: LatticeModel | ContinuumModel, alpha) -> np.ndarray:
    """psi_alpha(v) = kappa Gamma(alpha) + lam (exp<alpha, v> - 1).

    For the telegrapher process the same role is played by
    kappa a^2 + 2 kappa E a + lam a v.
    """
    a = _alpha(model, alpha)
    if isinstance(model, ContinuumModel):
        base = model.kappa * a[0] ** 2 + 2 * model.kappa * model.E * a[0]
        return base + model.lam * a[0] * np.array([1.0, -1.0])
    passive = model.passive_rate * kernel_cumulant(model.kernel, a)
    return passive + model.lam * np.expm1(model.velocities.velocities @ a)


def tilt_gradient(model: LatticeModel | ContinuumModel, alpha) -> np.ndarray:
    """d psi_alpha(v) / d alpha, shape (|V|, d)."""
    a = _alpha(model, alpha)
    if isinstance(model, ContinuumModel):
        base = 2 * model.kappa * a[0] + 2 * model.kappa * model.E
        return (base + model.lam * np.array([1.0, -1.0]))[:, None]
    z = model.kernel.steps.astype(float)
    passive = model.passive_rate * (model.kernel.probs * np.sinh(z @ a)) @ z
    V = model.velocities.velocities.astype(float)
    return passive[None, :] + model.lam * np.exp(V @ a)[:, None] * V


def tilted_matrix(model: LatticeModel, alpha) -> TiltedMatrix:
    a = _alpha(model, alpha)
    psi = tilt_potential(model, a)
    M = model.gamma * model.velocities.generator.T + np.diag(psi)
    return TiltedMatrix(a, M, psi, model.velocities.symmetric)


def _perron_power(M: np.ndarray, tol: float, max_iter: int):
    """Power iteration on M + cI with Collatz-Wielandt stopping.

    Every 16 sweeps the iteration matrix is squared, which keeps the cost
    bounded when the spectral gap is small relative to the shift.
    """
    n = M.shape[0]
    # strictly more than needed for nonnegativity: a zero diagonal would allow
    # a periodic (bipartite) B whose top two eigenvalues tie in modulus
    c = 1.25 * float(np.max(np.abs(np.diag(M)))) + 1e-12
    B = M + c * np.eye(n)
    P = B / max(np.max(B), 1e-300)
    x = np.full(n, 1.0 / n)
    width = np.inf
    # ratios (Bx)_i / x_i cannot be resolved better than a few ulps of |B|
    floor = 64 * np.finfo(float).eps * np.abs(B).sum(axis=1).max()
    for k in range(max_iter):
        x = P @ x
        x /= x.sum()
        y = B @ x
        ratios = y / x
        lo, hi = ratios.min(), ratios.max()
        width = hi - lo
        if width <= max(tol * max(1.0, abs(hi)), floor):
            return 0.5 * (lo + hi) - c, x, k + 1
        if k % 16 == 15:
            P = P @ P
            P /= np.max(P)
    raise NumericalError(
        f"power iteration did not converge in {max_iter} sweeps (bracket width {width:.3e})"
    )


def principal_eigenvalue(M: TiltedMatrix | np.ndarray, method: str = "auto", tol: float = 1e-14,
                         max_iter: int = 10_000):
    """Perron root and positive eigenvector (unit sum) of a tilted matrix."""
    if isinstance(M, TiltedMatrix):
        mat, symmetric = M.matrix, M.symmetric
    else:
        mat = np.asarray(M, dtype=float)
        symmetric = bool(np.array_equal(mat, mat.T))
    if method == "auto":
        method = "symmetric" if symmetric else "power"
    if method == "symmetric":
        w, V = np.linalg.eigh(mat)
        vec = np.abs(V[:, -1])
        return float(w[-1]), vec / vec.sum()
    if method == "power":
        value, vec, _ = _perron_power(mat, tol, max_iter)
        return float(value), vec
    raise ValueError(f"unknown method {method!r}")


def free_energy_spectral(model, alpha) -> float:
    """F(alpha) as the Perron root of the tilted matrix."""
    return principal_eigenvalue(tilted_matrix(model, alpha))[0]


def free_energy_gradient(model, alpha) -> np.ndarray:
    """grad F(alpha) = <l, diag(d psi) r> / <l, r> with l, r the left/right Perron vectors."""
    tm = tilted_matrix(model, alpha)
    _, r = principal_eigenvalue(tm)
    if tm.symmetric:
        l = r
    else:
        _, l = principal_eigenvalue(tm.matrix.T)
    w = l * r
    return w @ tilt_gradient(model, tm.alpha) / w.sum()


# --- Donsker-Varadhan rate ----------------------------------------------------------


def _dirichlet_form(chain: VelocityChain, mu: np.ndarray) -> float:
    r = np.sqrt(mu)
    return float(-r @ chain.generator @ r)


def _dv_component(W: np.ndarray, u0: np.ndarray, tol: float, max_iter: int = 200):
    """min over u of sum_{v,v'} W(v,v') (exp(u(v') - u(v)) - 1), gauge sum(u) = 0.

    W must be the weight matrix mu(v) pi(v, v') of a strongly connected graph.
    Returns (minimum, minimizer).
    """
    n = W.shape[0]
    u = u0 - u0.mean()

    def parts(u):
        E = W * np.exp(u[None, :] - u[:, None])
        val = E.sum() - W.sum()
        grad = E.sum(axis=0) - E.sum(axis=1)
        return val, grad, E

    val, grad, E = parts(u)
    ones = np.ones(n) / np.sqrt(n)
    tol = tol * max(1.0, W.sum())
    polished = False
    for _ in range(max_iter):
        if np.max(np.abs(grad)) <= tol:
            if polished:
                return val, u
            # one extra Newton step: small mu entries make H ill-conditioned, and
            # callers differentiate through u
            polished = True
        S = E + E.T
        H = np.diag(S.sum(axis=1)) - S
        step = np.linalg.solve(H + np.outer(ones, ones), -grad)
        step -= step.mean()
        t = 1.0
        slope = grad @ step
        if -slope <= 1e-12 * max(1.0, abs(val)):
            # predicted decrease is below roundoff in val; trust the local quadratic model
            u = u + step
            val, grad, E = parts(u)
            continue
        while t >= 1e-10:
            new_val, new_grad, new_E = parts(u + t * step)
            if new_val <= val + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break  # roundoff floor: no decrease available along the Newton direction
        u, val, grad, E = u + t * step, new_val, new_grad, new_E
    if np.max(np.abs(grad)) <= 10 * tol:
        return val, u
    raise NumericalError(f"Donsker-Varadhan minimization stalled, |grad| = {np.max(np.abs(grad)):.3e}")


def _dv_convex(chain: VelocityChain, mu: np.ndarray, tol: float, u0=None):
    """-inf_u sum_v mu(v) sum_v' pi(v,v') (e^{u(v')-u(v)} - 1) and the log-eigenfunction u.

    States outside supp(mu) and edges between strongly connected pieces of the
    support graph are sent to u = -inf; their terms contribute exactly -weight.
    """
    pi = chain.rates
    n = chain.size
    W = mu[:, None] * pi
    support = mu > 0
    u = np.full(n, -np.inf)
    if u0 is None:
        u0 = np.zeros(n)
    inner = W[np.ix_(support, support)]
    idx = np.flatnonzero(support)
    n_comp, labels = connected_components(inner > 0, directed=True, connection="strong")
    total = 0.0
    within = 0.0
    for k in range(n_comp):
        members = idx[labels == k]
        Wc = W[np.ix_(members, members)]
        within += Wc.sum()
        if members.size > 1:
            val, uc = _dv_component(Wc, u0[members], tol)
            total += val
            u[members] = uc
        else:
            u[members] = 0.0
    # every other edge leaving supp(mu) or crossing components is killed
    total -= W.sum() - within
    return -total, u


def donsker_varadhan_rate(chain: VelocityChain, mu, method: str = "auto", tol: float = 1e-10) -> float:
    """I_A(mu) for the unit-rate flip generator A."""
    mu = np.asarray(OccupationMeasure(mu), dtype=float)
    if mu.shape != (chain.size,):
        raise ModelError("measure and chain sizes differ")
    if method == "auto":
        method = "dirichlet" if chain.symmetric else "convex"
    if method == "dirichlet":
        if not chain.symmetric:
            raise ModelError("the Dirichlet form applies to symmetric flip rates only")
        return _dirichlet_form(chain, mu)
    if method == "convex":
        return _dv_convex(chain, mu, tol)[0]
    raise ValueError(f"unknown method {method!r}")


# --- variational formula ------------------------------------------------------------


@dataclass(frozen=True)
class VariationalResult:
    value: float
    mu: np.ndarray
    gap: float  # certified upper bound minus value (nan for the eigenvector route)
    iterations: int
    method: str


def variational_objective(model: LatticeModel, alpha, mu) -> float:
    """sum_v psi_alpha(v) mu(v) - gamma I_A(mu)."""
    psi = tilt_potential(model, alpha)
    mu = np.asarray(mu, dtype=float)
    return float(psi @ mu - model.gamma * donsker_varadhan_rate(model.velocities, mu))


def _newton_direction(chain: VelocityChain, gamma: float, mu, u, g):
    """Newton step s on log(mu) for the concave value mu -> min_u L(mu, u).

    L is linear in mu, so the Hessian is -J H^+ J^T with J = dg/du and
    H = d^2 L/du^2 (envelope theorem). Returns None if the system is singular.
    """
    n = chain.size
    P = chain.rates * np.exp(u[None, :] - u[:, None])
    r = P.sum(axis=1)
    J = gamma * (P - np.diag(r))
    E = mu[:, None] * P
    S = E + E.T
    H = gamma * (np.diag(S.sum(axis=1)) - S) + np.full((n, n), 1.0 / n)
    try:
        Q = -J @ np.linalg.solve(H, J.T)
        Qs = mu[:, None] * Q * mu[None, :]
        K = np.block([[Qs, mu[:, None]], [mu[None, :], np.zeros((1, 1))]])
        sol = np.linalg.solve(K, np.concatenate([-mu * g, [0.0]]))
    except np.linalg.LinAlgError:
        return None
    s = sol[:n]
    return s if np.all(np.isfinite(s)) else None


def _mirror_ascent(model: LatticeModel, psi: np.ndarray, tol: float, max_iter: int):
    """Multiplicative-weights ascent of psi.mu - gamma I_A(mu) over the simplex.

    The gradient is g = psi + gamma (Af/f) at the optimal f = e^u, and
    max(g) bounds the Perron root from above (Collatz-Wielandt), so the
    iteration stops on the certified gap max(g) - value. Far from the optimum
    plain exponentiated-gradient steps are taken; the multiplicative update is
    preconditioned by the Newton system whenever that increases the value,
    which makes the final approach quadratic instead of linear.
    """
    chain = model.velocities
    n = chain.size
    pi = chain.rates
    g_rate = model.gamma

    def evaluate(mu, u0):
        rate, u = _dv_convex(chain, mu, 1e-12, u0)
        ratio = (pi * np.exp(u[None, :] - u[:, None])).sum(axis=1) - chain.exit_rates
        g = psi + g_rate * ratio
        return psi @ mu - g_rate * rate, g, u

    def step(mu, s):
        logits = np.log(mu) + s
        out = np.exp(logits - logsumexp(logits))
        out = np.maximum(out, 1e-300)
        return out / out.sum()

    mu = np.asarray(stationary_measure(chain), dtype=float).copy()
    val, g, u = evaluate(mu, np.zeros(n))
    eta = 1.0 / (np.ptp(g) + g_rate * chain.exit_rates.max() + 1e-12)
    best_upper = g.max()
    for k in range(max_iter):
        best_upper = min(best_upper, g.max())
        # value = sum_v mu(v) g(v), so the gap carries no cancellation
        gap = best_upper - val
        if gap <= tol * max(1.0, abs(best_upper)):
            return VariationalResult(float(val), mu, float(gap), k, "mirror")
        # roundoff level of val, which sums terms of size |psi| and gamma * exit rates
        slack = 1e-13 * max(1.0, np.max(np.abs(psi)), g_rate * chain.exit_rates.max())
        s = _newton_direction(chain, g_rate, mu, u, g)
        if s is not None:
            s *= min(1.0, 1.0 / max(np.max(np.abs(s)), 1e-300))
            trial = step(mu, s)
            t_val, t_g, t_u = evaluate(trial, u)
            if t_val >= val - slack and (t_val > val or t_g.max() < g.max()):
                mu, val, g, u = trial, t_val, t_g, t_u
                continue
        while True:
            trial = step(mu, eta * (g - g.max()))
            t_val, t_g, t_u = evaluate(trial, u)
            if t_val > val:
                break
            eta *= 0.5
            if eta < 1e-16:
                raise NumericalError(
                    f"mirror ascent stagnated with gap {gap:.3e} at value {val!r}"
                )
        mu, val, g, u = trial, t_val, t_g, t_u
        eta *= 1.5
    raise NumericalError(f"mirror ascent did not reach gap {tol:.1e} in {max_iter} steps")


def variational_free_energy(model: LatticeModel, alpha, method: str = "auto", tol: float = 1e-10,
                            max_iter: int = 20_000) -> VariationalResult:
    """sup over mu of sum_v psi_alpha(v) mu(v) - gamma I_A(mu), with its maximizer.

    For symmetric flip rates the maximizer is mu = e^2 where e is the unit
    Perron eigenvector (the objective is then a Rayleigh quotient in sqrt(mu)).
    """
    a = _alpha(model, alpha)
    if method == "auto":
        method = "eigenvector" if model.velocities.symmetric else "mirror"
    tm = tilted_matrix(model, a)
    if method == "eigenvector":
        if not model.velocities.symmetric:
            raise ModelError("the eigenvector construction needs symmetric flip rates")
        _, vec = principal_eigenvalue(tm, "symmetric")
        mu = vec**2 / np.sum(vec**2)
        value = tm.psi @ mu - model.gamma * _dirichlet_form(model.velocities, mu)
        return VariationalResult(float(value), mu, float("nan"), 0, "eigenvector")
    if method == "mirror":
        return _mirror_ascent(model, tm.psi, tol, max_iter)
    raise ValueError(f"unknown method {method!r}")


# --- Feynman-Kac Monte Carlo ----------------------------------------------------------


@dataclass(frozen=True)
class FeynmanKacEstimate:
    estimate: float
    stderr: float
    populations: np.ndarray  # per-population estimates
    resampled: bool


def _advance_chain(rng, v, duration, cum_rates, exit_rates, psi):
    """Run the rate-gamma flip chain for ``duration``; return (new v, int psi ds)."""
    n = v.size
    t = np.zeros(n)
    acc = np.zeros(n)
    active = np.arange(n)
    while active.size:
        va = v[active]
        rate = exit_rates[va]
        with np.errstate(divide="ignore"):
            hold = rng.exponential(1.0, active.size) / rate
        end = np.minimum(t[active] + hold, duration)
        acc[active] += psi[va] * (end - t[active])
        t[active] = end
        jumps = end < duration
        jumpers = active[jumps]
        if jumpers.size:
            u = rng.random(jumpers.size) * exit_rates[v[jumpers]]
            v[jumpers] = (cum_rates[v[jumpers]] <= u[:, None]).sum(axis=1)
        active = jumpers
    return v, acc


def _fk_population(model, psi, T, n, seed_seq, resample, interval, burn_in, mu0):
    rng = np.random.Generator(np.random.Philox(seed_seq))
    chain = model.velocities
    rates = model.gamma * chain.rates
    exit_rates = rates.sum(axis=1)
    cum = np.cumsum(rates, axis=1)
    v = rng.choice(chain.size, size=n, p=mu0)
    if not resample:
        v, acc = _advance_chain(rng, v, T, cum, exit_rates, psi)
        return acc
    n_steps = max(1, int(round(T / interval)))
    dt = T / n_steps
    first_kept = int(np.floor(burn_in * n_steps))
    log_growth = 0.0
    for k in range(n_steps):
        v, acc = _advance_chain(rng, v, dt, cum, exit_rates, psi)
        if k >= first_kept:
            log_growth += logsumexp(acc) - np.log(n)
        w = np.exp(acc - acc.max())
        w /= w.sum()
        # systematic resampling
        pos = (rng.random() + np.arange(n)) / n
        v = v[np.minimum(np.searchsorted(np.cumsum(w), pos), n - 1)]
    return log_growth / (dt * (n_steps - first_kept))


def feynman_kac_estimate(
    model: LatticeModel,
    alpha,
    T: float,
    N: int,
    seed: int = 0,
    resample: bool = True,
    n_populations: int = 20,
    interval: float | None = None,
    burn_in: float = 0.1,
    threads: int = 1,
    mu0=None,
) -> FeynmanKacEstimate:
    """Monte Carlo estimate of F(alpha) = lim (1/T) log E exp(int_0^T psi_alpha(v_s) ds).

    With ``resample=False`` this is (1/T) log of the plain empirical mean over N
    independent velocity paths, with a leave-one-out jackknife error. Its
    relative variance grows like exp(c T), so at large T the default splits the
    N paths into independent populations that are reweighted and resampled
    every ``interval`` time units (an interacting-particle Feynman-Kac
    approximation). The first ``burn_in`` fraction of each population's
    history is excluded from the growth rate; the error bar is the jackknife
    over populations.
    """
    if T <= 0 or N < 1:
        raise ValueError("need T > 0 and N >= 1")
    a = _alpha(model, alpha)
    psi = tilt_potential(model, a)
    chain = model.velocities
    mu0 = np.full(chain.size, 1.0 / chain.size) if mu0 is None else np.asarray(mu0, dtype=float)
    root = np.random.SeedSequence(seed)
    if not resample:
        n_populations = 1
    n_populations = max(1, min(n_populations, N))
    sizes = np.full(n_populations, N // n_populations)
    sizes[: N % n_populations] += 1
    children = root.spawn(n_populations)
    if interval is None:
        interval = 1.0 / (model.gamma * chain.exit_rates.mean())

    def job(i):
        return _fk_population(model, psi, T, int(sizes[i]), children[i], resample, interval,
                              burn_in, mu0)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        results = list(ex.map(job, range(n_populations)))
    if not resample:
        acc = results[0]
        total = logsumexp(acc)
        estimate = (total - np.log(N)) / T
        if N > 1:
            _, err = jackknife(log_mean_exp_loo(acc) / T)
        else:
            err = float("nan")
        return FeynmanKacEstimate(float(estimate), float(err), np.array([estimate]), False)
    pops = np.array(results)
    if pops.size > 1:
        _, err = jackknife_mean(pops)
    else:
        err = float("nan")
    return FeynmanKacEstimate(float(pops.mean()), float(err), pops, True)


# --- slow-fast limit --------------------------------------------------------------------


@dataclass(frozen=True)
class SlowFastLimit:
    gammas: np.ndarray
    values: np.ndarray
    limit: float
    deviations: np.ndarray
    order: float  # fitted in 1/gamma


def slow_fast_limit(model: LatticeModel, alpha, gammas) -> SlowFastLimit:
    """F_gamma(alpha) against kappa Gamma(alpha) + lam sum_v nu(v) (e^{<alpha,v>} - 1)."""
    a = _alpha(model, alpha)
    gammas = np.asarray(gammas, dtype=float)
    if np.any(np.diff(gammas) <= 0):
        raise ValueError("gammas must be increasing")
    nu = np.asarray(stationary_measure(model.velocities))
    limit = float(tilt_potential(model, a) @ nu)
    values = np.array(
        [principal_eigenvalue(tilted_matrix(replace(model, gamma=g), a))[0] for g in gammas]
    )
    devs = np.abs(values - limit)
    return SlowFastLimit(gammas, values, limit, devs, fit_order(1.0 / gammas, devs))


# --- first and second cumulant rates ------------------------------------------------------


def asymptotic_velocity(model: LatticeModel) -> np.ndarray:
    """lim X_t / t = lam * sum_v nu(v) v (the passive kernel is symmetric)."""
    nu = np.asarray(stationary_measure(model.velocities))
    return model.lam * nu @ model.velocities.velocities.astype(float)


def diffusion_matrix(model: LatticeModel) -> np.ndarray:
    """lim Cov(X_t) / t, the Hessian of F at 0.

    Sum of the jump covariances (passive kernel and transport steps) and the
    long-time covariance of the integrated velocity, obtained from the
    Poisson equation gamma A h = -(v - m) of the flip chain.
    """
    chain = model.velocities
    nu = np.asarray(stationary_measure(chain))
    V = chain.velocities.astype(float)
    m = nu @ V
    f = V - m
    # A is singular on constants; pin the solution by requiring nu.h = 0
    system = np.vstack([model.gamma * chain.generator, nu[None, :]])
    rhs = np.vstack([-f, np.zeros((1, f.shape[1]))])
    h, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    if np.max(np.abs(model.gamma * chain.generator @ h + f)) > 1e-10 * max(1.0, np.abs(f).max()):
        raise NumericalError("Poisson equation for the velocity chain did not solve")
    green = (nu[:, None] * f).T @ h
    D = (
        model.passive_rate * model.kernel.second_moment()
        + model.lam * (nu[:, None] * V).T @ V
        + model.lam**2 * (green + green.T)
    )
    return D


def cumulant_rates(model: LatticeModel | ContinuumModel) -> tuple[np.ndarray, np.ndarray]:
    """(lim E X_t / t, lim Cov(X_t) / t) for either model class."""
    if isinstance(model, ContinuumModel):
        d1, d2 = free_energy_continuum_derivatives(model, 0.0)
        return np.array([float(d1)]), np.array([[float(d2)]])
    return asymptotic_velocity(model), diffusion_matrix(model)
