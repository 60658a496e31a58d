"""Cross-verification matrix: every analytic quantity against an independent oracle.

Each ``criterion_*`` function runs one check at the tolerances of a
:class:`~runtumble.config.Tolerances` and returns a :class:`CriterionResult`
with the measured discrepancies. ``run_all`` collects them for the CLI report.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .config import Tolerances, VerifySettings
from .free_energy import (
    continuum_limit_check,
    free_energy_continuum_drift,
    free_energy_lattice,
    free_energy_lattice_derivatives,
    legendre_transform,
    matrix_exponential_closed,
    second_derivative_fd,
)
from .model import (
    ContinuumModel,
    JumpKernel,
    LatticeModel,
    VelocityChain,
    build_1d_two_state,
    nearest_neighbor_kernel,
    stationary_measure,
)
from .simulate import clt_check, estimate_diffusion
from .spectral import (
    donsker_varadhan_rate,
    feynman_kac_estimate,
    free_energy_gradient,
    free_energy_spectral,
    slow_fast_limit,
    variational_free_energy,
)
from .transforms import diffusion_constant, transport_matrix, transport_matrix_continued

__all__ = [
    "CriterionResult",
    "random_model",
    "four_velocity_model",
    "closed_free_energy",
    "model_records",
    "CRITERIA",
    "run_all",
]


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] criterion {self.number:2d} {self.name} ({self.seconds:.2f} s)"


def _timed(number: int, name: str, body: Callable[[], tuple[bool, dict]]) -> CriterionResult:
    t0 = time.perf_counter()
    passed, details = body()
    return CriterionResult(number, name, bool(passed), details, time.perf_counter() - t0)


def random_model(rng: np.random.Generator, symmetric: bool) -> LatticeModel:
    """Random irreducible model with d <= 3 and |V| <= 8 (velocities in {-2..2}^d)."""
    d = int(rng.integers(1, 4))
    n = int(min(rng.integers(2, 9), 5**d - 1))
    vel = set()
    while len(vel) < n:
        v = tuple(int(c) for c in rng.integers(-2, 3, d))
        if any(v):
            vel.add(v)
    V = np.array(sorted(vel))
    R = rng.uniform(0.0, 2.0, (n, n)) * (rng.random((n, n)) < 0.6)
    for i in range(n):  # a directed ring keeps the chain irreducible
        R[i, (i + 1) % n] = max(R[i, (i + 1) % n], 0.3)
    np.fill_diagonal(R, 0.0)
    if symmetric:
        R = R + R.T
    lam, kappa, gamma = rng.uniform(0.1, 5.0, 3)
    return LatticeModel(lam, kappa, gamma, nearest_neighbor_kernel(d), VelocityChain(V, R))


def four_velocity_model(lam: float = 1.0, kappa: float = 0.5, gamma: float = 1.0) -> LatticeModel:
    """Velocities +-e1, +-e2 on Z^2 with uniform unit flips."""
    V = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])
    return LatticeModel(lam, kappa, gamma, nearest_neighbor_kernel(2), VelocityChain.uniform(V))


# --- 1: closed form vs Perron root ----------------------------------------------------------


def criterion_closed_vs_spectral(tol: Tolerances, cfg: VerifySettings) -> CriterionResult:
    def body():
        rng = np.random.default_rng([cfg.seed, 1])
        alphas = np.linspace(-3, 3, 41)
        worst = 0.0
        for _ in range(cfg.random_triples):
            lam, kappa, gamma = 5.0 * (1.0 - rng.random(3))  # uniform on (0, 5]
            m = build_1d_two_state(lam, kappa, gamma)
            closed = free_energy_lattice(m, alphas)
            for a, fc in zip(alphas, closed):
                M = transport_matrix_continued(m, -1j * a)
                imag = np.max(np.abs(M.imag))
                worst = max(worst, abs(fc - np.linalg.eigvalsh(M.real)[-1]), imag)
        return worst <= tol.closed_spectral, {"max_abs_diff": worst, "tolerance": tol.closed_spectral}

    return _timed(1, "closed-form F vs largest eigenvalue of M(-i alpha)", body)


# --- 2: spectral vs variational -------------------------------------------------------------


def criterion_spectral_vs_variational(tol: Tolerances, cfg: VerifySettings) -> CriterionResult:
    def body():
        rng = np.random.default_rng([cfg.seed, 2])
        models = [build_1d_two_state(2.0, 1.0, 4.0)]
        models += [random_model(rng, symmetric=(k % 2 == 0)) for k in range(cfg.random_models)]
        grid = np.linspace(-1.0, 1.0, 9)
        worst, worst_gap, evaluations = 0.0, 0.0, 0
        for m in models:
            for i in range(m.d):
                for x in grid:
                    a = np.zeros(m.d)
                    a[i] = x
                    spectral = free_energy_spectral(m, a)
                    res = variational_free_energy(m, a, method="mirror")
                    worst = max(worst, abs(spectral - res.value))
                    worst_gap = max(worst_gap, res.gap)
                    if m.velocities.symmetric:
                        ev = variational_free_energy(m, a, method="eigenvector").value
                        worst = max(worst, abs(spectral - ev))
                    evaluations += 1
        return worst <= tol.spectral_variational, {
            "max_abs_diff": worst,
            "max_certified_gap": worst_gap,
            "models": len(models),
            "non_symmetric_models": sum(not m.velocities.symmetric for m in models),
            "evaluations": evaluations,
            "tolerance": tol.spectral_variational,
        }

    return _timed(2, "Perron root = variational formula", body)


# --- 3: diffusion constants -----------------------------------------------------------------


def criterion_diffusion(tol: Tolerances, cfg: VerifySettings) -> CriterionResult:
    def body():
        rel = {}
        for lam, kappa, gamma in [(2.0, 1.0, 4.0), (1.0, 0.0, 1.0), (0.5, 3.0, 0.2)]:
            m = build_1d_two_state(lam, kappa, gamma)
            fd = second_derivative_fd(lambda a: free_energy_lattice(m, a))
            rel[f"lattice({lam},{kappa},{gamma})"] = abs(fd / (2 * kappa + lam + lam**2 / gamma) - 1)
        # general kernel: kappa * sum_z p(z) z^2 replaces 2 kappa
        kernel = JumpKernel(np.array([[1], [-1], [3], [-3]]), np.array([0.3, 0.3, 0.2, 0.2]))
        m = replace(build_1d_two_state(1.5, 0.7, 2.0), kernel=kernel, kernel_rate=1.0)
        fd = second_derivative_fd(lambda a: free_energy_lattice(m, a))
        expected = 0.7 * (0.6 * 1 + 0.4 * 9) + 1.5 + 1.5**2 / 2.0
        rel["general_kernel"] = abs(fd / expected - 1)
        rel["general_kernel_closed"] = abs(diffusion_constant(m) / expected - 1)
        for E in (0.0, 0.5):
            c = ContinuumModel(2.0, 1.0, 4.0, E)
            fd = second_derivative_fd(lambda a: free_energy_continuum_drift(c, a))
            rel[f"continuum(E={E})"] = abs(fd / (2 + 4 / 4) - 1)
        exact = {
            "lattice_sigma2": diffusion_constant(build_1d_two_state(2.0, 1.0, 4.0)),
            "continuum_sigma2": diffusion_constant(ContinuumModel(2.0, 1.0, 4.0)),
        }
        ok = max(rel.values()) <= tol.diffusion_rel and exact == {
            "lattice_sigma2": 5.0,
            "continuum_sigma2": 3.0,
        }
        return ok, {"relative_errors": rel, **exact, "tolerance": tol.diffusion_rel}

    return _timed(3, "diffusion constants from F''(0)", body)


# --- 4: Monte Carlo vs analytic -------------------------------------------------------------


def criterion_monte_carlo(tol: Tolerances, cfg: VerifySettings, threads: int = 1) -> CriterionResult:
    def body():
        k = tol.mc_stderr
        lattice = estimate_diffusion(build_1d_two_state(2.0, 1.0, 4.0), cfg.mc_t, cfg.mc_n,
                                     seed=cfg.seed + 41, threads=threads)
        tele = estimate_diffusion(ContinuumModel(2.0, 1.0, 4.0), cfg.mc_t, cfg.mc_n,
                                  seed=cfg.seed + 42, threads=threads)
        drift = estimate_diffusion(ContinuumModel(2.0, 1.0, 4.0, 0.5), cfg.mc_t, cfg.mc_n,
                                   seed=cfg.seed + 43, threads=threads)
        checks = {
            "lattice_var_over_t": (float(lattice.sigma2[0]), float(lattice.stderr[0]), 5.0),
            "telegrapher_var_over_t": (float(tele.sigma2[0]), float(tele.stderr[0]), 3.0),
            "drift_mean_over_t": (float(drift.velocity[0]), float(drift.velocity_stderr[0]), 1.0),
        }
        ok = all(abs(est - target) <= k * se for est, se, target in checks.values())
        details = {
            name: {"estimate": est, "stderr": se, "target": target, "z": (est - target) / se}
            for name, (est, se, target) in checks.items()
        }
        return ok, {**details, "stderr_multiple": k}

    return _timed(4, "Monte Carlo variance and drift", body)


# --- 5: matrix exponential ------------------------------------------------------------------


def criterion_matrix_exponential(tol: Tolerances, cfg: VerifySettings) -> CriterionResult:
    def body():
        lam = 2.0
        # gamma = lam sin(0.5) puts q = 0.5 on the B = 0 branch point; q = pi/2 has complex B
        m = build_1d_two_state(lam, 1.0, lam * np.sin(0.5))
        worst, kinds = 0.0, set()
        for q in (0.0, 0.5, np.pi / 2, 2.8):
            tm = transport_matrix(m, q)
            for t in (0.1, 1.3, 10.0):
                closed = matrix_exponential_closed(m, q, t)
                worst = max(worst, np.max(np.abs(closed.matrix - expm(t * tm.matrix))))
                B = closed.B
                kinds.add("complex_B" if abs(B.imag) > 0 else ("B_near_0" if abs(B) < 1e-6 else "real_B"))
        ok = worst <= tol.matrix_exponential and {"complex_B", "B_near_0"} <= kinds
        return ok, {"max_abs_diff": worst, "branches": sorted(kinds), "tolerance": tol.matrix_exponential}

    return _timed(5, "closed-form exp(tM(q)) vs scaling-and-squaring", body)


# --- 6: Donsker-Varadhan ----------------------------------------------------------------------


def criterion_donsker_varadhan(tol: Tolerances, cfg: VerifySettings) -> CriterionResult:
    def body():
        chain = VelocityChain(np.array([[1], [-1]]), np.array([[0.0, 1.0], [1.0, 0.0]]))
        d1 = abs(donsker_varadhan_rate(chain, [1.0, 0.0]) - 1.0)
        d2 = abs(donsker_varadhan_rate(chain, [0.75, 0.25]) - (1 - np.sqrt(3) / 2))
        rng = np.random.default_rng([cfg.seed, 6])
        worst_convex, worst_nu = 0.0, 0.0
        for k in range(20):
            m = random_model(rng, symmetric=True)
            mu = rng.dirichlet(np.ones(m.velocities.size))
            a = donsker_varadhan_rate(m.velocities, mu, "dirichlet")
            b = donsker_varadhan_rate(m.velocities, mu, "convex")
            worst_convex = max(worst_convex, abs(a - b))
            # the rate vanishes at the invariant law, also for non-reversible chains
            other = random_model(rng, symmetric=bool(k % 2))
            nu = np.asarray(stationary_measure(other.velocities))
            worst_nu = max(worst_nu, abs(donsker_varadhan_rate(other.velocities, nu)))
        ok = (
            max(d1, d2) <= tol.dirichlet
            and worst_convex <= tol.dv_convex
            and worst_nu <= tol.dv_stationary
        )
        return ok, {
            "dirichlet_mu_1_0": d1,
            "dirichlet_mu_3_1": d2,
            "max_convex_vs_dirichlet": worst_convex,
            "max_rate_at_invariant": worst_nu,
        }

    return _timed(6, "Donsker-Varadhan rate", body)


# --- 7: Feynman-Kac ---------------------------------------------------------------------------


def criterion_feynman_kac(tol: Tolerances, cfg: VerifySettings, threads: int = 1) -> CriterionResult:
    def body():
        m = build_1d_two_state(1.0, 0.0, 1.0)
        est = feynman_kac_estimate(m, [np.log(2.0)], cfg.fk_t, cfg.fk_n, seed=cfg.seed + 7,
                                   threads=threads)
        z = (est.estimate - 0.5) / est.stderr
        return abs(z) <= tol.fk_stderr, {
            "estimate": est.estimate,
            "stderr": est.stderr,
            "target": 0.5,
            "z": z,
            "stderr_multiple": tol.fk_stderr,
        }

    return _timed(7, "Feynman-Kac estimate of F(ln 2)", body)


# --- 8: limits and monotonicity -------------------------------------------------------------


def gamma_monotone(model, gammas, grid) -> bool:
    """True if F(alpha) is non-increasing in gamma along every coordinate axis of the grid."""
    for i in range(model.d):
        for x in grid:
            a = np.zeros(model.d)
            a[i] = x
            values = [free_energy_spectral(replace(model, gamma=g), a) for g in gammas]
            # equal values up to roundoff count as non-increasing
            if not np.all(np.diff(values) <= 1e-12 * max(1.0, abs(values[0]))):
                return False
    return True


def criterion_limits(tol: Tolerances, cfg: VerifySettings) -> CriterionResult:
    def body():
        gammas = np.asarray(cfg.gammas, dtype=float)
        grid = np.linspace(-1.0, 1.0, 9)
        models = {
            "two_state_1d": build_1d_two_state(2.0, 1.0, 4.0),
            "four_velocity_2d": four_velocity_model(),
            "cyclic_1d": _cyclic_model(),
        }
        monotone = all(gamma_monotone(m, gammas, grid) for m in models.values())
        # slow-fast order on the general model, every nonzero alpha of the grid
        m2 = models["four_velocity_2d"]
        orders = []
        for i in range(2):
            for x in grid[grid != 0]:
                a = np.zeros(2)
                a[i] = x
                orders.append(slow_fast_limit(m2, a, gammas).order)
        # reported, not gated: for V = {+1, -1} the local slope is gamma / sqrt(gamma^2 + s^2) < 1
        orders_1d = [slow_fast_limit(models["two_state_1d"], [x], gammas).order for x in (0.1, 0.5, 1.0)]
        cont = [
            continuum_limit_check(models["two_state_1d"], a, cfg.continuum_epsilon).order
            for a in (0.5, 1.0, 2.0)
        ]
        ok = monotone and min(orders) >= tol.min_order and min(cont) >= tol.min_order
        return ok, {
            "gamma_monotone": monotone,
            "slow_fast_min_order_2d": min(orders),
            "slow_fast_orders_1d_two_state": orders_1d,
            "continuum_limit_orders": cont,
            "min_order": tol.min_order,
        }

    return _timed(8, "gamma monotonicity, slow-fast and continuum limits", body)


def _cyclic_model() -> LatticeModel:
    V = np.array([[1], [0], [-1]])
    R = np.array([[0.0, 1.0, 0.2], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    return LatticeModel(1.5, 0.5, 2.0, nearest_neighbor_kernel(1), VelocityChain(V, R))


# --- 9: Legendre transform -------------------------------------------------------------------


def criterion_legendre(tol: Tolerances, cfg: VerifySettings) -> CriterionResult:
    def body():
        m = build_1d_two_state(2.0, 1.0, 4.0)

        def F(a):
            return free_energy_lattice(m, a)

        def dF(a):
            return free_energy_lattice_derivatives(m, a)[0]

        def d2F(a):
            return free_energy_lattice_derivatives(m, a)[1]

        xs = np.linspace(-6.0, 6.0, 49)
        I, astar = np.array([legendre_transform(F, x, dF, d2F) for x in xs]).T
        young = np.max(np.abs(I + np.array([F(a) for a in astar]) - astar * xs))
        stationarity = np.max(np.abs(np.array([dF(a) for a in astar]) - xs))
        # Fenchel inequality against a dense alpha grid: I(x) >= a x - F(a)
        probe = np.linspace(-4, 4, 401)
        Fp = np.array([F(a) for a in probe])
        fenchel = np.max(np.outer(xs, probe) - Fp[None, :] - I[:, None])
        second = I[2:] - 2 * I[1:-1] + I[:-2]
        convex = bool(np.all(second >= -1e-12))
        at_mean = abs(legendre_transform(F, dF(0.0), dF, d2F)[0])
        quad, _ = legendre_transform(lambda a: 2.5 * a * a, 1.0, lambda a: 5.0 * a, lambda a: 5.0)
        quad_err = abs(quad - 0.1)
        ok = (
            young <= tol.young
            and stationarity <= tol.young
            and fenchel <= tol.young
            and convex
            and at_mean <= tol.rate_at_mean
            and quad_err <= tol.young
        )
        return ok, {
            "young_residual": young,
            "stationarity_residual": stationarity,
            "fenchel_violation": max(fenchel, 0.0),
            "convex": convex,
            "rate_at_mean": at_mean,
            "quadratic_I_at_1_error": quad_err,
        }

    return _timed(9, "Legendre transform and rate function", body)


# --- 10: central limit theorem ----------------------------------------------------------------


def criterion_clt(tol: Tolerances, cfg: VerifySettings, threads: int = 1) -> CriterionResult:
    def body():
        m = build_1d_two_state(2.0, 1.0, 4.0)
        long = clt_check(m, cfg.clt_t, cfg.clt_n, seed=cfg.seed + 10, threads=threads, level=tol.ks_level)
        short = clt_check(m, 0.1, cfg.clt_n, seed=cfg.seed + 11, threads=threads, level=tol.ks_level)
        ok = long.passed and not short.passed
        return ok, {
            "ks_long": long.ks_statistic,
            "ks_short": short.ks_statistic,
            "critical_value": long.critical_value,
            "t_long": cfg.clt_t,
            "t_short": 0.1,
        }

    return _timed(10, "CLT at long times, negative control at t = 0.1", body)


CRITERIA = {
    1: criterion_closed_vs_spectral,
    2: criterion_spectral_vs_variational,
    3: criterion_diffusion,
    4: criterion_monte_carlo,
    5: criterion_matrix_exponential,
    6: criterion_donsker_varadhan,
    7: criterion_feynman_kac,
    8: criterion_limits,
    9: criterion_legendre,
    10: criterion_clt,
}

_THREADED = {4, 7, 10}


def run_all(tol: Tolerances | None = None, cfg: VerifySettings | None = None, threads: int = 1,
            only=None) -> list[CriterionResult]:
    tol = Tolerances() if tol is None else tol
    cfg = VerifySettings() if cfg is None else cfg
    out = []
    for number, fn in CRITERIA.items():
        if only is not None and number not in only:
            continue
        if number in _THREADED:
            out.append(fn(tol, cfg, threads=threads))
        else:
            out.append(fn(tol, cfg))
    return out


# --- per-model records ------------------------------------------------------------------------


def closed_free_energy(model):
    """Closed-form F as a callable of a scalar alpha, or None when no closed form applies."""
    if isinstance(model, ContinuumModel):
        return lambda a: free_energy_continuum_drift(model, a)
    if model.is_two_state_1d():
        return lambda a: free_energy_lattice(model, a)
    return None


def model_records(model, alphas, fk_t: float, fk_n: int, seed: int = 0, threads: int = 1) -> list[dict]:
    """F(alpha) by every available method along the first coordinate direction."""
    closed = closed_free_energy(model)
    out = []
    for k, x in enumerate(alphas):
        a = np.zeros(model.d)
        a[0] = x
        spectral = free_energy_spectral(model, a)
        variational = variational_free_energy(model, a, method="mirror").value
        values = [spectral, variational]
        rec = {"alpha": a.tolist(), "F_spectral": spectral, "F_variational": variational}
        if closed is not None:
            rec["F_closed"] = float(closed(x))
            values.append(rec["F_closed"])
        fk = feynman_kac_estimate(model, a, fk_t, fk_n, seed=seed + k, threads=threads)
        rec["F_feynman_kac"], rec["stderr"] = fk.estimate, fk.stderr
        rec["max_discrepancy"] = float(np.ptp(values))
        out.append(rec)
    return out


@dataclass(frozen=True)
class FreeEnergyTable:
    """F on axis-aligned alpha points by every available method, with worst disagreements."""

    alphas: np.ndarray  # (n, d)
    closed: list  # float or None per row
    spectral: np.ndarray
    variational: np.ndarray
    max_discrepancy: dict


def free_energy_table(model, values) -> FreeEnergyTable:
    """Evaluate F at ``x e_i`` for each x in ``values`` and each axis i."""
    d = model.d
    closed_fn = closed_free_energy(model) if d == 1 else None
    alphas = np.concatenate([np.outer(np.asarray(values, dtype=float), e) for e in np.eye(d)]) + 0.0
    spectral = np.array([free_energy_spectral(model, a) for a in alphas])
    variational = np.array([variational_free_energy(model, a, method="mirror").value for a in alphas])
    worst = {"spectral_variational": float(np.max(np.abs(spectral - variational), initial=0.0))}
    closed = [None] * len(alphas)
    if closed_fn is not None:
        c = np.array([float(closed_fn(a[0])) for a in alphas])
        closed = c.tolist()
        worst["closed_spectral"] = float(np.max(np.abs(c - spectral), initial=0.0))
        worst["closed_variational"] = float(np.max(np.abs(c - variational), initial=0.0))
    return FreeEnergyTable(alphas, closed, spectral, variational, worst)


def axis_free_energy(model, axis: int = 0):
    """``(F, dF)`` restricted to the line ``x e_axis``, closed form when available."""
    e = np.eye(model.d)[axis]
    closed = closed_free_energy(model) if model.d == 1 else None
    F = closed if closed is not None else (lambda x: free_energy_spectral(model, x * e))
    return F, (lambda x: float(free_energy_gradient(model, x * e)[axis]))
