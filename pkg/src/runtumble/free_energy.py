"""Characteristic functions, free energies and rate functions for the 1D models.

The tilt alpha of the moment generating function enters through q = -i alpha,
so the same closed form serves E exp(i q X_t) and E exp(alpha X_t).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .model import ContinuumModel, LatticeModel, NumericalError, kernel_symbol
from .transforms import _flip_rate, fit_order

__all__ = [
    "MatrixExponential1D",
    "FreeEnergyCurve",
    "RateFunctionCurve",
    "matrix_exponential_closed",
    "moment_generating",
    "log_moment_generating",
    "passive_cumulant_1d",
    "free_energy_lattice",
    "free_energy_lattice_derivatives",
    "free_energy_continuum_drift",
    "free_energy_continuum_derivatives",
    "second_derivative_fd",
    "free_energy_curve",
    "legendre_transform",
    "rate_function_curve",
    "continuum_limit_check",
    "ContinuumLimit",
]


def _sinhc_t(B: complex, t: float) -> complex:
    """sinh(tB)/B, continuous through B = 0 (where it equals t)."""
    x = t * B
    if abs(x) < 1e-3:
        x2 = x * x
        return t * (1.0 + x2 / 6.0 + x2 * x2 / 120.0)
    return np.sinh(x) / B


@dataclass(frozen=True)
class MatrixExponential1D:
    """e^{t M(q)} = e^{tA} / (2 gamma B) * G(t, q), ordered v = +1, -1."""

    q: complex
    t: float
    A: complex
    B: complex
    gamma: float
    lam_sin: complex  # lam * sin(q)

    @property
    def G(self) -> np.ndarray:
        g, B, t = self.gamma, self.B, self.t
        sh = np.sinh(t * B)
        diag = 2 * g * B * np.cosh(t * B)
        off = 2j * g * self.lam_sin * sh
        return np.array([[diag + off, 2 * g * g * sh], [2 * g * g * sh, diag - off]])

    @property
    def matrix(self) -> np.ndarray:
        # G / (2 gamma B) with sinh(tB)/B taken in the limit form, so B = 0 is fine
        c = np.cosh(self.t * self.B)
        s = _sinhc_t(self.B, self.t)
        ils = 1j * self.lam_sin
        core = np.array([[c + ils * s, self.gamma * s], [self.gamma * s, c - ils * s]])
        return np.exp(self.t * self.A) * core


def matrix_exponential_closed(model: LatticeModel, q, t: float) -> MatrixExponential1D:
    """Closed-form exponential of M(q); q may be complex (q = -i alpha for tilts)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    gamma = _flip_rate(model)
    q = complex(q)
    lam_sin = model.lam * np.sin(q)
    A = model.passive_rate * kernel_symbol(model.kernel, q) + model.lam * (np.cos(q) - 1.0) - gamma
    B = np.sqrt(complex(gamma * gamma - lam_sin * lam_sin))
    return MatrixExponential1D(q, float(t), complex(A), complex(B), gamma, complex(lam_sin))


def passive_cumulant_1d(model: LatticeModel, alpha):
    """Lambda(alpha) = kappa * kernel_rate * sum_z p(z) (cosh(alpha z) - 1)."""
    z = model.kernel.steps[:, 0].astype(float)
    az = np.multiply.outer(np.asarray(alpha, dtype=float), z)
    return model.passive_rate * ((2.0 * np.sinh(0.5 * az) ** 2) @ model.kernel.probs)


def _initial(mu0) -> np.ndarray:
    if mu0 is None:
        return np.array([0.5, 0.5])
    mu0 = np.asarray(mu0, dtype=float)
    if mu0.shape != (2,) or np.any(mu0 < 0):
        raise ValueError("mu0 must be a nonnegative 2-vector ordered (+1, -1)")
    return mu0


def log_moment_generating(model: LatticeModel, alpha: float, t: float, mu0=None) -> float:
    """log E_mu0 exp(alpha X_t), evaluated without overflow for large t."""
    mu0 = _initial(mu0)
    gamma = _flip_rate(model)
    sh = model.lam * np.sinh(alpha)
    A = float(passive_cumulant_1d(model, alpha)) + model.lam * (np.cosh(alpha) - 1.0) - gamma
    B = np.hypot(gamma, sh)
    w = (gamma + sh) * mu0[0] + (gamma - sh) * mu0[1]
    decay = np.exp(-2.0 * t * B)
    inner = 0.5 * (1.0 + decay) * mu0.sum() + w * (-np.expm1(-2.0 * t * B)) / (2.0 * B)
    return float(t * (A + B) + np.log(inner))


def moment_generating(model: LatticeModel, alpha: float, t: float, mu0=None) -> float:
    """(1, 1) e^{t M(-i alpha)} mu0 from the closed-form exponential."""
    mu0 = _initial(mu0)
    me = matrix_exponential_closed(model, -1j * alpha, t)
    return float(np.sum(me.matrix @ mu0).real)


def _sqrt_part(gamma, s):
    """sqrt(gamma^2 + s^2) - gamma without cancellation."""
    return s * s / (np.hypot(gamma, s) + gamma)


def free_energy_lattice(model: LatticeModel, alpha):
    """Lambda(a) + lam (cosh a - 1) + sqrt(gamma^2 + lam^2 sinh^2 a) - gamma."""
    gamma = _flip_rate(model)
    alpha = np.asarray(alpha, dtype=float)
    out = (
        passive_cumulant_1d(model, alpha)
        + model.lam * 2.0 * np.sinh(0.5 * alpha) ** 2
        + _sqrt_part(gamma, model.lam * np.sinh(alpha))
    )
    return float(out) if out.ndim == 0 else out


def free_energy_lattice_derivatives(model: LatticeModel, alpha) -> tuple:
    """(F'(alpha), F''(alpha)) of the lattice free energy."""
    gamma = _flip_rate(model)
    a = np.asarray(alpha, dtype=float)
    z = model.kernel.steps[:, 0].astype(float)
    az = np.multiply.outer(a, z)
    r = model.passive_rate
    d1 = r * (np.sinh(az) * z) @ model.kernel.probs
    d2 = r * (np.cosh(az) * z * z) @ model.kernel.probs
    lam = model.lam
    sh, ch = np.sinh(a), np.cosh(a)
    root = np.hypot(gamma, lam * sh)
    d1 = d1 + lam * sh + lam * lam * sh * ch / root
    d2 = (
        d2
        + lam * ch
        + lam * lam * (ch * ch + sh * sh) / root
        - (lam * lam * sh * ch) ** 2 / root**3
    )
    return d1, d2


def free_energy_continuum_drift(model: ContinuumModel, alpha):
    """kappa a^2 + 2 a kappa E + sqrt(lam^2 a^2 + gamma^2) - gamma."""
    a = np.asarray(alpha, dtype=float)
    out = model.kappa * a * a + 2 * a * model.kappa * model.E + _sqrt_part(model.gamma, model.lam * a)
    return float(out) if out.ndim == 0 else out


def free_energy_continuum_derivatives(model: ContinuumModel, alpha) -> tuple:
    a = np.asarray(alpha, dtype=float)
    lam, g = model.lam, model.gamma
    root = np.hypot(g, lam * a)
    d1 = 2 * model.kappa * a + 2 * model.kappa * model.E + lam * lam * a / root
    d2 = 2 * model.kappa + lam * lam * g * g / root**3
    return d1, d2


def second_derivative_fd(F: Callable[[float], float], x: float = 0.0, h: float = 1e-4) -> float:
    return (F(x + h) - 2.0 * F(x) + F(x - h)) / (h * h)


@dataclass(frozen=True)
class FreeEnergyCurve:
    alphas: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray
    D: float  # F''(0) by central differences


def free_energy_curve(F, alphas, dF=None) -> FreeEnergyCurve:
    alphas = np.asarray(alphas, dtype=float)
    values = np.array([F(a) for a in alphas])
    if dF is None:
        h = 1e-6
        derivs = np.array([(F(a + h) - F(a - h)) / (2 * h) for a in alphas])
    else:
        derivs = np.array([dF(a) for a in alphas])
    return FreeEnergyCurve(alphas, values, derivs, second_derivative_fd(F))


def legendre_transform(
    F: Callable[[float], float],
    x: float,
    dF: Optional[Callable[[float], float]] = None,
    d2F: Optional[Callable[[float], float]] = None,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> tuple[float, float]:
    """I(x) = sup_a (a x - F(a)) for strictly convex differentiable F.

    Solves F'(a) = x by Newton steps kept inside a bracket, bisecting whenever
    a step would leave it. Returns (I(x), a*).
    """
    if dF is None:
        def dF(a, _h=1e-5):
            return (F(a + _h) - F(a - _h)) / (2 * _h)
    if d2F is None:
        def d2F(a, _h=1e-4):
            return (dF(a + _h) - dF(a - _h)) / (2 * _h)

    def g(a):
        return float(dF(a)) - x

    a = 0.0
    ga = g(a)
    if abs(ga) <= tol:
        return a * x - float(F(a)), a
    # bracket expansion by doubling
    step = 1.0 if ga < 0 else -1.0
    lo, hi = (a, a + step) if step > 0 else (a + step, a)
    for _ in range(200):
        if g(lo) <= 0 <= g(hi):
            break
        if step > 0:
            lo, hi = hi, hi + (hi - lo) * 2
        else:
            lo, hi = lo - (hi - lo) * 2, lo
    else:
        raise NumericalError(f"could not bracket F'(a) = {x}")
    a = 0.5 * (lo + hi)
    for _ in range(max_iter):
        ga = g(a)
        if abs(ga) <= tol:
            return a * x - float(F(a)), a
        if ga < 0:
            lo = a
        else:
            hi = a
        curv = float(d2F(a))
        trial = a - ga / curv if curv > 0 else np.nan
        a = trial if lo < trial < hi else 0.5 * (lo + hi)
        if hi - lo < 1e-15 * max(1.0, abs(a)):
            break
    ga = g(a)
    if abs(ga) <= tol:
        return a * x - float(F(a)), a
    raise NumericalError(f"Legendre solve for x = {x} stalled with residual {ga:.3e}")


@dataclass(frozen=True)
class RateFunctionCurve:
    xs: np.ndarray
    values: np.ndarray
    maximizers: np.ndarray


def rate_function_curve(F, xs, dF=None, d2F=None) -> RateFunctionCurve:
    res = [legendre_transform(F, x, dF, d2F) for x in xs]
    return RateFunctionCurve(
        np.asarray(xs, dtype=float), np.array([r[0] for r in res]), np.array([r[1] for r in res])
    )


@dataclass(frozen=True)
class ContinuumLimit:
    epsilons: np.ndarray
    rescaled: np.ndarray
    target: float
    deviations: np.ndarray
    order: float


def continuum_limit_check(model: LatticeModel, alpha: float, epsilons) -> ContinuumLimit:
    """eps^-2 F(eps alpha) under lam -> eps lam, gamma -> eps^2 gamma, against the TP value."""
    eps = np.asarray(epsilons, dtype=float)
    if np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ValueError("epsilons must be positive and strictly decreasing")
    gamma = _flip_rate(model)
    # passive part -> (rate * sum p z^2 / 2) alpha^2, i.e. the TP diffusivity kappa
    kappa_c = 0.5 * model.passive_rate * float(model.kernel.second_moment()[0, 0])
    target = free_energy_continuum_drift(ContinuumModel(model.lam, kappa_c, gamma), alpha)
    rescaled = np.array(
        [
            free_energy_lattice(replace(model, lam=e * model.lam, gamma=e * e * model.gamma), e * alpha)
            / (e * e)
            for e in eps
        ]
    )
    devs = np.abs(rescaled - target)
    return ContinuumLimit(eps, rescaled, float(target), devs, fit_order(eps, devs))
