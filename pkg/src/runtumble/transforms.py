"""Fourier-Laplace transforms of the particle position and diffusion constants.

Every closed-form transform is computed alongside the resolvent
(1, 1) (zI - M(q))^{-1} mu0; disagreement beyond tolerance raises.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    ContinuumModel,
    DomainError,
    LatticeModel,
    ModelError,
    NumericalError,
    kernel_symbol,
)

__all__ = [
    "TransportMatrix1D",
    "FourierLaplaceValue",
    "ScalingDiagnostic",
    "transport_matrix",
    "transport_matrix_continued",
    "continuum_matrix",
    "fourier_laplace_lattice",
    "fourier_laplace_continuum",
    "diffusion_constant",
    "scaling_diagnostic",
    "fit_order",
    "transform_grid",
]

CLOSED_FORM_TOL = 1e-12


@dataclass(frozen=True)
class TransportMatrix1D:
    """M(q) = [[a, b], [b, conj(a)]], rows/columns ordered v = +1, -1."""

    q: float
    a: complex
    b: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.b, np.conj(self.a)]], dtype=complex)


@dataclass(frozen=True)
class FourierLaplaceValue:
    q: float
    z: complex
    value: complex
    closed_form_residual: float


@dataclass(frozen=True)
class ScalingDiagnostic:
    epsilons: np.ndarray
    deviations: np.ndarray
    order: float
    limit: float

    @property
    def rows(self) -> list[tuple[float, float]]:
        return list(zip(self.epsilons.tolist(), self.deviations.tolist()))


def _flip_rate(model: LatticeModel) -> float:
    """Effective flip rate gamma * pi(+1, -1) of a 1D two-state model."""
    if not isinstance(model, LatticeModel) or not model.is_two_state_1d():
        raise ModelError("need a one-dimensional model with V = {+1, -1} and symmetric flips")
    return model.gamma * float(model.velocities.rates[0, 1])


def _passive_symbol(model: LatticeModel, q):
    return model.passive_rate * kernel_symbol(model.kernel, q)


def transport_matrix(model: LatticeModel, q: float) -> TransportMatrix1D:
    gamma = _flip_rate(model)
    a = (
        _passive_symbol(model, q)
        + model.lam * (np.cos(q) - 1.0)
        - gamma
        + 1j * model.lam * np.sin(q)
    )
    return TransportMatrix1D(float(q), complex(a), gamma)


def transport_matrix_continued(model: LatticeModel, q) -> np.ndarray:
    """M(q) for complex q, entrywise analytic (the conjugate in M is only valid for real q).

    At q = -i alpha it is the real symmetric tilted matrix whose top
    eigenvalue is F(alpha).
    """
    gamma = _flip_rate(model)
    q = complex(q)
    c = _passive_symbol(model, q) + model.lam * (np.cos(q) - 1.0) - gamma
    s = 1j * model.lam * np.sin(q)
    return np.array([[c + s, gamma], [gamma, c - s]], dtype=complex)


def continuum_matrix(model: ContinuumModel, q: float) -> np.ndarray:
    """Fourier-transformed forward generator of TP_E, ordered v = +1, -1."""
    drift = model.lam * q
    field = 2.0 * model.kappa * model.E * q
    diag = -model.kappa * q * q - model.gamma
    return np.array(
        [[diag + 1j * (drift + field), model.gamma], [model.gamma, diag + 1j * (field - drift)]]
    )


def _check_z(z) -> complex:
    z = complex(z)
    if not z.real > 0:
        raise DomainError(f"Laplace variable needs Re z > 0, got {z}")
    return z


def _resolvent_sum(M: np.ndarray, z: complex, mu0: np.ndarray) -> complex:
    zI_M = z * np.eye(2) - M
    if abs(np.linalg.det(zI_M)) == 0:
        raise NumericalError("zI - M(q) is singular")
    return complex(np.sum(np.linalg.solve(zI_M, mu0)))


def fourier_laplace_lattice(
    model: LatticeModel, q: float, z, alpha0: float = 0.5
) -> FourierLaplaceValue:
    """S(q, z) with initial velocity +1 (resp. -1) with probability alpha0 (1 - alpha0)."""
    z = _check_z(z)
    if not 0.0 <= alpha0 <= 1.0:
        raise DomainError("alpha0 must be a probability")
    tm = transport_matrix(model, q)
    gamma = tm.b
    p_plus = alpha0
    c = _passive_symbol(model, q).real + model.lam * (np.cos(q) - 1.0)
    s = model.lam * np.sin(q)
    num = 1j * s * (2 * p_plus - 1) + 2 * gamma + z - c
    den = (gamma + z - c) ** 2 - gamma**2 + s**2
    closed = complex(num / den)
    resolvent = _resolvent_sum(tm.matrix, z, np.array([p_plus, 1 - p_plus], dtype=complex))
    resid = abs(closed - resolvent)
    if resid > CLOSED_FORM_TOL * max(1.0, abs(resolvent)):
        raise NumericalError(
            f"closed-form S({q}, {z}) = {closed} disagrees with resolvent {resolvent}"
        )
    return FourierLaplaceValue(float(q), z, closed, resid)


def fourier_laplace_continuum(model: ContinuumModel, q: float, z) -> FourierLaplaceValue:
    z = _check_z(z)
    if model.E != 0:
        raise DomainError("the closed-form continuum transform is for E = 0")
    k = model.kappa * q * q
    g = model.gamma
    closed = complex((2 * g + z + k) / ((z + k + g) ** 2 + (model.lam * q) ** 2 - g * g))
    resolvent = _resolvent_sum(continuum_matrix(model, q), z, np.array([0.5, 0.5], dtype=complex))
    resid = abs(closed - resolvent)
    if resid > CLOSED_FORM_TOL * max(1.0, abs(resolvent)):
        raise NumericalError(
            f"closed-form continuum S({q}, {z}) = {closed} disagrees with resolvent {resolvent}"
        )
    return FourierLaplaceValue(float(q), z, closed, resid)


def diffusion_constant(model: LatticeModel | ContinuumModel) -> float:
    """Limiting Var(X_t)/t."""
    if isinstance(model, ContinuumModel):
        return 2 * model.kappa + model.lam**2 / model.gamma
    gamma = _flip_rate(model)
    passive = model.passive_rate * float(model.kernel.second_moment()[0, 0])
    return passive + model.lam + model.lam**2 / gamma


def fit_order(scales, deviations) -> float:
    """Least-squares slope of log(deviation) against log(scale)."""
    x = np.log(np.asarray(scales, dtype=float))
    y = np.asarray(deviations, dtype=float)
    if np.any(y <= 0):
        return float("inf") if np.all(y == 0) else float("nan")
    return float(np.polyfit(x, np.log(y), 1)[0])


def scaling_diagnostic(
    model: LatticeModel | ContinuumModel,
    q: float,
    z: float,
    epsilons=(0.1, 0.05, 0.025),
    alpha0: float = 0.5,
) -> ScalingDiagnostic:
    """Deviations |eps^2 S(eps q, eps^2 z) - 1/(z + sigma^2 q^2 / 2)| along eps."""
    if not z > 0 or q == 0:
        raise DomainError("scaling diagnostic needs z > 0 and q != 0")
    eps = np.asarray(epsilons, dtype=float)
    if np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise DomainError("epsilons must be positive and strictly decreasing")
    limit = 1.0 / (z + 0.5 * diffusion_constant(model) * q * q)
    devs = []
    for e in eps:
        if isinstance(model, ContinuumModel):
            s = fourier_laplace_continuum(model, e * q, e * e * z).value
        else:
            s = fourier_laplace_lattice(model, e * q, e * e * z, alpha0).value
        devs.append(abs(e * e * s - limit))
    devs = np.array(devs)
    return ScalingDiagnostic(eps, devs, fit_order(eps, devs), limit)


def transform_grid(model, qs, zs, alpha0: float = 0.5) -> list[dict]:
    """Rows for the fourier_laplace.csv artifact."""
    rows = []
    for q in qs:
        for z in zs:
            if isinstance(model, ContinuumModel):
                r = fourier_laplace_continuum(model, q, z)
            else:
                r = fourier_laplace_lattice(model, q, z, alpha0)
            rows.append(
                {
                    "q": r.q,
                    "z_re": r.z.real,
                    "z_im": r.z.imag,
                    "S_re": r.value.real,
                    "S_im": r.value.imag,
                    "closed_form_residual": r.closed_form_residual,
                }
            )
    return rows
