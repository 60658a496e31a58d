"""Model objects for run-and-tumble particles on Z^d and the telegrapher process.

A lattice particle at position x with velocity v (both in Z^d) evolves by

    rate lam                       x -> x + v
    rate kappa * kernel_rate * p(z)  x -> x + z      (passive random walk)
    rate gamma * pi(v, v')         v -> v'

The nearest-neighbour walk of the one-dimensional model, kappa*(f(x+1)+f(x-1)-2f(x)),
is stored as the probability kernel {+1: 1/2, -1: 1/2} with ``kernel_rate = 2``
so that the same code path serves the 1D formulas and the general Z^d model
(where p is a probability and ``kernel_rate = 1``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

__all__ = [
    "ModelError",
    "IrreducibilityError",
    "DomainError",
    "NumericalError",
    "JumpKernel",
    "VelocityChain",
    "LatticeModel",
    "ContinuumModel",
    "OccupationMeasure",
    "build_1d_two_state",
    "nearest_neighbor_kernel",
    "kernel_cumulant",
    "kernel_symbol",
    "stationary_measure",
]


class ModelError(ValueError):
    """Invalid model parameters."""


class IrreducibilityError(ModelError):
    """The velocity flip chain is not irreducible."""


class DomainError(ValueError):
    """Argument outside the domain of an analytic formula."""


class NumericalError(RuntimeError):
    """A numerical routine failed a self-check or did not converge."""


def _check_rate(name: str, value: float) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0:
        raise ModelError(f"{name} must be a finite nonnegative rate, got {value!r}")
    return value


@dataclass(frozen=True, eq=False)
class JumpKernel:
    """Finite symmetric probability distribution on Z^d \\ {0}."""

    steps: np.ndarray  # (K, d) int64
    probs: np.ndarray  # (K,)

    def __post_init__(self):
        steps = np.atleast_2d(np.asarray(self.steps, dtype=np.int64))
        probs = np.asarray(self.probs, dtype=float).ravel()
        if steps.shape[0] != probs.shape[0] or steps.shape[0] == 0:
            raise ModelError("kernel needs one probability per step and at least one step")
        if np.any(probs <= 0) or np.any(probs > 1):
            raise ModelError("kernel probabilities must lie in (0, 1]")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ModelError(f"kernel probabilities sum to {probs.sum()!r}, not 1")
        if np.any(np.all(steps == 0, axis=1)):
            raise ModelError("the zero vector is not an admissible jump")
        table = {tuple(z): p for z, p in zip(steps.tolist(), probs.tolist())}
        if len(table) != len(probs):
            raise ModelError("duplicate jump vectors in kernel")
        for z, p in table.items():
            if table.get(tuple(-c for c in z)) != p:
                raise ModelError(f"kernel not symmetric: p({z}) has no equal-weight mirror")
        steps.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_mapping(cls, table: Mapping[Sequence[int] | int, float]) -> "JumpKernel":
        steps = [np.atleast_1d(np.asarray(z, dtype=np.int64)) for z in table]
        return cls(np.array(steps), np.array(list(table.values()), dtype=float))

    @property
    def dimension(self) -> int:
        return self.steps.shape[1]

    def second_moment(self) -> np.ndarray:
        """Covariance matrix sum_z p(z) z z^T."""
        z = self.steps.astype(float)
        return (z * self.probs[:, None]).T @ z

    def as_dict(self) -> dict:
        return {tuple(z): p for z, p in zip(self.steps.tolist(), self.probs.tolist())}


def nearest_neighbor_kernel(d: int) -> JumpKernel:
    """Uniform kernel on the 2d unit vectors +-e_i."""
    eye = np.eye(d, dtype=np.int64)
    return JumpKernel(np.vstack([eye, -eye]), np.full(2 * d, 1.0 / (2 * d)))


@dataclass(frozen=True, eq=False)
class VelocityChain:
    """Finite velocity set with flip rates pi(v, v') (zero diagonal)."""

    velocities: np.ndarray  # (n, d) int64
    rates: np.ndarray  # (n, n)
    generator: np.ndarray = field(init=False)
    symmetric: bool = field(init=False)

    def __post_init__(self):
        vel = np.atleast_2d(np.asarray(self.velocities, dtype=np.int64))
        rates = np.asarray(self.rates, dtype=float)
        n = vel.shape[0]
        if rates.shape != (n, n):
            raise ModelError(f"flip rate matrix must be {n}x{n}, got {rates.shape}")
        if len({tuple(v) for v in vel.tolist()}) != n:
            raise ModelError("velocities must be distinct")
        if not np.all(np.isfinite(rates)) or np.any(rates < 0):
            raise ModelError("flip rates must be finite and nonnegative")
        if np.any(np.diag(rates) != 0):
            raise ModelError("self-transitions are not allowed (diagonal of pi must be 0)")
        n_comp, _ = connected_components(rates > 0, directed=True, connection="strong")
        if n_comp != 1:
            raise IrreducibilityError(
                f"flip chain has {n_comp} strongly connected components; it must be irreducible"
            )
        gen = rates - np.diag(rates.sum(axis=1))
        for arr in (vel, rates, gen):
            arr.setflags(write=False)
        object.__setattr__(self, "velocities", vel)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "generator", gen)
        object.__setattr__(self, "symmetric", bool(np.array_equal(rates, rates.T)))

    @classmethod
    def uniform(cls, velocities) -> "VelocityChain":
        """Every velocity flips to every other one at unit rate."""
        vel = np.atleast_2d(np.asarray(velocities, dtype=np.int64))
        n = vel.shape[0]
        return cls(vel, np.ones((n, n)) - np.eye(n))

    @property
    def size(self) -> int:
        return self.velocities.shape[0]

    @property
    def dimension(self) -> int:
        return self.velocities.shape[1]

    @property
    def exit_rates(self) -> np.ndarray:
        return self.rates.sum(axis=1)


@dataclass(frozen=True, eq=False)
class LatticeModel:
    lam: float
    kappa: float
    gamma: float
    kernel: JumpKernel
    velocities: VelocityChain
    kernel_rate: float = 1.0

    def __post_init__(self):
        for name in ("lam", "kappa", "gamma", "kernel_rate"):
            object.__setattr__(self, name, _check_rate(name, getattr(self, name)))
        if self.gamma == 0:
            raise IrreducibilityError("gamma = 0 freezes the velocity; need gamma > 0")
        if self.kernel.dimension != self.velocities.dimension:
            raise ModelError(
                f"kernel lives in d={self.kernel.dimension} but velocities in "
                f"d={self.velocities.dimension}"
            )

    @property
    def d(self) -> int:
        return self.kernel.dimension

    @property
    def passive_rate(self) -> float:
        """Total rate of passive random-walk jumps."""
        return self.kappa * self.kernel_rate

    def is_two_state_1d(self) -> bool:
        v = self.velocities
        return (
            self.d == 1
            and v.size == 2
            and sorted(v.velocities[:, 0].tolist()) == [-1, 1]
            and v.symmetric
        )


@dataclass(frozen=True)
class ContinuumModel:
    """Telegrapher process TP_E(lam, kappa, gamma) on R with velocities +-1."""

    lam: float
    kappa: float
    gamma: float
    E: float = 0.0

    def __post_init__(self):
        for name in ("lam", "kappa", "gamma"):
            object.__setattr__(self, name, _check_rate(name, getattr(self, name)))
        if self.gamma == 0:
            raise IrreducibilityError("gamma = 0 freezes the velocity; need gamma > 0")
        E = float(self.E)
        if not np.isfinite(E):
            raise ModelError("field E must be finite")
        if E != 0 and self.kappa == 0:
            raise ModelError("the field enters as 2*kappa*E; kappa must be positive when E != 0")
        object.__setattr__(self, "E", E)

    @property
    def d(self) -> int:
        return 1

    @property
    def velocities(self) -> "VelocityChain":
        """The +-1 unit-rate flip chain, ordered (+1, -1)."""
        return _TWO_STATE


@dataclass(frozen=True, eq=False)
class OccupationMeasure:
    """Probability vector indexed by the velocity set."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).ravel()
        if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-12:
            raise ModelError("occupation measure must lie on the probability simplex")
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probs, dtype=dtype)

    def __len__(self):
        return self.probs.shape[0]


def build_1d_two_state(lam: float, kappa: float, gamma: float) -> LatticeModel:
    """The basic model on Z: V = {+1, -1}, unit flip rates, nearest-neighbour walk."""
    _check_rate("lam", lam)
    _check_rate("kappa", kappa)
    if _check_rate("gamma", gamma) == 0:
        raise IrreducibilityError("gamma = 0: the velocity never flips")
    return LatticeModel(lam, kappa, gamma, nearest_neighbor_kernel(1), _TWO_STATE, kernel_rate=2.0)


_TWO_STATE = VelocityChain(np.array([[1], [-1]]), np.array([[0.0, 1.0], [1.0, 0.0]]))


def _as_alpha(kernel_dim: int, alpha) -> np.ndarray:
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    if a.shape[-1] != kernel_dim:
        raise ModelError(f"alpha has dimension {a.shape[-1]}, kernel has {kernel_dim}")
    return a


def kernel_cumulant(kernel: JumpKernel, alpha) -> float | np.ndarray:
    """sum_z p(z) (cosh<alpha, z> - 1); broadcasts over leading axes of alpha."""
    a = _as_alpha(kernel.dimension, alpha)
    s = a @ kernel.steps.T
    # 2 sinh^2(s/2) avoids the cancellation in cosh(s) - 1 near 0
    out = (2.0 * np.sinh(0.5 * s) ** 2) @ kernel.probs
    return float(out) if np.ndim(out) == 0 else out


def kernel_symbol(kernel: JumpKernel, q) -> complex | np.ndarray:
    """sum_z p(z) (cos(q z) - 1) for a 1D kernel; q may be complex."""
    if kernel.dimension != 1:
        raise ModelError("kernel_symbol is defined for one-dimensional kernels")
    z = kernel.steps[:, 0].astype(float)
    qz = np.multiply.outer(np.asarray(q), z)
    out = (-2.0 * np.sin(0.5 * qz) ** 2) @ kernel.probs
    return out[()] if np.ndim(out) == 0 else out


def stationary_measure(chain: VelocityChain) -> OccupationMeasure:
    """Invariant law of the flip chain (nu A = 0, sum nu = 1)."""
    n = chain.size
    if chain.symmetric:
        return OccupationMeasure(np.full(n, 1.0 / n))
    A = chain.generator
    system = np.vstack([A.T, np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    nu, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    if np.max(np.abs(nu @ A)) > 1e-12 or np.any(nu <= 0):
        raise NumericalError("stationary measure solve failed its residual check")
    return OccupationMeasure(nu / nu.sum())


def chain_from_edges(velocities: Iterable, edges: Mapping[tuple[int, int], float]) -> VelocityChain:
    """Build a chain from {(i, j): rate} over indices into ``velocities``."""
    vel = np.atleast_2d(np.asarray(list(velocities), dtype=np.int64))
    rates = np.zeros((vel.shape[0],) * 2)
    for (i, j), r in edges.items():
        rates[i, j] = r
    return VelocityChain(vel, rates)
