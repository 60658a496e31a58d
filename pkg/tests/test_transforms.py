import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.linalg import expm

from runtumble.free_energy import free_energy_continuum_drift, free_energy_lattice, second_derivative_fd
from runtumble.model import ContinuumModel, DomainError, JumpKernel, LatticeModel, ModelError, build_1d_two_state
from runtumble.spectral import diffusion_matrix
from runtumble.transforms import (
    continuum_matrix,
    diffusion_constant,
    fit_order,
    fourier_laplace_continuum,
    fourier_laplace_lattice,
    scaling_diagnostic,
    transform_grid,
    transport_matrix,
    transport_matrix_continued,
)
from strategies import two_state_models


def laplace_oracle(M, z, mu0):
    """int_0^inf e^{-zt} 1^T e^{tM} mu0 dt by adaptive quadrature of the matrix exponential."""

    def part(t, which):
        val = np.exp(-z * t) * np.sum(expm(t * M) @ mu0)
        return val.real if which == 0 else val.imag

    re = quad(part, 0, np.inf, args=(0,), epsabs=1e-13, epsrel=1e-11, limit=400)[0]
    im = quad(part, 0, np.inf, args=(1,), epsabs=1e-13, epsrel=1e-11, limit=400)[0]
    return re + 1j * im


@pytest.mark.parametrize("q, z, alpha0", [(0.4, 0.7, 0.5), (1.3, 2.0, 1.0), (2.9, 0.3, 0.2)])
def test_lattice_transform_matches_quadrature(basic, q, z, alpha0):
    value = fourier_laplace_lattice(basic, q, z, alpha0).value
    oracle = laplace_oracle(transport_matrix(basic, q).matrix, z, np.array([alpha0, 1 - alpha0]))
    assert abs(value - oracle) <= 1e-8 * abs(oracle)


@pytest.mark.parametrize("q, z", [(0.4, 0.7), (1.7, 2.5)])
def test_continuum_transform_matches_quadrature(continuum, q, z):
    value = fourier_laplace_continuum(continuum, q, z).value
    oracle = laplace_oracle(continuum_matrix(continuum, q), z, np.array([0.5, 0.5]))
    assert abs(value - oracle) <= 1e-8 * abs(oracle)


def test_transport_matrix_is_characteristic_generator(basic):
    # d/dt E[e^{iqX} 1{v}] for the worked example, entry by entry
    q = 0.8
    M = transport_matrix(basic, q).matrix
    walk = 2 * (np.cos(q) - 1)  # kappa = 1, both neighbours
    assert M[0, 0] == pytest.approx(walk + 2 * (np.exp(1j * q) - 1) - 4, abs=1e-15)
    assert M[1, 1] == pytest.approx(walk + 2 * (np.exp(-1j * q) - 1) - 4, abs=1e-15)
    assert M[0, 1] == M[1, 0] == 4


def test_continued_matrix_agrees_on_real_axis_and_is_real_on_imaginary_axis(basic):
    np.testing.assert_allclose(transport_matrix_continued(basic, 1.1), transport_matrix(basic, 1.1).matrix,
                               atol=1e-15)
    T = transport_matrix_continued(basic, -0.6j)
    assert np.max(np.abs(T.imag)) < 1e-15
    np.testing.assert_allclose(T.real, T.real.T)


@given(two_state_models(), st.floats(0.05, 10.0))
def test_q_zero_gives_total_mass(model, z):
    assert fourier_laplace_lattice(model, 0.0, z).value == pytest.approx(1.0 / z, rel=1e-12)


@given(two_state_models(), st.floats(-3, 3), st.floats(0.05, 10.0))
def test_symmetric_start_transform_is_real_and_even(model, q, z):
    s = fourier_laplace_lattice(model, q, z).value
    assert abs(s.imag) <= 1e-12 * abs(s)
    assert s == pytest.approx(fourier_laplace_lattice(model, -q, z).value, rel=1e-12)


def test_passive_continuum_is_heat_kernel():
    m = ContinuumModel(0.0, 1.5, 2.0)
    for q, z in [(0.3, 1.0), (2.0, 0.1)]:
        assert fourier_laplace_continuum(m, q, z).value == pytest.approx(1 / (z + 1.5 * q * q), rel=1e-14)


def test_transform_domain_errors(basic, continuum):
    with pytest.raises(DomainError):
        fourier_laplace_lattice(basic, 0.1, 0.0)
    with pytest.raises(DomainError):
        fourier_laplace_lattice(basic, 0.1, -1 + 1j)
    with pytest.raises(DomainError):
        fourier_laplace_continuum(ContinuumModel(1, 1, 1, E=1), 0.1, 1.0)
    with pytest.raises(DomainError):
        scaling_diagnostic(basic, 0.0, 1.0)


def test_worked_diffusion_constants(basic, continuum):
    assert diffusion_constant(basic) == 5.0
    assert diffusion_constant(continuum) == 3.0


def test_general_kernel_diffusion():
    kernel = JumpKernel([[1], [-1], [2], [-2]], [0.3, 0.3, 0.2, 0.2])
    m = LatticeModel(2.0, 1.5, 4.0, kernel, build_1d_two_state(1, 1, 1).velocities)
    expected = 1.5 * 2.2 + 2.0 + 1.0  # kappa sum z^2 p + lam + lam^2 / gamma
    assert diffusion_constant(m) == pytest.approx(expected, rel=1e-15)
    fd = second_derivative_fd(lambda a: free_energy_lattice(m, a))
    assert fd == pytest.approx(expected, rel=1e-6)
    assert diffusion_matrix(m)[0, 0] == pytest.approx(expected, rel=1e-12)


@given(two_state_models())
def test_diffusion_constant_is_curvature_of_free_energy(model):
    # F varies on the scale gamma / lam around 0, so the step follows it
    h = 1e-4 * min(1.0, model.gamma / model.lam)
    fd = second_derivative_fd(lambda a: free_energy_lattice(model, a), h=h)
    assert fd == pytest.approx(diffusion_constant(model), rel=1e-6)


def test_continuum_diffusion_is_curvature():
    m = ContinuumModel(1.3, 0.7, 2.2, E=0.4)
    fd = second_derivative_fd(lambda a: free_energy_continuum_drift(m, a))
    assert fd == pytest.approx(2 * 0.7 + 1.3**2 / 2.2, rel=1e-6)


def test_diffusion_constant_needs_two_state(cyclic):
    with pytest.raises(ModelError):
        diffusion_constant(cyclic)


def test_scaling_diagnostic_converges(basic, continuum):
    for model in (basic, continuum):
        diag = scaling_diagnostic(model, 1.0, 1.0, (0.1, 0.05, 0.025))
        assert diag.limit == pytest.approx(1 / (1 + 0.5 * diffusion_constant(model)))
        assert np.all(np.diff(diag.deviations) < 0)
        assert diag.order > 1.5


def test_fit_order_exact_power():
    eps = np.array([0.2, 0.1, 0.05])
    assert fit_order(eps, 3 * eps**2) == pytest.approx(2.0, abs=1e-12)


def test_transform_grid_rows(basic):
    rows = transform_grid(basic, [0.0, 1.0], [0.5, 2.0])
    assert len(rows) == 4
    assert rows[0]["S_re"] == pytest.approx(2.0) and rows[0]["q"] == 0.0
    assert all(r["closed_form_residual"] < 1e-12 for r in rows)
