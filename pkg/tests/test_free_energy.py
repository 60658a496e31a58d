import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import sparse
from scipy.linalg import expm
from scipy.sparse.linalg import expm_multiply

from runtumble.free_energy import (
    continuum_limit_check,
    free_energy_continuum_derivatives,
    free_energy_continuum_drift,
    free_energy_curve,
    free_energy_lattice,
    free_energy_lattice_derivatives,
    legendre_transform,
    log_moment_generating,
    matrix_exponential_closed,
    moment_generating,
    rate_function_curve,
)
from runtumble.model import ContinuumModel, NumericalError, build_1d_two_state
from runtumble.transforms import transport_matrix_continued
from strategies import alphas, continuum_models, two_state_models


def box_generator(lam, kappa, gamma, L):
    """Forward generator of (x, v) on {-L..L} x {+1, -1}, built transition by transition."""
    n = 2 * L + 1
    idx = lambda x, j: j * n + (x + L)  # noqa: E731
    rows, cols, vals = [], [], []

    def add(src, dst, rate):
        rows.extend([dst, src])
        cols.extend([src, src])
        vals.extend([rate, -rate])

    for j, v in enumerate((1, -1)):
        for x in range(-L, L + 1):
            s = idx(x, j)
            if -L <= x + v <= L:
                add(s, idx(x + v, j), lam)
            for z in (1, -1):
                if -L <= x + z <= L:
                    add(s, idx(x + z, j), kappa)
            add(s, idx(x, 1 - j), gamma)
    return sparse.csr_matrix(sparse.coo_matrix((vals, (rows, cols)), shape=(2 * n, 2 * n))), n


def test_worked_free_energy_values(basic, continuum):
    a = np.log(2.0)  # sinh = 3/4, cosh = 5/4
    assert free_energy_lattice(basic, a) == pytest.approx(0.5 + 0.5 + np.sqrt(18.25) - 4.0, rel=1e-15)
    assert free_energy_continuum_drift(continuum, 1.0) == pytest.approx(2 * np.sqrt(5) - 3, rel=1e-15)
    # lam = 1, kappa = 0, gamma = 1 at ln 2: 1/4 + 5/4 - 1
    assert free_energy_lattice(build_1d_two_state(1, 0, 1), a) == pytest.approx(0.5, rel=1e-15)


@given(two_state_models(), alphas)
def test_free_energy_even_and_nonnegative(model, a):
    f = free_energy_lattice(model, a)
    assert f >= 0
    assert f == pytest.approx(free_energy_lattice(model, -a), rel=1e-13, abs=1e-300)
    assert free_energy_lattice(model, 0.0) == 0.0


@given(two_state_models(), alphas, alphas, st.floats(0, 1))
def test_free_energy_convex(model, a, b, w):
    lhs = free_energy_lattice(model, w * a + (1 - w) * b)
    rhs = w * free_energy_lattice(model, a) + (1 - w) * free_energy_lattice(model, b)
    assert lhs <= rhs + 1e-12 * max(1.0, abs(rhs))


@given(two_state_models(), alphas)
def test_closed_form_is_top_eigenvalue_of_continued_matrix(model, a):
    T = transport_matrix_continued(model, -1j * a).real
    top = np.linalg.eigvalsh(T)[-1]
    assert free_energy_lattice(model, a) == pytest.approx(top, rel=1e-12, abs=1e-12)


@given(two_state_models(), st.floats(-2, 2))
def test_lattice_derivatives_match_differences(model, a):
    h = 1e-5 * min(1.0, model.gamma / model.lam)
    d1, d2 = free_energy_lattice_derivatives(model, a)
    fd1 = (free_energy_lattice(model, a + h) - free_energy_lattice(model, a - h)) / (2 * h)
    g1p, _ = free_energy_lattice_derivatives(model, a + h)
    g1m, _ = free_energy_lattice_derivatives(model, a - h)
    assert d1 == pytest.approx(fd1, rel=1e-5, abs=1e-6)
    assert d2 == pytest.approx((g1p - g1m) / (2 * h), rel=1e-5, abs=1e-6)


@given(continuum_models(), st.floats(-2, 2))
def test_continuum_derivatives_match_differences(model, a):
    h = 1e-6 * min(1.0, model.gamma / model.lam)
    d1, d2 = free_energy_continuum_derivatives(model, a)
    F = lambda x: free_energy_continuum_drift(model, x)  # noqa: E731
    assert d1 == pytest.approx((F(a + h) - F(a - h)) / (2 * h), rel=1e-5, abs=1e-6)
    assert free_energy_continuum_derivatives(model, 0.0)[1] == pytest.approx(
        2 * model.kappa + model.lam**2 / model.gamma, rel=1e-14
    )


def test_drift_shifts_only_the_first_cumulant():
    base = ContinuumModel(2.0, 1.0, 4.0)
    drift = ContinuumModel(2.0, 1.0, 4.0, E=0.5)
    assert free_energy_continuum_derivatives(drift, 0.0)[0] == pytest.approx(1.0)
    assert free_energy_continuum_derivatives(drift, 0.0)[1] == free_energy_continuum_derivatives(base, 0.0)[1]


# --- matrix exponential ------------------------------------------------------------------------


@given(two_state_models(), st.floats(-3.2, 3.2), st.floats(0.0, 5.0))
def test_closed_exponential_matches_scaling_and_squaring(model, q, t):
    closed = matrix_exponential_closed(model, q, t).matrix
    oracle = expm(t * transport_matrix_continued(model, q))
    assert np.max(np.abs(closed - oracle)) <= 1e-10 * max(1.0, np.max(np.abs(oracle)))


def test_exponential_through_vanishing_B():
    # lam |sin q| = gamma makes B = 0 exactly; the closed form must stay finite and correct
    q = np.pi / 2
    model = build_1d_two_state(1.0, 0.5, 1.0)
    me = matrix_exponential_closed(model, q, 1.3)
    assert abs(me.B) < 1e-7
    np.testing.assert_allclose(me.matrix, expm(1.3 * transport_matrix_continued(model, q)), atol=1e-10)


def test_G_matrix_relation(basic):
    me = matrix_exponential_closed(basic, 0.9, 0.7)
    np.testing.assert_allclose(
        me.matrix, np.exp(me.t * me.A) / (2 * me.gamma * me.B) * me.G, rtol=1e-12, atol=1e-14
    )


def test_moment_generating_function_from_master_equation(basic):
    """E exp(alpha X_t) from the propagated distribution on a large box."""
    L, t = 60, 2.0
    Q, n = box_generator(2.0, 1.0, 4.0, L)
    p0 = np.zeros(2 * n)
    p0[L] = p0[n + L] = 0.5
    p = expm_multiply(t * Q, p0)
    x = np.tile(np.arange(-L, L + 1), 2)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    for a in (-0.7, 0.3, 1.1):
        oracle = np.log(np.sum(p * np.exp(a * x)))
        assert log_moment_generating(basic, a, t) == pytest.approx(oracle, rel=1e-10)
        assert np.log(moment_generating(basic, a, t)) == pytest.approx(oracle, rel=1e-10)


@given(two_state_models(), st.floats(-2, 2), st.floats(0.01, 30.0), st.floats(0, 1))
def test_log_mgf_matches_expm(model, a, t, p):
    mu0 = np.array([p, 1 - p])
    M = transport_matrix_continued(model, -1j * a).real
    oracle = np.log(np.sum(expm(t * M) @ mu0))
    assert log_moment_generating(model, a, t, mu0) == pytest.approx(oracle, rel=1e-10, abs=1e-12)


def test_log_mgf_rate_converges_to_free_energy(basic):
    F = free_energy_lattice(basic, 0.8)
    errs = [abs(log_moment_generating(basic, 0.8, t) / t - F) for t in (10.0, 100.0, 1000.0)]
    assert errs[0] > errs[1] > errs[2]
    assert log_moment_generating(basic, 0.8, 1e6) / 1e6 == pytest.approx(F, rel=1e-6)


# --- Legendre transform -----------------------------------------------------------------------


def test_quadratic_legendre_transform():
    D = 5.0
    I, a = legendre_transform(lambda x: D * x * x / 2, 1.0)
    assert I == pytest.approx(0.1, abs=1e-12)
    assert a == pytest.approx(0.2, abs=1e-12)


@given(two_state_models(), st.floats(-4, 4))
def test_young_equality_and_nonnegativity(model, x):
    F = lambda a: free_energy_lattice(model, a)  # noqa: E731
    dF = lambda a: free_energy_lattice_derivatives(model, a)[0]  # noqa: E731
    d2F = lambda a: free_energy_lattice_derivatives(model, a)[1]  # noqa: E731
    I, a = legendre_transform(F, x, dF, d2F)
    assert I >= -1e-12
    assert abs(I + F(a) - a * x) <= 1e-10 * max(1.0, abs(a * x))
    assert dF(a) == pytest.approx(x, abs=1e-9)


@given(two_state_models(), st.floats(-3, 3))
def test_rate_function_below_every_supporting_line(model, x):
    F = lambda a: free_energy_lattice(model, a)  # noqa: E731
    I, _ = legendre_transform(F, x, lambda a: free_energy_lattice_derivatives(model, a)[0])
    grid = np.linspace(-4, 4, 81)
    assert I >= np.max(grid * x - F(grid)) - 1e-9


def test_rate_function_curve_symmetric_and_zero_at_mean(basic):
    xs = np.linspace(-2, 2, 9)
    curve = rate_function_curve(lambda a: free_energy_lattice(basic, a), xs,
                                lambda a: free_energy_lattice_derivatives(basic, a)[0])
    np.testing.assert_allclose(curve.values, curve.values[::-1], atol=1e-12)
    assert curve.values[4] == 0.0
    assert np.all(np.diff(curve.values, 2) > 0)


def test_legendre_unbracketable_slope():
    # F' is bounded by 1, so x = 2 has no maximiser
    with pytest.raises(NumericalError):
        legendre_transform(lambda a: np.logaddexp(a, -a), 2.0)


def test_free_energy_curve_curvature(basic):
    curve = free_energy_curve(lambda a: free_energy_lattice(basic, a), [-1, 0, 1])
    assert curve.D == pytest.approx(5.0, rel=1e-6)
    assert curve.derivatives[1] == pytest.approx(0.0, abs=1e-9)


def test_continuum_limit_order(basic):
    res = continuum_limit_check(basic, 1.0, (0.2, 0.1, 0.05, 0.025))
    # passive part maps to kappa_c = 1, so the target is the telegrapher F at lam = 2, gamma = 4
    assert res.target == pytest.approx(2 * np.sqrt(5) - 3, rel=1e-14)
    assert np.all(np.diff(res.deviations) < 0)
    assert res.order >= 1.0
