"""Hypothesis strategies for models and measures."""
import numpy as np
from hypothesis import strategies as st

from runtumble.model import ContinuumModel, LatticeModel, VelocityChain, build_1d_two_state, nearest_neighbor_kernel

rates = st.floats(0.05, 5.0)
alphas = st.floats(-3.0, 3.0)


@st.composite
def two_state_models(draw):
    return build_1d_two_state(draw(rates), draw(rates), draw(rates))


@st.composite
def continuum_models(draw, drift=True):
    E = draw(st.floats(-2.0, 2.0)) if drift else 0.0
    return ContinuumModel(draw(rates), draw(rates), draw(rates), E)


@st.composite
def chains(draw, max_size=6, d=None, symmetric=None):
    """Irreducible flip chains on distinct nonzero velocities in {-2..2}^d."""
    d = draw(st.integers(1, 3)) if d is None else d
    n = draw(st.integers(2, min(max_size, 5**d - 1)))
    vel = draw(
        st.lists(
            st.tuples(*[st.integers(-2, 2)] * d).filter(any), min_size=n, max_size=n, unique=True
        )
    )
    R = np.array(draw(st.lists(st.floats(0.0, 2.0), min_size=n * n, max_size=n * n))).reshape(n, n)
    for i in range(n):
        R[i, (i + 1) % n] = max(R[i, (i + 1) % n], 0.2)
    np.fill_diagonal(R, 0.0)
    sym = draw(st.booleans()) if symmetric is None else symmetric
    if sym:
        R = R + R.T
    return VelocityChain(np.array(vel), R)


@st.composite
def lattice_models(draw, max_size=6, symmetric=None):
    chain = draw(chains(max_size=max_size, symmetric=symmetric))
    return LatticeModel(draw(rates), draw(rates), draw(rates), nearest_neighbor_kernel(chain.dimension), chain)


@st.composite
def simplex_points(draw, n, interior=True):
    lo = 0.02 if interior else 0.0
    w = np.array(draw(st.lists(st.floats(lo, 1.0), min_size=n, max_size=n)))
    if w.sum() == 0:
        w[0] = 1.0
    return w / w.sum()


def axis_alpha(d, i, x):
    a = np.zeros(d)
    a[i] = x
    return a
