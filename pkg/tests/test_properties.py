"""Property-based checks of the algebraic invariants.

Random inputs come from hypothesis; every property here is an exact
identity (up to roundoff), not a statistical statement.
"""

import numpy as np
from hypothesis import given, settings, strategies as st

from convint import geom2d, geom3d, iterate as it, scheduler as schd, \
    spectral as sp
from convint.spectral import Lattice, SpectralField

LAT = Lattice(2, 16)

seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


def _rand_field(seed, ncomp=None, kmax=5):
    rng = np.random.default_rng(seed)
    shape = LAT.shape if ncomp is None else (ncomp,) + LAT.shape
    f = SpectralField.from_grid(LAT, rng.standard_normal(shape),
                                sp.SCALAR if ncomp is None else sp.VECTOR)
    return sp.freq_filter(f, "below", kmax)


@settings(max_examples=25, deadline=None)
@given(seeds, seeds)
def test_product_is_bilinear_and_symmetric(s1, s2):
    f, g = _rand_field(s1), _rand_field(s2)
    assert np.array_equal(sp.mul(f, g).c, sp.mul(g, f).c)
    lhs = sp.mul(f + f, g)
    assert np.abs(lhs.c - 2.0 * sp.mul(f, g).c).max() < 1e-13


@settings(max_examples=25, deadline=None)
@given(seeds, seeds)
def test_product_leibniz_rule(s1, s2):
    # products stay inside the retained band for kmax 5 + 5 < 16/2, so the
    # derivative of the product is exactly the Leibniz sum
    f, g = _rand_field(s1, kmax=3), _rand_field(s2, kmax=3)
    d_fg = sp.differential(sp.mul(f, g), "partial", 0)
    rhs = sp.mul(sp.differential(f, "partial", 0), g) \
        + sp.mul(f, sp.differential(g, "partial", 0))
    assert np.abs(d_fg.c - rhs.c).max() < 1e-12


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_leray_is_an_idempotent_annihilating_gradients(s):
    v = _rand_field(s, ncomp=2)
    p = sp.leray_project(v)
    assert p.solenoidal_error() < 1e-12
    assert np.abs(sp.leray_project(p).c - p.c).max() < 1e-14
    grad = sp.differential(_rand_field(s + 1), "grad")
    assert np.abs(sp.leray_project(grad).c).max() < 1e-13


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_antidivergence_right_inverse(s):
    v = _rand_field(s, ncomp=2).project_mean_zero()
    R = geom2d.antidiv2(v)
    assert R.trace_error() < 1e-12
    assert R.asym_error() < 1e-12
    err = sp.differential(R, "div") - v
    assert sp.norm(err, "Lp", 2) < 1e-10 * max(sp.norm(v, "Lp", 2), 1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.35, 0.35), st.floats(-0.35, 0.35))
def test_gamma2_reconstructs_everywhere_in_the_ball(a, b):
    R = np.array([[a, b], [b, -a]])
    frob = np.sqrt(2.0 * (a * a + b * b))
    if frob > 0.5:
        R *= 0.5 / frob
    g = geom2d.gamma2(R)
    assert np.all(g > 0)
    assert np.abs(geom2d.reconstruct2(g) - R).max() < 1e-13


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(0, 10 ** 6))
def test_lognum_tracks_float_arithmetic(n1, n2):
    x, y = schd.LogNum.of(n1 + 1), schd.LogNum.of(n2 + 1)
    prod = float(n1 + 1) * (n2 + 1)
    assert abs(float(x * y) - prod) <= 1e-12 * prod
    assert abs(float(x / y) - (n1 + 1) / (n2 + 1)) \
        <= 1e-12 * ((n1 + 1) / (n2 + 1))
    assert (x < y) == (n1 < n2)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 50.0))
def test_chi_bridge_bounds(z):
    c = float(it.chi(np.array([z]))[0])
    assert z <= 2.0 * c + 1e-12
    assert 2.0 * c <= 4.0 * max(z, 1.0) + 1e-12
    if z <= 1.0:
        assert c == 1.0
    if z >= 2.0:
        assert abs(c - z) < 1e-14


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_gamma3_reconstructs_random_ball_points(s):
    rng = np.random.default_rng(s)
    D = rng.standard_normal((3, 3))
    D = (D + D.T) / 2
    frob = np.sqrt((D ** 2).sum())
    D *= rng.uniform(0, 0.5) / max(frob, 1e-12)
    R = np.eye(3) + D
    g = geom3d.gamma3(R)
    assert np.all(g > 0)
    assert np.abs(geom3d.reconstruct3(g) - R).max() < 1e-12
