"""Torus field algebra: conventions, exact multipliers, dealiased products."""

import numpy as np
import pytest

from convint import spectral as sp
from convint.spectral import SCALAR, TENSOR, VECTOR, Lattice, SpectralField

TOL = 1e-13


def random_field(lat, rank=SCALAR, kmax=None, seed=0, mean_zero=False):
    rng = np.random.default_rng(seed)
    f = SpectralField.zero(lat, rank)
    g = rng.standard_normal(f.c.shape)
    f = SpectralField.from_grid(lat, g, rank)
    if kmax is not None:
        f = sp.freq_filter(f, "below", kmax)
    if mean_zero:
        f = f.project_mean_zero()
    return f


# ---------------------------------------------------------------- conventions

def test_l2_convention_single_mode():
    lat = Lattice(2, 32)
    f = SpectralField.from_grid(lat, np.sin(lat.x[0]))
    # ||sin x1||_{L2(T^2)}^2 = (2pi)^2 / 2
    assert abs(sp.norm(f, "Lp", 2) - 2 * np.pi / np.sqrt(2)) < TOL


def test_parseval_matches_grid_quadrature():
    lat = Lattice(2, 32)
    f = random_field(lat, seed=1)
    grid_l2 = np.sqrt((f.grid() ** 2).sum() * lat.cell_volume)
    assert abs(sp.norm(f, "Lp", 2) - grid_l2) < 1e-12 * grid_l2


def test_from_grid_round_trip():
    lat = Lattice(3, 16)
    rng = np.random.default_rng(2)
    g = rng.standard_normal(lat.shape)
    f = SpectralField.from_grid(lat, g)
    # band-limiting loses the Nyquist content, so round-trip the interpolant
    f2 = SpectralField.from_grid(lat, f.grid())
    assert np.abs(f.c - f2.c).max() < TOL


def test_sobolev_norm_manual():
    lat = Lattice(2, 16)
    f = random_field(lat, seed=3, mean_zero=True)
    s = 1.5
    w = np.where(lat.k2 > 0, lat.k2, 1.0) ** s * (lat.k2 > 0)
    manual = np.sqrt(lat.volume * (np.abs(f.c) ** 2 * w).sum())
    assert abs(sp.norm(f, "sobolev", s) - manual) < 1e-12 * manual


# ------------------------------------------------------------------ operators

def test_gradient_exact_on_product_mode():
    lat = Lattice(2, 32)
    g = np.sin(3 * lat.x[0]) * np.cos(2 * lat.x[1])
    f = SpectralField.from_grid(lat, g)
    gx = sp.differential(f, "partial", 0).grid()
    assert np.abs(gx - 3 * np.cos(3 * lat.x[0]) * np.cos(2 * lat.x[1])).max() < 1e-11


def test_frac_laplacian_multiplier():
    lat = Lattice(2, 16)
    f = SpectralField.from_grid(lat, np.cos(2 * lat.x[0] + 3 * lat.x[1]))
    out = sp.frac_laplacian(f, 0.5)
    assert np.abs(out.c - np.sqrt(13.0) * f.c).max() < TOL


def test_inv_laplacian_inverts():
    lat = Lattice(3, 16)
    f = random_field(lat, rank=VECTOR, seed=4, mean_zero=True)
    g = sp.inv_laplacian(f)
    back = SpectralField(lat, VECTOR, -lat.k2 * g.c)
    assert np.abs(back.c - f.c).max() < 1e-12 * np.abs(f.c).max()


def test_leray_idempotent_and_divergence_free():
    lat = Lattice(3, 16)
    v = random_field(lat, rank=VECTOR, seed=5)
    p = sp.leray_project(v)
    assert p.solenoidal_error() < TOL
    pp = sp.leray_project(p)
    assert np.abs(pp.c - p.c).max() < TOL


def test_curl_is_divergence_free():
    lat = Lattice(3, 16)
    v = random_field(lat, rank=VECTOR, seed=6)
    assert sp.differential(v, "curl").solenoidal_error() < TOL


def test_perp_grad_divergence_free():
    lat = Lattice(2, 16)
    f = random_field(lat, seed=7)
    assert sp.differential(f, "perp_grad").solenoidal_error() < TOL


# ------------------------------------------------------------------- products

def _convolve_oracle(lat, a, b):
    """Direct convolution sum of two coefficient arrays (slow, small N)."""
    N = lat.N
    half = N // 2
    out = np.zeros(lat.shape, dtype=complex)
    ks = [(i, j) for i in range(-half + 1, half) for j in range(-half + 1, half)]
    for (i1, j1) in ks:
        ca = a[i1, j1]
        if ca == 0:
            continue
        for (i2, j2) in ks:
            i, j = i1 + i2, j1 + j2
            if abs(i) <= half - 1 and abs(j) <= half - 1:
                out[i, j] += ca * b[i2, j2]
    return out


def test_product_matches_convolution_oracle():
    lat = Lattice(2, 8)
    f = random_field(lat, seed=8)
    g = random_field(lat, seed=9)
    prod = sp.mul(f, g)
    oracle = _convolve_oracle(lat, f.c, g.c)
    assert np.abs(prod.c - oracle).max() < 1e-13


def test_product_leibniz_identity():
    # grad(fg) = f grad g + g grad f survives the band truncation exactly
    lat = Lattice(2, 32)
    f = random_field(lat, seed=10)
    g = random_field(lat, seed=11)
    lhs = sp.differential(sp.mul(f, g), "grad")
    rhs = sp.mul(f, sp.differential(g, "grad")) + sp.mul(g, sp.differential(f, "grad"))
    assert np.abs(lhs.c - rhs.c).max() < 1e-12 * max(np.abs(lhs.c).max(), 1e-30)


def test_outer_trace_is_dot():
    lat = Lattice(2, 16)
    u = random_field(lat, rank=VECTOR, seed=12)
    v = random_field(lat, rank=VECTOR, seed=13)
    T = sp.outer(u, v)
    tr = sum(T.c[i, i] for i in range(2))
    assert np.abs(tr - sp.dot(u, v).c).max() < 1e-13


def test_trace_free_outer_sym():
    lat = Lattice(2, 16)
    u = random_field(lat, rank=VECTOR, seed=14)
    v = random_field(lat, rank=VECTOR, seed=15)
    T = sp.trace_free_outer_sym(u, v)
    assert T.trace_error() < TOL
    assert T.asym_error() < TOL
    ref = sp.trace_free_part(sp.outer(u, v) + sp.outer(v, u))
    assert np.abs(T.c - ref.c).max() < 1e-13 * max(np.abs(ref.c).max(), 1e-30)


# ------------------------------------------------------------------ time grid

def test_time_kernel_normalized():
    for l, dt in [(0.1, 0.01), (0.25, 0.02), (0.01, 0.01)]:
        w = sp.time_kernel(l, dt)
        assert len(w) == int(np.floor(l / dt + 1e-12))
        assert abs(w.sum() - 1.0) < TOL


def test_time_derivative_exact_on_linear():
    lat = Lattice(2, 8)
    steps = 10
    base = random_field(lat, seed=16)
    snaps = [SpectralField(lat, SCALAR, (1.0 + 3.0 * j * 0.1) * base.c)
             for j in range(steps + 1)]
    F = sp.TimeGridField(0.0, 1.0, steps, snaps)
    dF = F.time_derivative()
    for j in range(steps + 1):
        assert np.abs(dF[j].c - 3.0 * base.c).max() < 1e-11


def test_mollified_time_derivative_linear():
    # the derivative kernel is corrected to be exact on affine paths
    lat = Lattice(2, 8)
    steps = 40
    base = random_field(lat, seed=17)
    snaps = [SpectralField(lat, SCALAR, (2.0 - 5.0 * j / steps) * base.c)
             for j in range(steps + 1)]
    F = sp.TimeGridField(0.0, 1.0, steps, snaps)
    dF = sp.mollified_time_derivative(F, 0.2)
    for j in range(10, steps + 1):
        assert np.abs(dF[j].c + 5.0 * base.c).max() < 1e-10


def test_time_mollifier_commutes_with_multipliers():
    lat = Lattice(2, 16)
    steps = 12
    snaps = [random_field(lat, seed=20 + j) for j in range(steps + 1)]
    F = sp.TimeGridField(0.0, 1.0, steps, snaps)
    l = 3.0 / steps
    a = sp.mollify_time(F.map(lambda f: sp.frac_laplacian(f, 1.0)), l)
    b = sp.mollify_time(F, l).map(lambda f: sp.frac_laplacian(f, 1.0))
    for j in range(steps + 1):
        assert np.abs(a[j].c - b[j].c).max() < 1e-12


def test_dump_load_round_trip(tmp_path):
    lat = Lattice(2, 16)
    f = random_field(lat, rank=TENSOR, seed=18)
    f.meta["note"] = "x"
    path = tmp_path / "field.c16"
    sp.dump_field(f, path)
    g = sp.load_field(path)
    assert g.rank == TENSOR and g.lattice is lat
    assert np.array_equal(f.c, g.c)


def test_dump_deterministic_bytes(tmp_path):
    lat = Lattice(2, 16)
    f = random_field(lat, seed=19)
    p1, p2 = tmp_path / "a.c16", tmp_path / "b.c16"
    sp.dump_field(f, p1)
    sp.dump_field(f, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_nyquist_always_empty():
    lat = Lattice(2, 16)
    rng = np.random.default_rng(21)
    f = SpectralField.from_grid(lat, rng.standard_normal(lat.shape))
    assert np.abs(f.c[~lat.band_mask]).max() == 0.0
    g = sp.mul(f, f)
    assert np.abs(g.c[~lat.band_mask]).max() == 0.0
