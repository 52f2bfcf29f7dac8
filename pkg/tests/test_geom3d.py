"""3D jet building blocks and the twelve-direction decomposition."""

import numpy as np
import pytest

from convint import geom3d, spectral as sp
from convint.spectral import Lattice, SpectralField

JET = geom3d.JetParams(2, 0.5, 0.8, 2.0)


def test_direction_family():
    assert len(geom3d.LAMBDA3) == 12
    for d in geom3d.LAMBDA3:
        assert d.frame_error() < 1e-15
    S = geom3d.direction_sum()
    for i in range(3):
        for j in range(3):
            assert S[i, j] == (4 if i == j else 0)


def test_profile_normalizations():
    # independent trapezoid quadrature; the bump vanishes to all orders at
    # the support boundary, so the trapezoid rule converges spectrally
    Phi, phi, psi = geom3d.make_profiles()
    s = np.linspace(0.0, 1.0, 20001)
    assert abs(np.trapezoid(phi(s, 0.0) ** 2 * 2 * np.pi * s, s)
               - 4 * np.pi ** 2) < 1e-8
    u = np.linspace(0.0, 1.0, 20001)
    assert abs(np.trapezoid(psi(u) ** 2, u) - 2 * np.pi) < 1e-8
    assert abs(np.trapezoid(psi(u), u)) < 1e-12          # mean zero
    # phi really is -Lap Phi: radial finite-difference check away from 0
    h = 1e-4
    r = np.linspace(0.2, 0.9, 30)
    lap = ((Phi(r + h, 0.0) - 2 * Phi(r, 0.0) + Phi(r - h, 0.0)) / h ** 2
           + (Phi(r + h, 0.0) - Phi(r - h, 0.0)) / (2 * h) / r)
    assert np.abs(phi(r, 0.0) + lap).max() < 1e-4


def test_rescale_preserves_l2():
    _, phi_r, psi_r = geom3d.rescale_profiles(0.25, 0.6)
    s = np.linspace(0.0, 0.25, 20001)
    assert abs(np.trapezoid(phi_r(s, 0.0) ** 2 * 2 * np.pi * s, s)
               - 4 * np.pi ** 2) < 1e-7
    u = np.linspace(0.0, 0.6, 20001)
    assert abs(np.trapezoid(psi_r(u) ** 2, u) - 2 * np.pi) < 1e-8


def test_jet_divergence_free():
    lat = Lattice(3, 32)
    for d in geom3d.LAMBDA3[:3]:
        W, V, Wc = geom3d.jet(d, JET, 0.3, lat)
        total = W + Wc
        div = sp.differential(total, "div")
        assert sp.norm(div, "Lp", 2) < 1e-10 * sp.norm(total, "Lp", 2)


def test_jet_points_along_zeta():
    lat = Lattice(3, 32)
    d = geom3d.LAMBDA3[4]
    W, _, _ = geom3d.jet(d, JET, 0.0, lat)
    g = W.grid()
    # remove the zeta component; nothing transverse should remain
    proj = g - d.zeta[:, None, None, None] * np.einsum("i,i...->...", d.zeta, g)
    assert np.abs(proj).max() < 1e-12 * np.abs(g).max()


def test_jet_second_moment_normalized():
    # fint W otimes W = zeta otimes zeta, exact in frame coordinates
    for d in geom3d.LAMBDA3[:4]:
        M = geom3d.jet_second_moment(d, JET)
        assert np.abs(M - np.outer(d.zeta, d.zeta)).max() < 1e-8


def test_jet_time_periodicity():
    # the traveling phase has exact period 2 pi / (n* r_perp lam mu):
    # the samples recur identically, aliasing and all
    lat = Lattice(3, 32)
    d = geom3d.LAMBDA3[0]
    scale = JET.n_star * JET.r_perp * JET.lam
    period = 2 * np.pi / (scale * JET.mu)
    W0 = geom3d.jet(d, JET, 0.1, lat)[0]
    W1 = geom3d.jet(d, JET, 0.1 + period, lat)[0]
    assert np.abs(W0.c - W1.c).max() < 1e-12 * np.abs(W0.c).max()


def test_thin_tubes_disjoint():
    p = geom3d.JetParams(32, 1.0 / 32, 0.5, 1.0)
    dirs = geom3d.assign_shifts(p)
    lat = Lattice(3, 32)
    assert geom3d.support_overlap(dirs, p, lat) == 0.0


def test_fat_tubes_refuse_shifts():
    with pytest.raises(ValueError):
        geom3d.assign_shifts(geom3d.JetParams(2, 0.5, 0.8, 2.0))


def test_gamma3_reconstruction_bulk():
    rng = np.random.default_rng(3)
    n = 1000
    D = rng.standard_normal((n, 3, 3))
    D = (D + D.transpose(0, 2, 1)) / 2
    frob = np.sqrt((D ** 2).sum(axis=(1, 2)))
    D *= (rng.uniform(0, 0.5, n) / np.maximum(frob, 1e-12))[:, None, None]
    R = np.eye(3) + D
    g = geom3d.gamma3(R)
    assert np.all(g > 0)
    back = geom3d.reconstruct3(g)
    assert np.abs(back - R).max() < 1e-12


def test_gamma3_exact_at_identity():
    g = geom3d.gamma3(np.eye(3))
    assert np.abs(g - 0.5).max() < 1e-13


def test_gamma3_domain_error():
    with pytest.raises(ValueError):
        geom3d.gamma3(np.eye(3) + 0.6 * np.diag([1.0, 0.0, -1.0]) / np.sqrt(2))


def test_gamma3_positivity_radius_exceeds_half():
    assert geom3d.gamma3_positivity_radius() > 0.5


def test_antidiv3_inverts_divergence():
    lat = Lattice(3, 32)
    rng = np.random.default_rng(4)
    f = SpectralField.from_grid(lat, rng.standard_normal((3,) + lat.shape),
                                sp.VECTOR)
    f = sp.freq_filter(f, "below", 10).project_mean_zero()
    R = geom3d.antidiv3(f)
    assert R.trace_error() < 1e-12
    assert R.asym_error() < 1e-12
    err = sp.differential(R, "div") - f
    assert sp.norm(err, "Lp", 2) < 1e-10 * sp.norm(f, "Lp", 2)
