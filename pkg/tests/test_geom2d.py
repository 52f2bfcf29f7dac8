"""2D building blocks and the trace-free geometric decomposition."""

import numpy as np
import pytest

from convint import geom2d, spectral as sp
from convint.spectral import Lattice, SpectralField


def test_direction_set_exact():
    for d in geom2d.LAMBDA2:
        assert abs(np.dot(d.zeta, d.zeta) - 1.0) < 1e-15
        assert abs(np.dot(d.zeta, d.perp)) < 1e-16
    assert float(geom2d.min_pair_separation()) >= 2.0 / 25 - 1e-15


def test_dirichlet_kernel_l2():
    lat = Lattice(2, 64)
    for r in (1, 3, 10):
        D = geom2d.dirichlet_kernel(r, lat)
        assert abs(sp.norm(D, "Lp", 2) - 2 * np.pi) < 1e-10


def test_b_is_perp_grad_psi():
    lat = Lattice(2, 64)
    for d in geom2d.LAMBDA_PLUS:
        b_re, b_im, psi_re, psi_im = geom2d.b_and_psi(d, 10, lat)
        for b, psi in ((b_re, psi_re), (b_im, psi_im)):
            g = sp.differential(psi, "perp_grad")
            assert np.abs(g.c - b.c).max() < 1e-13


def test_eta_normalization_and_symmetry():
    lat = Lattice(2, 64)
    params = geom2d.BlockParams2(10, 0.5, 2, 3.0)
    d = geom2d.LAMBDA_PLUS[0]
    eta = geom2d.eta_zeta(d, params, 0.37, lat)
    sq = sp.mul(eta, eta)
    assert abs(sq.mean() - 1.0) < 1e-10  # fint eta^2 = 1
    minus = geom2d.Direction2((-d.num[0], -d.num[1]), -1)
    eta_m = geom2d.eta_zeta(minus, params, 0.37, lat)
    assert np.array_equal(eta.c, eta_m.c)  # eta_{-zeta} = eta_zeta, exact


def test_eta_transport_identity():
    # (1/mu) dt eta = (zeta . grad) eta for the traveling profile
    lat = Lattice(2, 64)
    params = geom2d.BlockParams2(10, 0.5, 2, 3.0)
    h = 1e-6
    for d in geom2d.LAMBDA_PLUS:
        ep = geom2d.eta_zeta(d, params, 0.2 + h, lat)
        em = geom2d.eta_zeta(d, params, 0.2 - h, lat)
        dtc = (ep.c - em.c) / (2 * h)
        eta = geom2d.eta_zeta(d, params, 0.2, lat)
        adv = sum(d.zeta[i] * sp.differential(eta, "partial", i).c for i in range(2))
        num = np.sqrt((np.abs(dtc / params.mu - adv) ** 2).sum() * lat.volume)
        assert num < 1e-8


def test_flow_covariance():
    # fint W otimes conj(W) = eta^2-weighted zeta_perp outer zeta_perp
    lat = Lattice(2, 64)
    params = geom2d.BlockParams2(10, 0.5, 1, 2.0)
    d = geom2d.LAMBDA_PLUS[1]
    w_re, w_im = geom2d.W_flow(d, params, 0.1, lat)
    # mean of W_re W_re^T + W_im W_im^T equals zeta_perp outer zeta_perp
    T = sp.outer(w_re, w_re) + sp.outer(w_im, w_im)
    zz = np.outer(d.perp, d.perp)
    assert np.abs(T.mean() - zz).max() < 1e-8


def test_pc_pair_divergence_free():
    # perp_grad(a eta psi) is the p+c pair; divergence-free by construction
    lat = Lattice(2, 64)
    params = geom2d.BlockParams2(10, 0.5, 1, 2.0)
    d = geom2d.LAMBDA_PLUS[0]
    eta = geom2d.eta_zeta(d, params, 0.0, lat)
    _, psipair = geom2d.pair_fields(d, params.lam, lat)
    w = sp.differential(sp.mul(eta, psipair), "perp_grad")
    assert w.solenoidal_error() < 1e-13
    assert np.abs(w.mean()).max() < 1e-14


def test_gamma2_reconstruction_bulk():
    rng = np.random.default_rng(0)
    n = 1000
    R = np.zeros((n, 2, 2))
    a = rng.uniform(-0.25, 0.25, n)
    b = rng.uniform(-0.25, 0.25, n)
    R[:, 0, 0], R[:, 1, 1] = a, -a
    R[:, 0, 1] = R[:, 1, 0] = b
    frob = np.sqrt((R ** 2).sum(axis=(1, 2)))
    R[frob > 0.5] *= (0.5 / frob[frob > 0.5])[:, None, None]
    g = geom2d.gamma2(R)
    assert np.all(g > 0)
    back = geom2d.reconstruct2(g)
    assert np.abs(back - R).max() < 1e-12


def test_gamma2_domain_error():
    bad = np.array([[0.6, 0.0], [0.0, -0.6]])
    with pytest.raises(ValueError):
        geom2d.gamma2(bad)


def test_gamma2_positivity_radius_exceeds_half():
    assert geom2d.gamma2_positivity_radius() > 0.5


def test_antidiv2_inverts_divergence():
    lat = Lattice(2, 64)
    rng = np.random.default_rng(1)
    f = SpectralField.from_grid(lat, rng.standard_normal((2,) + lat.shape),
                                sp.VECTOR)
    f = sp.freq_filter(f, "below", 20).project_mean_zero()
    R = geom2d.antidiv2(f)
    assert R.trace_error() < 1e-12
    assert R.asym_error() < 1e-12
    err = sp.differential(R, "div") - f
    assert sp.norm(err, "Lp", 2) < 1e-10 * sp.norm(f, "Lp", 2)


def test_antidiv2_rejects_mean():
    lat = Lattice(2, 16)
    f = SpectralField.from_grid(lat, np.stack([np.ones(lat.shape),
                                               np.zeros(lat.shape)]), sp.VECTOR)
    with pytest.raises(ValueError):
        geom2d.antidiv2(f)


def test_block_params_validation():
    with pytest.raises(ValueError):
        geom2d.BlockParams2(10, 0.3, 1, 2.0)   # lam*sigma = 3, not in 5N
    with pytest.raises(ValueError):
        geom2d.BlockParams2(10, 0.5, 0, 2.0)   # r must be >= 1
