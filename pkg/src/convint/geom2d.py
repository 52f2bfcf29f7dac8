"""2D building blocks: intermittent stationary flows, the trace-free
geometric decomposition, and the symmetric antidivergence.

Direction set: Lambda+ = {(3 e1 +/- 4 e2)/5, (4 e1 +/- 3 e2)/5},
Lambda- = -Lambda+.  All direction arithmetic is exact (rationals over 5).
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import spectral as sp
from .spectral import SCALAR, VECTOR, SpectralField

# ---------------------------------------------------------------------------
# directions
# ---------------------------------------------------------------------------

_RAW_PLUS = [(3, 4), (3, -4), (4, 3), (4, -3)]  # numerators over 5


@dataclass(frozen=True)
class Direction2:
    num: tuple          # 5*zeta as integers
    sign: int           # +1 for Lambda+, -1 for Lambda-

    @property
    def zeta(self):
        return np.array(self.num, dtype=float) / 5.0

    @property
    def perp(self):
        # zeta_perp = (-zeta2, zeta1)
        return np.array([-self.num[1], self.num[0]], dtype=float) / 5.0

    @property
    def frac(self):
        return (Fraction(self.num[0], 5), Fraction(self.num[1], 5))


LAMBDA_PLUS = [Direction2(n, +1) for n in _RAW_PLUS]
LAMBDA_MINUS = [Direction2((-a, -b), -1) for a, b in _RAW_PLUS]
LAMBDA2 = LAMBDA_PLUS + LAMBDA_MINUS


def min_pair_separation():
    """min |zeta + zeta'| over zeta' != -zeta, computed exactly; >= sqrt(2)/5."""
    best = None
    for d1 in LAMBDA2:
        for d2 in LAMBDA2:
            s = (Fraction(d1.num[0] + d2.num[0], 5),
                 Fraction(d1.num[1] + d2.num[1], 5))
            if s == (0, 0):
                continue
            q = s[0] * s[0] + s[1] * s[1]
            if best is None or q < best:
                best = q
    return best  # exact Fraction of |zeta+zeta'|^2


@dataclass(frozen=True)
class BlockParams2:
    lam: int      # lambda, in 5N (10N at schedule level)
    sigma: float  # sigma with lam*sigma in 5N
    r: int
    mu: float

    def __post_init__(self):
        ls = self.lam * self.sigma
        if abs(ls - round(ls)) > 1e-9 or round(ls) % 5:
            raise ValueError("lambda*sigma must lie in 5N")
        if self.r < 1 or self.r != int(self.r):
            raise ValueError("r must be a positive integer")

    @property
    def lam_sigma(self):
        return int(round(self.lam * self.sigma))

    def ordering_report(self):
        """1 << r << mu << 1/sigma << lambda — advisory at desk scale."""
        chain = [1.0, float(self.r), float(self.mu), 1.0 / self.sigma,
                 float(self.lam)]
        return {"chain (1, r, mu, 1/sigma, lambda)": chain,
                "strictly_increasing": all(a < b for a, b in zip(chain, chain[1:]))}


# ---------------------------------------------------------------------------
# blocks
# ---------------------------------------------------------------------------

def b_and_psi(direction, lam, lattice):
    """The oscillatory pair b_zeta = i zeta_perp e^{i lam zeta.x},
    psi_zeta = lam^{-1} e^{i lam zeta.x}, returned as (real, imaginary)
    component fields: (b_re, b_im, psi_re, psi_im), with b = perp_grad(psi)
    part by part."""
    zeta = direction.zeta
    lz = lam * zeta
    if np.abs(lz - np.round(lz)).max() > 1e-9:
        raise ValueError("lam*zeta not an integer vector: flow is not periodic")
    lat = lattice
    phase = lz[0] * lat.x[0] + lz[1] * lat.x[1]
    cos, sin = np.cos(phase), np.sin(phase)
    perp = direction.perp
    b_re = SpectralField.from_grid(lat, np.stack([-sin * perp[0], -sin * perp[1]]), VECTOR)
    b_im = SpectralField.from_grid(lat, np.stack([cos * perp[0], cos * perp[1]]), VECTOR)
    psi_re = SpectralField.from_grid(lat, cos / lam)
    psi_im = SpectralField.from_grid(lat, sin / lam)
    return b_re, b_im, psi_re, psi_im


def pair_fields(direction, lam, lattice):
    """Real combinations for the +/- zeta pair of the flow:
    sum over {zeta, -zeta} of b and psi, i.e. 2 Re b and 2 Re psi."""
    b_re, _, psi_re, _ = b_and_psi(direction, lam, lattice)
    return 2.0 * b_re, 2.0 * psi_re


def dirichlet_kernel(r, lattice):
    """D_r = (2r+1)^{-1} sum over the box |k_i| <= r of e^{i k.x}."""
    if r != int(r) or r < 1:
        raise ValueError("r must be a positive integer")
    r = int(r)
    lat = lattice
    if 2 * r >= lat.N // 2:
        raise ValueError("Dirichlet box does not fit the lattice band")
    f = SpectralField.zero(lat, SCALAR)
    w = 1.0 / (2 * r + 1)
    for k1 in range(-r, r + 1):
        for k2 in range(-r, r + 1):
            f.c[k1, k2] = w
    return f


def eta_zeta(direction, params, t, lattice):
    """Traveling intermittent profile
    eta_zeta(t,x) = D_r(lam sig (zeta.x + mu t), lam sig zeta_perp.x)
    for zeta in Lambda+; for zeta in Lambda-, eta_zeta = eta_{-zeta}.
    Built directly in Fourier space (exact)."""
    d = direction if direction.sign > 0 else Direction2(
        (-direction.num[0], -direction.num[1]), +1)
    lat = lattice
    ls = params.lam_sigma
    r = params.r
    zn = d.num  # 5*zeta
    f = SpectralField.zero(lat, SCALAR)
    w = 1.0 / (2 * r + 1)
    half = lat.N // 2
    for j1 in range(-r, r + 1):
        for j2 in range(-r, r + 1):
            # mode: (ls/5) * (j1*zeta*5 + j2*zetaperp*5)
            k1 = (ls // 5) * (j1 * zn[0] - j2 * zn[1])
            k2 = (ls // 5) * (j1 * zn[1] + j2 * zn[0])
            if max(abs(k1), abs(k2)) > half - 1:
                raise ValueError("eta mode (%d,%d) outside the lattice band" % (k1, k2))
            f.c[k1, k2] += w * np.exp(1j * ls * params.mu * j1 * t)
    return f


def W_flow(direction, params, t, lattice):
    """W_zeta = eta_zeta * b_zeta; returned as (real part, imaginary part)."""
    eta = eta_zeta(direction, params, t, lattice)
    b_re, b_im, _, _ = b_and_psi(direction, params.lam, lattice)
    return sp.mul(eta, b_re), sp.mul(eta, b_im)


# ---------------------------------------------------------------------------
# geometric lemma
# ---------------------------------------------------------------------------

def _generator():
    # columns: contribution of c_zeta (counting zeta and -zeta) to (S11, S12)
    cols = []
    for d in LAMBDA_PLUS:
        z = d.zeta
        cols.append([2.0 * (z[0] * z[0] - 0.5), 2.0 * (z[0] * z[1])])
    return np.array(cols).T  # 2 x 4


_G2 = _generator()
_A2 = np.linalg.pinv(_G2)  # 4 x 2, min-norm right inverse
GAMMA2_K = 1.0


def gamma2_coefficients():
    """(K, A) with gamma_zeta(R)^2 = K + A_zeta . (R11, R12)."""
    return GAMMA2_K, _A2.copy()


def gamma2_positivity_radius():
    """Largest Frobenius ball |R| <= rho on which every gamma^2 stays
    positive: K / max_zeta |A_zeta| * sqrt(2) (|(R11,R12)| = |R|_F/sqrt2)."""
    amax = np.sqrt((_A2 ** 2).sum(axis=1)).max()
    return GAMMA2_K / amax * np.sqrt(2.0)


def gamma2(R, check_domain=True):
    """gamma_zeta(R) for trace-free symmetric R (last two axes 2x2, any
    leading shape).  Returns array of shape (4,) + leading, ordered like
    LAMBDA_PLUS; gamma_{-zeta} = gamma_zeta by construction."""
    R = np.asarray(R, dtype=float)
    R11 = R[..., 0, 0]
    R12 = R[..., 0, 1]
    if check_domain:
        frob = np.sqrt(2.0 * (R11 ** 2 + R12 ** 2))
        if np.any(frob > 0.5 + 1e-12):
            raise ValueError("matrix outside the |R| <= 1/2 ball")
    c = GAMMA2_K + np.tensordot(_A2, np.stack([R11, R12]), axes=([1], [0]))
    if np.any(c < 0):
        raise ValueError("negative radicand: outside the positivity ball")
    return np.sqrt(c)


def reconstruct2(gammas):
    """sum over Lambda of gamma^2 (zeta tf-outer zeta) for testing."""
    out = np.zeros(gammas.shape[1:] + (2, 2))
    for i, d in enumerate(LAMBDA_PLUS):
        z = d.zeta
        zz = np.outer(z, z) - 0.5 * np.eye(2)
        out += 2.0 * gammas[i][..., None, None] ** 2 * zz
    return out


# ---------------------------------------------------------------------------
# antidivergence
# ---------------------------------------------------------------------------

def antidiv2(f):
    """Rf = grad g + (grad g)^T - (div g) Id with Laplace g = f (mean-zero f);
    then div(Rf) = f, Rf symmetric trace-free."""
    if f.rank != VECTOR or f.lattice.dim != 2:
        raise ValueError("antidiv2 needs a 2D vector field")
    if np.max(np.abs(f.mean())) > 1e-10 * max(np.abs(f.c).max(), 1e-300):
        raise ValueError("antidiv2 needs a mean-zero field")
    g = sp.inv_laplacian(f)
    gg = sp.differential(g, "grad")  # (i,j) = d_j g_i
    out = gg.copy()
    out.c = gg.c + np.swapaxes(gg.c, 0, 1)
    divg = sum(gg.c[i, i] for i in range(2))
    for i in range(2):
        out.c[i, i] -= divg
    return out


def flow_constant():
    """C_Lambda = 2 sqrt(12) (4 pi^2 + 1)^{1/2} |Lambda| and the derived
    M = C_Lambda sup gamma (with the gamma realized here); reported, not
    assumed."""
    c_lambda = 2.0 * np.sqrt(12.0) * np.sqrt(4 * np.pi ** 2 + 1.0) * len(LAMBDA2)
    # sup of gamma over the closed |R|<=1/2 ball for our affine realization
    amax = np.sqrt((_A2 ** 2).sum(axis=1)).max()
    sup_gamma = np.sqrt(GAMMA2_K + amax * 0.5 / np.sqrt(2.0))
    return {"C_Lambda": c_lambda, "sup_gamma": sup_gamma,
            "M": c_lambda * sup_gamma}
