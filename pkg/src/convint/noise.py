"""Trace-class Wiener forcing: stochastic convolutions z1 (fractional
Stokes) and z2 (heat), scalar Brownian factors for the multiplicative
regime, and the stopping times that cap the noise pathwise.

Every Fourier mode of z1/z2 is an exact-discretization scalar
Ornstein-Uhlenbeck process (no Euler bias): over one step of size dt the
conditional law is

    z(t+dt) | z(t)  ~  N(e^{-lam dt} z(t), g^2 (1 - e^{-2 lam dt})/(2 lam))

with rate lam = |k|^{2m} (z1, after Leray projection of the vector noise)
resp. |k|^2 (z2).  The amplitude g_k acts on the orthonormal exponential
basis e^{ik.x}/(2 pi)^{n/2}, so the coefficient-space amplitude is
g_k / (2 pi)^{n/2}.

Reproducibility / adaptedness: the standard normals of step j come from a
counter-based Philox stream keyed (seed, j), so the path up to time t_j is a
function of the streams 1..j only -- altering later streams cannot change
the past.
"""

from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .spectral import SCALAR, VECTOR, SpectralField, TimeGridField


def sobolev_embedding_constant(lattice, sigma):
    """C_S with ||f||_inf <= C_S ||f||_{H^{(n+sigma)/2}} on the truncated
    lattice: the sharp Cauchy-Schwarz constant
    (sum_{0<|k| in band} |k|^{-(n+sigma)})^{1/2} / (2 pi)^{n/2}."""
    lat = lattice
    m = lat.band_mask & (lat.k2 > 0)
    s = (lat.k2[m] ** (-(lat.dim + sigma) / 2.0)).sum()
    return float(np.sqrt(s) / (2.0 * np.pi) ** (lat.dim / 2.0))


@dataclass
class NoiseSpec:
    """Diagonal covariance on the Fourier basis: eigenvalues g_k >= 0 (the
    k = 0 mode and everything outside the retained band are forced to zero,
    keeping the noise mean-zero and band-limited)."""
    lattice: object
    g: np.ndarray
    sigma: float

    def __post_init__(self):
        lat = self.lattice
        g = np.array(self.g, dtype=float)
        if g.shape != lat.shape:
            raise ValueError("eigenvalue array must match the lattice shape")
        if np.any(g < 0):
            raise ValueError("noise eigenvalues must be nonnegative")
        g[~lat.band_mask] = 0.0
        g[(0,) * lat.dim] = 0.0
        self.g = g
        if not self.sigma > 0:
            raise ValueError("regularity exponent sigma must be positive")

    @classmethod
    def power_law(cls, lattice, m, sigma=0.5, s0=None):
        """g_k = |k|^{-s0}; default s0 makes every required weighted trace
        converge (continuum criterion s0 > s + n/2) with margin 1/2."""
        lat = lattice
        if s0 is None:
            s0 = cls.required_regularity(lat.dim, m, sigma) + lat.dim / 2.0 + 0.5
        g = np.zeros(lat.shape)
        nz = lat.k2 > 0
        g[nz] = lat.k2[nz] ** (-s0 / 2.0)
        return cls(lat, g, sigma)

    @staticmethod
    def required_regularity(dim, m, sigma):
        """Largest Sobolev weight s whose trace must be finite."""
        return max(dim / 2.0 + 2.0 * sigma, (dim + 2.0) / 2.0 - m + 2.0 * sigma)

    def weighted_trace(self, s):
        """sum_k |k|^{2s} g_k^2 over the lattice."""
        lat = self.lattice
        nz = lat.k2 > 0
        return float((lat.k2[nz] ** s * self.g[nz] ** 2).sum())

    def trace_report(self, m):
        """Numerical check of the trace conditions: fits the decay exponent
        of g over dyadic shells and compares with the continuum
        convergence threshold."""
        lat = self.lattice
        s_max = self.required_regularity(lat.dim, m, self.sigma)
        kmag = np.sqrt(lat.k2)
        fit = None
        lo = kmag[(kmag >= 1) & (kmag < 2) & (self.g > 0)]
        hi_sel = (kmag >= lat.N // 4) & (self.g > 0)
        if lo.size and hi_sel.sum():
            glo = self.g[(kmag >= 1) & (kmag < 2) & (self.g > 0)].max()
            khi = kmag[hi_sel].min()
            ghi = self.g[hi_sel & (kmag == khi)].max() if (kmag[hi_sel] == khi).any() \
                else self.g[hi_sel].max()
            if ghi > 0:
                fit = -np.log(ghi / glo) / np.log(khi)
        threshold = s_max + lat.dim / 2.0
        return {
            "s_max": s_max,
            "trace_at_s_max": self.weighted_trace(s_max),
            "decay_exponent": fit,
            "continuum_threshold": threshold,
            "margin": None if fit is None else fit - threshold,
        }

    def validate(self, m, tol=0.0):
        rep = self.trace_report(m)
        if rep["margin"] is not None and rep["margin"] < -tol:
            raise ValueError(
                "noise spectrum decays like |k|^{-%.3g}, slower than the "
                "trace condition threshold %.3g" %
                (rep["decay_exponent"], rep["continuum_threshold"]))
        return rep


@dataclass
class NoisePath:
    seed: int
    t0: float
    t_end: float
    steps: int
    m: float
    spec1: NoiseSpec
    spec2: NoiseSpec
    z1: TimeGridField = None
    z2: TimeGridField = None
    # coefficient-space Wiener increments of the z2 equation, step j uses
    # db2[j]; shared with the temperature solver so theta and z2 are driven
    # by one path
    db2: np.ndarray = None

    @property
    def dt(self):
        return (self.t_end - self.t0) / self.steps

    def times(self):
        return self.t0 + self.dt * np.arange(self.steps + 1)


def _step_rng(seed, j):
    return np.random.Generator(np.random.Philox(key=[seed, j]))


def _white_coeffs(rng, lat, ncomp):
    """Band-limited complex white noise on the coefficient lattice with
    E|xi_k|^2 = 1 (conjugate-symmetric by construction)."""
    xi = rng.standard_normal((ncomp,) + lat.shape)
    c = np.fft.fftn(xi, axes=tuple(range(1, lat.dim + 1)))
    c /= float(lat.N) ** (lat.dim / 2.0)
    c[:, ~lat.band_mask] = 0.0
    return c


def sample_path(spec1, spec2, grid, m, seed):
    """Exact OU sampling of (z1, z2) on the time grid (t0, t_end, steps).
    z1 is the Leray-projected vector convolution with rate |k|^{2m}; z2 the
    scalar one with rate |k|^2; both start at zero."""
    if not (0.0 < m < 1.25):
        raise ValueError("dissipation exponent m must lie in (0, 5/4)")
    t0, t_end, steps = grid
    lat = spec1.lattice
    if spec2.lattice is not lat:
        raise ValueError("both noise specs must share one lattice")
    dt = (t_end - t0) / steps
    dim = lat.dim
    vol_half = (2.0 * np.pi) ** (dim / 2.0)

    lam1 = np.where(lat.k2 > 0, lat.k2 ** m, 1.0)
    lam2 = np.where(lat.k2 > 0, lat.k2.astype(float), 1.0)
    decay1, decay2 = np.exp(-lam1 * dt), np.exp(-lam2 * dt)
    # exact conditional standard deviations, in coefficient space
    sd1 = spec1.g / vol_half * np.sqrt((1.0 - np.exp(-2.0 * lam1 * dt)) / (2.0 * lam1))
    sd2 = spec2.g / vol_half * np.sqrt((1.0 - np.exp(-2.0 * lam2 * dt)) / (2.0 * lam2))

    z1c = np.zeros((dim,) + lat.shape, dtype=complex)
    z2c = np.zeros(lat.shape, dtype=complex)
    snaps1 = [SpectralField(lat, VECTOR, z1c.copy())]
    snaps2 = [SpectralField(lat, SCALAR, z2c.copy())]
    db2 = np.zeros((steps,) + lat.shape, dtype=complex)
    for j in range(1, steps + 1):
        rng = _step_rng(seed, j)
        xi1 = _white_coeffs(rng, lat, dim)
        xi2 = _white_coeffs(rng, lat, 1)[0]
        noise = SpectralField(lat, VECTOR, xi1)
        proj = sp.leray_project(noise).c
        z1c = decay1 * z1c + sd1 * proj
        z2c = decay2 * z2c + sd2 * xi2
        db2[j - 1] = spec2.g / vol_half * np.sqrt(dt) * xi2
        snaps1.append(SpectralField(lat, VECTOR, z1c.copy()))
        snaps2.append(SpectralField(lat, SCALAR, z2c.copy()))

    return NoisePath(seed=seed, t0=t0, t_end=t_end, steps=steps, m=m,
                     spec1=spec1, spec2=spec2,
                     z1=TimeGridField(t0, t_end, steps, snaps1),
                     z2=TimeGridField(t0, t_end, steps, snaps2),
                     db2=db2)


class StoppingTime(float):
    """A grid time with bookkeeping: which threshold fired (or none) and
    whether the grid ended before the cap was reached."""

    def __new__(cls, value, truncated=False, trigger=None):
        obj = super().__new__(cls, value)
        obj.truncated = bool(truncated)
        obj.trigger = trigger
        return obj


def _holder_running_max(norms_diff, times, delta, dt):
    """For each index j, the C^{1/2-2delta} seminorm over pairs i < i' <= j
    with |t - r| >= dt.  norms_diff[(i, i2)] -> norm of the difference."""
    exponent = 0.5 - 2.0 * delta
    n = len(times)
    run = np.zeros(n)
    cur = 0.0
    for j in range(1, n):
        for i in range(j):
            gap = times[j] - times[i]
            if gap < dt - 1e-12:
                continue
            cur = max(cur, norms_diff(i, j) / gap ** exponent)
        run[j] = cur
    return run


def stopping_time_TL(path, L, delta, C_S):
    """First grid time where either sup norm proxy
    C_S max_k ||z_k(t)||_{H^{(n+2+sigma)/2}} reaches L^{1/4} or the Hoelder
    seminorm C_S max_k ||z_k||_{C^{1/2-2delta} H^{(n+sigma)/2}} reaches
    L^{1/2}; capped at min(L, t_end)."""
    if not L > 1:
        raise ValueError("L must exceed 1")
    if not 0 < delta < 1.0 / 12.0:
        raise ValueError("delta must lie in (0, 1/12)")
    lat = path.spec1.lattice
    sigma = min(path.spec1.sigma, path.spec2.sigma)
    s_hi = (lat.dim + 2.0 + sigma) / 2.0
    s_lo = (lat.dim + sigma) / 2.0
    times = path.times()
    dt = path.dt

    sup_proxy = np.array([
        C_S * max(sp.norm(path.z1[j], "sobolev", s_hi),
                  sp.norm(path.z2[j], "sobolev", s_hi))
        for j in range(len(times))])

    def diff_norm(zfield):
        def f(i, j):
            d = SpectralField(lat, zfield.rank, zfield[j].c - zfield[i].c)
            return sp.norm(d, "sobolev", s_lo)
        return f

    hol = np.maximum(_holder_running_max(diff_norm(path.z1), times, delta, dt),
                     _holder_running_max(diff_norm(path.z2), times, delta, dt))
    hol *= C_S

    cap = min(L, path.t_end)
    fired = (sup_proxy >= L ** 0.25) | (hol >= np.sqrt(L))
    if fired.any():
        t_hit = times[int(np.argmax(fired))]
        if t_hit < cap:
            j = int(np.argmax(fired))
            trig = "sup" if sup_proxy[j] >= L ** 0.25 else "holder"
            return StoppingTime(t_hit, truncated=False, trigger=trig)
    truncated = path.t_end < L
    return StoppingTime(cap, truncated=truncated, trigger=None)


def m_L(L):
    """The pathwise exponential-factor bound sqrt(3) L^{1/4} e^{L^{1/4}/2}
    (so |Ups_k| + |Ups_k^{-1}| <= m_L^2 up to the stopping time)."""
    return np.sqrt(3.0) * L ** 0.25 * np.exp(L ** 0.25 / 2.0)


def brownian_regime(seed, grid, L, delta):
    """Scalar standard Brownian pair (B1, B2) with the geometric factors
    Ups_k = e^{B_k} and the stopping time: first grid time where
    max_k |B_k(t)| >= L^{1/4} or max_k [B_k]_{C^{1/2-2delta}} >= L^{1/2},
    capped at min(L, t_end).  Returns (B1, B2, Ups1, Ups2, T_L)."""
    if not L > 1:
        raise ValueError("L must exceed 1")
    if not 0 < delta < 1.0 / 12.0:
        raise ValueError("delta must lie in (0, 1/12)")
    t0, t_end, steps = grid
    dt = (t_end - t0) / steps
    B = np.zeros((2, steps + 1))
    for j in range(1, steps + 1):
        xi = _step_rng(seed, j).standard_normal(2)
        B[:, j] = B[:, j - 1] + np.sqrt(dt) * xi
    times = t0 + dt * np.arange(steps + 1)

    sup_proxy = np.abs(B).max(axis=0)
    hol = np.maximum(
        _holder_running_max(lambda i, j: abs(B[0, j] - B[0, i]), times, delta, dt),
        _holder_running_max(lambda i, j: abs(B[1, j] - B[1, i]), times, delta, dt))

    cap = min(L, t_end)
    fired = (sup_proxy >= L ** 0.25) | (hol >= np.sqrt(L))
    if fired.any() and times[int(np.argmax(fired))] < cap:
        j = int(np.argmax(fired))
        trig = "sup" if sup_proxy[j] >= L ** 0.25 else "holder"
        TL = StoppingTime(times[j], truncated=False, trigger=trig)
    else:
        TL = StoppingTime(cap, truncated=t_end < L, trigger=None)
    return B[0], B[1], np.exp(B[0]), np.exp(B[1]), TL
