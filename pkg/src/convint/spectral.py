"""Torus field algebra.

Real periodic fields on T^n = [0, 2pi)^n, n in {2, 3}, represented by their
Fourier coefficients on the symmetric frequency box |k_i| <= N/2 - 1 (the
Nyquist line is always zeroed so that every field has an unambiguous real
trigonometric interpolant).  All differential operators, projections and
mollifiers are exact Fourier multipliers.  Products of fields are computed
pointwise on a 3N/2 zero-padded grid and truncated back to the retained band;
with the Nyquist line empty this evaluates the retained coefficients of the
product of the interpolants *exactly*, so every bilinear identity used by the
construction (Leibniz rearrangements, telescoping of the stress decomposition)
holds to machine precision.

Conventions: a field is f(x) = sum_k c_k e^{i k.x}; then
||f||_{L^2}^2 = (2pi)^n sum_k |c_k|^2.
"""

import json
import os
import pathlib

import numpy as np
from scipy import fft as _fft
from scipy import integrate, special

WORKERS = int(os.environ.get("CONVINT_THREADS", str(os.cpu_count() or 1)))

SCALAR = "scalar"
VECTOR = "vector"
TENSOR = "tensor"


class Lattice:
    """Frequency lattice of a uniform N^n grid on [0,2pi)^n.

    Cached per (dim, N); holds the integer wavenumber grids, |k|^2, the
    x-collocation grid and the zero-padding bookkeeping for dealiased
    products.
    """

    _cache = {}

    def __new__(cls, dim, N):
        key = (dim, N)
        if key in cls._cache:
            return cls._cache[key]
        self = super().__new__(cls)
        cls._cache[key] = self
        if dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if N < 8 or N % 2:
            raise ValueError("resolution must be even and >= 8")
        self.dim = dim
        self.N = N
        self.shape = (N,) * dim
        k1 = np.fft.fftfreq(N, d=1.0 / N).astype(np.int64)  # 0..N/2-1, -N/2..-1
        self.k_axis = k1
        grids = np.meshgrid(*([k1] * dim), indexing="ij")
        self.k = [g.astype(np.float64) for g in grids]
        self.k_int = grids
        self.k2 = sum(g.astype(np.float64) ** 2 for g in grids)
        self.kmag = np.sqrt(self.k2)
        # retained band: |k_i| <= N/2 - 1 on every axis (Nyquist zeroed)
        half = N // 2
        self.band_mask = np.ones(self.shape, dtype=bool)
        for g in grids:
            self.band_mask &= np.abs(g) <= half - 1
        x1 = np.arange(N) * (2 * np.pi / N)
        self.x = np.meshgrid(*([x1] * dim), indexing="ij")
        self.x_axis = x1
        # padded grid for products
        self.M = 3 * N // 2
        self.cell_volume = (2 * np.pi / N) ** dim
        self.volume = (2 * np.pi) ** dim
        self._mollifier_cache = {}
        return self

    # index slabs mapping retained coefficients into a length-M axis
    def _pad_axes(self, c):
        N, M = self.N, self.M
        half = N // 2
        out = np.zeros(c.shape[: c.ndim - self.dim] + (M,) * self.dim, dtype=complex)
        src = [slice(None)] * (c.ndim - self.dim)
        dst = [slice(None)] * (c.ndim - self.dim)
        pos = slice(0, half)
        neg_src = slice(half + 1, N)
        neg_dst = slice(M - half + 1, M)
        for sel in np.ndindex(*((2,) * self.dim)):
            s = list(src) + [pos if b == 0 else neg_src for b in sel]
            d = list(dst) + [pos if b == 0 else neg_dst for b in sel]
            out[tuple(d)] = c[tuple(s)]
        return out

    def _trunc_axes(self, C):
        N, M = self.N, self.M
        half = N // 2
        out = np.zeros(C.shape[: C.ndim - self.dim] + (N,) * self.dim, dtype=complex)
        pos = slice(0, half)
        neg_src = slice(M - half + 1, M)
        neg_dst = slice(half + 1, N)
        for sel in np.ndindex(*((2,) * self.dim)):
            s = [pos if b == 0 else neg_src for b in sel]
            d = [pos if b == 0 else neg_dst for b in sel]
            out[(Ellipsis,) + tuple(d)] = C[(Ellipsis,) + tuple(s)]
        # Nyquist line of the product is dropped by construction
        return out


def _ncomp(rank, dim):
    return {SCALAR: (), VECTOR: (dim,), TENSOR: (dim, dim)}[rank]


class SpectralField:
    """A real scalar/vector/tensor field stored as Fourier coefficients.

    data shape = component shape + lattice shape, complex128.
    """

    __slots__ = ("lattice", "rank", "c", "meta", "_pg")

    def __init__(self, lattice, rank, c=None, meta=None):
        self.lattice = lattice
        self.rank = rank
        shape = _ncomp(rank, lattice.dim) + lattice.shape
        if c is None:
            c = np.zeros(shape, dtype=complex)
        assert c.shape == shape, (c.shape, shape)
        self.c = c
        self.meta = dict(meta or {})
        self._pg = None

    # --- constructors -------------------------------------------------
    @classmethod
    def from_grid(cls, lattice, values, rank=SCALAR):
        values = np.asarray(values, dtype=float)
        c = _fft.fftn(values, axes=range(-lattice.dim, 0), workers=WORKERS)
        c /= lattice.N ** lattice.dim
        c *= lattice.band_mask
        return cls(lattice, rank, c)

    @classmethod
    def zero(cls, lattice, rank=SCALAR):
        return cls(lattice, rank)

    def copy(self):
        return SpectralField(self.lattice, self.rank, self.c.copy(), self.meta)

    # --- basic views --------------------------------------------------
    def grid(self):
        g = _fft.ifftn(self.c, axes=range(-self.lattice.dim, 0), workers=WORKERS)
        g *= self.lattice.N ** self.lattice.dim
        return np.ascontiguousarray(g.real)

    def padded_grid(self):
        """Values on the 3N/2 dealiasing grid (cached)."""
        if self._pg is None:
            lat = self.lattice
            C = lat._pad_axes(self.c)
            g = _fft.ifftn(C, axes=range(-lat.dim, 0), workers=WORKERS)
            g *= lat.M ** lat.dim
            self._pg = np.ascontiguousarray(g.real)
        return self._pg

    def drop_cache(self):
        self._pg = None

    def mean(self):
        idx = (Ellipsis,) + (0,) * self.lattice.dim
        return self.c[idx].real

    def project_mean_zero(self):
        out = self.copy()
        idx = (Ellipsis,) + (0,) * self.lattice.dim
        out.c[idx] = 0.0
        return out

    # --- arithmetic (same lattice/rank) -------------------------------
    def _assert_compat(self, other):
        if self.lattice is not other.lattice or self.rank != other.rank:
            raise ValueError("incompatible fields")

    def __add__(self, other):
        self._assert_compat(other)
        return SpectralField(self.lattice, self.rank, self.c + other.c)

    def __sub__(self, other):
        self._assert_compat(other)
        return SpectralField(self.lattice, self.rank, self.c - other.c)

    def __mul__(self, a):
        return SpectralField(self.lattice, self.rank, self.c * float(a))

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.lattice, self.rank, -self.c)

    # --- flags --------------------------------------------------------
    def solenoidal_error(self):
        if self.rank != VECTOR:
            raise ValueError("solenoidal flag applies to vector fields")
        lat = self.lattice
        d = sum(1j * lat.k[i] * self.c[i] for i in range(lat.dim))
        scale = np.abs(self.c).max() or 1.0
        return float(np.abs(d).max() / scale)

    def trace_error(self):
        tr = sum(self.c[i, i] for i in range(self.lattice.dim))
        scale = np.abs(self.c).max() or 1.0
        return float(np.abs(tr).max() / scale)

    def asym_error(self):
        e = 0.0
        for i in range(self.lattice.dim):
            for j in range(i):
                e = max(e, float(np.abs(self.c[i, j] - self.c[j, i]).max()))
        scale = np.abs(self.c).max() or 1.0
        return e / scale


# ----------------------------------------------------------------------
# differential / projection operators (exact multipliers)
# ----------------------------------------------------------------------

def frac_laplacian(f, alpha):
    """(-Laplace)^alpha: multiply mode k by |k|^(2 alpha)."""
    lat = f.lattice
    if alpha < 0 and np.max(np.abs(f.mean())) > 1e-13:
        raise ValueError("negative power of the Laplacian needs a mean-zero field")
    mult = np.zeros(lat.shape)
    nz = lat.k2 > 0
    mult[nz] = lat.k2[nz] ** alpha
    if alpha > 0:
        pass  # k=0 annihilated
    out = SpectralField(lat, f.rank, f.c * mult)
    if alpha <= 0:
        # k = 0 dropped; caller guaranteed mean zero
        idx = (Ellipsis,) + (0,) * lat.dim
        out.c[idx] = 0.0
    return out


def inv_laplacian(f):
    """Delta^{-1} on the mean-zero part (k=0 dropped)."""
    lat = f.lattice
    mult = np.zeros(lat.shape)
    nz = lat.k2 > 0
    mult[nz] = -1.0 / lat.k2[nz]
    return SpectralField(lat, f.rank, f.c * mult)


def leray_project(v):
    """Remove the gradient part: vhat(k) -> vhat(k) - k (k.vhat)/|k|^2."""
    if v.rank != VECTOR:
        raise ValueError("leray_project needs a vector field")
    lat = v.lattice
    kv = sum(lat.k[i] * v.c[i] for i in range(lat.dim))
    k2 = np.where(lat.k2 > 0, lat.k2, 1.0)
    out = np.empty_like(v.c)
    for i in range(lat.dim):
        out[i] = v.c[i] - lat.k[i] * kv / k2
    # k = 0 mode preserved (kv term vanishes there anyway since k=0)
    res = SpectralField(lat, VECTOR, out)
    res.meta["solenoidal"] = True
    return res


def differential(f, op, i=None):
    """grad | div | curl | perp_grad | partial(i), exact ik multipliers."""
    lat = f.lattice
    ik = [1j * k for k in lat.k]
    if op == "partial":
        return SpectralField(lat, f.rank, f.c * ik[i])
    if op == "grad":
        if f.rank == SCALAR:
            out = np.stack([f.c * ik[a] for a in range(lat.dim)])
            return SpectralField(lat, VECTOR, out)
        if f.rank == VECTOR:  # gradient matrix (d_j f_i)
            out = np.stack([np.stack([f.c[b] * ik[a] for a in range(lat.dim)])
                            for b in range(lat.dim)])
            return SpectralField(lat, TENSOR, out)
        raise ValueError("grad of tensor not supported")
    if op == "div":
        if f.rank == VECTOR:
            out = sum(f.c[a] * ik[a] for a in range(lat.dim))
            return SpectralField(lat, SCALAR, out)
        if f.rank == TENSOR:  # row-wise: (div T)_i = d_j T_ij
            out = np.stack([sum(f.c[b, a] * ik[a] for a in range(lat.dim))
                            for b in range(lat.dim)])
            return SpectralField(lat, VECTOR, out)
        raise ValueError("div needs vector or tensor")
    if op == "curl":
        if lat.dim != 3 or f.rank != VECTOR:
            raise ValueError("curl needs a 3D vector field")
        cx = f.c
        out = np.stack([
            cx[2] * ik[1] - cx[1] * ik[2],
            cx[0] * ik[2] - cx[2] * ik[0],
            cx[1] * ik[0] - cx[0] * ik[1],
        ])
        return SpectralField(lat, VECTOR, out)
    if op == "perp_grad":
        if lat.dim != 2 or f.rank != SCALAR:
            raise ValueError("perp_grad needs a 2D scalar field")
        out = np.stack([-f.c * ik[1], f.c * ik[0]])
        return SpectralField(lat, VECTOR, out)
    raise ValueError("unknown op %r" % (op,))


def freq_filter(f, kind, r=None):
    """Sharp Fourier cutoffs: below(r), at_or_above(r), nonzero."""
    lat = f.lattice
    if kind == "below":
        mask = lat.kmag < r
    elif kind == "at_or_above":
        mask = lat.kmag >= r
    elif kind == "nonzero":
        mask = lat.k2 > 0
    else:
        raise ValueError(kind)
    return SpectralField(lat, f.rank, f.c * mask)


# ----------------------------------------------------------------------
# norms
# ----------------------------------------------------------------------

def _pointwise_magnitude(f):
    g = f.grid()
    if f.rank == SCALAR:
        return np.abs(g)
    axes = tuple(range(g.ndim - f.lattice.dim))
    return np.sqrt((g ** 2).sum(axis=axes))


def norm(f, kind, order=None):
    """Lp(p) | sobolev(s) | CN(N).  Vector/tensor fields via the pointwise
    Frobenius magnitude; L^p by quadrature on the collocation grid."""
    lat = f.lattice
    if kind == "Lp":
        p = float(order)
        mag = _pointwise_magnitude(f)
        if np.isinf(p):
            return float(mag.max())
        return float((mag ** p).sum() * lat.cell_volume) ** (1.0 / p)
    if kind == "sobolev":
        s = float(order)
        w = np.zeros(lat.shape)
        nz = lat.k2 > 0
        w[nz] = lat.k2[nz] ** s
        total = (np.abs(f.c) ** 2 * w).sum()
        return float(np.sqrt(lat.volume * total))
    if kind == "CN":
        Nn = int(order)
        total = 0.0
        # sum over multi-indices |a| <= N of sup norms of D^a f
        def rec(field, depth, start):
            nonlocal total
            total += norm(field, "Lp", np.inf)
            if depth == Nn:
                return
            for ax in range(start, lat.dim):
                rec(differential(field, "partial", ax), depth + 1, ax)
        rec(f, 0, 0)
        return total
    raise ValueError(kind)


# ----------------------------------------------------------------------
# dealiased products
# ----------------------------------------------------------------------

def _product_from_grids(lat, grids_out, rank):
    """fft the padded grid values and truncate to the retained band."""
    comp = np.asarray(grids_out)
    C = _fft.fftn(comp, axes=range(-lat.dim, 0), workers=WORKERS)
    C /= lat.M ** lat.dim
    c = lat._trunc_axes(C)
    shape = _ncomp(rank, lat.dim) + lat.shape
    return SpectralField(lat, rank, c.reshape(shape))


def mul(a, b):
    """Pointwise product; at least one operand scalar."""
    lat = a.lattice
    ga, gb = a.padded_grid(), b.padded_grid()
    if a.rank == SCALAR:
        out_rank = b.rank
        g = ga * gb
    elif b.rank == SCALAR:
        out_rank = a.rank
        g = ga * gb
    else:
        raise ValueError("use outer/dot for vector-vector products")
    return _product_from_grids(lat, g, out_rank)


def dot(a, b):
    """Pointwise inner product of two vector (or tensor) fields -> scalar."""
    lat = a.lattice
    ga, gb = a.padded_grid(), b.padded_grid()
    axes = tuple(range(ga.ndim - lat.dim))
    return _product_from_grids(lat, (ga * gb).sum(axis=axes), SCALAR)


def outer(a, b):
    """a tensor b for vector fields."""
    lat = a.lattice
    if a.rank != VECTOR or b.rank != VECTOR:
        raise ValueError("outer needs two vector fields")
    ga, gb = a.padded_grid(), b.padded_grid()
    g = ga[:, None] * gb[None, :]
    return _product_from_grids(lat, g, TENSOR)


def tensor_ops(a, b, variant):
    """outer-product family: plain, symmetrized, and trace-free variants.

    symmetrize / trace_free_part accept a single tensor field as `a` (b=None).
    """
    lat = a.lattice
    if variant in ("outer", "tensor"):
        return _alias_guard(outer(a, b), a, b)
    if variant in ("trace_free", "trace_free_outer"):
        t = outer(a, b)
        return _alias_guard(trace_free_part(t), a, b)
    if variant == "symmetrize":
        out = a.copy()
        out.c = 0.5 * (a.c + np.swapaxes(a.c, 0, 1))
        return out
    if variant == "trace_free_part":
        return trace_free_part(a)
    raise ValueError(variant)


def _alias_guard(result, a, b):
    lat = a.lattice
    half = lat.N // 2

    def maxfreq(f):
        mags = np.abs(f.c)
        if f.rank != SCALAR:
            mags = mags.reshape((-1,) + lat.shape).max(axis=0)
        nz = mags > 1e-14 * (mags.max() or 1.0)
        if not nz.any():
            return 0
        return int(max(np.abs(g[nz]).max() for g in lat.k_int))

    if maxfreq(a) + maxfreq(b) > half - 1:
        result.meta["aliasing_warning"] = True
    return result


def trace_free_part(t):
    lat = t.lattice
    out = t.copy()
    tr = sum(t.c[i, i] for i in range(lat.dim)) / lat.dim
    for i in range(lat.dim):
        out.c[i, i] -= tr
    return out


def trace_free_outer_sym(a, b):
    """a ⊗̊ b + b ⊗̊ a, the combination the stress terms use."""
    t = outer(a, b)
    t.c = t.c + np.swapaxes(t.c, 0, 1)
    return trace_free_part(t)


# ----------------------------------------------------------------------
# mollifiers
# ----------------------------------------------------------------------

def _bump(u):
    """C-infinity bump exp(-1/(1-u^2)) on (-1,1), vectorized, 0 outside."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ui * ui))
    return out


def _space_kernel_transform(lat, lscale):
    """Fourier transform of the radial unit-mass bump phi_l at each |k|."""
    dim = lat.dim
    # normalize mass of the radial bump in R^dim
    if dim == 2:
        mass = 2 * np.pi * integrate.quad(lambda s: _bump(s) * s, 0, 1)[0]
    else:
        mass = 4 * np.pi * integrate.quad(lambda s: _bump(s) * s * s, 0, 1)[0]
    kl = lat.kmag * lscale
    uniq, inv = np.unique(np.round(kl, 12), return_inverse=True)
    vals = np.empty_like(uniq)
    s = np.linspace(0.0, 1.0, 513)
    w = _bump(s)
    for idx, kappa in enumerate(uniq):
        if dim == 2:
            f = w * s * special.j0(kappa * s)
            vals[idx] = 2 * np.pi * np.trapezoid(f, s) / mass
        else:
            f = w * s * s * np.sinc(kappa * s / np.pi)
            vals[idx] = 4 * np.pi * np.trapezoid(f, s) / mass
    return vals[inv].reshape(lat.shape)


def mollify_space(f, l):
    """Convolution with the radial C-infinity bump phi_l, as a multiplier."""
    if l <= 0:
        raise ValueError("l must be positive")
    lat = f.lattice
    key = round(float(l), 14)
    if key not in lat._mollifier_cache:
        lat._mollifier_cache[key] = _space_kernel_transform(lat, l)
    return SpectralField(lat, f.rank, f.c * lat._mollifier_cache[key])


def time_kernel(l, dt):
    """Discrete weights of the one-sided time mollifier on (0, l].

    Returns w[1..J] with sum w = 1; the convolution at slice j reads
    slices j-1 .. j-J (constant extension below the first slice).
    """
    J = int(np.floor(l / dt + 1e-12))
    if J < 1:
        raise ValueError("time mollifier narrower than the grid spacing dt")
    s = (np.arange(1, J + 1) - 0.5) * dt / l  # midpoint of each step cell
    w = _bump(2 * s - 1.0)  # bump on (0,1)
    if w.sum() == 0:
        w = np.ones(J)
    return w / w.sum()


def time_derivative_kernel(l, dt):
    """Weights realizing convolution with phi_l'; corrected so that a
    constant maps to 0 and a unit slope to 1, exactly."""
    J = int(np.floor(l / dt + 1e-12))
    if J < 1:
        raise ValueError("time mollifier narrower than the grid spacing dt")
    s = (np.arange(1, J + 1) - 0.5) * dt / l
    u = 2 * s - 1.0
    d = np.zeros(J)
    inside = np.abs(u) < 1
    d[inside] = _bump(u[inside]) * (-2 * u[inside] / (1 - u[inside] ** 2) ** 2) * 2 / l
    d *= dt
    # affine correction: sum d = 0 and sum (s_j * dt) d_j = -1
    ss = (np.arange(1, J + 1) - 0.5) * dt
    A = np.array([[float(J), ss.sum()], [ss.sum(), (ss * ss).sum()]])
    rhs = np.array([-d.sum(), -1.0 - (ss * d).sum()])
    ab = np.linalg.solve(A, rhs)
    return d + ab[0] + ab[1] * ss


class TimeGridField:
    """A SpectralField per node of a uniform time grid t0 + j dt, j=0..N_t."""

    def __init__(self, t0, t_end, steps, snapshots):
        assert len(snapshots) == steps + 1
        self.t0 = float(t0)
        self.t_end = float(t_end)
        self.steps = int(steps)
        self.dt = (self.t_end - self.t0) / self.steps
        self.snapshots = list(snapshots)

    @property
    def lattice(self):
        return self.snapshots[0].lattice

    @property
    def rank(self):
        return self.snapshots[0].rank

    def times(self):
        return self.t0 + self.dt * np.arange(self.steps + 1)

    def __getitem__(self, j):
        return self.snapshots[j]

    def __len__(self):
        return len(self.snapshots)

    def map(self, fn):
        return TimeGridField(self.t0, self.t_end, self.steps,
                             [fn(s) for s in self.snapshots])

    def binary(self, other, fn):
        return TimeGridField(self.t0, self.t_end, self.steps,
                             [fn(a, b) for a, b in zip(self.snapshots, other.snapshots)])

    def __add__(self, other):
        return self.binary(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self.binary(other, lambda a, b: a - b)

    def copy(self):
        return self.map(lambda s: s.copy())

    def drop_caches(self):
        for s in self.snapshots:
            s.drop_cache()

    def time_derivative(self):
        """Centered differences in the interior, one-sided at the ends."""
        dt = self.dt
        snaps = self.snapshots
        out = []
        for j in range(len(snaps)):
            if j == 0:
                d = (snaps[1].c - snaps[0].c) / dt
            elif j == len(snaps) - 1:
                d = (snaps[-1].c - snaps[-2].c) / dt
            else:
                d = (snaps[j + 1].c - snaps[j - 1].c) / (2 * dt)
            out.append(SpectralField(self.lattice, self.rank, d))
        return TimeGridField(self.t0, self.t_end, self.steps, out)


def mollify_time(F, l):
    """One-sided time mollification; kernel supported in (0, l]."""
    w = time_kernel(l, F.dt)
    return _time_convolve(F, w)


def mollified_time_derivative(F, l):
    """Exact derivative-kernel convolution (not finite differences)."""
    d = time_derivative_kernel(l, F.dt)
    return _time_convolve(F, d)


def _time_convolve(F, w):
    J = len(w)
    out = []
    for j in range(len(F.snapshots)):
        acc = None
        for s in range(1, J + 1):
            src = F.snapshots[max(j - s, 0)].c  # constant extension below t0
            acc = w[s - 1] * src if acc is None else acc + w[s - 1] * src
        out.append(SpectralField(F.lattice, F.rank, acc))
    return TimeGridField(F.t0, F.t_end, F.steps, out)


def mollify_scalar_path(path, l, dt):
    """Time-mollify a scalar path (used for the exponential noise factors)."""
    w = time_kernel(l, dt)
    path = np.asarray(path, dtype=float)
    out = np.empty_like(path)
    for j in range(len(path)):
        idx = np.maximum(j - np.arange(1, len(w) + 1), 0)
        out[j] = (w * path[idx]).sum()
    return out


# ----------------------------------------------------------------------
# raw array dumps
# ----------------------------------------------------------------------

def dump_field(f, path):
    """Raw little-endian complex coefficient dump + JSON sidecar."""
    path = pathlib.Path(path)
    data = np.ascontiguousarray(f.c.astype("<c16"))
    path.write_bytes(data.tobytes())
    side = {
        "dimension": f.lattice.dim,
        "resolution": f.lattice.N,
        "rank": f.rank,
        "layout": "row-major interleaved complex128, little-endian",
        "shape": list(f.c.shape),
        "flags": f.meta,
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(side, indent=2))


def load_field(path):
    path = pathlib.Path(path)
    side = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    lat = Lattice(side["dimension"], side["resolution"])
    c = np.frombuffer(path.read_bytes(), dtype="<c16").reshape(side["shape"])
    return SpectralField(lat, side["rank"], c.astype(complex), side.get("flags"))
