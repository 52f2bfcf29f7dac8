"""Iteration states and the level-to-level construction step.

An iterate is (v_q, theta_q, R_q, pi_q) on a uniform time grid, together
with the frozen noise realization and the parameter schedule.  Its defining
invariant is the relaxed momentum balance

    D_t v + (-Lap)^m v + div((v + z1) x (v + z1)) + grad pi
        = theta e_n + div R                       (additive forcing)

    D_t v + v/2 + (-Lap)^m v + Ups1 div(v x v) + grad p
        = Ups1^{-1} Ups2 Theta e_n + div R        (multiplicative forcing)

holding to spectral precision on the valid window of the time grid.  Every
term is evaluated with the same discrete operators the verifier uses --
centered differences in time, dealiased products in space -- so the stress
assembly telescopes to roundoff instead of to a discretization error.  The
oscillation stress is defect-based: whatever the flow cancellations fail to
remove from div(w^p x w^p + R_l) + D_t w^t is absorbed exactly by the
symmetric antidivergence; the residual therefore does not depend on scale
separation, and desk-scale parameters run the same code path as asymptotic
ones.

Time mollification consumes the past: each level needs J kernel slices plus
one centered-difference slice before the balance holds, so the valid window
shrinks by J + 1 slices at the bottom (and to steps - 1 at the top) per
level.  valid_from / valid_to track this.
"""

import json
import math
import pathlib
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import geom2d, geom3d
from . import noise as nz
from . import scheduler as schd
from . import spectral as sp
from .spectral import SCALAR, TENSOR, VECTOR, SpectralField, TimeGridField


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------

def _forcing_vector(scalar_field):
    """theta e_n: the buoyancy direction is the last coordinate."""
    lat = scalar_field.lattice
    out = SpectralField.zero(lat, VECTOR)
    out.c[lat.dim - 1] = scalar_field.c
    return out


def _antidiv(f):
    return geom2d.antidiv2(f) if f.lattice.dim == 2 else geom3d.antidiv3(f)


def _dt_slice(F, j):
    """The verifier's time derivative at slice j: centered in the interior,
    one-sided at the ends (identical to TimeGridField.time_derivative)."""
    dt = F.dt
    if j == 0:
        c = (F[1].c - F[0].c) / dt
    elif j == F.steps:
        c = (F[j].c - F[j - 1].c) / dt
    else:
        c = (F[j + 1].c - F[j - 1].c) / (2.0 * dt)
    return SpectralField(F.lattice, F.rank, c)


def _exp_step(u):
    """C-infinity monotone step: 0 on u <= 0, 1 on u >= 1."""
    u = np.asarray(u, dtype=float)
    lo = np.clip(u, 1e-12, None)
    hi = np.clip(1.0 - u, 1e-12, None)
    a = np.where(u > 0, np.exp(-1.0 / lo), 0.0)
    b = np.where(u < 1, np.exp(-1.0 / hi), 0.0)
    return a / (a + b)


def chi(z):
    """Smooth bridge with chi = 1 on [0, 1] and chi(z) = z on [2, inf);
    in between 1 <= chi(z) <= z, so z / (4 chi(z)) <= 1/2 everywhere."""
    z = np.asarray(z, dtype=float)
    return 1.0 + _exp_step(z - 1.0) * (z - 1.0)


# ---------------------------------------------------------------------------
# noise bundle / state
# ---------------------------------------------------------------------------

@dataclass
class NoiseBundle:
    """The frozen noise realization of one construction run."""
    forcing: str
    seed: int
    sigma: float
    T_L: object                 # StoppingTime
    C_S: float = None
    path: object = None         # additive: NoisePath (z1, z2, increments)
    B1: np.ndarray = None       # multiplicative: scalar Brownian pair
    B2: np.ndarray = None
    Ups1: np.ndarray = None
    Ups2: np.ndarray = None


def make_noise(schedule, lattice, t0, t_end, steps, seed, sigma=0.5,
               s0=None, amplitude=1.0):
    """Sample and freeze the noise for the given grid, and evaluate the
    pathwise stopping time that caps its size.  s0 overrides the default
    power-law decay exponent; amplitude scales the whole spectrum (zero
    gives the deterministic system on the same grid)."""
    if schedule.forcing == "additive":
        spec1 = nz.NoiseSpec.power_law(lattice, schedule.m, sigma, s0=s0)
        spec2 = nz.NoiseSpec.power_law(lattice, schedule.m, sigma, s0=s0)
        if amplitude != 1.0:
            spec1 = nz.NoiseSpec(lattice, amplitude * spec1.g, sigma)
            spec2 = nz.NoiseSpec(lattice, amplitude * spec2.g, sigma)
        path = nz.sample_path(spec1, spec2, (t0, t_end, steps), schedule.m, seed)
        C_S = nz.sobolev_embedding_constant(lattice, sigma)
        T_L = nz.stopping_time_TL(path, schedule.L, schedule.delta_holder, C_S)
        return NoiseBundle("additive", seed, sigma, T_L, C_S, path=path)
    B1, B2, U1, U2, T_L = nz.brownian_regime(
        seed, (t0, t_end, steps), schedule.L, schedule.delta_holder)
    return NoiseBundle("multiplicative", seed, sigma, T_L,
                       B1=B1, B2=B2, Ups1=U1, Ups2=U2)


@dataclass
class IterationState:
    """One iterate of the construction.

    For multiplicative forcing, `theta` holds the transformed temperature
    Theta (the deterministic variable); the physical temperature is
    Ups2 * Theta, see theta_physical().
    """
    q: int
    schedule: object
    noise: NoiseBundle
    v: TimeGridField
    theta: TimeGridField
    R: TimeGridField
    pi: TimeGridField
    valid_from: int
    valid_to: int
    residual: float = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def lattice(self):
        return self.v.lattice

    @property
    def dim(self):
        return self.lattice.dim

    @property
    def forcing(self):
        return self.schedule.forcing

    @property
    def dt(self):
        return self.v.dt

    @property
    def t0(self):
        return self.v.t0

    @property
    def steps(self):
        return self.v.steps

    def times(self):
        return self.v.times()

    def theta_physical(self, j):
        if self.forcing == "additive":
            return self.theta[j]
        return float(self.noise.Ups2[j]) * self.theta[j]

    def buoyancy(self, j):
        """The forcing scalar of the momentum balance at slice j."""
        if self.forcing == "additive":
            return self.theta[j]
        return float(self.noise.Ups2[j] / self.noise.Ups1[j]) * self.theta[j]

    def invariants(self):
        """Structural flags: max divergence of v, mean of v and theta,
        symmetry/trace defects of the stress."""
        sol = max(f.solenoidal_error() for f in self.v.snapshots)
        vmean = max(float(np.abs(f.mean()).max()) for f in self.v.snapshots)
        tmean = max(float(np.abs(f.mean()).max()) for f in self.theta.snapshots)
        tr = max(f.trace_error() for f in self.R.snapshots)
        asym = max(f.asym_error() for f in self.R.snapshots)
        return {"v_divergence": sol, "v_mean": vmean, "theta_mean": tmean,
                "stress_trace": tr, "stress_asymmetry": asym}


# ---------------------------------------------------------------------------
# q = 0
# ---------------------------------------------------------------------------

def shear_velocity(schedule, lattice, t0, t_end, steps):
    """The starting velocity: a single-mode shear along the first coordinate,
    varying in the last, with the energy envelope of the schedule."""
    lat = lattice
    profile = np.sin(lat.x[lat.dim - 1])
    vol_half = (2.0 * np.pi) ** (lat.dim / 2.0)
    L = schedule.L
    mult = schedule.forcing == "multiplicative"
    mL = schedule.m_L() if mult else None
    dt = (t_end - t0) / steps
    snaps = []
    for j in range(steps + 1):
        t = t0 + j * dt
        if mult:
            amp = mL * math.exp(2.0 * L * t + L) / vol_half
        else:
            amp = L ** 2 * math.exp(2.0 * L * t) / vol_half
        comp = np.zeros((lat.dim,) + lat.shape)
        comp[0] = amp * profile
        snaps.append(SpectralField.from_grid(lat, comp, VECTOR))
    return TimeGridField(t0, t_end, steps, snaps)


def solve_temperature(schedule, noise, v, theta_init=None, cfl_limit=1.0):
    """March the temperature equation on the time grid of v.

    Additive: d theta = [Lap theta - div((v + z1) theta)] dt + dB2 with the
    diffusion integrated exactly (spectral integrating factor), the
    advection integrated by an integrating-factor RK4, and the frozen
    Wiener increments of the bundle added per step -- so theta and z2 ride
    the same path.

    Multiplicative: the transformed variable Theta solves
    d_t Theta = -Theta/2 + Lap Theta - Ups1 div(v Theta), deterministically;
    the damping and diffusion use the exact factor e^{-(1/2 + |k|^2) dt},
    so the e^{-t/2} envelope is carried exactly.

    The step is substepped automatically to meet the advective stability
    bound (the RK4 stability region covers |h u k| <= 2 sqrt 2 on the
    imaginary axis, where plain explicit stepping is unstable).  The drift
    is frozen at its slice value, which preserves determinism and
    adaptedness: nothing ahead of slice j is read while advancing past it.
    """
    lat = v.lattice
    dt = v.dt
    steps = v.steps
    mult = schedule.forcing == "multiplicative"
    if not mult and noise.path.steps != steps:
        raise ValueError("noise grid does not match the velocity grid")

    th = SpectralField.zero(lat, SCALAR) if theta_init is None \
        else theta_init.copy()
    mean = float(np.abs(th.mean()).max())
    if mean > 1e-13 * max(float(np.abs(th.c).max()), 1e-300):
        warnings.warn("initial temperature has a nonzero mean (%.3g); "
                      "projecting it out" % mean)
        th = th.project_mean_zero()

    # advective CFL for the explicit transport step; substep if violated
    kmax = lat.N // 2 - 1
    umax = 0.0
    for j in range(steps + 1):
        drift = v[j] if mult else v[j] + noise.path.z1[j]
        u = sp.norm(drift, "Lp", np.inf)
        if mult:
            u *= float(noise.Ups1[j])
        umax = max(umax, u)
        drift.drop_cache()
    n_sub = max(1, int(math.ceil(dt * umax * kmax / (2.5 * cfl_limit))))
    if n_sub > 100000:
        raise ValueError(
            "advective stability out of reach: dt = %.3g, max speed %.3g, "
            "k_max = %d would need %d substeps; use dt <= %.3g"
            % (dt, umax, kmax, n_sub, 2.5 * cfl_limit / (umax * kmax)))
    h = dt / n_sub
    K = (0.5 + lat.k2) if mult else lat.k2
    E1 = np.exp(-K * h)
    E2 = np.exp(-K * h / 2.0)
    snaps = [th]
    for j in range(steps):
        drift = v[j] if mult else v[j] + noise.path.z1[j]
        scale = float(noise.Ups1[j]) if mult else 1.0

        def adv(c):
            d = sp.differential(
                sp.mul(SpectralField(lat, SCALAR, c), drift), "div")
            return -scale * d.c

        c = th.c
        for _ in range(n_sub):
            k1 = adv(c)
            k2 = adv(E2 * (c + (h / 2.0) * k1))
            k3 = adv(E2 * c + (h / 2.0) * k2)
            k4 = adv(E1 * c + h * E2 * k3)
            c = E1 * c + (h / 6.0) * (E1 * k1 + 2.0 * E2 * (k2 + k3) + k4)
        if not mult:
            c = c + noise.path.db2[j]
        th = SpectralField(lat, SCALAR, c)
        snaps.append(th)
        drift.drop_cache()
        v[j].drop_cache()
    return TimeGridField(v.t0, v.t_end, steps, snaps)


def init_q0(schedule, N, steps, t_end, seed, t0=0.0, theta_init=None,
            sigma=0.5, tol=1e-8, check=True, noise=None):
    """Build the level-0 iterate: shear velocity, temperature solve, and a
    stress that balances the momentum equation exactly under the discrete
    operators.  The residual check runs before returning (unless check is
    False); a failure there is an assembly error, not a tolerance issue."""
    lat = sp.Lattice(schedule.dim, N)
    if noise is None:
        noise = make_noise(schedule, lat, t0, t_end, steps, seed, sigma)
    v0 = shear_velocity(schedule, lat, t0, t_end, steps)
    theta0 = solve_temperature(schedule, noise, v0, theta_init)
    dv = v0.time_derivative()
    n = lat.dim
    mult = schedule.forcing == "multiplicative"
    R_snaps, pi_snaps = [], []
    for j in range(steps + 1):
        if mult:
            u12 = float(noise.Ups2[j] / noise.Ups1[j])
            core = dv[j] + 0.5 * v0[j] + sp.frac_laplacian(v0[j], schedule.m) \
                - _forcing_vector(u12 * theta0[j])
            R_snaps.append(_antidiv(core))
            pi_snaps.append(SpectralField.zero(lat, SCALAR))
        else:
            z1j = noise.path.z1[j]
            core = dv[j] + sp.frac_laplacian(v0[j], schedule.m) \
                - _forcing_vector(theta0[j])
            R_j = _antidiv(core) + sp.trace_free_outer_sym(v0[j], z1j) \
                + sp.trace_free_part(sp.outer(z1j, z1j))
            R_snaps.append(R_j)
            pic = -(2.0 * sp.dot(v0[j], z1j).c + sp.dot(z1j, z1j).c) / n
            pi_snaps.append(SpectralField(lat, SCALAR, pic).project_mean_zero())
            z1j.drop_cache()
        v0[j].drop_cache()
    # the discrete balance holds on the whole grid; the stopping time only
    # caps where the size bounds are claimed, and stays in the noise bundle
    state = IterationState(0, schedule, noise,
                           v0, theta0,
                           TimeGridField(t0, t_end, steps, R_snaps),
                           TimeGridField(t0, t_end, steps, pi_snaps),
                           valid_from=0, valid_to=steps)
    if check:
        rep = verify_residual(state)
        state.residual = rep["residual"]
        state.diagnostics["residual_report"] = rep
        if rep["residual"] > tol:
            raise RuntimeError(
                "level-0 stress assembly inconsistent: residual %.3g > %.3g "
                "(worst slice %d)" % (rep["residual"], tol, rep["worst_slice"]))
    return state


# ---------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------

def mollify_state(state, l=None):
    """Space-time mollification of the iterate plus the two exact correction
    terms it induces: the pressure adjustment that absorbs the trace of the
    product commutator, and the trace-free commutator stress itself.  The
    products are streamed (only the J most recent space-mollified slices are
    held), which keeps the 3D memory footprint flat."""
    sched = state.schedule
    if l is None:
        l = float(sched.l(state.q))
    else:
        l = float(l)
    dt = state.dt
    steps = state.steps
    lat = state.lattice
    n = lat.dim
    w = sp.time_kernel(l, dt)
    J = len(w)

    def space(F):
        return F.map(lambda f: sp.mollify_space(f, l))

    v_l = sp.mollify_time(space(state.v), l)
    R_l = sp.mollify_time(space(state.R), l)
    out = {"l": l, "J": J, "v_l": v_l, "R_l": R_l}
    mult = state.forcing == "multiplicative"

    if mult:
        U1 = state.noise.Ups1
        U1_l = sp.mollify_scalar_path(U1, l, dt)
        ratio = state.noise.Ups2 / U1
        tt = TimeGridField(state.t0, state.v.t_end, steps, [
            float(ratio[i]) * sp.mollify_space(state.theta[i], l)
            for i in range(steps + 1)])
        out["Ups1_l"] = U1_l
        out["theta_term_l"] = sp.mollify_time(tt, l)
    else:
        z1_l = sp.mollify_time(space(state.noise.path.z1), l)
        out["z1_l"] = z1_l
        out["theta_l"] = sp.mollify_time(space(state.theta), l)

    # streamed space-mollified products for the commutator terms
    cache = {}

    def sm(i):
        i = max(i, 0)
        if i not in cache:
            if mult:
                u = state.v[i]
                fac = float(U1[i])
            else:
                u = state.v[i] + state.noise.path.z1[i]
                fac = 1.0
            T = sp.trace_free_part(sp.outer(u, u))
            s = sp.dot(u, u)
            cache[i] = (fac * sp.mollify_space(T, l).c,
                        fac * sp.mollify_space(s, l).c,
                        sp.mollify_space(state.pi[i], l).c)
            u.drop_cache()
            state.v[i].drop_cache()
        return cache[i]

    com1_snaps, pil_snaps = [], []
    for j in range(steps + 1):
        accT = accS = accP = 0.0
        for s in range(1, J + 1):
            T_c, s_c, p_c = sm(j - s)
            accT = accT + w[s - 1] * T_c
            accS = accS + w[s - 1] * s_c
            accP = accP + w[s - 1] * p_c
        if mult:
            u_l = v_l[j]
            fac = float(U1_l[j])
        else:
            u_l = v_l[j] + z1_l[j]
            fac = 1.0
        full_T = fac * sp.trace_free_part(sp.outer(u_l, u_l)).c
        full_S = fac * sp.dot(u_l, u_l).c
        com1_snaps.append(SpectralField(lat, TENSOR, full_T - accT))
        pil_snaps.append(SpectralField(lat, SCALAR,
                                       accP - (full_S - accS) / n))
        u_l.drop_cache()
        for i in [k for k in cache if k < j + 1 - J]:
            del cache[i]
    out["com1"] = TimeGridField(state.t0, state.v.t_end, steps, com1_snaps)
    out["pi_l"] = TimeGridField(state.t0, state.v.t_end, steps, pil_snaps)
    return out


# ---------------------------------------------------------------------------
# cutoff and amplitudes
# ---------------------------------------------------------------------------

def cutoff_rho(schedule, q, R_l_slice, t):
    """Pointwise amplitude rho(t, x) = 4 c_R delta_{q+1} M0(t) chi(|R_l| /
    (c_R delta_{q+1} M0(t))) on the collocation grid; strictly positive with
    |R_l| / rho <= 1/2 everywhere."""
    base = schedule.c_R * float(schedule.delta(q + 1)) * schedule.M0(t)
    Rg = R_l_slice.grid()
    frob = np.sqrt((Rg ** 2).sum(axis=(0, 1)))
    return 4.0 * base * chi(frob / base)


def amplitudes(schedule, q, R_l_slice, rho, dirs):
    """Per-direction amplitude fields and the pointwise reconstruction
    error of the geometric decomposition they realize.

    n = 2: a = rho^{1/2} gamma(R_l / rho), and sum a^2 (zeta tf-x zeta)
    reproduces R_l on the grid.  n = 3: a = rho^{1/2} gamma(Id - R_l / rho)
    (2 pi)^{-3/4}, and sum a^2 (2 pi)^{3/2} (mean of W x W) reproduces
    rho Id - R_l.  A gamma domain violation here is an internal consistency
    error (the cutoff guarantees the ball) and raises."""
    lat = R_l_slice.lattice
    Rg = R_l_slice.grid()
    Rmat = np.moveaxis(Rg, (0, 1), (-2, -1))
    scale = max(float(np.abs(Rg).max()), float(rho.max()), 1e-300)
    if lat.dim == 2:
        g = geom2d.gamma2(Rmat / rho[..., None, None])
        recon = geom2d.reconstruct2(g) * rho[..., None, None]
        err = float(np.abs(recon - Rmat).max()) / scale
        amps = [SpectralField.from_grid(lat, np.sqrt(rho) * g[i])
                for i in range(len(dirs))]
    else:
        target = rho[..., None, None] * np.eye(3) - Rmat
        g = geom3d.gamma3(np.eye(3) - Rmat / rho[..., None, None])
        recon = geom3d.reconstruct3(g) * rho[..., None, None]
        err = float(np.abs(recon - target).max()) / scale
        fac = (2.0 * np.pi) ** -0.75
        amps = [SpectralField.from_grid(lat, np.sqrt(rho) * g[i] * fac)
                for i in range(len(dirs))]
    return amps, err


def _block_setup(schedule, q):
    """Building-block parameters and the direction family for step q."""
    blk = schedule.block(q)
    if schedule.dim == 2:
        bp = geom2d.BlockParams2(int(round(float(blk.lam))), float(blk.sigma),
                                 int(round(float(blk.r))), float(blk.mu))
        return bp, list(geom2d.LAMBDA_PLUS), False
    jp = geom3d.JetParams(float(blk.lam), float(blk.r_perp),
                          float(blk.r_par), float(blk.mu))
    try:
        return jp, geom3d.assign_shifts(jp), False
    except ValueError:
        # fat tubes cannot be made disjoint; the defect-based oscillation
        # stress does not require it
        return jp, list(geom3d.LAMBDA3), True


# ---------------------------------------------------------------------------
# perturbation
# ---------------------------------------------------------------------------

def perturbation(state, moll):
    """The three-part velocity increment on the whole grid.

    w^p + w^c is assembled in exact-curl form (perp-gradient of the scalar
    potential in 2D, double curl of the vector potential in 3D), so it is
    divergence-free and mean-free to roundoff; w^p is the principal part
    alone and w^c the difference.  w^t is the Leray-projected temporal
    corrector.  For multiplicative forcing the principal and corrector
    amplitudes carry the extra Ups1_l^{-1/2}, the temporal one does not.
    """
    sched = state.schedule
    q = state.q
    lat = state.lattice
    steps = state.steps
    dt = state.dt
    t0 = state.t0
    R_l = moll["R_l"]
    params, dirs, overlap = _block_setup(sched, q)
    mult = state.forcing == "multiplicative"

    pc_snaps, wp_snaps, wt_snaps = [], [], []
    recon_err = 0.0
    rho_min = np.inf
    if lat.dim == 2:
        pair = {d: geom2d.pair_fields(d, params.lam, lat) for d in dirs}
        mu = params.mu
    else:
        mu = params.mu
    for j in range(steps + 1):
        t = t0 + j * dt
        rho = cutoff_rho(sched, q, R_l[j], t)
        rho_min = min(rho_min, float(rho.min()))
        amps, err = amplitudes(sched, q, R_l[j], rho, dirs)
        recon_err = max(recon_err, err)
        scale_pc = float(moll["Ups1_l"][j]) ** -0.5 if mult else 1.0
        pc_j = SpectralField.zero(lat, VECTOR)
        wp_j = SpectralField.zero(lat, VECTOR)
        wt_c = np.zeros((lat.dim,) + lat.shape, dtype=complex)
        for a_f, d in zip(amps, dirs):
            a_pc = scale_pc * a_f if mult else a_f
            if lat.dim == 2:
                eta = geom2d.eta_zeta(d, params, t, lat)
                bpair, psipair = pair[d]
                amp = sp.mul(a_pc, eta)
                wp_j = wp_j + sp.mul(amp, bpair)
                pc_j = pc_j + sp.differential(sp.mul(amp, psipair),
                                              "perp_grad")
                s = sp.mul(sp.mul(a_f, a_f),
                           sp.mul(eta, eta).project_mean_zero())
            else:
                W, V, _ = geom3d.jet(d, params, t, lat)
                aV = sp.mul(a_pc, V)
                pc_j = pc_j + sp.differential(
                    sp.differential(aV, "curl"), "curl")
                wp_j = wp_j + sp.mul(a_pc, W)
                s = sp.mul(sp.mul(a_f, a_f), sp.dot(W, W))
            z = d.zeta
            for k in range(lat.dim):
                wt_c[k] += s.c * z[k]
            a_f.drop_cache()
        coef = 2.0 / mu if lat.dim == 2 else -1.0 / mu
        wt_j = coef * sp.leray_project(
            SpectralField(lat, VECTOR, wt_c).project_mean_zero())
        pc_snaps.append(pc_j)
        wp_snaps.append(wp_j)
        wt_snaps.append(wt_j)
    grid = (t0, state.v.t_end, steps)
    return {"w_pc": TimeGridField(*grid, pc_snaps),
            "w_p": TimeGridField(*grid, wp_snaps),
            "w_t": TimeGridField(*grid, wt_snaps),
            "params": params, "dirs": dirs,
            "supports_overlap": overlap,
            "reconstruction_error": recon_err,
            "rho_min": rho_min}


# ---------------------------------------------------------------------------
# stress assembly
# ---------------------------------------------------------------------------

def assemble_reynolds(state, moll, pert, v_new, theta_new):
    """The new stress and pressure, grouped so every divergence identity is
    exact: linear, corrector, oscillation (defect-based), noise commutator
    (Ups commutator for multiplicative forcing), and the mollifier
    commutator carried over from mollify_state."""
    sched = state.schedule
    lat = state.lattice
    n = lat.dim
    steps = state.steps
    mult = state.forcing == "multiplicative"
    w_pc, w_t, w_p = pert["w_pc"], pert["w_t"], pert["w_p"]
    v_l, R_l = moll["v_l"], moll["R_l"]
    groups = {"linear": 0.0, "corrector": 0.0, "oscillation": 0.0,
              "noise commutator": 0.0, "mollifier commutator": 0.0}
    R_snaps, pi_snaps = [], []
    for j in range(steps + 1):
        dpc = _dt_slice(w_pc, j)
        dwt = _dt_slice(w_t, j)
        w_j = w_pc[j] + w_t[j]
        wp_j = w_p[j]
        wct = w_j - wp_j
        vq1 = v_new[j]

        if mult:
            U1 = float(state.noise.Ups1[j])
            U1l = float(moll["Ups1_l"][j])
            u12 = float(state.noise.Ups2[j]) / U1
            th_diff = SpectralField(
                lat, SCALAR, moll["theta_term_l"][j].c - u12 * theta_new[j].c)
            lin_vec = 0.5 * w_j + sp.frac_laplacian(w_j, sched.m) + dpc \
                + _forcing_vector(th_diff)
            R_lin = _antidiv(lin_vec) \
                + U1l * sp.trace_free_outer_sym(v_l[j], w_j)
            pi_lin_c = (2.0 * U1l / n) * sp.dot(v_l[j], w_j).c
        else:
            th_diff = SpectralField(
                lat, SCALAR, moll["theta_l"][j].c - theta_new[j].c)
            A = v_l[j] + moll["z1_l"][j]
            lin_vec = sp.frac_laplacian(w_j, sched.m) + dpc \
                + _forcing_vector(th_diff)
            R_lin = _antidiv(lin_vec) + sp.trace_free_outer_sym(A, w_j)
            pi_lin_c = (2.0 / n) * sp.dot(A, w_j).c

        cor_T = sp.outer(wct, w_j) + sp.outer(wp_j, wct)
        fac = U1l if mult else 1.0
        R_cor = fac * sp.trace_free_part(cor_T)
        pi_cor_c = (fac / n) * sum(cor_T.c[i, i] for i in range(n))

        wpwp = sp.outer(wp_j, wp_j)
        D = sp.differential(fac * wpwp + R_l[j], "div") + dwt
        pi_osc = sp.inv_laplacian(sp.differential(D, "div"))
        R_osc = _antidiv(D - sp.differential(pi_osc, "grad"))

        if mult:
            R_com2 = (U1 - U1l) * sp.trace_free_part(sp.outer(vq1, vq1))
            pi_com2_c = ((U1 - U1l) / n) * sp.dot(vq1, vq1).c
        else:
            z1j = state.noise.path.z1[j]
            z1lj = moll["z1_l"][j]
            Z = z1j - z1lj
            R_com2 = sp.trace_free_outer_sym(vq1, Z) \
                + sp.trace_free_part(sp.outer(z1j, z1j)) \
                - sp.trace_free_part(sp.outer(z1lj, z1lj))
            pi_com2_c = (2.0 * sp.dot(vq1, Z).c + sp.dot(z1j, z1j).c
                         - sp.dot(z1lj, z1lj).c) / n
            z1j.drop_cache()
            z1lj.drop_cache()

        com1_j = moll["com1"][j]
        R_j = R_lin + R_cor + R_osc + R_com2 + com1_j
        pi_c = moll["pi_l"][j].c - pi_lin_c - pi_cor_c - pi_osc.c - pi_com2_c
        R_snaps.append(R_j)
        pi_snaps.append(SpectralField(lat, SCALAR, pi_c).project_mean_zero())

        groups["linear"] = max(groups["linear"], sp.norm(R_lin, "Lp", 2))
        groups["corrector"] = max(groups["corrector"], sp.norm(R_cor, "Lp", 2))
        groups["oscillation"] = max(groups["oscillation"],
                                    sp.norm(R_osc, "Lp", 2))
        groups["noise commutator"] = max(groups["noise commutator"],
                                         sp.norm(R_com2, "Lp", 2))
        groups["mollifier commutator"] = max(groups["mollifier commutator"],
                                             sp.norm(com1_j, "Lp", 2))
        for f in (w_j, wp_j, wct, vq1, v_l[j], w_pc[j], w_t[j], w_p[j],
                  R_lin, R_cor, R_osc, R_com2, com1_j, R_j):
            f.drop_cache()
    grid = (state.t0, state.v.t_end, steps)
    return (TimeGridField(*grid, R_snaps), TimeGridField(*grid, pi_snaps),
            groups)


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

def _momentum_residual(state, j):
    """(E, div R) at interior slice j with the verifier's own operators."""
    lat = state.lattice
    sched = state.schedule
    dt = state.dt
    Dt_v = SpectralField(lat, VECTOR,
                         (state.v[j + 1].c - state.v[j - 1].c) / (2.0 * dt))
    divR = sp.differential(state.R[j], "div")
    if state.forcing == "additive":
        u = state.v[j] + state.noise.path.z1[j]
        E = Dt_v + sp.frac_laplacian(state.v[j], sched.m) \
            + sp.differential(sp.outer(u, u), "div") \
            + sp.differential(state.pi[j], "grad") \
            - _forcing_vector(state.theta[j]) - divR
        u.drop_cache()
    else:
        U1 = float(state.noise.Ups1[j])
        E = Dt_v + 0.5 * state.v[j] + sp.frac_laplacian(state.v[j], sched.m) \
            + U1 * sp.differential(sp.outer(state.v[j], state.v[j]), "div") \
            + sp.differential(state.pi[j], "grad") \
            - _forcing_vector(state.buoyancy(j)) - divR
    state.v[j].drop_cache()
    return E, divR


def verify_residual(state, window=None):
    """Max over the valid interior slices of the relative momentum residual
    || LHS - RHS ||_{H^-1} / || div R ||_{H^-1}, recomputed from the stored
    fields with centered time differences.  Returns the per-slice profile
    and the worst slice alongside the max."""
    steps = state.steps
    if window is None:
        window = (max(state.valid_from, 1), min(state.valid_to, steps - 1))
    j0, j1 = window
    if j1 < j0:
        raise ValueError("no interior slices in the valid window %r" % (window,))
    per = []
    worst = (0.0, j0)
    for j in range(j0, j1 + 1):
        E, divR = _momentum_residual(state, j)
        num = sp.norm(E, "sobolev", -1.0)
        den = max(sp.norm(divR, "sobolev", -1.0), 1e-300)
        ratio = num / den
        per.append(ratio)
        if ratio > worst[0]:
            worst = (ratio, j)
    return {"residual": worst[0], "worst_slice": worst[1],
            "window": (j0, j1), "per_slice": per,
            "theta_residual": theta_equation_residual(state)}


def theta_equation_residual(state):
    """Forward-difference residual of the temperature equation, relative to
    the temperature size.  The solver is semi-implicit, so this measures its
    O(dt) discretization bias -- informational, not an invariant."""
    lat = state.lattice
    dt = state.dt
    mult = state.forcing == "multiplicative"
    worst = 0.0
    scale = max(max(sp.norm(f, "Lp", 2) for f in state.theta.snapshots),
                1e-300)
    for j in range(state.steps):
        th = state.theta[j]
        if mult:
            drift = state.v[j]
            adv = sp.differential(sp.mul(th, drift), "div")
            r = (state.theta[j + 1].c - th.c) / dt + 0.5 * th.c \
                + lat.k2 * th.c + float(state.noise.Ups1[j]) * adv.c
        else:
            drift = state.v[j] + state.noise.path.z1[j]
            adv = sp.differential(sp.mul(th, drift), "div")
            r = (state.theta[j + 1].c - th.c - state.noise.path.db2[j]) / dt \
                + lat.k2 * th.c + adv.c
        worst = max(worst, sp.norm(SpectralField(lat, SCALAR, r), "Lp", 2))
        drift.drop_cache()
        th.drop_cache()
        state.v[j].drop_cache()
    return worst / scale


# ---------------------------------------------------------------------------
# the step
# ---------------------------------------------------------------------------

def iterate(state, tol=1e-8, allow_coarse_time=False, l=None, release=False):
    """Advance the construction one level: mollify, cut off, build the
    perturbation, re-solve the temperature with the new velocity, assemble
    the stress, and verify.  Raises if the verified residual exceeds tol,
    naming the largest stress groups.

    release=True frees the input state's stress, pressure and temperature
    grids once their mollifications are taken (the 3D grids are large and
    everything downstream works off the mollified copies); the caller's
    state object is left with those fields set to None."""
    sched = state.schedule
    q = state.q
    blk = sched.block(q)
    if state.dim == 2:
        speed = float(blk.lam) * float(blk.sigma) * float(blk.mu)
    else:
        speed = float(blk.r_perp) * float(blk.lam) * float(blk.mu) \
            / float(blk.r_par)
    if state.dt * speed > 0.125 + 1e-12:
        need = int(math.ceil((state.v.t_end - state.t0) * speed * 8.0))
        msg = ("time grid too coarse for the level-%d block: dt * speed = "
               "%.3g > 1/8; use at least %d steps" % (q + 1,
                                                      state.dt * speed, need))
        if allow_coarse_time:
            warnings.warn(msg)
        else:
            raise ValueError(msg)

    moll = mollify_state(state, l)
    theta0 = state.theta[0]
    if release:
        state.R = state.pi = state.theta = None
    pert = perturbation(state, moll)
    w = pert["w_pc"] + pert["w_t"]
    v_new = moll["v_l"] + w
    theta_new = solve_temperature(sched, state.noise, v_new,
                                  theta_init=theta0)
    R_new, pi_new, groups = assemble_reynolds(state, moll, pert,
                                              v_new, theta_new)

    new_state = IterationState(
        q + 1, sched, state.noise, v_new, theta_new, R_new, pi_new,
        valid_from=state.valid_from + moll["J"] + 1,
        valid_to=min(state.valid_to, state.steps - 1))
    rep = verify_residual(new_state)
    new_state.residual = rep["residual"]
    new_state.diagnostics = {
        "residual_report": rep,
        "stress_groups": groups,
        "reconstruction_error": pert["reconstruction_error"],
        "rho_min": pert["rho_min"],
        "supports_overlap": pert["supports_overlap"],
        "mollification_scale": moll["l"],
    }
    if rep["residual"] > tol:
        ranked = sorted(groups.items(), key=lambda kv: -kv[1])
        raise RuntimeError(
            "stress assembly failed verification at level %d: residual %.3g "
            "> %.3g (worst slice %d); largest stress groups: %s"
            % (q + 1, rep["residual"], tol, rep["worst_slice"],
               ", ".join("%s %.3g" % kv for kv in ranked)))
    return new_state


def diagnostics(state, prev=None):
    """Informational budget table: velocity energy against the envelope and
    stress size against the next-level target, per slice.  With the previous
    level's state supplied, each row also reports the increment
    ||v_q - v_{q-1}||_{L2}."""
    sched = state.schedule
    d1 = float(sched.delta(state.q + 1))
    rows = []
    for j in range(0, state.steps + 1, max(1, state.steps // 8)):
        t = state.t0 + j * state.dt
        row = {
            "t": t,
            "v_L2": sp.norm(state.v[j], "Lp", 2),
            "energy_envelope": math.sqrt(sched.M0(t)),
            "stress_L1": sp.norm(state.R[j], "Lp", 1),
            "stress_target": sched.c_R * d1 * sched.M0(t),
        }
        if prev is not None:
            if prev.steps != state.steps or prev.t0 != state.t0:
                raise ValueError("previous state lives on a different grid")
            row["increment_L2"] = sp.norm(state.v[j] - prev.v[j], "Lp", 2)
        rows.append(row)
    out = {"q": state.q, "residual": state.residual, "rows": rows}
    out.update(state.invariants())
    return out


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_FIELD_NAMES = ("velocity", "temperature", "stress", "pressure")


def save_checkpoint(state, outdir):
    """Raw coefficient dumps of every snapshot plus a manifest carrying the
    schedule, seed, tolerances and residuals.  Bit-identical across runs
    with the same inputs."""
    out = pathlib.Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    fields = dict(zip(_FIELD_NAMES, (state.v, state.theta, state.R, state.pi)))
    for name, F in fields.items():
        for j, f in enumerate(F.snapshots):
            sp.dump_field(f, out / ("%s_%04d.c16" % (name, j)))
    T_L = state.noise.T_L
    manifest = {
        "format": 1,
        "q": state.q,
        "schedule": state.schedule.to_config(),
        "seed": state.noise.seed,
        "sigma": state.noise.sigma,
        "t0": state.t0,
        "t_end": state.v.t_end,
        "steps": state.steps,
        "resolution": state.lattice.N,
        "valid_from": state.valid_from,
        "valid_to": state.valid_to,
        "residual": state.residual,
        "stopping_time": {"t": float(T_L), "truncated": T_L.truncated,
                          "trigger": T_L.trigger},
        "fields": sorted(fields),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2,
                                                  sort_keys=True))
    return out / "manifest.json"


def load_checkpoint(path):
    """Restore an IterationState from a checkpoint directory; the noise is
    regenerated from the recorded seed (sampling is deterministic)."""
    d = pathlib.Path(path)
    if d.name == "manifest.json":
        d = d.parent
    man = json.loads((d / "manifest.json").read_text())
    sched = schd.from_config(man["schedule"])
    lat = sp.Lattice(2 if sched.regime.startswith("2d") else 3,
                     man["resolution"])
    noise = make_noise(sched, lat, man["t0"], man["t_end"], man["steps"],
                       man["seed"], man["sigma"])
    grids = {}
    for name in man["fields"]:
        snaps = [sp.load_field(d / ("%s_%04d.c16" % (name, j)))
                 for j in range(man["steps"] + 1)]
        grids[name] = TimeGridField(man["t0"], man["t_end"], man["steps"],
                                    snaps)
    state = IterationState(man["q"], sched, noise,
                           grids["velocity"], grids["temperature"],
                           grids["stress"], grids["pressure"],
                           man["valid_from"], man["valid_to"],
                           residual=man["residual"])
    return state
