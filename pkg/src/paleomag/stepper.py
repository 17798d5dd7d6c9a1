"""One fully implicit time step of the coupled discrete system.

The nonlinear step is solved by a damped fixed-point sweep over the
blocks (v -> Ee/Ep -> m -> u -> w), iterated to a monolithic tolerance,
with the paper-prescribed lagged-temperature placement: the Maxwell
viscosity M, the conductivity K, and the dissipation potential zeta are
evaluated at theta^{k-1}; every other temperature occurrence is implicit.

Within each sweep the corotational couplings are solved exactly per cell
(batched 3x3 solves for the symmetric strain pair, a closed-form 2x2
solve for m); advection and the gradient regularizations (varkappa
Laplacian of the inelastic rate, the hyperstress) are taken at the
current iterate, so the converged sweep satisfies the fully implicit
equations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import constitutive as con
from . import kinematics as kin
from .demag import h_dem_from_u, solve_demag
from .errors import CflViolation, NumericalError, ThermodynamicError
from .grid import NCOMP, FieldState, Grid, LoadsSample


@dataclass
class StepOptions:
    """Solver knobs for one implicit step."""

    dt: float
    eps: float = 0.0              # regularization: omega_eps and the (1-eps) heat factor
    max_iters: int = 200
    tol_rel: float = 1e-11
    tol_abs: float = 1e-13
    relaxation: float = 1.0       # under-relaxation of the block sweep, in (0, 1]
    cfl_max: float = 0.9
    demag: bool = True
    demag_boundary: str = "farfield"

    def validate(self) -> None:
        if not (self.dt > 0.0 and self.tol_rel > 0.0 and self.tol_abs > 0.0):
            raise NumericalError("dt and tolerances must be positive")
        if not 0.0 <= self.eps < 1.0:
            raise NumericalError(f"eps must be in [0, 1), got {self.eps}")
        if not 0.0 < self.relaxation <= 1.0:
            raise NumericalError(f"relaxation must be in (0, 1], got {self.relaxation}")


@dataclass
class StepReport:
    """Solver diagnostics for one attempted step."""

    iterations: int = 0
    residuals: dict = field(default_factory=dict)
    accepted: bool = False
    dt: float = 0.0
    message: str = ""
    energy_ledger_before: object = None   # attached by the scenario driver
    energy_ledger_after: object = None
    dissipation: object = None


# ---------------------------------------------------------------------------
# symmetric 2x2 <-> 3-vector packing for the per-cell strain solves


def _pack(T: np.ndarray) -> np.ndarray:
    return np.stack([T[..., 0, 0], T[..., 1, 1], T[..., 0, 1]], axis=-1)


def _unpack(e: np.ndarray) -> np.ndarray:
    out = np.empty(e.shape[:-1] + (2, 2))
    out[..., 0, 0] = e[..., 0]
    out[..., 1, 1] = e[..., 1]
    out[..., 0, 1] = e[..., 2]
    out[..., 1, 0] = e[..., 2]
    return out


def _corot_matrix(wspin: np.ndarray) -> np.ndarray:
    """Matrix of e -> pack(-W T + T W) on (T11, T22, T12) for W = [[0,-w],[w,0]]."""
    C = np.zeros(wspin.shape + (3, 3))
    C[..., 0, 2] = 2.0 * wspin
    C[..., 1, 2] = -2.0 * wspin
    C[..., 2, 0] = -wspin
    C[..., 2, 1] = wspin
    return C


_DEV3 = np.array([[0.5, -0.5, 0.0], [-0.5, 0.5, 0.0], [0.0, 0.0, 1.0]])


def _solve_sym(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Batched solve of the packed 3x3 per-cell systems."""
    return np.linalg.solve(A, rhs[..., None])[..., 0]


def _solve_m(tau: float, wspin: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Closed-form solve of (I/tau - W) m = rhs with W = [[0,-w],[w,0]]."""
    a = 1.0 / tau
    det = a * a + wspin * wspin
    mx = (a * rhs[..., 0] - wspin * rhs[..., 1]) / det
    my = (wspin * rhs[..., 0] + a * rhs[..., 1]) / det
    return np.stack([mx, my], axis=-1)


def boundary_source(j_ext: float, grid: Grid) -> np.ndarray:
    """Volumetric source j * (face area / cell volume) on boundary cells.

    Integrates to j * |boundary|; the material point carries unit area.
    """
    src = grid.scalar_field()
    if grid.dim == 0:
        src[...] = j_ext
        return src
    for a in range(grid.dim):
        h = grid.spacing[a]
        sa = np.moveaxis(src, a, 0)
        sa[0] += j_ext / h
        sa[-1] += j_ext / h
    return src


def _check_cfl(v: np.ndarray, grid: Grid, dt: float, cfl_max: float) -> None:
    for a in range(grid.dim):
        h = grid.spacing[a]
        vmax = float(np.max(np.abs(v[..., a])))
        if vmax * dt / h > cfl_max:
            raise CflViolation(
                f"axis {a}: |v| dt/h = {vmax * dt / h:.3f} exceeds cfl_max={cfl_max}"
            )


def _hyperstress_force(Ev: np.ndarray, grid: Grid, params: con.MaterialParams) -> np.ndarray:
    """div div H with H = nu2 |grad E(v)|^(p-2) grad E(v) (zero when nu2 = 0)."""
    if params.nu2 == 0.0 or grid.dim == 0:
        return np.zeros(Ev.shape[:-1])
    GE = kin.grad_tensor(Ev, grid)
    norm = np.sqrt(np.sum(GE * GE, axis=(-3, -2, -1)))
    H = params.nu2 * (norm ** (params.p - 2.0))[..., None, None, None] * GE
    T = np.zeros(Ev.shape)
    for a in range(grid.dim):
        T += kin._central_diff(H[..., a], grid, a, "even")
    return kin.div_tensor(T, grid)


def stress_structural(
    m: np.ndarray,
    grad_m: np.ndarray,
    h_eff: np.ndarray,
    params: con.MaterialParams,
) -> np.ndarray:
    """Structural stress: Maxwell/exchange part plus the magnetic couple.

    S_str = kappa mu0 (grad m (.) grad m - |grad m|^2/2 I)
            - mu0 skw(h_eff (x) m),
    where (grad m (.) grad m)_ij = d_i m_k d_j m_k.  The couple term is the
    skew stress whose working against the spin balances the corotational
    transport of m in the energy identities.
    """
    outer_h_m = h_eff[..., :, None] * m[..., None, :]
    S = -params.mu0 * kin.skw(outer_h_m)
    if params.kappa != 0.0:
        gm = np.einsum("...ki,...kj->...ij", grad_m, grad_m)
        trg = np.einsum("...kk->...", gm)
        S = S + params.kappa * params.mu0 * (gm - 0.5 * trg[..., None, None] * np.eye(NCOMP))
    return S


def step(
    state_prev: FieldState,
    loads_k: LoadsSample,
    grid: Grid,
    params: con.MaterialParams,
    opts: StepOptions,
    thermal: Optional[con.ThermalLaw] = None,
) -> tuple[FieldState, StepReport]:
    """Advance one fully implicit step; returns (new state, report).

    On solver non-convergence the previous state is returned with
    report.accepted = False (the caller halves dt).  CFL violations raise
    CflViolation; w < -tol_abs raises ThermodynamicError.
    """
    opts.validate()
    if thermal is None:
        thermal = con.thermal_law_for(params)
    tau = opts.dt
    eps = opts.eps
    relax = opts.relaxation

    theta_prev = thermal.theta_of_w(state_prev.w)
    M_lag = np.asarray(con.maxwell_viscosity(theta_prev, params))
    b_lag = con.buoyancy_b(theta_prev, params)

    v = state_prev.v.copy()
    Ee = state_prev.Ee.copy()
    Ep = state_prev.Ep.copy()
    m = state_prev.m.copy()
    u = state_prev.u.copy()
    w = state_prev.w.copy()
    R = np.zeros_like(Ee)
    h_dem = np.zeros_like(m)
    if opts.demag and grid.dim >= 1:
        h_dem = solve_demag(m, grid, params.mu0, opts.demag_boundary).h_dem
    theta_k = np.asarray(theta_prev).copy()
    j_src = boundary_source(loads_k.j_ext_k, grid)

    driven = loads_k.grad_v_k is not None or loads_k.stress_dev_k is not None
    converged = False
    iterations = 0

    for it in range(opts.max_iters):
        iterations = it + 1
        # --- kinematic block -------------------------------------------------
        if loads_k.grad_v_k is not None:
            L = np.broadcast_to(loads_k.grad_v_k, grid.spatial_shape + (NCOMP, NCOMP))
            v_new = v
        elif loads_k.stress_dev_k is not None:
            # quasi-static deviatoric stress control (Jeffreys element):
            # nu1 E(v) + dev S_E = sigma_applied, iterated on the Ee block
            L = (loads_k.stress_dev_k - kin.dev(con.stress_elastic(Ee, m, params))) / params.nu1
            v_new = v
        elif grid.dim == 0:
            v_new = state_prev.v + tau * loads_k.g * (1.0 - b_lag)
            L = np.zeros((NCOMP, NCOMP))
        else:
            v_new = _momentum_solve(
                state_prev, v, Ee, Ep, m, u, h_dem, theta_prev, b_lag, loads_k,
                grid, params, opts, eps, theta_k,
            )
            _check_cfl(v_new, grid, tau, opts.cfl_max)
            L = kin.grad_vector(v_new, grid, kind="velocity")
        Ev = kin.sym(L)
        Wsp = kin.skw(L)
        wspin = np.asarray(Wsp[..., 1, 0])

        # --- strain block (Ee, R, Ep) ---------------------------------------
        corot = _corot_matrix(wspin)
        eye3 = np.eye(3)
        ratio = (2.0 * params.G_E / M_lag)[..., None, None]
        A_e = eye3 / tau + corot + ratio * _DEV3
        lapR = (
            kin.laplacian(R, grid) if (params.varkappa != 0.0 and grid.dim >= 1) else 0.0
        )
        adv_Ee = kin.upwind_advect(Ee, v_new, grid) if grid.dim >= 1 else 0.0
        rhs_e = _pack(
            Ev + state_prev.Ee / tau - adv_Ee
            - params.varkappa * np.asarray(lapR) / M_lag[..., None, None]
        )
        Ee_new = _unpack(_solve_sym(A_e, rhs_e))
        R_new = (
            2.0 * params.G_E * kin.dev(Ee_new) + params.varkappa * np.asarray(lapR)
        ) / M_lag[..., None, None]

        A_p = eye3 / tau + corot
        adv_Ep = kin.upwind_advect(Ep, v_new, grid) if grid.dim >= 1 else 0.0
        rhs_p = _pack(R_new + state_prev.Ep / tau - adv_Ep)
        Ep_new = _unpack(_solve_sym(A_p, rhs_p))

        # --- magnetization block --------------------------------------------
        m_it = m
        for _ in range(60):
            h_drv = con.h_anisotropy(Ee_new, m_it, theta_k, params, eps) + loads_k.h_ext_k
            if params.kappa != 0.0 and grid.dim >= 1:
                h_drv = h_drv + params.kappa * kin.laplacian(m_it, grid)
            h_eff = h_drv + h_dem
            r = con.zeta_resolvent(theta_prev, h_eff, params)
            adv_m = kin.upwind_advect(m_it, v_new, grid) if grid.dim >= 1 else 0.0
            m_cand = _solve_m(tau, wspin, state_prev.m / tau - adv_m + r)
            # snap exact sticking: cells with zero rate, spin, and advection
            # keep m bit-identical, so the audited rate is exactly zero
            advmag = np.sqrt(np.sum(adv_m * adv_m, axis=-1)) if np.ndim(adv_m) else 0.0
            stuck = (np.sum(r * r, axis=-1) == 0.0) & (wspin == 0.0) & (np.asarray(advmag) == 0.0)
            m_cand = np.where(stuck[..., None], state_prev.m, m_cand)
            dm = float(np.max(np.abs(m_cand - m_it)))
            m_it = m_it + relax * (m_cand - m_it)
            if dm < opts.tol_abs + opts.tol_rel * max(1.0, float(np.max(np.abs(m_it)))):
                break
        m_new = m_it

        # --- demag block -----------------------------------------------------
        if opts.demag and grid.dim >= 1:
            sol = solve_demag(m_new, grid, params.mu0, opts.demag_boundary)
            u_new, h_dem = sol.u, sol.h_dem
        else:
            u_new = np.zeros_like(state_prev.u)
            h_dem = np.zeros_like(m_new)

        # --- enthalpy block ---------------------------------------------------
        divv = kin.tensor_trace(L)
        xi = _xi_field(Ev, R_new, r, theta_prev, grid, params)
        r_conv = (m_new - state_prev.m) / tau + (
            kin.upwind_advect(m_new, v_new, grid) if grid.dim >= 1 else 0.0
        )
        adiab = (
            theta_k * np.sum(con.omega_eps_hat_prime(m_new, params, eps) * r_conv, axis=-1)
            + (theta_k * con.omega_eps_hat(m_new, params, eps) + thermal.phi(theta_k)) * divv
        )
        if loads_k.theta_k is not None:
            w_new = np.broadcast_to(
                thermal.w_of_theta(loads_k.theta_k), grid.spatial_shape
            ).copy()
        elif grid.dim == 0:
            w_new = state_prev.w + tau * ((1.0 - eps) * xi + adiab + j_src)
        else:
            w_new = _heat_solve(
                state_prev.w, w, v_new, xi, adiab, j_src, theta_prev, grid, params,
                thermal, tau, eps, opts,
            )
        theta_new = thermal.theta_of_w(np.maximum(w_new, 0.0))

        # --- convergence ------------------------------------------------------
        change = 0.0
        for old, new in ((v, v_new), (Ee, Ee_new), (Ep, Ep_new), (m, m_new), (w, w_new)):
            scale = max(1.0, float(np.max(np.abs(new))))
            change = max(change, float(np.max(np.abs(new - old))) / scale)
        v = v if driven else (v + relax * (np.asarray(v_new) - v))
        Ee = Ee + relax * (Ee_new - Ee)
        Ep = Ep + relax * (Ep_new - Ep)
        m = m_new
        u = u_new
        w = w + relax * (np.asarray(w_new) - w)
        theta_k = thermal.theta_of_w(np.maximum(w, 0.0))
        if change < opts.tol_rel:
            v, Ee, Ep, m, w = np.asarray(v_new).copy(), Ee_new, Ep_new, m_new, np.asarray(w_new).copy()
            theta_k = theta_new
            converged = True
            break

    report = StepReport(iterations=iterations, dt=tau, accepted=False)
    if not converged:
        report.message = f"no convergence after {iterations} sweeps (change {change:.3e})"
        return state_prev, report

    if float(np.min(w)) < -opts.tol_abs:
        raise ThermodynamicError(f"enthalpy became negative: min w = {float(np.min(w)):.3e}")
    w = np.maximum(w, 0.0)

    state_new = FieldState(
        v=np.array(v, dtype=np.float64).reshape(state_prev.v.shape),
        Ee=kin.sym(Ee),
        Ep=Ep,
        m=m,
        u=u,
        w=w,
        t=state_prev.t + tau,
    )
    report.residuals = residuals(state_new, state_prev, loads_k, grid, params, opts, thermal)
    report.accepted = all(
        res <= opts.tol_abs + 100.0 * opts.tol_rel * scale
        for res, scale in report.residuals.values()
    )
    if not report.accepted:
        report.message = "converged iterate fails residual check: " + ", ".join(
            f"{k}={res:.2e}/{scale:.2e}" for k, (res, scale) in report.residuals.items()
        )
        return state_prev, report
    return state_new, report


def _xi_field(Ev, R, r, theta_prev, grid: Grid, params: con.MaterialParams):
    """Dissipation heat source xi(theta^{k-1}; E(v), R, mdot) >= 0."""
    xi = params.nu1 * np.sum(Ev * Ev, axis=(-2, -1))
    xi = xi + np.asarray(con.maxwell_viscosity(theta_prev, params)) * np.sum(R * R, axis=(-2, -1))
    xi = xi + params.mu0 * con.zeta_diss(theta_prev, r, params)
    if params.nu2 != 0.0 and grid.dim >= 1:
        GE = kin.grad_tensor(Ev, grid)
        xi = xi + params.nu2 * np.sum(GE * GE, axis=(-3, -2, -1)) ** (params.p / 2.0)
    if params.varkappa != 0.0 and grid.dim >= 1:
        GR = kin.grad_tensor(R, grid)
        xi = xi + params.varkappa * np.sum(GR * GR, axis=(-3, -2, -1))
    return xi


def _momentum_solve(
    state_prev, v_cur, Ee, Ep, m, u, h_dem, theta_prev, b_lag, loads_k,
    grid: Grid, params: con.MaterialParams, opts: StepOptions, eps, theta_k,
):
    """Implicit Stokes-like solve with the remaining momentum terms lagged."""
    import scipy.sparse.linalg as spla

    tau = opts.dt
    rho = params.rho
    Ev_cur = kin.sym(kin.grad_vector(v_cur, grid, kind="velocity"))
    S_E = con.stress_elastic(Ee, m, params)
    grad_m = np.stack(
        [kin.grad_scalar(m[..., i], grid) for i in range(NCOMP)], axis=-2
    )
    h_drv = con.h_anisotropy(Ee, m, theta_k, params, eps) + loads_k.h_ext_k
    if params.kappa != 0.0:
        h_drv = h_drv + params.kappa * kin.laplacian(m, grid)
    S_str = stress_structural(m, grad_m, h_drv + h_dem, params)
    grad_hext = np.zeros(grid.spatial_shape + (NCOMP, NCOMP))  # uniform h_ext
    grad_hdem = np.stack(
        [kin.grad_scalar(h_dem[..., i], grid) for i in range(NCOMP)], axis=-2
    )
    f_mag = params.mu0 * (
        kin.matvec(np.swapaxes(grad_hext, -1, -2), m)
        + kin.matvec(np.swapaxes(grad_hdem, -1, -2), m)
    )
    F = (
        rho * state_prev.v / tau
        - rho * kin.upwind_advect(v_cur, v_cur, grid)
        - 0.5 * rho * kin.div_vector(v_cur, grid, kind="velocity")[..., None] * v_cur
        + kin.div_tensor(S_E + S_str, grid)
        - _hyperstress_force(Ev_cur, grid, params)
        + f_mag
        + rho * loads_k.g * (1.0 - np.asarray(b_lag))[..., None]
    )

    shape = v_cur.shape

    def apply_op(x):
        vv = np.asarray(x, dtype=np.float64).reshape(shape)
        Ev = kin.sym(kin.grad_vector(vv, grid, kind="velocity"))
        return (rho / tau * vv - kin.div_tensor(params.nu1 * Ev, grid)).ravel()

    n = int(np.prod(shape))
    op = spla.LinearOperator((n, n), matvec=apply_op, dtype=np.float64)
    sol, info = spla.bicgstab(op, F.ravel(), x0=v_cur.ravel(), rtol=1e-12, atol=1e-14)
    if info != 0:
        raise NumericalError(f"momentum solve failed (bicgstab info={info})")
    return sol.reshape(shape)


def _heat_solve(
    w_prev, w_cur, v_new, xi, adiab, j_src, theta_prev, grid: Grid,
    params: con.MaterialParams, thermal, tau, eps, opts: StepOptions,
):
    """Implicit conduction solve; advection and sources at the current sweep.

    Uses the canonical linear enthalpy relation theta = w / c_v for the
    implicit Fourier term (the shipped thermal law); a nonlinear law would
    lag theta in conduction.
    """
    import scipy.sparse.linalg as spla

    adv = kin.advect_scalar(w_cur, v_new, grid, tau, opts.cfl_max)
    rhs = w_prev / tau - adv + (1.0 - eps) * xi + adiab + j_src
    c_v = params.c_v
    shape = w_prev.shape

    def apply_op(x):
        ww = np.asarray(x, dtype=np.float64).reshape(shape)
        cond = params.K_cond * kin.laplacian(ww / c_v, grid)
        return (ww / tau - cond).ravel()

    n = int(np.prod(shape))
    op = spla.LinearOperator((n, n), matvec=apply_op, dtype=np.float64)
    sol, info = spla.bicgstab(op, rhs.ravel(), x0=w_cur.ravel(), rtol=1e-12, atol=1e-14)
    if info != 0:
        raise NumericalError(f"heat solve failed (bicgstab info={info})")
    return sol.reshape(shape)


def green_naghdi_update(
    Ee_prev: np.ndarray, Ep_rate: np.ndarray, v_new: np.ndarray, dt: float, grid: Grid
) -> np.ndarray:
    """Solve the discrete ZJ(Ee) = E(v) - R strain split for Ee_new.

    Corotation is implicit per cell; advection is taken at Ee_prev.
    Symmetry is preserved by construction.
    """
    L = kin.grad_vector(v_new, grid, kind="velocity")
    wspin = np.asarray(kin.skw(L)[..., 1, 0])
    Ev = kin.sym(L)
    adv = kin.upwind_advect(Ee_prev, v_new, grid) if grid.dim >= 1 else 0.0
    A = np.eye(3) / dt + _corot_matrix(wspin)
    rhs = _pack(Ev - Ep_rate + Ee_prev / dt - adv)
    return _unpack(_solve_sym(A, rhs))


def residuals(
    state_trial: FieldState,
    state_prev: FieldState,
    loads_k: LoadsSample,
    grid: Grid,
    params: con.MaterialParams,
    opts: StepOptions,
    thermal: Optional[con.ThermalLaw] = None,
) -> dict:
    """Max-norm residuals of the six discrete equations, with scales.

    Returns {name: (residual, scale)}; each residual vanishes iff the
    corresponding discrete equation holds exactly on the grid.
    """
    if thermal is None:
        thermal = con.thermal_law_for(params)
    tau = opts.dt
    eps = opts.eps
    theta_prev = thermal.theta_of_w(state_prev.w)
    theta_new = thermal.theta_of_w(state_trial.w)
    M_lag = np.asarray(con.maxwell_viscosity(theta_prev, params))
    v = state_trial.v

    if loads_k.grad_v_k is not None:
        L = np.broadcast_to(loads_k.grad_v_k, grid.spatial_shape + (NCOMP, NCOMP))
    elif loads_k.stress_dev_k is not None:
        L = (loads_k.stress_dev_k - kin.dev(con.stress_elastic(state_trial.Ee, state_trial.m, params))) / params.nu1
    elif grid.dim == 0:
        L = np.zeros((NCOMP, NCOMP))
    else:
        L = kin.grad_vector(v, grid, kind="velocity")
    Ev = kin.sym(L)
    Wsp = kin.skw(L)

    def zj_tensor(T_new, T_prev):
        adv = kin.upwind_advect(T_new, v, grid) if grid.dim >= 1 else 0.0
        return (T_new - T_prev) / tau + adv - kin.matmat(Wsp, T_new) + kin.matmat(T_new, Wsp)

    # (b) strain split
    res_b = zj_tensor(state_trial.Ee, state_prev.Ee) + zj_tensor(state_trial.Ep, state_prev.Ep) - Ev
    scale_b = max(1.0, float(np.max(np.abs(state_trial.Ee)))) / tau

    # (c) inelastic flow rule M(theta^{k-1}) R = dev S_E + varkappa lap R
    R = zj_tensor(state_trial.Ep, state_prev.Ep)
    lapR = kin.laplacian(R, grid) if (params.varkappa != 0.0 and grid.dim >= 1) else 0.0
    devS = kin.dev(con.stress_elastic(state_trial.Ee, state_trial.m, params))
    res_c = M_lag[..., None, None] * R - devS - params.varkappa * np.asarray(lapR)
    scale_c = max(float(np.max(np.abs(devS))), float(np.max(M_lag * np.max(np.abs(R)))), 1e-30)

    # (d) magnetization inclusion
    adv_m = kin.upwind_advect(state_trial.m, v, grid) if grid.dim >= 1 else 0.0
    r = (state_trial.m - state_prev.m) / tau + adv_m - kin.matvec(Wsp, state_trial.m)
    h_drv = con.h_anisotropy(state_trial.Ee, state_trial.m, theta_new, params, eps) + loads_k.h_ext_k
    if params.kappa != 0.0 and grid.dim >= 1:
        h_drv = h_drv + params.kappa * kin.laplacian(state_trial.m, grid)
    h_dem = h_dem_from_u(state_trial.u, grid)
    h_eff = h_drv + h_dem
    rmag = np.sqrt(np.sum(r * r, axis=-1))
    H = np.sqrt(np.sum(h_eff * h_eff, axis=-1))
    hc_val = np.broadcast_to(np.asarray(con.h_c(theta_prev, params)), H.shape)
    # rates at the roundoff floor of the m update count as sticking
    rate_floor = 64.0 * np.finfo(np.float64).eps * max(1.0, float(np.max(np.abs(state_trial.m)))) / tau
    moving = rmag > rate_floor
    zp = con.zeta_prime(theta_prev, np.maximum(rmag, 1e-300), params)
    unit_r = r / np.maximum(rmag, 1e-300)[..., None]
    viol_moving = np.sqrt(np.sum((h_eff - zp[..., None] * unit_r) ** 2, axis=-1))
    viol_stuck = np.maximum(H - hc_val, 0.0)
    res_d_field = np.where(moving, viol_moving, viol_stuck)
    scale_d = max(1.0, float(np.max(H)))

    # (e) demag potential
    if opts.demag and grid.dim >= 1:
        sol = solve_demag(state_trial.m, grid, params.mu0, opts.demag_boundary)
        res_e = float(np.max(np.abs(state_trial.u - sol.u)))
        scale_e = max(1.0, float(np.max(np.abs(sol.u))))
    else:
        res_e = float(np.max(np.abs(state_trial.u)))
        scale_e = 1.0

    # (f) enthalpy
    divv = kin.tensor_trace(L)
    xi = _xi_field(Ev, R, r, theta_prev, grid, params)
    r_conv = (state_trial.m - state_prev.m) / tau + adv_m
    adiab = (
        theta_new * np.sum(con.omega_eps_hat_prime(state_trial.m, params, eps) * r_conv, axis=-1)
        + (theta_new * con.omega_eps_hat(state_trial.m, params, eps) + thermal.phi(theta_new)) * divv
    )
    if loads_k.theta_k is not None:
        res_f = float(np.max(np.abs(state_trial.w - thermal.w_of_theta(loads_k.theta_k))))
        scale_f = max(1.0, float(np.max(np.abs(state_trial.w))))
    else:
        adv_w = kin.advect_scalar(state_trial.w, v, grid, tau, np.inf) if grid.dim >= 1 else 0.0
        cond = params.K_cond * kin.laplacian(theta_new, grid) if grid.dim >= 1 else 0.0
        res_f_field = (
            (state_trial.w - state_prev.w) / tau + adv_w - np.asarray(cond)
            - (1.0 - eps) * xi - adiab - boundary_source(loads_k.j_ext_k, grid)
        )
        res_f = float(np.max(np.abs(res_f_field)))
        scale_f = max(1.0, float(np.max(np.abs(state_trial.w)))) / tau

    # (a) momentum
    if loads_k.grad_v_k is not None or loads_k.stress_dev_k is not None:
        res_a, scale_a = 0.0, 1.0  # kinematics prescribed; momentum not solved
    elif grid.dim == 0:
        b_lag = con.buoyancy_b(theta_prev, params)
        res_a = float(
            np.max(np.abs(params.rho * (state_trial.v - state_prev.v) / tau
                          - params.rho * loads_k.g * (1.0 - np.asarray(b_lag))[..., None]))
        )
        scale_a = params.rho * max(1.0, float(np.max(np.abs(state_trial.v)))) / tau
    else:
        res_a_field = _momentum_residual_field(
            state_trial, state_prev, loads_k, grid, params, thermal, opts, h_eff, h_dem
        )
        res_a = float(np.max(np.abs(res_a_field)))
        scale_a = params.rho * max(1.0, float(np.max(np.abs(state_trial.v)))) / tau

    return {
        "momentum": (res_a, scale_a),
        "strain": (float(np.max(np.abs(res_b))), scale_b),
        "ep_flow": (float(np.max(np.abs(res_c))), scale_c),
        "m_inclusion": (float(np.max(res_d_field)), scale_d),
        "potential": (res_e, scale_e),
        "enthalpy": (res_f, scale_f),
    }


def _momentum_residual_field(
    state_trial, state_prev, loads_k, grid, params, thermal, opts, h_eff, h_dem
):
    theta_prev = thermal.theta_of_w(state_prev.w)
    v = state_trial.v
    tau = opts.dt
    L = kin.grad_vector(v, grid, kind="velocity")
    Ev = kin.sym(L)
    S_E = con.stress_elastic(state_trial.Ee, state_trial.m, params)
    grad_m = np.stack(
        [kin.grad_scalar(state_trial.m[..., i], grid) for i in range(NCOMP)], axis=-2
    )
    S_str = stress_structural(state_trial.m, grad_m, h_eff, params)
    grad_hdem = np.stack(
        [kin.grad_scalar(h_dem[..., i], grid) for i in range(NCOMP)], axis=-2
    )
    f_mag = params.mu0 * kin.matvec(np.swapaxes(grad_hdem, -1, -2), state_trial.m)
    b_lag = con.buoyancy_b(theta_prev, params)
    return (
        params.rho * ((v - state_prev.v) / tau + kin.upwind_advect(v, v, grid))
        + 0.5 * params.rho * kin.div_vector(v, grid, kind="velocity")[..., None] * v
        - kin.div_tensor(S_E + params.nu1 * Ev + S_str, grid)
        + _hyperstress_force(Ev, grid, params)
        - f_mag
        - params.rho * loads_k.g * (1.0 - np.asarray(b_lag))[..., None]
    )


__all__ = [
    "StepOptions",
    "StepReport",
    "step",
    "residuals",
    "green_naghdi_update",
    "stress_structural",
    "boundary_source",
]
