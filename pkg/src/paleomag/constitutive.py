"""Material laws: free-energy pieces, dissipation potential and its
resolvent, temperature-dependent viscosities/coercivity, thermal law.

Free energy (in-plane, d = 2 components):

    phi(Ee, m) = (K_E/2) (tr Ee)^2 + G_E |dev Ee|^2 + (b0/2) |m|^4

(the quartic carries the 1/2 so that the minimizer of phi + omega sits
exactly at the saturation magnetization sqrt(a0 (theta_c - theta)/b0))
    omega(m, theta) = a0 (theta - theta_c) |m|^2          (affine in theta)
    omega_eps = omega / (1 + eps |m|^2)                   (regularization)

Dissipation potential for the magnetization rate (radial in |mdot|):

    zeta(theta; mdot) = h_c(theta)|mdot| + eps_reg |mdot|^r_exp
                        + tau_c * min(|mdot|, m_r)^2

The engine is dimension-agnostic; shipped scenarios are nondimensional.
h_c is expressed in the same units as the driving field h_drv (A/m), so
mu0 * zeta carries the dissipation energy density.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, ConstitutiveError, ThermodynamicError
from .kinematics import dev, tensor_trace


@dataclass(frozen=True)
class MaterialParams:
    """Constitutive constants; immutable after construction."""

    rho: float = 1.0          # mass density
    K_E: float = 1.0          # bulk modulus
    G_E: float = 1.0          # shear modulus
    a0: float = 1.0           # magnetic coupling
    b0: float = 1.0           # quartic coefficient
    theta_c: float = 1.0      # Curie/Neel temperature
    theta_b: float = 0.6      # blocking temperature
    h_c_high: float = 0.1     # coercive level below theta_b
    h_c_low: float = 0.0      # coercive level above theta_b
    hc_width: float = 0.02    # blocking transition width
    tau_c: float = 0.05       # viscous magnetization time constant
    eps_reg: float = 1e-6     # coercive regularization coefficient in zeta
    m_r: float = math.inf     # rate threshold capping the quadratic branch
    r_exp: float = 3.0        # rate exponent in zeta
    kappa: float = 0.0        # exchange coefficient
    varkappa: float = 0.0     # inelastic-rate gradient coefficient
    nu1: float = 1.0          # Stokes viscosity
    nu2: float = 1e-6         # hyperviscosity coefficient
    p: float = 4.0            # hyperstress exponent (> dim)
    mu0: float = 1.0          # vacuum permeability
    M_solid: float = 1e4      # Maxwell viscosity, solid plateau
    M_magma: float = 1e-2     # Maxwell viscosity, magma plateau
    theta_melt: float = 1.5   # melting transition center
    melt_width: float = 0.2   # melting transition width
    K_cond: float = 1.0       # heat conductivity
    c_v: float = 100.0        # heat capacity
    buoyancy_coeff: float = 0.0      # b(theta) = coeff * (theta - ref)
    buoyancy_theta_ref: float = 1.0

    def validate(self) -> None:
        pos = ("rho", "mu0", "nu1", "K_E", "G_E", "theta_c", "c_v", "K_cond",
               "M_solid", "M_magma", "melt_width", "hc_width", "m_r", "p")
        for name in pos:
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"MaterialParams.{name} must be > 0, got {getattr(self, name)}")
        nonneg = ("a0", "b0", "nu2", "kappa", "varkappa", "tau_c", "eps_reg",
                  "h_c_high", "h_c_low", "theta_b")
        for name in nonneg:
            if getattr(self, name) < 0.0:
                raise ConfigError(f"MaterialParams.{name} must be >= 0, got {getattr(self, name)}")
        if self.M_solid < self.M_magma:
            raise ConfigError("M_solid must be >= M_magma")
        if not self.r_exp > 2.0:
            raise ConfigError(f"r_exp must be > 2, got {self.r_exp}")
        if not self.r_exp < self.p:
            raise ConfigError(f"r_exp must be < p, got r_exp={self.r_exp}, p={self.p}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "MaterialParams":
        known = {f.name for f in dataclasses.fields(MaterialParams)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown material parameters: {sorted(unknown)}")
        params = MaterialParams(**{k: float(v) for k, v in data.items()})
        params.validate()
        return params


# ---------------------------------------------------------------------------
# free energy and its derivatives


def _m2(m: np.ndarray) -> np.ndarray:
    return np.sum(m * m, axis=-1)


def phi_mech(Ee: np.ndarray, m: np.ndarray, params: MaterialParams) -> np.ndarray:
    """phi(Ee, m) = (K_E/2)(tr Ee)^2 + G_E|dev Ee|^2 + (b0/2)|m|^4, >= 0."""
    tr = tensor_trace(Ee)
    dv = dev(Ee)
    return (
        0.5 * params.K_E * tr * tr
        + params.G_E * np.sum(dv * dv, axis=(-2, -1))
        + 0.5 * params.b0 * _m2(m) ** 2
    )


def stress_elastic(Ee: np.ndarray, m: np.ndarray, params: MaterialParams) -> np.ndarray:
    """S_E = phi'_Ee = K_E (tr Ee) I + 2 G_E dev Ee (symmetric)."""
    eye = np.eye(Ee.shape[-1])
    return params.K_E * tensor_trace(Ee)[..., None, None] * eye + 2.0 * params.G_E * dev(Ee)


def phi_m_prime(m: np.ndarray, params: MaterialParams) -> np.ndarray:
    """phi'_m = 2 b0 |m|^2 m."""
    return 2.0 * params.b0 * _m2(m)[..., None] * m


def omega(m: np.ndarray, theta, params: MaterialParams) -> np.ndarray:
    """omega(m, theta) = a0 (theta - theta_c) |m|^2."""
    return params.a0 * (np.asarray(theta) - params.theta_c) * _m2(m)


def omega_hat(m: np.ndarray, params: MaterialParams) -> np.ndarray:
    """omega_hat = d omega / d theta = a0 |m|^2."""
    return params.a0 * _m2(m)


def omega_hat_prime(m: np.ndarray, params: MaterialParams) -> np.ndarray:
    return 2.0 * params.a0 * m


def omega_eps(m: np.ndarray, theta, params: MaterialParams, eps: float) -> np.ndarray:
    """Regularized omega_eps = omega / (1 + eps |m|^2); eps=0 gives omega."""
    return omega(m, theta, params) / (1.0 + eps * _m2(m))


def omega_eps_m(m: np.ndarray, theta, params: MaterialParams, eps: float) -> np.ndarray:
    """[omega_eps]'_m = 2 a0 (theta - theta_c) m / (1 + eps|m|^2)^2."""
    den = (1.0 + eps * _m2(m)) ** 2
    return (2.0 * params.a0 * (np.asarray(theta) - params.theta_c) / den)[..., None] * m


def omega_eps_hat(m: np.ndarray, params: MaterialParams, eps: float) -> np.ndarray:
    return params.a0 * _m2(m) / (1.0 + eps * _m2(m))


def omega_eps_hat_prime(m: np.ndarray, params: MaterialParams, eps: float) -> np.ndarray:
    den = (1.0 + eps * _m2(m)) ** 2
    return (2.0 * params.a0 / den)[..., None] * m


def h_anisotropy(Ee: np.ndarray, m: np.ndarray, theta, params: MaterialParams, eps: float = 0.0) -> np.ndarray:
    """Anisotropy contribution -(phi'_m + [omega_eps]'_m)/mu0 to h_drv.

    Ee is accepted for interface uniformity; the shipped free energy has no
    magnetostrictive cross term, so it does not enter.
    """
    return -(phi_m_prime(m, params) + omega_eps_m(m, theta, params, eps)) / params.mu0


def equilibrium_m(theta: float, h_mag: float, params: MaterialParams) -> float:
    """Magnitude of the stationary magnetization aligned with a field h.

    Solves phi'_m + omega'_m = mu0 h radially:
    2 b0 m^3 + 2 a0 (theta - theta_c) m = mu0 h (largest real root >= 0).
    """
    if params.b0 == 0.0:
        denom = 2.0 * params.a0 * (theta - params.theta_c)
        return params.mu0 * h_mag / denom if denom != 0.0 else 0.0
    roots = np.roots(
        [2.0 * params.b0, 0.0, 2.0 * params.a0 * (theta - params.theta_c), -params.mu0 * h_mag]
    )
    real = roots[np.abs(roots.imag) < 1e-12].real
    real = real[real >= 0.0]
    return float(np.max(real)) if real.size else 0.0


def m_sat(theta, params: MaterialParams):
    """Saturation magnetization sqrt(a0 (theta_c - theta)/b0), 0 above theta_c."""
    theta = np.asarray(theta, dtype=np.float64)
    if params.b0 == 0.0:
        return np.zeros_like(theta)
    gap = np.maximum(params.theta_c - theta, 0.0)
    return np.sqrt(params.a0 * gap / params.b0)


# ---------------------------------------------------------------------------
# temperature-dependent laws


def _logistic(x):
    # overflow-safe 1/(1+exp(x))
    from scipy.special import expit

    return expit(-np.asarray(x, dtype=np.float64))


def h_c(theta, params: MaterialParams):
    """Smooth monotone step from h_c_high (cold) to h_c_low (hot) at theta_b."""
    theta = np.asarray(theta, dtype=np.float64)
    s = _logistic((theta - params.theta_b) / (params.hc_width / 4.0))
    return params.h_c_low + (params.h_c_high - params.h_c_low) * s


def maxwell_viscosity(theta, params: MaterialParams):
    """Log-linear ramp from M_solid to M_magma across the melting window.

    Midpoint theta_melt gives the geometric mean sqrt(M_solid * M_magma).
    """
    theta = np.asarray(theta, dtype=np.float64)
    s = _logistic((theta - params.theta_melt) / (params.melt_width / 8.0))
    ln_m = math.log(params.M_magma) + (math.log(params.M_solid) - math.log(params.M_magma)) * s
    return np.exp(ln_m)


def conductivity(theta, params: MaterialParams):
    """Heat conductivity K(theta); constant in the shipped model."""
    return np.full_like(np.asarray(theta, dtype=np.float64), params.K_cond)


def buoyancy_b(theta, params: MaterialParams):
    """Oberbeck-Boussinesq factor b(theta) = coeff * (theta - theta_ref)."""
    return params.buoyancy_coeff * (np.asarray(theta, dtype=np.float64) - params.buoyancy_theta_ref)


# ---------------------------------------------------------------------------
# dissipation potential zeta and its resolvent


def zeta(theta, mdot_mag, params: MaterialParams):
    """zeta(theta; |mdot|) = h_c|mdot| + eps_reg|mdot|^r_exp + tau_c min(|mdot|, m_r)^2."""
    s = np.abs(np.asarray(mdot_mag, dtype=np.float64))
    capped = np.minimum(s, params.m_r)
    return h_c(theta, params) * s + params.eps_reg * s ** params.r_exp + params.tau_c * capped ** 2


def zeta_prime(theta, mdot_mag, params: MaterialParams):
    """d zeta / d|mdot| for |mdot| > 0 (quadratic branch frozen above m_r)."""
    s = np.asarray(mdot_mag, dtype=np.float64)
    out = h_c(theta, params) + params.r_exp * params.eps_reg * s ** (params.r_exp - 1.0)
    out = out + np.where(s <= params.m_r, 2.0 * params.tau_c * s, 0.0)
    return out


def zeta_diss(theta, r_vec: np.ndarray, params: MaterialParams):
    """Uniquely defined dissipation density d zeta(mdot) . mdot = zeta'(|r|)|r|.

    Zero at sticking (r = 0) regardless of the multivalued subdifferential.
    """
    s = np.sqrt(_m2(r_vec))
    return np.where(s > 0.0, zeta_prime(theta, s, params) * s, 0.0)


def _branch_root_bisect(target, lo, hi, f, iters: int = 200):
    """Vectorized bisection for the monotone branch equation f(s) = target."""
    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), np.shape(target)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), np.shape(target)).copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        high = f(mid) > target
        hi = np.where(high, mid, hi)
        lo = np.where(high, lo, mid)
    return 0.5 * (lo + hi)


def zeta_resolvent(theta, h_eff: np.ndarray, params: MaterialParams) -> np.ndarray:
    """Solve h_eff in d zeta(theta; mdot) for mdot (pointwise, vectorized).

    By radial symmetry mdot is parallel to h_eff and its magnitude s solves
    zeta'(s) = |h_eff| on the active branch; |h_eff| <= h_c gives sticking.
    The value-capped quadratic makes zeta nonconvex at m_r, so both branches
    are compared through the objective zeta(s) - |h_eff| s.
    """
    H = np.sqrt(_m2(h_eff))
    hc_val = np.asarray(h_c(theta, params), dtype=np.float64)
    hc_val = np.broadcast_to(hc_val, H.shape)
    excess = H - hc_val
    active = excess > 0.0
    s = np.zeros_like(H)
    if np.any(active):
        ex = np.where(active, excess, 0.0)
        eps, tc, re = params.eps_reg, params.tau_c, params.r_exp
        if eps == 0.0 and tc == 0.0:
            raise ConstitutiveError(
                "zeta has no minimizer above the sticking threshold "
                "(eps_reg = tau_c = 0); the flow rule is ill-posed"
            )
        # branch A: quadratic term active (s <= m_r)
        if eps == 0.0:
            sA = ex / (2.0 * tc)
        elif tc == 0.0:
            sA = (ex / (re * eps)) ** (1.0 / (re - 1.0))
        elif re == 3.0:
            sA = (-tc + np.sqrt(tc * tc + 3.0 * eps * ex)) / (3.0 * eps)
        else:
            hi = np.maximum(ex / (2.0 * tc), (ex / (re * eps)) ** (1.0 / (re - 1.0))) + 1.0
            sA = _branch_root_bisect(
                ex, 0.0, hi, lambda s_: re * eps * s_ ** (re - 1.0) + 2.0 * tc * s_
            )
        s = np.where(active, sA, 0.0)
        if np.isfinite(params.m_r):
            if eps == 0.0:
                raise ConstitutiveError(
                    "capped quadratic zeta with eps_reg = 0 is not coercive "
                    "beyond the rate threshold m_r"
                )
            # branch B: cap active (s > m_r), zeta' = h_c + r eps s^(r-1);
            # the cap makes zeta nonconvex, so both branch candidates are
            # compared through the objective (global-minimizer convention)
            sA_cl = np.minimum(sA, params.m_r)
            sB = np.maximum((ex / (re * eps)) ** (1.0 / (re - 1.0)), params.m_r)
            objA = zeta(theta, sA_cl, params) - H * sA_cl
            objB = zeta(theta, sB, params) - H * sB
            s = np.where(active, np.where(objB < objA, sB, sA_cl), 0.0)
    unit = np.where(H[..., None] > 0.0, h_eff / np.maximum(H, 1e-300)[..., None], 0.0)
    return s[..., None] * unit


# ---------------------------------------------------------------------------
# thermal law and entropy


@dataclass(frozen=True)
class ThermalLaw:
    """Thermal free-energy part phi(theta) and the enthalpy transform.

    gamma(theta) = theta phi'(theta) - phi(theta) is the enthalpy density,
    capacity c(theta) = theta phi''(theta); gamma is strictly increasing so
    theta = gamma_inv(w) is well defined.
    """

    phi: Callable
    phi_prime: Callable
    gamma: Callable
    gamma_inv: Callable
    capacity: Callable

    def theta_of_w(self, w):
        return self.gamma_inv(w)

    def w_of_theta(self, theta):
        return self.gamma(theta)


def canonical_thermal_law(c_v: float) -> ThermalLaw:
    """phi(theta) = c_v theta (ln theta - 1), giving gamma(theta) = c_v theta.

    This is the convex orientation of the canonical choice: the enthalpy
    w = c_v theta is nonnegative and increasing and the capacity is the
    constant +c_v (so that d eta / d theta = c/theta > 0).
    """
    if c_v <= 0.0:
        raise ConfigError(f"c_v must be positive, got {c_v}")

    def phi(theta):
        theta = np.asarray(theta, dtype=np.float64)
        return np.where(theta > 0.0, c_v * theta * (np.log(np.maximum(theta, 1e-300)) - 1.0), 0.0)

    def phi_prime(theta):
        theta = np.asarray(theta, dtype=np.float64)
        if np.any(theta <= 0.0):
            raise ThermodynamicError("phi'(theta) undefined at theta <= 0")
        return c_v * np.log(theta)

    return ThermalLaw(
        phi=phi,
        phi_prime=phi_prime,
        gamma=lambda theta: c_v * np.asarray(theta, dtype=np.float64),
        gamma_inv=lambda w: np.asarray(w, dtype=np.float64) / c_v,
        capacity=lambda theta: np.full_like(np.asarray(theta, dtype=np.float64), c_v),
    )


def thermal_law_for(params: MaterialParams) -> ThermalLaw:
    return canonical_thermal_law(params.c_v)


def entropy_density(m: np.ndarray, theta, thermal: ThermalLaw, params: MaterialParams, eps: float = 0.0):
    """eta = phi'(theta) - omega_hat_eps(m); undefined at theta = 0."""
    return thermal.phi_prime(theta) - omega_eps_hat(m, params, eps)


__all__ = [
    "MaterialParams",
    "ThermalLaw",
    "buoyancy_b",
    "canonical_thermal_law",
    "conductivity",
    "entropy_density",
    "equilibrium_m",
    "h_anisotropy",
    "h_c",
    "m_sat",
    "maxwell_viscosity",
    "omega",
    "omega_eps",
    "omega_eps_hat",
    "omega_eps_hat_prime",
    "omega_eps_m",
    "omega_hat",
    "omega_hat_prime",
    "phi_m_prime",
    "phi_mech",
    "stress_elastic",
    "thermal_law_for",
    "zeta",
    "zeta_diss",
    "zeta_prime",
    "zeta_resolvent",
]
