"""Tensor algebra and discrete differential/transport operators.

Objective rates follow the Zaremba-Jaumann (ZJ) convention with the
material spin W = skw(grad v):

    vector:  m°  = dm/dt + (v.grad)m - W m
    tensor:  A°  = dA/dt + (v.grad)A - W A + A W

Spatial gradients are second-order central differences with one ghost
layer; convective terms use first-order upwinding.  On a dim=0 grid every
spatial derivative operator returns exactly zero, so the same code paths
drive the homogeneous material-point mode.
"""

from __future__ import annotations

import numpy as np

from .errors import CflViolation
from .grid import NCOMP, Grid

# ---------------------------------------------------------------------------
# pointwise tensor algebra


def sym(T: np.ndarray) -> np.ndarray:
    return 0.5 * (T + np.swapaxes(T, -1, -2))


def skw(T: np.ndarray) -> np.ndarray:
    return 0.5 * (T - np.swapaxes(T, -1, -2))


def tensor_trace(T: np.ndarray) -> np.ndarray:
    return np.trace(T, axis1=-2, axis2=-1)


def sph(T: np.ndarray) -> np.ndarray:
    """Spherical part (tr T / d) I with d = NCOMP in-plane components."""
    eye = np.eye(NCOMP)
    return (tensor_trace(T) / NCOMP)[..., None, None] * eye


def dev(T: np.ndarray) -> np.ndarray:
    """Deviatoric part T - sph(T)."""
    return T - sph(T)


def strain_rate(grad_v: np.ndarray) -> np.ndarray:
    """Small strain rate E(v) = sym(grad v)."""
    return sym(grad_v)


def spin(grad_v: np.ndarray) -> np.ndarray:
    """Material spin W = skw(grad v)."""
    return skw(grad_v)


def matvec(T: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", T, x)


def matmat(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.einsum("...ik,...kj->...ij", A, B)


def ddot(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Double contraction A:B summed over the two trailing axes."""
    return np.einsum("...ij,...ij->...", A, B)


# ---------------------------------------------------------------------------
# ghost-cell padding and stencils

def _pad1(f: np.ndarray, axis: int, mode: str) -> np.ndarray:
    """Pad one ghost layer on both ends of a spatial axis.

    mode 'even': ghost = edge value (zero normal derivative at the wall);
    mode 'odd' : ghost = -edge value (zero value at the wall face).
    """
    width = [(0, 0)] * f.ndim
    width[axis] = (1, 1)
    p = np.pad(f, width, mode="edge")
    if mode == "odd":
        lo = [slice(None)] * f.ndim
        hi = [slice(None)] * f.ndim
        lo[axis] = slice(0, 1)
        hi[axis] = slice(-1, None)
        p[tuple(lo)] *= -1.0
        p[tuple(hi)] *= -1.0
    return p


def _take(f: np.ndarray, axis: int, sl: slice) -> np.ndarray:
    idx = [slice(None)] * f.ndim
    idx[axis] = sl
    return f[tuple(idx)]


def _central_diff(f: np.ndarray, grid: Grid, axis: int, mode: str) -> np.ndarray:
    h = grid.spacing[axis]
    p = _pad1(f, axis, mode)
    return (_take(p, axis, slice(2, None)) - _take(p, axis, slice(None, -2))) / (2.0 * h)


def _second_diff(f: np.ndarray, grid: Grid, axis: int, mode: str) -> np.ndarray:
    h = grid.spacing[axis]
    p = _pad1(f, axis, mode)
    return (
        _take(p, axis, slice(2, None)) - 2.0 * f + _take(p, axis, slice(None, -2))
    ) / (h * h)


# ---------------------------------------------------------------------------
# gradients / divergences / Laplacians


def grad_scalar(f: np.ndarray, grid: Grid, bc: str = "even") -> np.ndarray:
    """Cell-centered gradient, shape f.shape + (NCOMP,); absent axes are zero."""
    out = np.zeros(f.shape + (NCOMP,))
    for a in range(grid.dim):
        out[..., a] = _central_diff(f, grid, a, bc)
    return out


def grad_vector(vf: np.ndarray, grid: Grid, kind: str = "even") -> np.ndarray:
    """Gradient G[..., i, j] = d_j v_i of a vector field.

    kind 'velocity' uses free-slip wall ghosts: the wall-normal component
    is odd (v.n = 0), tangential components even (traction-free).
    """
    out = np.zeros(vf.shape[:-1] + (NCOMP, NCOMP))
    for a in range(grid.dim):
        for i in range(NCOMP):
            mode = "odd" if (kind == "velocity" and i == a) else "even"
            out[..., i, a] = _central_diff(vf[..., i], grid, a, mode)
    return out


def div_vector(vf: np.ndarray, grid: Grid, kind: str = "even") -> np.ndarray:
    out = np.zeros(vf.shape[:-1])
    for a in range(grid.dim):
        mode = "odd" if kind == "velocity" else "even"
        out += _central_diff(vf[..., a], grid, a, mode)
    return out


def grad_tensor(A: np.ndarray, grid: Grid, bc: str = "even") -> np.ndarray:
    """Gradient G[..., i, j, a] = d_a A_ij of a tensor field."""
    out = np.zeros(A.shape + (NCOMP,))
    for a in range(grid.dim):
        out[..., a] = _central_diff(A, grid, a, bc)
    return out


def div_tensor(S: np.ndarray, grid: Grid, bc: str = "even") -> np.ndarray:
    """Row-wise divergence (div S)_i = d_a S_ia."""
    out = np.zeros(S.shape[:-1])
    for a in range(grid.dim):
        out += _central_diff(S[..., a], grid, a, bc)
    return out


def laplacian(f: np.ndarray, grid: Grid, bc: str = "even") -> np.ndarray:
    """Componentwise 5-point Laplacian with Neumann (even) ghosts by default."""
    out = np.zeros_like(f)
    for a in range(grid.dim):
        out += _second_diff(f, grid, a, bc)
    return out


# ---------------------------------------------------------------------------
# transport


def upwind_advect(f: np.ndarray, v: np.ndarray, grid: Grid, bc: str = "even") -> np.ndarray:
    """Non-conservative first-order upwind (v.grad)f for any trailing rank."""
    out = np.zeros_like(f)
    ncomp_axes = f.ndim - grid.dim
    for a in range(grid.dim):
        h = grid.spacing[a]
        va = v[..., a].reshape(v.shape[:-1] + (1,) * ncomp_axes)
        p = _pad1(f, a, bc)
        backward = (f - _take(p, a, slice(None, -2))) / h
        forward = (_take(p, a, slice(2, None)) - f) / h
        out += np.maximum(va, 0.0) * backward + np.minimum(va, 0.0) * forward
    return out


def advect_scalar(
    w: np.ndarray, v: np.ndarray, grid: Grid, dt: float, cfl_max: float = 1.0
) -> np.ndarray:
    """Conservative upwind flux divergence div(v w) with v.n = 0 walls.

    Returns the divergence-form transport term (per unit time); its integral
    over Omega vanishes identically, so total w changes only by sources.
    Raises CflViolation when |v| dt / h exceeds cfl_max on any axis.
    """
    out = np.zeros_like(w)
    for a in range(grid.dim):
        h = grid.spacing[a]
        va = v[..., a]
        vmax = float(np.max(np.abs(va))) if va.size else 0.0
        if vmax * dt / h > cfl_max:
            raise CflViolation(
                f"axis {a}: |v| dt / h = {vmax * dt / h:.3f} exceeds cfl_max={cfl_max}"
            )
        wa = np.moveaxis(w, a, 0)
        ua = np.moveaxis(va, a, 0)
        vface = 0.5 * (ua[1:] + ua[:-1])
        wup = np.where(vface > 0.0, wa[:-1], wa[1:])
        flux = np.zeros((wa.shape[0] + 1,) + wa.shape[1:])
        flux[1:-1] = vface * wup
        out += np.moveaxis((flux[1:] - flux[:-1]) / h, 0, a)
    return out


# ---------------------------------------------------------------------------
# Zaremba-Jaumann rates (convective-corotational parts)


def bzj_vector(v: np.ndarray, grad_v: np.ndarray, m: np.ndarray, grid: Grid) -> np.ndarray:
    """(v.grad)m - W m, the transport part of the ZJ vector rate."""
    W = skw(grad_v)
    return upwind_advect(m, v, grid) - matvec(W, m)


def bzj_tensor(v: np.ndarray, grad_v: np.ndarray, A: np.ndarray, grid: Grid) -> np.ndarray:
    """(v.grad)A - W A + A W, the transport part of the ZJ tensor rate."""
    W = skw(grad_v)
    return upwind_advect(A, v, grid) - matmat(W, A) + matmat(A, W)


__all__ = [
    "sym",
    "skw",
    "dev",
    "sph",
    "tensor_trace",
    "strain_rate",
    "spin",
    "matvec",
    "matmat",
    "ddot",
    "grad_scalar",
    "grad_vector",
    "div_vector",
    "grad_tensor",
    "div_tensor",
    "laplacian",
    "upwind_advect",
    "advect_scalar",
    "bzj_vector",
    "bzj_tensor",
]
