"""Spatial discretization, state container, boundary tags, and load sampling.

Conventions used across the whole package:

* fields are cell-centered ``float64`` arrays whose spatial shape is
  ``()`` (dim 0), ``(nx,)`` (dim 1) or ``(nx, ny)`` (dim 2);
* vectors and tensors always carry two in-plane components regardless of
  ``dim`` (a 0D "material point" is a 2-component point, a 1D line embeds
  full vectors/tensors varying along one axis), so the tensor algebra is
  identical in every mode;
* trailing axes are the component axes: vectors ``(..., 2)``,
  tensors ``(..., 2, 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, ScenarioError

NCOMP = 2  # in-plane vector/tensor components, independent of grid.dim


@dataclass(frozen=True)
class Grid:
    """Structured rectangular discretization of Omega plus demag padding.

    dim = 0 is the homogeneous material-point mode: all fields are single
    values and every spatial derivative operator returns zero.
    """

    dim: int
    extents: tuple[float, ...]
    cells: tuple[int, ...]
    pad_factor: int = 4

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.extents, self.cells))

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return tuple(self.cells)

    @property
    def cell_volume(self) -> float:
        """Cell measure; the material point carries unit volume."""
        vol = 1.0
        for h in self.spacing:
            vol *= h
        return vol

    @property
    def total_volume(self) -> float:
        vol = 1.0
        for L in self.extents:
            vol *= L
        return vol if self.dim > 0 else 1.0

    @property
    def padded_cells(self) -> tuple[int, ...]:
        return tuple(self.pad_factor * n for n in self.cells)

    @property
    def boundary_area(self) -> float:
        """Total measure of the boundary of Omega (unit area for dim 0)."""
        if self.dim == 0:
            return 1.0
        if self.dim == 1:
            return 2.0
        Lx, Ly = self.extents
        return 2.0 * (Lx + Ly)

    def scalar_field(self, fill: float = 0.0) -> np.ndarray:
        return np.full(self.spatial_shape, fill, dtype=np.float64)

    def vector_field(self) -> np.ndarray:
        return np.zeros(self.spatial_shape + (NCOMP,), dtype=np.float64)

    def tensor_field(self) -> np.ndarray:
        return np.zeros(self.spatial_shape + (NCOMP, NCOMP), dtype=np.float64)

    def padded_scalar_field(self) -> np.ndarray:
        return np.zeros(self.padded_cells, dtype=np.float64)

    def cell_centers(self) -> tuple[np.ndarray, ...]:
        """Cell-center coordinates per axis, origin at the domain corner."""
        return tuple(
            (np.arange(n) + 0.5) * h for n, h in zip(self.cells, self.spacing)
        )

    def integrate(self, density: np.ndarray) -> float:
        """Midpoint quadrature of a density field over Omega."""
        return float(np.sum(density)) * self.cell_volume


def make_grid(
    dim: int,
    extents: Sequence[float] = (),
    cells: Sequence[int] = (),
    pad_factor: int = 4,
) -> Grid:
    """Validate and build a :class:`Grid`."""
    if dim not in (0, 1, 2):
        raise ConfigError(f"dim must be 0, 1, or 2, got {dim}")
    extents = tuple(float(L) for L in extents)[:dim]
    cells = tuple(int(n) for n in cells)[:dim]
    if len(extents) != dim or len(cells) != dim:
        raise ConfigError(
            f"need {dim} extents and cell counts, got {extents} / {cells}"
        )
    if any(L <= 0.0 for L in extents):
        raise ConfigError(f"extents must be positive, got {extents}")
    if any(n < 1 for n in cells):
        raise ConfigError(f"cell counts must be >= 1, got {cells}")
    if pad_factor < 2:
        raise ConfigError(f"pad_factor must be >= 2, got {pad_factor}")
    return Grid(dim=dim, extents=extents, cells=cells, pad_factor=int(pad_factor))


# The model admits exactly one boundary-condition set (impermeable free-slip
# walls with hyperstress, natural conditions for R and m, Fourier flux); the
# spec keeps the tags explicit so every face carries them visibly.
_STANDARD_TAGS = ("v.n=0", "tangential-traction-free", "(n.grad)R=0", "(n.grad)m=0", "fourier-flux")


@dataclass(frozen=True)
class BoundarySpec:
    """Per-face boundary tags; all faces carry the model's standard set."""

    face_tags: tuple[tuple[str, ...], ...] = ()

    @staticmethod
    def standard(grid: Grid) -> "BoundarySpec":
        return BoundarySpec(face_tags=tuple(_STANDARD_TAGS for _ in range(2 * grid.dim)))

    def validate(self) -> None:
        for tags in self.face_tags:
            if tuple(tags) != _STANDARD_TAGS:
                raise ConfigError(f"unsupported boundary tag set {tags}")


@dataclass
class FieldState:
    """All unknowns at one time level.

    v: velocity (m/s); Ee: elastic strain; Ep: inelastic strain (trace-free);
    m: magnetization (A/m); u: demag potential on the padded grid (A);
    w: enthalpy density (J/m^3); t: time (s).
    """

    v: np.ndarray
    Ee: np.ndarray
    Ep: np.ndarray
    m: np.ndarray
    u: np.ndarray
    w: np.ndarray
    t: float = 0.0

    @staticmethod
    def zeros(grid: Grid, w0: float = 0.0) -> "FieldState":
        return FieldState(
            v=grid.vector_field(),
            Ee=grid.tensor_field(),
            Ep=grid.tensor_field(),
            m=grid.vector_field(),
            u=grid.padded_scalar_field(),
            w=grid.scalar_field(w0),
            t=0.0,
        )

    def copy(self) -> "FieldState":
        return FieldState(
            v=self.v.copy(),
            Ee=self.Ee.copy(),
            Ep=self.Ep.copy(),
            m=self.m.copy(),
            u=self.u.copy(),
            w=self.w.copy(),
            t=self.t,
        )

    def validate(self, grid: Grid) -> None:
        """Check shapes and the state invariants (symmetry, trace, w >= 0)."""
        shp = grid.spatial_shape
        expect = {
            "v": shp + (NCOMP,),
            "Ee": shp + (NCOMP, NCOMP),
            "Ep": shp + (NCOMP, NCOMP),
            "m": shp + (NCOMP,),
            "u": grid.padded_cells,
            "w": shp,
        }
        for name, shape in expect.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ConfigError(f"{name} has shape {arr.shape}, expected {shape}")
        asym = np.max(np.abs(self.Ee - np.swapaxes(self.Ee, -1, -2)))
        if asym > 1e-12:
            raise ConfigError(f"Ee asymmetry {asym:.3e} exceeds 1e-12")
        trp = np.max(np.abs(np.trace(self.Ep, axis1=-2, axis2=-1)))
        if trp > 1e-10:
            raise ConfigError(f"trace(Ep) {trp:.3e} exceeds 1e-10")
        if np.min(self.w) < 0.0:
            raise ConfigError(f"w has negative values (min {np.min(self.w):.3e})")


VectorSampler = Callable[[float], np.ndarray]
ScalarSampler = Callable[[float], float]
TensorSampler = Callable[[float], np.ndarray]


@dataclass
class Loads:
    """Time-dependent external data sampled once per step.

    g: gravity acceleration (constant vector); h_ext: external field
    sampler; j_ext: boundary heat influx sampler, constrained >= 0.
    Optional drives: grad_v prescribes the velocity gradient (the momentum
    block is skipped), stress_dev prescribes a deviatoric stress
    (quasi-static strain-rate control), theta prescribes the temperature
    (the heat equation is replaced by an audited control flux).
    """

    g: np.ndarray = field(default_factory=lambda: np.zeros(NCOMP))
    h_ext: Optional[VectorSampler] = None
    j_ext: Optional[ScalarSampler] = None
    grad_v: Optional[TensorSampler] = None
    stress_dev: Optional[TensorSampler] = None
    theta: Optional[ScalarSampler] = None


@dataclass
class LoadsSample:
    """Per-step load values: h at t_k and t_{k-1}, finite-difference rate."""

    g: np.ndarray
    h_ext_k: np.ndarray
    h_ext_prev: np.ndarray
    dh_ext_dt_k: np.ndarray
    j_ext_k: float
    grad_v_k: Optional[np.ndarray] = None
    stress_dev_k: Optional[np.ndarray] = None
    theta_k: Optional[float] = None


def _as_vec(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (NCOMP,):
        raise ScenarioError(f"expected a {NCOMP}-vector, got shape {arr.shape}")
    return arr


def sample_loads(loads: Loads, t: float, dt: float) -> LoadsSample:
    """Evaluate all load samplers for the step ending at time t."""
    if not np.isfinite(t) or not np.isfinite(dt) or dt <= 0.0:
        raise ScenarioError(f"invalid sampling time t={t}, dt={dt}")
    if loads.h_ext is not None:
        h_k = _as_vec(loads.h_ext(t))
        h_prev = _as_vec(loads.h_ext(t - dt))
    else:
        h_k = np.zeros(NCOMP)
        h_prev = np.zeros(NCOMP)
    if not np.all(np.isfinite(h_k)) or not np.all(np.isfinite(h_prev)):
        raise ScenarioError(f"h_ext sampler undefined near t={t}")
    j_k = float(loads.j_ext(t)) if loads.j_ext is not None else 0.0
    if not np.isfinite(j_k):
        raise ScenarioError(f"j_ext sampler undefined at t={t}")
    if j_k < 0.0:
        raise ScenarioError(f"j_ext(t={t}) = {j_k} violates the positivity assumption j_ext >= 0")
    grad_v_k = None
    if loads.grad_v is not None:
        grad_v_k = np.asarray(loads.grad_v(t), dtype=np.float64)
        if grad_v_k.shape != (NCOMP, NCOMP):
            raise ScenarioError(f"grad_v sampler must return a {NCOMP}x{NCOMP} tensor")
    stress_k = None
    if loads.stress_dev is not None:
        stress_k = np.asarray(loads.stress_dev(t), dtype=np.float64)
        if stress_k.shape != (NCOMP, NCOMP):
            raise ScenarioError(f"stress_dev sampler must return a {NCOMP}x{NCOMP} tensor")
    theta_k = None
    if loads.theta is not None:
        theta_k = float(loads.theta(t))
        if not np.isfinite(theta_k) or theta_k < 0.0:
            raise ScenarioError(f"theta control undefined or negative at t={t}")
    return LoadsSample(
        g=np.asarray(loads.g, dtype=np.float64),
        h_ext_k=h_k,
        h_ext_prev=h_prev,
        dh_ext_dt_k=(h_k - h_prev) / dt,
        j_ext_k=j_k,
        grad_v_k=grad_v_k,
        stress_dev_k=stress_k,
        theta_k=theta_k,
    )


__all__ = [
    "NCOMP",
    "Grid",
    "make_grid",
    "BoundarySpec",
    "FieldState",
    "Loads",
    "LoadsSample",
    "sample_loads",
    "replace",
]
