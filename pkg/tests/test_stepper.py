"""Implicit stepper: per-block behavior, residual gate, rejection paths."""

import numpy as np
import pytest

from paleomag import constitutive as con
from paleomag.errors import CflViolation, NumericalError
from paleomag.grid import FieldState, Loads, make_grid, sample_loads
from paleomag.stepper import (
    StepOptions,
    boundary_source,
    green_naghdi_update,
    step,
)

from conftest import material


def sample(t=0.1, dt=0.1, **loads_kwargs):
    return sample_loads(Loads(**loads_kwargs), t, dt)


def state_0d(grid, params, theta=0.5, m=(0.0, 0.0), Ee=None):
    thermal = con.thermal_law_for(params)
    s = FieldState.zeros(grid)
    s.w[...] = thermal.w_of_theta(theta)
    s.m[...] = np.asarray(m)
    if Ee is not None:
        s.Ee[...] = np.asarray(Ee)
    return s


class TestStepOptions:
    @pytest.mark.parametrize(
        "bad",
        [dict(dt=0.0), dict(dt=0.1, eps=1.0), dict(dt=0.1, relaxation=0.0),
         dict(dt=0.1, tol_rel=-1.0)],
    )
    def test_invalid(self, bad):
        with pytest.raises(NumericalError):
            StepOptions(**bad).validate()


class TestBoundarySource:
    def test_integrates_to_boundary_flux(self):
        for grid in (make_grid(0), make_grid(1, (2.0,), (8,)),
                     make_grid(2, (2.0, 1.0), (8, 4))):
            src = boundary_source(3.0, grid)
            assert grid.integrate(src) == pytest.approx(3.0 * grid.boundary_area)


class TestZeroDimensional:
    def test_sticking_is_exact(self, grid0):
        # no loads, strong coercivity: the state is a fixed point bit-for-bit
        p = material(h_c_high=1.0, theta_b=2.0)
        prev = state_0d(grid0, p, theta=0.5, m=(0.1, 0.05))
        loads = sample(theta=lambda t: 0.5)
        new, rep = step(prev, loads, grid0, p, StepOptions(dt=0.1))
        assert rep.accepted
        assert np.array_equal(new.m, prev.m)
        assert np.array_equal(new.Ee, prev.Ee)

    def test_maxwell_single_step_factor(self, grid0):
        # frozen kinematics: implicit Euler gives Ee/(1 + 2 G dt / M) exactly
        p = material(M_solid=1.0, M_magma=1.0)
        Ee0 = np.array([[1e-3, 0.0], [0.0, -1e-3]])
        prev = state_0d(grid0, p, theta=0.5, Ee=Ee0)
        dt = 0.01
        loads = sample(dt=dt, theta=lambda t: 0.5, grad_v=lambda t: np.zeros((2, 2)))
        new, rep = step(prev, loads, grid0, p, StepOptions(dt=dt))
        assert rep.accepted
        lam = 2.0 * p.G_E / 1.0
        np.testing.assert_allclose(new.Ee, Ee0 / (1.0 + lam * dt), rtol=1e-9)
        # trace-free inelastic strain
        assert abs(np.trace(new.Ep)) < 1e-14

    def test_rigid_rotation_closed_form(self, grid0):
        # prescribed spin, sticking m: implicit corotation (I/dt - W) m = m0/dt
        p = material(h_c_high=10.0, theta_b=2.0, M_solid=1e12, M_magma=1e12)
        m0 = np.array([0.6, 0.1])
        prev = state_0d(grid0, p, theta=0.5, m=m0)
        w, dt = 0.5, 0.05
        W = w * np.array([[0.0, -1.0], [1.0, 0.0]])
        loads = sample(dt=dt, theta=lambda t: 0.5, grad_v=lambda t: W)
        new, rep = step(prev, loads, grid0, p, StepOptions(dt=dt))
        assert rep.accepted
        expect = np.linalg.solve(np.eye(2) / dt - W, m0 / dt)
        np.testing.assert_allclose(new.m, expect, rtol=1e-12)
        # implicit corotation contracts the norm by 1/sqrt(1 + (w dt)^2)
        assert np.linalg.norm(new.m) == pytest.approx(
            np.linalg.norm(m0) / np.sqrt(1.0 + (w * dt) ** 2), rel=1e-12
        )

    def test_gravity_free_fall(self, grid0):
        p = material()
        prev = state_0d(grid0, p, theta=0.5)
        dt = 0.05
        loads = sample_loads(Loads(g=np.array([0.0, -2.0]),
                                   theta=lambda t: 0.5), 0.05, dt)
        new, rep = step(prev, loads, grid0, p, StepOptions(dt=dt))
        assert rep.accepted
        np.testing.assert_allclose(new.v, [0.0, -2.0 * dt], atol=1e-14)

    def test_nonconvergence_returns_prev(self, grid0):
        p = material(M_solid=1.0, M_magma=1.0)
        prev = state_0d(grid0, p, theta=0.5, Ee=np.diag([1e-3, -1e-3]))
        loads = sample(dt=50.0, theta=lambda t: 0.5, grad_v=lambda t: np.zeros((2, 2)))
        new, rep = step(prev, loads, grid0, p, StepOptions(dt=50.0, max_iters=1))
        assert not rep.accepted
        assert new is prev
        assert "convergence" in rep.message or "residual" in rep.message

    def test_residual_names(self, grid0):
        p = material()
        prev = state_0d(grid0, p, theta=0.5)
        new, rep = step(prev, sample(theta=lambda t: 0.5), grid0, p, StepOptions(dt=0.1))
        assert set(rep.residuals) == {
            "momentum", "strain", "ep_flow", "m_inclusion", "potential", "enthalpy"
        }
        for res, scale in rep.residuals.values():
            assert res >= 0.0 and scale > 0.0

    def test_adiabatic_heating_without_control(self, grid0):
        # free enthalpy: dissipation from stress relaxation heats the cell
        p = material(M_solid=1.0, M_magma=1.0)
        prev = state_0d(grid0, p, theta=0.5, Ee=np.diag([1e-2, -1e-2]))
        loads = sample(dt=0.01, grad_v=lambda t: np.zeros((2, 2)))
        new, rep = step(prev, loads, grid0, p, StepOptions(dt=0.01))
        assert rep.accepted
        assert float(new.w) > float(prev.w)


class TestSpatial:
    def test_cfl_violation_raises(self):
        grid = make_grid(1, (1.0,), (16,))
        p = material()
        prev = FieldState.zeros(grid)
        prev.w[...] = con.thermal_law_for(p).w_of_theta(0.5)
        prev.v[..., 0] = 5.0
        loads = sample(dt=0.1, theta=lambda t: 0.5)
        with pytest.raises(CflViolation):
            step(prev, loads, grid, p, StepOptions(dt=0.1, demag=False))

    def test_2d_free_step_accepted(self):
        grid = make_grid(2, (1.0, 1.0), (8, 8))
        p = material()
        thermal = con.thermal_law_for(p)
        prev = FieldState.zeros(grid)
        x, y = grid.cell_centers()
        prev.w[...] = thermal.w_of_theta(0.6 + 0.05 * np.sin(2 * np.pi * x)[:, None])
        prev.m[..., 0] = 0.2
        new, rep = step(prev, sample(dt=0.01), grid, p,
                        StepOptions(dt=0.01, demag=True))
        assert rep.accepted
        assert new.t == pytest.approx(0.01)
        new.validate(grid)


class TestGreenNaghdi:
    def test_identity_without_motion(self, grid0, rng):
        Ee0 = np.asarray(0.5 * (lambda T: T + T.T)(rng.normal(size=(2, 2))))
        out = green_naghdi_update(Ee0, np.zeros((2, 2)), np.zeros(2), 0.1, grid0)
        np.testing.assert_allclose(out, Ee0, atol=1e-14)

    def test_rate_subtraction(self, grid0):
        Ee0 = np.diag([1e-3, -1e-3])
        rate = np.diag([1e-4, -1e-4])
        out = green_naghdi_update(Ee0, rate, np.zeros(2), 0.5, grid0)
        np.testing.assert_allclose(out, Ee0 - 0.5 * rate, atol=1e-15)
