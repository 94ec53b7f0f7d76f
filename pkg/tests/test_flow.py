import math

import numpy as np
import pytest

import hamjump as hj
from hamjump.flow import RK4, FlowIntegrator
from hamjump.model import ModelError


def rk4_reference(gamma, theta, x0, v0, t, h=1e-5):
    """Independent fixed-step RK4 for the scalar damped oscillator."""
    x, v = float(x0), float(v0)
    n = int(t / h)
    rem = t - n * h
    steps = [h] * n + ([rem] if rem > 1e-14 else [])
    for s in steps:
        k1x, k1v = v, -gamma * v - 2 * theta * x
        x2, v2 = x + s / 2 * k1x, v + s / 2 * k1v
        k2x, k2v = v2, -gamma * v2 - 2 * theta * x2
        x3, v3 = x + s / 2 * k2x, v + s / 2 * k2v
        k3x, k3v = v3, -gamma * v3 - 2 * theta * x3
        x4, v4 = x + s * k3x, v + s * k3v
        k4x, k4v = v4, -gamma * v4 - 2 * theta * x4
        x += s / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v += s / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return x, v


class TestExactFlow:
    def test_zero_time_is_identity(self):
        integ = FlowIntegrator(3.0, hj.QuadraticPotential(1.0))
        st = hj.PhaseState(np.array([1.0, -2.0]), np.array([0.5, 0.25]))
        out = integ.flow(st, 0.0)
        assert out == st

    def test_free_damping_closed_form(self):
        # theta = 0: v(t) = e^{-t} v0, x(t) = x0 + (1 - e^{-t}) v0 / gamma
        integ = FlowIntegrator(1.0, hj.QuadraticPotential(0.0))
        st = hj.PhaseState(np.array([0.0]), np.array([1.0]))
        for t in (0.3, 1.0, 2.5):
            out = integ.flow(st, t)
            assert out.v[0] == pytest.approx(math.exp(-t), rel=1e-12)
            assert out.x[0] == pytest.approx(1.0 - math.exp(-t), rel=1e-12)

    def test_overdamped_closed_form(self):
        # gamma = 3, theta = 1: roots -1, -2; x(1) = 2/e - 1/e^2
        integ = FlowIntegrator(3.0, hj.QuadraticPotential(1.0))
        out = integ.flow(hj.PhaseState(np.array([1.0]), np.array([0.0])), 1.0)
        assert out.x[0] == pytest.approx(0.600423599106272, rel=1e-12)
        assert out.v[0] == pytest.approx(-0.46508831586965926, rel=1e-12)
        # cross-check against the independent fine-step integrator
        xr, vr = rk4_reference(3.0, 1.0, 1.0, 0.0, 1.0)
        assert out.x[0] == pytest.approx(xr, abs=1e-10)
        assert out.v[0] == pytest.approx(vr, abs=1e-10)

    def test_underdamped_against_reference(self):
        integ = FlowIntegrator(1.0, hj.QuadraticPotential(2.0))
        out = integ.flow(hj.PhaseState(np.array([1.0]), np.array([-0.5])), 0.9)
        xr, vr = rk4_reference(1.0, 2.0, 1.0, -0.5, 0.9)
        assert out.x[0] == pytest.approx(xr, abs=1e-10)
        assert out.v[0] == pytest.approx(vr, abs=1e-10)

    def test_critical_damping_branch(self):
        # gamma^2 = 8 theta exactly triggers the repeated-root formula
        gamma = 2.0
        theta = gamma * gamma / 8.0
        integ = FlowIntegrator(gamma, hj.QuadraticPotential(theta))
        out = integ.flow(hj.PhaseState(np.array([1.0]), np.array([0.3])), 1.3)
        xr, vr = rk4_reference(gamma, theta, 1.0, 0.3, 1.3)
        assert out.x[0] == pytest.approx(xr, abs=1e-9)
        assert out.v[0] == pytest.approx(vr, abs=1e-9)
        # nearby discriminants agree continuously across the switch
        for eps in (1e-13, -1e-13):
            integ2 = FlowIntegrator(gamma, hj.QuadraticPotential(theta * (1 + eps)))
            out2 = integ2.flow(hj.PhaseState(np.array([1.0]), np.array([0.3])), 1.3)
            assert out2.x[0] == pytest.approx(out.x[0], rel=1e-9)

    def test_semigroup_property(self, rng):
        integ = FlowIntegrator(3.0, hj.QuadraticPotential(1.0))
        st = hj.PhaseState(rng.normal(size=3), rng.normal(size=3))
        a, b = 0.37, 0.91
        one = integ.flow(integ.flow(st, a), b)
        two = integ.flow(st, a + b)
        np.testing.assert_allclose(one.x, two.x, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(one.v, two.v, rtol=1e-12, atol=1e-14)

    def test_rejects_bad_dt(self):
        integ = FlowIntegrator(3.0, hj.QuadraticPotential(1.0))
        st = hj.PhaseState(np.array([1.0]), np.array([0.0]))
        with pytest.raises(ModelError):
            integ.flow(st, -0.1)
        with pytest.raises(ModelError):
            integ.flow(st, math.nan)

    def test_batched_dt(self, rng):
        integ = FlowIntegrator(3.0, hj.QuadraticPotential(1.0))
        xs = rng.normal(size=(5, 2))
        vs = rng.normal(size=(5, 2))
        dts = rng.uniform(0, 2, size=5)
        bx, bv = integ.flow_arrays(xs, vs, dts)
        for i in range(5):
            x1, v1 = integ.flow_arrays(xs[i], vs[i], float(dts[i]))
            np.testing.assert_allclose(bx[i], x1, rtol=1e-14)
            np.testing.assert_allclose(bv[i], v1, rtol=1e-14)


class TestRK4Path:
    def test_exact_vs_rk4_sup_gap(self):
        exact = FlowIntegrator(3.0, hj.QuadraticPotential(1.0))
        rk4 = FlowIntegrator(3.0, hj.QuadraticPotential(1.0), method=RK4, step=1e-3)
        st = hj.PhaseState(np.array([1.0, -0.5]), np.array([0.2, 0.8]))
        gap = 0.0
        for t in np.linspace(0.0, 1.0, 101):
            a = exact.flow(st, float(t))
            b = rk4.flow(st, float(t))
            gap = max(gap, np.max(np.abs(a.x - b.x)), np.max(np.abs(a.v - b.v)))
        assert gap < 1e-8

    def test_default_step_rule(self):
        integ = FlowIntegrator(10.0, hj.QuadraticPotential(4.0), method=RK4)
        assert integ.step == pytest.approx(1e-3 * min(1.0, 0.1, 0.5))

    def test_requires_quadratic_for_exact(self):
        pot = hj.CustomPotential(
            lambda x: np.sum(x**4, axis=-1), lambda x: 4 * x**3
        )
        with pytest.raises(ModelError):
            FlowIntegrator(1.0, pot, method="exact_quadratic")
        integ = FlowIntegrator(1.0, pot)
        assert integ.method == RK4

    def test_custom_potential_dissipates(self, rng):
        pot = hj.CustomPotential(
            lambda x: np.sum(x**4, axis=-1), lambda x: 4 * x**3
        )
        integ = FlowIntegrator(1.0, pot, step=1e-3)
        st = hj.PhaseState(rng.normal(size=2), rng.normal(size=2))
        h0 = integ.hamiltonian(st)
        h1 = integ.hamiltonian(integ.flow(st, 1.0))
        assert h1 <= h0 + 1e-8


class TestEnergyDissipation:
    def test_exact_monotone(self, rng):
        integ = FlowIntegrator(3.0, hj.QuadraticPotential(1.0))
        for _ in range(200):
            st = hj.PhaseState(rng.normal(size=2), rng.normal(size=2))
            dt = float(rng.uniform(0.01, 2.0))
            h0 = integ.hamiltonian(st)
            h1 = integ.hamiltonian(integ.flow(st, dt))
            assert h1 <= h0 + 1e-8 * dt * max(1.0, abs(h0))

    def test_rk4_monotone(self, rng):
        integ = FlowIntegrator(2.0, hj.QuadraticPotential(0.5), method=RK4, step=1e-3)
        for _ in range(20):
            st = hj.PhaseState(rng.normal(size=2), rng.normal(size=2))
            h0 = integ.hamiltonian(st)
            h1 = integ.hamiltonian(integ.flow(st, 0.7))
            assert h1 <= h0 + 10 * (1e-3) ** 4


class TestCoupledFlow:
    def test_equal_components_stay_equal(self, rng):
        integ = FlowIntegrator(4.0, hj.QuadraticPotential(1.0))
        st = hj.PhaseState(rng.normal(size=2), rng.normal(size=2))
        pair = hj.CoupledState(st, hj.PhaseState(st.x.copy(), st.v.copy()))
        out = hj.coupled_flow(integ, pair, 1.3)
        assert out.identical

    def test_zero_time_identity(self, rng):
        integ = FlowIntegrator(4.0, hj.QuadraticPotential(1.0))
        pair = hj.CoupledState(
            hj.PhaseState(rng.normal(size=2), rng.normal(size=2)),
            hj.PhaseState(rng.normal(size=2), rng.normal(size=2)),
        )
        out = hj.coupled_flow(integ, pair, 0.0)
        assert out == pair

    def test_gap_follows_scalar_oscillator(self, rng):
        # z(t) solves z'' + gamma z' + 2 theta z = 0 coordinatewise, so the
        # difference of two exact flows must match the single-flow formula
        gamma, theta, dt = 3.0, 1.0, 0.7
        integ = FlowIntegrator(gamma, hj.QuadraticPotential(theta))
        pair = hj.CoupledState(
            hj.PhaseState(rng.normal(size=2), rng.normal(size=2)),
            hj.PhaseState(rng.normal(size=2), rng.normal(size=2)),
        )
        out = hj.coupled_flow(integ, pair, dt)
        zx, zv = integ.flow_arrays(pair.z, pair.w, dt)
        np.testing.assert_allclose(out.z, zx, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(out.w, zv, rtol=1e-10, atol=1e-12)
