"""Deterministic motion between collisions.

The inter-jump dynamics is the damped Hamiltonian flow

    x' = v,    v' = -gamma v - grad U(x).

For a quadratic potential U = theta |x|^2 each coordinate satisfies the
scalar ODE  u'' + gamma u' + 2 theta u = 0, which is solved exactly via
the characteristic roots (with the repeated-root formula near critical
damping).  For any other potential a fixed-step RK4 integrator is used
with a step small enough that the local error sits far below the
statistical noise of every experiment in this package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import ModelError, PhaseState, Potential, QuadraticPotential

EXACT_QUADRATIC = "exact_quadratic"
RK4 = "rk4"


def default_rk4_step(gamma: float, theta: Optional[float]) -> float:
    scale = max(theta, 1.0) if theta is not None else 1.0
    return 1e-3 * min(1.0, 1.0 / gamma, 1.0 / math.sqrt(scale))


@dataclass(frozen=True)
class FlowIntegrator:
    """Advances (x, v) along the damped Hamiltonian vector field.

    ``method`` defaults to the exact per-coordinate solution when the
    potential is quadratic and to RK4 otherwise; requesting
    ``exact_quadratic`` with a non-quadratic potential is an error.
    """

    gamma: float
    potential: Potential
    method: str = ""
    step: float = 0.0

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ModelError("gamma must be positive and finite")
        quadratic = isinstance(self.potential, QuadraticPotential)
        method = self.method or (EXACT_QUADRATIC if quadratic else RK4)
        if method not in (EXACT_QUADRATIC, RK4):
            raise ModelError(f"unknown flow method {method!r}")
        if method == EXACT_QUADRATIC and not quadratic:
            raise ModelError("exact_quadratic requires a quadratic potential")
        step = self.step
        if method == RK4 and step == 0.0:
            theta = self.potential.theta if quadratic else None
            step = default_rk4_step(self.gamma, theta)
        if method == RK4 and not (step > 0):
            raise ModelError("rk4 step must be positive")
        object.__setattr__(self, "method", method)
        object.__setattr__(self, "step", step)

    @classmethod
    def for_model(cls, model) -> "FlowIntegrator":
        return cls(model.gamma, model.potential)

    # -- exact quadratic path ---------------------------------------------------

    def coefficients(self, dt):
        """Entries (a, b, c, d) of the per-coordinate flow matrix.

        x(dt) = a x0 + b v0,  v(dt) = c x0 + d v0.  Vectorized over dt.
        The repeated-root formula takes over when the discriminant
        gamma^2 - 8 theta vanishes to relative precision 1e-12, which
        avoids catastrophic cancellation near critical damping.
        """
        g = self.gamma
        th = self.potential.theta
        dt = np.asarray(dt, dtype=float)
        disc = g * g - 8.0 * th
        if abs(disc) < 1e-12 * g * g:
            r = -0.5 * g
            ert = np.exp(r * dt)
            a = (1.0 - r * dt) * ert
            b = dt * ert
            c = -(r * r) * dt * ert
            d = (1.0 + r * dt) * ert
        elif disc > 0:
            sq = math.sqrt(disc)
            rp, rm = 0.5 * (-g + sq), 0.5 * (-g - sq)
            ep, em = np.exp(rp * dt), np.exp(rm * dt)
            den = rp - rm
            a = (rp * em - rm * ep) / den
            b = (ep - em) / den
            c = -2.0 * th * b
            d = (rp * ep - rm * em) / den
        else:
            mu = -0.5 * g
            om = 0.5 * math.sqrt(-disc)
            emu = np.exp(mu * dt)
            cs, sn = np.cos(om * dt), np.sin(om * dt)
            a = emu * (cs - (mu / om) * sn)
            b = emu * sn / om
            c = -2.0 * th * b
            d = emu * (cs + (mu / om) * sn)
        return a, b, c, d

    # -- public API ---------------------------------------------------------------

    def flow_arrays(self, x, v, dt):
        """Advance raw arrays by dt.

        x, v may be (d,) or (n, d); dt may be scalar or (n,) matching a
        batched leading axis.  Returns new arrays, inputs untouched.
        """
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if np.any(np.asarray(dt) < 0) or not np.all(np.isfinite(dt)):
            raise ModelError("dt must be nonnegative and finite")
        if self.method == EXACT_QUADRATIC:
            a, b, c, d = self.coefficients(dt)
            if x.ndim > 1 and np.ndim(a) > 0:
                a, b, c, d = (np.reshape(t, (-1, 1)) for t in (a, b, c, d))
            return a * x + b * v, c * x + d * v
        return self._rk4(x, v, float(dt))

    def _rk4(self, x, v, dt):
        h = self.step
        n_full, rem = divmod(dt, h)
        steps = [h] * int(n_full)
        if rem > 1e-15 * max(dt, 1.0):
            steps.append(rem)
        g = self.gamma
        grad = self.potential.gradient
        for s in steps:
            k1x, k1v = v, -g * v - grad(x)
            x2, v2 = x + 0.5 * s * k1x, v + 0.5 * s * k1v
            k2x, k2v = v2, -g * v2 - grad(x2)
            x3, v3 = x + 0.5 * s * k2x, v + 0.5 * s * k2v
            k3x, k3v = v3, -g * v3 - grad(x3)
            x4, v4 = x + s * k3x, v + s * k3v
            k4x, k4v = v4, -g * v4 - grad(x4)
            x = x + (s / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            v = v + (s / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        return x, v

    def flow(self, state: PhaseState, dt: float) -> PhaseState:
        """Advance a phase point by dt >= 0."""
        if not (np.isscalar(dt) and math.isfinite(dt) and dt >= 0):
            raise ModelError("dt must be a nonnegative finite scalar")
        if dt == 0.0:
            return state
        x, v = self.flow_arrays(state.x, state.v, dt)
        return PhaseState(x, v)

    def hamiltonian(self, state: PhaseState) -> float:
        return float(self.potential.value(state.x) + 0.5 * np.dot(state.v, state.v))


def coupled_flow(integrator: FlowIntegrator, pair, dt: float):
    """Synchronous flow: both components advance by the same dt."""
    from .coupling import CoupledState

    return CoupledState(integrator.flow(pair.first, dt), integrator.flow(pair.second, dt))
