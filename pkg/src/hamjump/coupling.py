"""Event-driven simulation of the coupled pair of chains.

Both components share the deterministic flow (synchronous coupling) and
a single candidate clock of rate lambda2, which majorizes the total
jump intensity max(J, J').  At a candidate with rates a = J(x, v),
b = J(x', v'), a uniform draw over [0, lambda2) picks, in fixed order:

* the common branch, width a ^ b: one draw u from the collision density
  is split by accept/reject with ratio min(1, phi(u + xi)/phi(u)) where
  xi = alpha * (x - x')_kappa; acceptance gives the basic branch
  (v, v') <- (u, u + xi), rejection the reflection branch
  (v, v') <- (u, reflection of u about the truncated position gap);
* residual branches of widths (a - b)^+ and (b - a)^+, refreshing only
  one side from the density;
* otherwise a ghost candidate (no jump).

Positions never change at a jump, and once the two components meet they
move identically forever.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .flow import FlowIntegrator
from .model import ModelError, ModelSpec, PhaseState, reflect, truncate
from .pdmp import stream

BASIC = "basic"
REFLECTION = "reflection"
RESIDUAL_FIRST = "residual_first"
RESIDUAL_SECOND = "residual_second"

BRANCHES = (BASIC, REFLECTION, RESIDUAL_FIRST, RESIDUAL_SECOND)


@dataclass(frozen=True)
class CoupledState:
    """A pair of phase points with the derived gap coordinates.

    z = x - x' and w = v - v' are recomputed on access, never stored,
    so they cannot go stale; q and r additionally depend on the
    coupling weights and take them as arguments.
    """

    first: PhaseState
    second: PhaseState

    def __post_init__(self):
        if self.first.d != self.second.d:
            raise ModelError("coupled components must share a dimension")

    @property
    def z(self) -> np.ndarray:
        return self.first.x - self.second.x

    @property
    def w(self) -> np.ndarray:
        return self.first.v - self.second.v

    def q(self, alpha: float) -> np.ndarray:
        return self.z + self.w / alpha

    def r(self, alpha: float, alpha0: float) -> float:
        return alpha0 * float(np.linalg.norm(self.z)) + float(np.linalg.norm(self.q(alpha)))

    @property
    def identical(self) -> bool:
        return self.first == self.second

    def __eq__(self, other):
        if not isinstance(other, CoupledState):
            return NotImplemented
        return self.first == other.first and self.second == other.second


@dataclass(frozen=True)
class CouplingGeometry:
    """The jump-coupling knobs: velocity shift weight and truncation radius.

    alpha0 only enters diagnostics (the semi-metric r); the simulator
    accepts any positive values so experiments can scan beyond the
    certified operating point.
    """

    alpha: float
    alpha0: float
    kappa: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.alpha0 > 0 and self.kappa > 0):
            raise ModelError("alpha, alpha0 and kappa must all be positive")


@dataclass(frozen=True)
class CoupledEvent:
    time: float
    pre: CoupledState
    post: CoupledState
    branch: str


@dataclass
class CoupledEventLog:
    init: CoupledState
    t_end: float
    events: List[CoupledEvent] = field(default_factory=list)
    coalesced: bool = False
    seed: Optional[str] = None


def _branch_widths(a: float, b: float, lam2: float):
    """Split [0, lam2) into (common, residual_first, residual_second, ghost)."""
    common = min(a, b)
    cut1 = common + max(a - b, 0.0)
    cut2 = max(a, b)
    # the three jump widths must reassemble max(a, b) within roundoff and
    # stay below the majorant, otherwise thinning would be biased
    assert abs(cut2 - (common + max(a - b, 0.0) + max(b - a, 0.0))) <= 1e-9 * lam2
    assert cut2 <= lam2 * (1.0 + 1e-12)
    return common, cut1, cut2


def _jump(model, geom, x, v, x2, v2, a, b, u01, rng):
    """Apply one candidate decision; returns (v, v2, branch or None)."""
    lam2 = model.rate.lambda2
    common, cut1, cut2 = _branch_widths(a, b, lam2)
    pick = u01 * lam2
    if pick < common:
        zk = truncate(x - x2, geom.kappa) if not np.array_equal(x, x2) else np.zeros_like(x)
        xi = geom.alpha * zk
        u = model.density.sample(rng)
        if rng.random() < float(model.density.accept_ratio(xi, u)):
            return u, u + xi, BASIC
        return u, reflect(zk, u), REFLECTION
    if pick < cut1:
        return model.density.sample(rng), v2, RESIDUAL_FIRST
    if pick < cut2:
        return v, model.density.sample(rng), RESIDUAL_SECOND
    return v, v2, None


def coupled_simulate(
    init: CoupledState,
    t_end: float,
    model: ModelSpec,
    geom: CouplingGeometry,
    rng: np.random.Generator,
    seed_label: Optional[str] = None,
) -> CoupledEventLog:
    """Run one coupled trajectory on [0, t_end], logging accepted jumps."""
    if not (t_end > 0 and np.isfinite(t_end)):
        raise ModelError("t_end must be positive and finite")
    integrator = FlowIntegrator.for_model(model)
    lam2 = model.rate.lambda2
    log = CoupledEventLog(init, t_end, seed=seed_label)
    x, v = init.first.x, init.first.v
    x2, v2 = init.second.x, init.second.v
    t = 0.0
    while True:
        t_cand = t + rng.exponential(1.0 / lam2)
        if t_cand > t_end:
            break
        dt = t_cand - t
        x, v = integrator.flow_arrays(x, v, dt)
        x2, v2 = integrator.flow_arrays(x2, v2, dt)
        t = t_cand
        a = float(model.rate(x, v))
        b = float(model.rate(x2, v2))
        u01 = rng.random()
        new_v, new_v2, branch = _jump(model, geom, x, v, x2, v2, a, b, u01, rng)
        if branch is not None:
            pre = CoupledState(PhaseState(x, v), PhaseState(x2, v2))
            v, v2 = new_v, new_v2
            post = CoupledState(PhaseState(x, v), PhaseState(x2, v2))
            log.events.append(CoupledEvent(t, pre, post, branch))
            if not log.coalesced and post.identical:
                log.coalesced = True
    return log


def coalescence_time(log: CoupledEventLog) -> Optional[float]:
    """First time the pair becomes exactly equal, if ever."""
    if log.init.identical:
        return 0.0
    for event in log.events:
        if event.post.identical:
            return event.time
    return None


def coupled_state_at(log: CoupledEventLog, t: float, integrator: FlowIntegrator) -> CoupledState:
    """Reconstruct the coupled state at 0 <= t <= t_end (right-continuous)."""
    if not (0.0 <= t <= log.t_end):
        raise ModelError("t must lie in [0, t_end]")
    anchor_t, anchor = 0.0, log.init
    for event in log.events:
        if event.time <= t:
            anchor_t, anchor = event.time, event.post
        else:
            break
    dt = t - anchor_t
    return CoupledState(integrator.flow(anchor.first, dt), integrator.flow(anchor.second, dt))


def _coupled_lean(
    init: CoupledState,
    t_end: float,
    model: ModelSpec,
    geom: CouplingGeometry,
    rng: np.random.Generator,
    t_grid: Optional[np.ndarray] = None,
    on_grid: Optional[Callable] = None,
):
    """Inner loop without event recording; grid callback like pdmp._run_lean."""
    integrator = FlowIntegrator.for_model(model)
    lam2 = model.rate.lambda2
    x, v = init.first.x, init.first.v
    x2, v2 = init.second.x, init.second.v
    n_grid = 0 if t_grid is None else len(t_grid)
    gi = 0
    t = 0.0
    while True:
        t_cand = t + rng.exponential(1.0 / lam2)
        while gi < n_grid and t_grid[gi] < t_cand and t_grid[gi] <= t_end:
            dt = t_grid[gi] - t
            gx, gv = integrator.flow_arrays(x, v, dt)
            gx2, gv2 = integrator.flow_arrays(x2, v2, dt)
            on_grid(gi, gx, gv, gx2, gv2)
            gi += 1
        if t_cand > t_end:
            dt = t_end - t
            x, v = integrator.flow_arrays(x, v, dt)
            x2, v2 = integrator.flow_arrays(x2, v2, dt)
            return x, v, x2, v2
        dt = t_cand - t
        x, v = integrator.flow_arrays(x, v, dt)
        x2, v2 = integrator.flow_arrays(x2, v2, dt)
        t = t_cand
        a = float(model.rate(x, v))
        b = float(model.rate(x2, v2))
        u01 = rng.random()
        v, v2, _ = _jump(model, geom, x, v, x2, v2, a, b, u01, rng)


def coupled_series(
    init: CoupledState,
    t_grid: np.ndarray,
    model: ModelSpec,
    geom: CouplingGeometry,
    rng: np.random.Generator,
):
    """One coupled trajectory sampled at the given times.

    Returns four arrays (x, v, x', v'), each (len(t_grid), d).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size and (np.any(np.diff(t_grid) <= 0) or t_grid[0] < 0):
        raise ModelError("t_grid must be strictly increasing and nonnegative")
    t_end = float(t_grid[-1]) if t_grid.size else 0.0
    d = model.d
    out = tuple(np.empty((len(t_grid), d)) for _ in range(4))

    def on_grid(k, gx, gv, gx2, gv2):
        out[0][k], out[1][k], out[2][k], out[3][k] = gx, gv, gx2, gv2

    _coupled_lean(init, t_end, model, geom, rng, t_grid, on_grid)
    return out


def coupled_final_states(
    init: CoupledState,
    t_end: float,
    model: ModelSpec,
    geom: CouplingGeometry,
    master_seed: int,
    n_traj: int,
    index_range=None,
):
    """Final states of n_traj coupled trajectories (per-index streams).

    Returns four arrays of shape (n_traj, d): x, v of the first
    component and x', v' of the second.
    """
    indices = range(n_traj) if index_range is None else range(*index_range)
    d = model.d
    out = tuple(np.empty((len(indices), d)) for _ in range(4))
    for row, idx in enumerate(indices):
        rng = stream(master_seed, idx)
        x, v, x2, v2 = _coupled_lean(init, t_end, model, geom, rng)
        out[0][row], out[1][row], out[2][row], out[3][row] = x, v, x2, v2
    return out
