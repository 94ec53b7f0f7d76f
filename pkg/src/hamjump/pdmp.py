"""Event-driven simulation of the single chain.

Candidate collision times are proposed as a Poisson process with the
constant majorant rate lambda2 and accepted with probability
J(x, v)/lambda2 (thinning).  Because the rate is bounded, the scheme is
exact in distribution: there is no time-discretization bias anywhere in
this package.  On acceptance the velocity is replaced by a fresh draw
from the collision density while the position is untouched; between
candidates the state follows the deterministic flow.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .flow import FlowIntegrator
from .model import ModelError, ModelSpec, PhaseState

COLLISION = "collision"


def stream(master_seed: int, index: int = 0) -> np.random.Generator:
    """Trajectory-indexed random stream.

    Streams for different indices are statistically independent and a
    given (master_seed, index) pair always yields the same stream, so
    ensembles can run as an embarrassingly parallel map and still be
    bit-reproducible regardless of scheduling.
    """
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class JumpEvent:
    time: float
    pre: PhaseState
    post: PhaseState
    branch: str = COLLISION


@dataclass
class EventLog:
    """Accepted collision events of one trajectory.

    Stores both pre- and post-jump states so any path functional can be
    recomputed without resimulation.  Event times are strictly
    increasing and positions never change across an event.
    """

    init: PhaseState
    t_end: float
    events: List[JumpEvent] = field(default_factory=list)
    seed: Optional[str] = None

    def __post_init__(self):
        times = [e.time for e in self.events]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])) or any(
            not (0.0 < t <= self.t_end) for t in times
        ):
            raise ModelError("event times must be strictly increasing within (0, t_end]")


def simulate(
    init: PhaseState,
    t_end: float,
    model: ModelSpec,
    rng: np.random.Generator,
    seed_label: Optional[str] = None,
) -> EventLog:
    """Run one trajectory on [0, t_end] and log the accepted collisions."""
    if not (t_end > 0 and np.isfinite(t_end)):
        raise ModelError("t_end must be positive and finite")
    integrator = FlowIntegrator.for_model(model)
    lam2 = model.rate.lambda2
    events: List[JumpEvent] = []
    x, v = init.x, init.v
    t = 0.0
    while True:
        t_cand = t + rng.exponential(1.0 / lam2)
        if t_cand > t_end:
            break
        x, v = integrator.flow_arrays(x, v, t_cand - t)
        t = t_cand
        a = float(model.rate(x, v))
        if rng.random() * lam2 < a:
            u = model.density.sample(rng)
            events.append(JumpEvent(t, PhaseState(x, v), PhaseState(x, u)))
            v = u
    return EventLog(init, t_end, events, seed_label)


def state_at(log: EventLog, t: float, integrator: FlowIntegrator) -> PhaseState:
    """Reconstruct the state at any 0 <= t <= t_end from the log."""
    if not (0.0 <= t <= log.t_end):
        raise ModelError("t must lie in [0, t_end]")
    times = [e.time for e in log.events]
    i = bisect.bisect_right(times, t)
    if i == 0:
        return integrator.flow(log.init, t)
    anchor = log.events[i - 1]
    return integrator.flow(anchor.post, t - anchor.time)


def final_state(log: EventLog, integrator: FlowIntegrator) -> PhaseState:
    return state_at(log, log.t_end, integrator)


def _run_lean(
    x: np.ndarray,
    v: np.ndarray,
    t_end: float,
    model: ModelSpec,
    integrator: FlowIntegrator,
    rng: np.random.Generator,
    t_grid: Optional[np.ndarray] = None,
    on_grid: Optional[Callable] = None,
):
    """Single-trajectory inner loop without event recording.

    When a grid is given, ``on_grid(k, x, v)`` is invoked once per grid
    time, with the state right-continuous at jumps (a grid time that
    ties with a jump sees the post-jump state).
    """
    lam2 = model.rate.lambda2
    n_grid = 0 if t_grid is None else len(t_grid)
    gi = 0
    t = 0.0
    while True:
        t_cand = t + rng.exponential(1.0 / lam2)
        while gi < n_grid and t_grid[gi] < t_cand and t_grid[gi] <= t_end:
            gx, gv = integrator.flow_arrays(x, v, t_grid[gi] - t)
            on_grid(gi, gx, gv)
            gi += 1
        if t_cand > t_end:
            x, v = integrator.flow_arrays(x, v, t_end - t)
            return x, v
        x, v = integrator.flow_arrays(x, v, t_cand - t)
        t = t_cand
        if rng.random() * lam2 < float(model.rate(x, v)):
            v = model.density.sample(rng)


def ensemble_final_states(
    init: PhaseState,
    t_end: float,
    model: ModelSpec,
    master_seed: int,
    n_traj: int,
    index_range=None,
):
    """Final (x, v) of n_traj independent trajectories from a common start.

    Returns arrays of shape (n_traj, d).  ``index_range`` selects a
    contiguous block of trajectory indices, which lets parallel workers
    each compute their slice while reproducing exactly the single-worker
    output.
    """
    indices = range(n_traj) if index_range is None else range(*index_range)
    integrator = FlowIntegrator.for_model(model)
    xs = np.empty((len(indices), model.d))
    vs = np.empty((len(indices), model.d))
    for row, idx in enumerate(indices):
        rng = stream(master_seed, idx)
        x, v = _run_lean(init.x, init.v, t_end, model, integrator, rng)
        xs[row], vs[row] = x, v
    return xs, vs


def trajectory_series(
    init: PhaseState,
    t_grid: np.ndarray,
    model: ModelSpec,
    rng: np.random.Generator,
):
    """States of one trajectory sampled at the given times.

    Returns (xs, vs) with shape (len(t_grid), d).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size and (np.any(np.diff(t_grid) <= 0) or t_grid[0] < 0):
        raise ModelError("t_grid must be strictly increasing and nonnegative")
    t_end = float(t_grid[-1]) if t_grid.size else 0.0
    integrator = FlowIntegrator.for_model(model)
    xs = np.empty((len(t_grid), model.d))
    vs = np.empty((len(t_grid), model.d))

    def on_grid(k, x, v):
        xs[k], vs[k] = x, v

    _run_lean(init.x, init.v, t_end, model, integrator, rng, t_grid, on_grid)
    return xs, vs
