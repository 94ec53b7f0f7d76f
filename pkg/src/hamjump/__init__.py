"""Damped Hamiltonian dynamics with random velocity collisions.

Simulation (exact event-driven thinning, single chain and coupled
pair), explicit contraction constants, and the numerical certificates
that back them.
"""

from .model import (
    Density,
    JumpRate,
    MCEstimate,
    ModelError,
    ModelSpec,
    OverlapConstants,
    PhaseState,
    QuadraticPotential,
    CustomPotential,
    constant_rate,
    default_overlap_grid,
    estimate_overlap_constants,
    expression_rate,
    overlap_constants_quadrature,
    overlap_mc,
    overlap_quadrature,
    reflect,
    sinusoidal_rate,
    truncate,
)
from .flow import FlowIntegrator, coupled_flow
from .pdmp import EventLog, JumpEvent, final_state, simulate, state_at, stream
from .coupling import (
    CoupledEventLog,
    CoupledState,
    CouplingGeometry,
    coalescence_time,
    coupled_simulate,
    coupled_state_at,
)
from .ergodicity import (
    ContractionReport,
    CouplingParams,
    DriftReport,
    InfeasibleError,
    LyapunovFunction,
    MomentBoundReport,
    ProbeFunction,
    build_params,
    compute_alpha,
    contraction_experiment,
    coupling_operator_probe,
    derive_geometry,
    distance_f,
    distance_r,
    empirical_wasserstein,
    functional_fg,
    generator_probe,
    lyapunov_drift_mc,
    lyapunov_drift_quadratic,
    probe_battery,
    region_containment,
    semi_metric_phi,
    solve_beta,
    verify_b2,
)

__version__ = "0.1.0"
