"""Command-line front end: configuration, orchestration, reporting.

One executable with subcommands wrapping every experiment:

* ``params``    -- run the constant pipeline, write params.json
* ``simulate``  -- single-chain ensemble: JSONL event logs + CSV series
* ``couple``    -- coupled ensemble: JSONL event logs + CSV series
* ``verify``    -- pass/fail checks (generator, coupling, drift, b2,
                   marginals, flow)
* ``contract``  -- contraction experiment: summary CSV + JSON

Exit codes: 0 success/pass, 1 usage or config error, 2 infeasible
parameter pipeline, 3 verification failure.

The config is a flat ``section.key = value`` text file with a strict
schema: unknown keys are rejected because a silently ignored typo in a
rate constant would invalidate the thinning majorant.  Every command is
byte-reproducible for a fixed config and seed, including multi-process
runs: trajectories draw from per-index streams and outputs are reduced
in index order, so the worker count cannot affect a single byte.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from . import coupling as cpl
from . import ergodicity as erg
from . import pdmp
from .flow import FlowIntegrator
from .model import (
    Density,
    ModelError,
    ModelSpec,
    PhaseState,
    QuadraticPotential,
    constant_rate,
    expression_rate,
    sinusoidal_rate,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_VERIFY_FAIL = 3


class ConfigError(ValueError):
    """Malformed, incomplete or out-of-range configuration."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    d: int
    gamma: float
    potential_kind: str
    theta: float
    rate_kind: str
    lambda1: float
    lambda2: float
    lambda_jump: Optional[float]
    rate_expr: Optional[str]
    density_kind: str
    density_param: Optional[float]
    t_end: float
    n_traj: int
    t_grid: Tuple[float, ...]
    n_mc: int
    beta_exp: Optional[float]
    init_offset: float
    seed: int


# key -> (attribute, parser, required, default)
def _parse_grid(text: str) -> Tuple[float, ...]:
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid spec must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ConfigError(f"bad grid spec {text!r}")
        n = int(round((stop - start) / step))
        return tuple(start + i * step for i in range(n + 1))
    return tuple(float(p) for p in text.split(","))


def _grid_to_text(grid: Tuple[float, ...]) -> str:
    return ",".join(repr(g) for g in grid)


_SCHEMA = {
    "model.d": ("d", int, True, None),
    "model.gamma": ("gamma", float, True, None),
    "potential.kind": ("potential_kind", str, False, "quadratic"),
    "potential.theta": ("theta", float, True, None),
    "rate.kind": ("rate_kind", str, False, "constant"),
    "rate.lambda1": ("lambda1", float, True, None),
    "rate.lambda2": ("lambda2", float, True, None),
    "rate.lambdaJ": ("lambda_jump", float, False, None),
    "rate.expr": ("rate_expr", str, False, None),
    "density.kind": ("density_kind", str, False, "standard_gaussian"),
    "density.param": ("density_param", float, False, None),
    "experiment.t_end": ("t_end", float, True, None),
    "experiment.n_traj": ("n_traj", int, False, 200),
    "experiment.t_grid": ("t_grid", _parse_grid, False, None),
    "experiment.n_mc": ("n_mc", int, False, 100_000),
    "experiment.beta_exp": ("beta_exp", float, False, None),
    "experiment.init_offset": ("init_offset", float, False, 1.0),
    "seed": ("seed", int, False, 0),
}


def parse_config(text: str) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        attr, parser, _, _ = _SCHEMA[key]
        try:
            values[attr] = parser(val)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    for key, (attr, _, required, default) in _SCHEMA.items():
        if attr not in values:
            if required:
                raise ConfigError(f"missing required key {key!r}")
            values[attr] = default
    if values["t_grid"] is None:
        t_end = values["t_end"]
        values["t_grid"] = tuple(i * t_end / 20.0 for i in range(21))
    cfg = RunConfig(**values)
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: RunConfig):
    if cfg.d < 1:
        raise ConfigError("model.d must be >= 1")
    if not (cfg.gamma > 0):
        raise ConfigError("model.gamma must be positive")
    if cfg.potential_kind != "quadratic":
        raise ConfigError("potential.kind must be 'quadratic' in config files")
    if cfg.theta < 0:
        raise ConfigError("potential.theta must be nonnegative")
    if not (0 < cfg.lambda1 <= cfg.lambda2):
        raise ConfigError("need 0 < rate.lambda1 <= rate.lambda2")
    if cfg.rate_kind not in ("constant", "sinusoidal_bounded", "custom"):
        raise ConfigError(f"unknown rate.kind {cfg.rate_kind!r}")
    if cfg.rate_kind == "constant" and cfg.lambda1 != cfg.lambda2:
        raise ConfigError("constant rate requires lambda1 == lambda2")
    if cfg.rate_kind == "custom":
        if cfg.rate_expr is None:
            raise ConfigError("custom rate requires rate.expr")
        if cfg.lambda_jump is None:
            raise ConfigError("custom rate must declare rate.lambdaJ")
    if cfg.density_kind not in ("standard_gaussian", "heavy_tail", "stretched_exp"):
        raise ConfigError(f"unknown density.kind {cfg.density_kind!r}")
    if cfg.density_kind != "standard_gaussian":
        if cfg.density_param is None or cfg.density_param <= 0:
            raise ConfigError(f"{cfg.density_kind} requires a positive density.param")
    if not (cfg.t_end > 0):
        raise ConfigError("experiment.t_end must be positive")
    if cfg.n_traj < 1:
        raise ConfigError("experiment.n_traj must be >= 1")
    if cfg.n_mc < 1:
        raise ConfigError("experiment.n_mc must be >= 1")
    grid = cfg.t_grid
    if not grid or any(t2 <= t1 for t1, t2 in zip(grid, grid[1:])) or grid[0] < 0:
        raise ConfigError("experiment.t_grid must be strictly increasing and nonnegative")
    if grid[-1] > cfg.t_end:
        raise ConfigError("experiment.t_grid extends beyond t_end")
    if cfg.beta_exp is not None and not (0 < cfg.beta_exp <= 2):
        raise ConfigError("experiment.beta_exp must lie in (0, 2]")


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for key, (attr, parser, _, _) in _SCHEMA.items():
        val = getattr(cfg, attr)
        if val is None:
            continue
        if parser is _parse_grid:
            lines.append(f"{key} = {_grid_to_text(val)}")
        else:
            lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"


def build_model(cfg: RunConfig) -> ModelSpec:
    potential = QuadraticPotential(cfg.theta)
    if cfg.rate_kind == "constant":
        rate = constant_rate(cfg.lambda1)
    elif cfg.rate_kind == "sinusoidal_bounded":
        rate = sinusoidal_rate(cfg.lambda1, cfg.lambda2)
    else:
        rate = expression_rate(
            cfg.rate_expr.strip("'\""), (cfg.lambda1, cfg.lambda2, cfg.lambda_jump)
        )
    param = None if cfg.density_kind == "standard_gaussian" else cfg.density_param
    density = Density(cfg.density_kind, cfg.d, param)
    return ModelSpec(cfg.d, cfg.gamma, potential, rate, density)


def default_beta_exp(cfg: RunConfig, model: ModelSpec) -> float:
    if cfg.beta_exp is not None:
        return cfg.beta_exp
    return model.density.moment_order_beta


def _init_state(cfg: RunConfig) -> PhaseState:
    x = np.zeros(cfg.d)
    x[0] = cfg.init_offset
    return PhaseState(x, np.zeros(cfg.d))


def _init_pair(cfg: RunConfig) -> cpl.CoupledState:
    return cpl.CoupledState(_init_state(cfg), PhaseState(np.zeros(cfg.d), np.zeros(cfg.d)))


# ---------------------------------------------------------------------------
# deterministic writers
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")  # RFC 4180
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(c) for c in row])
    path.write_bytes(buf.getvalue().encode("utf-8"))


def _write_jsonl(path: Path, records) -> None:
    lines = [json.dumps(rec, sort_keys=True, separators=(",", ":")) for rec in records]
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8") if lines else b"")


def _write_json(path: Path, obj) -> None:
    path.write_bytes((json.dumps(obj, sort_keys=True, indent=2) + "\n").encode("utf-8"))


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


# ---------------------------------------------------------------------------
# parameter pipeline shared by params/couple/contract
# ---------------------------------------------------------------------------


def run_pipeline(cfg: RunConfig):
    """Model -> drift -> collision-moment bound -> overlap -> constants."""
    model = build_model(cfg)
    beta_exp = default_beta_exp(cfg, model)
    if beta_exp == 2.0 and math.isfinite(model.density.moment(2.0)):
        drift = erg.lyapunov_drift_quadratic(model)
    else:
        drift = erg.lyapunov_drift_mc(
            model, beta_exp, n_mc=cfg.n_mc, rng=pdmp.stream(cfg.seed, 900_001)
        )
    if not drift.valid:
        raise ModelError("drift certificate failed; cannot continue")
    _, alpha, _, _, _, _, kappa = erg.derive_geometry(model, drift, beta_exp)
    xi_max = alpha * kappa
    xi_grid = np.geomspace(1e-3 * xi_max, xi_max, 12)
    b2 = erg.verify_b2(
        model, beta_exp, xi_grid, n_mc=cfg.n_mc, rng=pdmp.stream(cfg.seed, 900_002)
    )
    params = erg.build_params(model, drift, b2.c_double_star, beta_exp=beta_exp)
    return model, drift, b2, params


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_params(cfg: RunConfig, out: Path, _threads: int, _fmt_choice: str) -> int:
    try:
        model, drift, b2, params = run_pipeline(cfg)
    except erg.InfeasibleError as exc:
        print(f"infeasible: {exc}")
        return EXIT_INFEASIBLE
    containment = erg.region_containment(model, params, n_pairs=100_000, master_seed=cfg.seed)
    report = {
        "params": _jsonable(params.to_dict()),
        "drift": {
            "c0": drift.c0,
            "C0": drift.C0,
            "method": drift.method,
            "margin": drift.margin,
            "tail_ok": drift.tail_ok,
            "grid": drift.grid_spec,
        },
        "collision_moment": {
            "c_double_star": b2.c_double_star,
            "full_ratio": b2.full_ratio,
            "residual_ratio": b2.residual_ratio,
            "max_rel_stderr": b2.max_rel_stderr,
            "method": f"mc +- 3 sigma (n={b2.n_mc})",
        },
        "overlap_method": params.overlap_method,
        "region_containment": _jsonable(containment),
        "seed": cfg.seed,
    }
    _write_json(out / "params.json", report)
    print(f"feasible: lambda_star = {params.lambda_star!r} (log {params.log_lambda_star:.3f})")
    print(f"wrote {out / 'params.json'}")
    if not containment["ok"]:
        print("region containment violated")
        return EXIT_VERIFY_FAIL
    return EXIT_OK


def _simulate_block(args):
    cfg, lo, hi = args
    model = build_model(cfg)
    integrator = FlowIntegrator.for_model(model)
    grid = np.asarray(cfg.t_grid)
    init = _init_state(cfg)
    events, series = [], []
    for idx in range(lo, hi):
        rng = pdmp.stream(cfg.seed, idx)
        log = pdmp.simulate(init, cfg.t_end, model, rng, seed_label=f"{cfg.seed}:{idx}")
        for ev in log.events:
            events.append(
                {
                    "traj": idx,
                    "t": ev.time,
                    "x": ev.pre.x.tolist(),
                    "v_pre": ev.pre.v.tolist(),
                    "v_post": ev.post.v.tolist(),
                    "branch": ev.branch,
                }
            )
        for t in grid:
            st = pdmp.state_at(log, float(t), integrator)
            series.append(
                (idx, float(t), float(np.linalg.norm(st.x)), float(np.linalg.norm(st.v)))
            )
    return events, series


def _couple_block(args):
    cfg, lo, hi, geom_tuple, lyap_tuple = args
    model = build_model(cfg)
    integrator = FlowIntegrator.for_model(model)
    geom = cpl.CouplingGeometry(*geom_tuple)
    a0, epsilon, big_r0, theta0, theta_star, beta_exp = lyap_tuple
    lyap = erg.LyapunovFunction(model.gamma, theta0, theta_star, beta_exp, model.potential)
    grid = np.asarray(cfg.t_grid)
    init = _init_pair(cfg)
    events, series = [], []
    for idx in range(lo, hi):
        rng = pdmp.stream(cfg.seed, idx)
        log = cpl.coupled_simulate(init, cfg.t_end, model, geom, rng, seed_label=f"{cfg.seed}:{idx}")
        for ev in log.events:
            events.append(
                {
                    "traj": idx,
                    "t": ev.time,
                    "x": ev.pre.first.x.tolist(),
                    "x2": ev.pre.second.x.tolist(),
                    "v_pre": ev.pre.first.v.tolist(),
                    "v2_pre": ev.pre.second.v.tolist(),
                    "v_post": ev.post.first.v.tolist(),
                    "v2_post": ev.post.second.v.tolist(),
                    "branch": ev.branch,
                }
            )
        for t in grid:
            st = cpl.coupled_state_at(log, float(t), integrator)
            r = st.r(geom.alpha, geom.alpha0)
            fval = float(erg.distance_f(min(r, big_r0), a0))
            gval = 1.0 + epsilon * (
                float(lyap.value(st.first.x, st.first.v))
                + float(lyap.value(st.second.x, st.second.v))
            )
            phi = erg.semi_metric_phi(st, lyap)
            series.append(
                (
                    idx,
                    float(t),
                    float(np.linalg.norm(st.first.x)),
                    float(np.linalg.norm(st.first.v)),
                    r,
                    fval * gval,
                    phi,
                )
            )
    return events, series


def _blocks(n: int, _threads: int, size: int = 64):
    # fixed block size: the reduction order (and so every output byte) is
    # identical no matter how many workers run the blocks
    return [(lo, min(lo + size, n)) for lo in range(0, n, size)]


def _run_blocks(worker, argses, threads: int):
    if threads <= 1 or len(argses) <= 1:
        return [worker(a) for a in argses]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, argses))


def cmd_simulate(cfg: RunConfig, out: Path, threads: int, fmt_choice: str) -> int:
    argses = [(cfg, lo, hi) for lo, hi in _blocks(cfg.n_traj, threads)]
    results = _run_blocks(_simulate_block, argses, threads)
    events = [e for ev, _ in results for e in ev]
    series = [s for _, sr in results for s in sr]
    if fmt_choice in ("jsonl", "both"):
        _write_jsonl(out / "events.jsonl", events)
        print(f"wrote {out / 'events.jsonl'} ({len(events)} events)")
    if fmt_choice in ("csv", "both"):
        _write_csv(out / "series.csv", ("traj_id", "t", "x_norm", "v_norm"), series)
        print(f"wrote {out / 'series.csv'}")
    return EXIT_OK


def cmd_couple(cfg: RunConfig, out: Path, threads: int, fmt_choice: str) -> int:
    try:
        model, drift, b2, params = run_pipeline(cfg)
    except erg.InfeasibleError as exc:
        print(f"infeasible: {exc}")
        return EXIT_INFEASIBLE
    geom_tuple = (params.alpha, params.alpha0, params.kappa)
    lyap_tuple = (
        params.a0,
        params.epsilon,
        params.R0,
        params.theta0,
        params.theta_star,
        params.beta_exp,
    )
    argses = [(cfg, lo, hi, geom_tuple, lyap_tuple) for lo, hi in _blocks(cfg.n_traj, threads)]
    results = _run_blocks(_couple_block, argses, threads)
    events = [e for ev, _ in results for e in ev]
    series = [s for _, sr in results for s in sr]
    if fmt_choice in ("jsonl", "both"):
        _write_jsonl(out / "coupled_events.jsonl", events)
        print(f"wrote {out / 'coupled_events.jsonl'} ({len(events)} events)")
    if fmt_choice in ("csv", "both"):
        _write_csv(
            out / "coupled_series.csv",
            ("traj_id", "t", "x_norm", "v_norm", "r", "FG", "Phi"),
            series,
        )
        print(f"wrote {out / 'coupled_series.csv'}")
    return EXIT_OK


def _contract_block(args):
    cfg, lo, hi, params = args
    model = build_model(cfg)
    init = _init_pair(cfg)
    acc = []
    erg.contraction_experiment(
        init,
        model,
        params,
        cfg.t_grid,
        n_traj=max(hi - lo, 100),
        master_seed=cfg.seed,
        index_range=(lo, hi),
        _accumulate=acc,
    )
    return acc[0]


def cmd_contract(cfg: RunConfig, out: Path, threads: int, _fmt_choice: str) -> int:
    try:
        model, drift, b2, params = run_pipeline(cfg)
    except erg.InfeasibleError as exc:
        print(f"infeasible: {exc}")
        return EXIT_INFEASIBLE
    if cfg.n_traj < 100:
        raise ConfigError("contract requires experiment.n_traj >= 100")
    argses = [(cfg, lo, hi, params) for lo, hi in _blocks(cfg.n_traj, threads)]
    results = _run_blocks(_contract_block, argses, threads)
    sums = np.sum([r[0] for r in results], axis=0)
    sumsq = np.sum([r[1] for r in results], axis=0)
    report = erg.summarize_contraction(
        _init_pair(cfg), model, params, np.asarray(cfg.t_grid), sums, sumsq, cfg.n_traj
    )
    _write_csv(
        out / "contraction.csv",
        ("t", "mean", "stderr", "envelope"),
        list(report.rows()),
    )
    _write_json(
        out / "contraction.json",
        {
            "passed": report.passed,
            "fg_init": report.fg_init,
            "lambda_star": report.lambda_star,
            "fitted_rate": report.fitted_rate,
            "worst_index": report.worst_index,
            "worst_excess": report.worst_excess,
            "n_traj": report.n_traj,
            "seed": cfg.seed,
        },
    )
    print(f"wrote {out / 'contraction.csv'} and contraction.json")
    print(
        f"envelope {'holds' if report.passed else 'VIOLATED'}; "
        f"fitted rate {report.fitted_rate:.4g} vs lambda_star {report.lambda_star!r}"
    )
    return EXIT_OK if report.passed else EXIT_VERIFY_FAIL


# -- verify suites -----------------------------------------------------------


def _verify_generator(cfg: RunConfig, model: ModelSpec) -> list:
    rng = pdmp.stream(cfg.seed, 77)
    battery = erg.probe_battery(model.d)
    point = PhaseState(rng.normal(size=model.d), rng.normal(size=model.d))
    checks = []
    one = erg.ProbeFunction("one", lambda x, v: np.ones(np.shape(x)[:-1]) if np.ndim(x) > 1 else 1.0,
                            lambda x, v: np.zeros_like(np.asarray(x, dtype=float)),
                            lambda x, v: np.zeros_like(np.asarray(v, dtype=float)))
    est = erg.generator_probe(one, point, model, cfg.n_mc, rng)
    checks.append(("constants are killed", est.value == 0.0))
    x1 = battery[0]
    est = erg.generator_probe(x1, point, model, cfg.n_mc, rng)
    checks.append(("position coordinate gives velocity", abs(est.value - point.v[0]) < 1e-12))
    v1 = battery[1]
    est = erg.generator_probe(v1, point, model, cfg.n_mc, rng)
    expect = (
        -model.gamma * point.v[0]
        - model.potential.gradient(point.x)[0]
        - float(model.rate(point.x, point.v)) * point.v[0]
    )
    checks.append(("velocity coordinate", est.within(expect)))
    # linearity: probe(2 f + 3 g) = 2 probe(f) + 3 probe(g) within MC error
    f, g = battery[3], battery[4]
    combo = erg.ProbeFunction(
        "combo",
        lambda x, v: 2.0 * f.fn(x, v) + 3.0 * g.fn(x, v),
        lambda x, v: 2.0 * f.gx(x, v) + 3.0 * g.gx(x, v),
        lambda x, v: 2.0 * f.gv(x, v) + 3.0 * g.gv(x, v),
    )
    e_combo = erg.generator_probe(combo, point, model, cfg.n_mc, pdmp.stream(cfg.seed, 78))
    e_f = erg.generator_probe(f, point, model, cfg.n_mc, pdmp.stream(cfg.seed, 79))
    e_g = erg.generator_probe(g, point, model, cfg.n_mc, pdmp.stream(cfg.seed, 80))
    lin_err = math.sqrt(e_combo.stderr**2 + 4 * e_f.stderr**2 + 9 * e_g.stderr**2)
    checks.append(
        ("linearity", abs(e_combo.value - 2 * e_f.value - 3 * e_g.value) <= 3 * lin_err)
    )
    return checks


def _verify_coupling(cfg: RunConfig, model: ModelSpec) -> list:
    try:
        _, _, _, params = run_pipeline(cfg)
        geom = params.geometry
    except erg.InfeasibleError:
        geom = cpl.CouplingGeometry(1.0, 1.0, 1.0)
    rng = pdmp.stream(cfg.seed, 88)
    battery = erg.probe_battery(model.d)
    checks = []
    for k in range(6):
        pair = cpl.CoupledState(
            PhaseState(rng.normal(size=model.d), rng.normal(size=model.d)),
            PhaseState(rng.normal(size=model.d), rng.normal(size=model.d)),
        )
        g = battery[k % len(battery)]
        h = battery[(k + 2) % len(battery)]
        est = erg.coupling_operator_probe(g, h, pair, model, geom, cfg.n_mc, rng)
        checks.append((f"marginal residual {g.name}+{h.name}", abs(est.value) <= 3 * est.stderr))
    return checks


def _verify_drift(cfg: RunConfig, model: ModelSpec) -> list:
    beta_exp = default_beta_exp(cfg, model)
    if beta_exp == 2.0 and math.isfinite(model.density.moment(2.0)):
        report = erg.lyapunov_drift_quadratic(model)
    else:
        report = erg.lyapunov_drift_mc(
            model, beta_exp, n_mc=cfg.n_mc, rng=pdmp.stream(cfg.seed, 900_001)
        )
    return [
        (f"drift certificate ({report.method}) margin >= 0", report.margin >= 0),
        ("drift tail bound", report.tail_ok),
    ]


def _verify_b2(cfg: RunConfig, model: ModelSpec) -> list:
    beta_exp = default_beta_exp(cfg, model)
    report = erg.verify_b2(
        model,
        beta_exp,
        xi_norms=np.geomspace(0.01, 10.0, 8),
        n_mc=cfg.n_mc,
        rng=pdmp.stream(cfg.seed, 900_002),
    )
    return [
        ("collision-moment constant finite and positive", 0 < report.c_double_star < math.inf),
        ("collision-moment MC conclusive", report.passed),
    ]


def _verify_marginals(cfg: RunConfig, model: ModelSpec) -> list:
    try:
        _, _, _, params = run_pipeline(cfg)
        geom = params.geometry
    except erg.InfeasibleError:
        geom = cpl.CouplingGeometry(1.0, 1.0, 1.0)
    n = cfg.n_traj
    init_pair = _init_pair(cfg)
    xs_c, vs_c, _, _ = cpl.coupled_final_states(init_pair, cfg.t_end, model, geom, cfg.seed, n)
    xs_s, vs_s = pdmp.ensemble_final_states(
        init_pair.first, cfg.t_end, model, cfg.seed + 1, n
    )
    ks_x = stats.ks_2samp(np.linalg.norm(xs_c, axis=1), np.linalg.norm(xs_s, axis=1))
    ks_v = stats.ks_2samp(np.linalg.norm(vs_c, axis=1), np.linalg.norm(vs_s, axis=1))
    return [
        (f"|X_T| two-sample KS p={ks_x.pvalue:.4f}", ks_x.pvalue > 0.01),
        (f"|V_T| two-sample KS p={ks_v.pvalue:.4f}", ks_v.pvalue > 0.01),
    ]


def _verify_flow(cfg: RunConfig, model: ModelSpec) -> list:
    from .flow import RK4

    exact = FlowIntegrator.for_model(model)
    rk4 = FlowIntegrator(model.gamma, model.potential, method=RK4, step=1e-3)
    rng = pdmp.stream(cfg.seed, 99)
    state = PhaseState(rng.normal(size=model.d), rng.normal(size=model.d))
    gap = 0.0
    for t in np.linspace(0.01, 1.0, 100):
        se = exact.flow(state, float(t))
        sr = rk4.flow(state, float(t))
        gap = max(gap, float(np.max(np.abs(se.x - sr.x))), float(np.max(np.abs(se.v - sr.v))))
    mono_ok = True
    for _ in range(100):
        s = PhaseState(rng.normal(size=model.d), rng.normal(size=model.d))
        h0 = exact.hamiltonian(s)
        h1 = exact.hamiltonian(exact.flow(s, float(rng.uniform(0.01, 2.0))))
        if h1 > h0 + 1e-8 * max(1.0, abs(h0)):
            mono_ok = False
    return [
        (f"exact vs RK4 sup gap {gap:.3e} < 1e-8", gap < 1e-8),
        ("Hamiltonian non-increasing", mono_ok),
    ]


_VERIFY = {
    "generator": _verify_generator,
    "coupling": _verify_coupling,
    "drift": _verify_drift,
    "b2": _verify_b2,
    "marginals": _verify_marginals,
    "flow": _verify_flow,
}


def cmd_verify(cfg: RunConfig, which: str) -> int:
    if which not in _VERIFY:
        print(f"unknown verification target {which!r}; choose from {sorted(_VERIFY)}")
        return EXIT_USAGE
    model = build_model(cfg)
    try:
        checks = _VERIFY[which](cfg, model)
    except erg.InfeasibleError as exc:
        print(f"infeasible: {exc}")
        return EXIT_INFEASIBLE
    all_ok = True
    for name, ok in checks:
        print(f"[{'PASS' if ok else 'FAIL'}] {which}: {name}")
        all_ok &= bool(ok)
    return EXIT_OK if all_ok else EXIT_VERIFY_FAIL


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hamjump", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("params", "simulate", "couple", "contract", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--format", choices=("csv", "jsonl", "both"), default="both")
        if name == "verify":
            p.add_argument("--which", required=True, help="|".join(sorted(_VERIFY)))
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    try:
        ns = parser.parse_args(argv)
        text = Path(ns.config).read_text(encoding="utf-8")
        cfg = parse_config(text)
        if ns.seed is not None:
            cfg = RunConfig(**{**{f.name: getattr(cfg, f.name) for f in fields(cfg)}, "seed": ns.seed})
        out = Path(ns.out)
        out.mkdir(parents=True, exist_ok=True)
        if ns.command == "params":
            return cmd_params(cfg, out, ns.threads, ns.format)
        if ns.command == "simulate":
            return cmd_simulate(cfg, out, ns.threads, ns.format)
        if ns.command == "couple":
            return cmd_couple(cfg, out, ns.threads, ns.format)
        if ns.command == "contract":
            return cmd_contract(cfg, out, ns.threads, ns.format)
        return cmd_verify(cfg, ns.which)
    except (ConfigError, OSError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
