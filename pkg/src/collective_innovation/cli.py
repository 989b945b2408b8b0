"""Command-line front end: configuration, dispatch, figure data and reports."""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import platform
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .benchmark import benchmark_closed_form_linear, solve_benchmark
from .concealment import ConcealmentConfig, concealment_welfare_condition, solve_concealment
from .disposal import compare_welfare_disposal, disposal_closed_form_limit, solve_disposal
from .endogenous import (
    EndogenousParams,
    endo_cutoffs,
    endo_equilibrium,
    monotone_condition,
    solve_endogenous_dp,
    value_monotone,
)
from .errors import ConvergenceError, ModelError, ValidationError
from .forced import detriment_report, forced_closed_form_linear, solve_forced
from .model import InnovationDist, LimitRegime, ModelParams, PayoffSpec
from .numerics import GridConfig, GridFn, VALUE_TOL
from ._solve import check_uniqueness_condition
from .sim import estimate_payoff, simulate_concealment, simulate_markov

OUT_ENV = "COLLECTIVE_INNOVATION_OUT"
EXIT_OK, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_IO = 0, 2, 3, 4

COMMANDS = (
    "solve-benchmark",
    "solve-sse",
    "solve-disposal",
    "solve-concealment",
    "solve-endogenous",
    "simulate",
    "check-detrimental",
    "compare-welfare",
    "figures",
)

# section -> allowed keys and their kinds
SCHEMA = {
    "model": {"lam": "number", "n": "int", "x0": "number"},
    "payoff": {"variant": "str", "scale": "number", "kappa": "number", "cost": "number"},
    "dist": {"variant": "str", "rho": "number", "zeta": "number", "eps": "number", "mu": "number"},
    "limit": {"lam_p": "number", "eps_p": "number", "zeta": "number", "n": "int", "rho": "number"},
    "grid": {"x_max": "number", "step": "number", "tol": "number", "max_iter": "int"},
    "concealment": {
        "delta": "number", "horizon": "int", "step": "number", "damping": "number",
        "fp_tol": "number", "max_outer_iter": "int",
    },
    "sim": {"regime": "str", "replications": "int", "seed": "int", "time_cap": "number"},
    "welfare": {"ns": "int-list", "delta": "number", "horizon": "int"},
}
TOP_LEVEL = {"command": "str", "set": "str", "output": "str", **{k: "section" for k in SCHEMA}}

_FIG_MIXTURE = {
    "model": {"lam": 10.0, "n": 5, "x0": 0.0},
    "payoff": {"variant": "linear"},
    "dist": {"variant": "atom_exp", "rho": 0.01, "zeta": 5.0, "eps": 0.01},
}
PRESETS = {
    "fig1": _FIG_MIXTURE,
    "fig2": _FIG_MIXTURE,
    "fig3": {
        "payoff": {"variant": "linear"},
        "limit": {"lam_p": 0.1, "eps_p": 1.0, "zeta": 5.0, "n": 5, "rho": 0.001},
    },
    "fig4": {
        "model": {"lam": 10.0, "n": 5, "x0": 0.0},
        "payoff": {"variant": "linear"},
        "dist": {"variant": "atom_exp", "rho": 0.05, "zeta": 5.0, "eps": 0.01},
    },
}
FIG_RANGES = {"fig1": (0.0, 4.0), "fig2": (0.0, 0.7), "fig3": (0.0, 0.8), "fig4": (0.0, 3.0)}


class ConfigError(ValidationError):
    """Invalid configuration; the message starts with the field path."""


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------


def _check_kind(path: str, value, kind: str) -> None:
    if kind == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(f"{path}: expected a finite number, got {value!r}")
    elif kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
    elif kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
    elif kind == "int-list":
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{path}: expected a non-empty list of integers")
        for i, v in enumerate(value):
            _check_kind(f"{path}[{i}]", v, "int")


def validate_config(cfg) -> dict:
    """Check field names and types; unknown fields are rejected."""
    if not isinstance(cfg, dict):
        raise ConfigError("config: expected a JSON object")
    for key, value in cfg.items():
        if key not in TOP_LEVEL:
            raise ConfigError(f"config.{key}: unknown field")
        kind = TOP_LEVEL[key]
        if kind != "section":
            _check_kind(f"config.{key}", value, kind)
            continue
        if not isinstance(value, dict):
            raise ConfigError(f"config.{key}: expected an object")
        for sub, v in value.items():
            if sub not in SCHEMA[key]:
                raise ConfigError(f"config.{key}.{sub}: unknown field")
            _check_kind(f"config.{key}.{sub}", v, SCHEMA[key][sub])
    if "command" in cfg and cfg["command"] not in COMMANDS:
        raise ConfigError(f"config.command: unknown command {cfg['command']!r}")
    if "set" in cfg and cfg["set"] not in PRESETS:
        raise ConfigError(f"config.set: unknown parameter set {cfg['set']!r}")
    return cfg


def load_config(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return validate_config(data)


def merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k].update(v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve(cfg: dict) -> dict:
    """Apply the named parameter set underneath explicit settings."""
    validate_config(cfg)
    name = cfg.get("set")
    return merge(PRESETS[name], cfg) if name else copy.deepcopy(cfg)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def _section(cfg: dict, name: str) -> dict:
    if name not in cfg:
        raise ConfigError(f"config.{name}: required for this command")
    return cfg[name]


def build_params(cfg: dict) -> ModelParams:
    m = _section(cfg, "model")
    for key in ("lam", "n"):
        if key not in m:
            raise ConfigError(f"config.model.{key}: required")
    try:
        return ModelParams(float(m["lam"]), m["n"], float(m.get("x0", 0.0)))
    except ValidationError as exc:
        raise ConfigError(f"config.model: {exc}") from None


def build_payoff(cfg: dict) -> PayoffSpec:
    p = cfg.get("payoff", {"variant": "linear"})
    variant = p.get("variant", "linear")
    try:
        if variant == "linear":
            extra = set(p) - {"variant"}
            if extra:
                raise ConfigError(f"config.payoff.{sorted(extra)[0]}: not used by the linear payoff")
            return PayoffSpec.linear()
        if variant == "separable":
            return PayoffSpec.separable(p.get("scale", 1.0), p.get("kappa", 1.0), p.get("cost", 1.0))
    except ConfigError:
        raise
    except ValidationError as exc:
        raise ConfigError(f"config.payoff: {exc}") from None
    raise ConfigError(f"config.payoff.variant: unknown payoff {variant!r}")


_DIST_KEYS = {"atom_exp": {"rho", "zeta", "eps"}, "exponential": {"eps"}, "degenerate": {"mu"}}


def build_dist(cfg: dict) -> InnovationDist:
    d = _section(cfg, "dist")
    variant = d.get("variant")
    if variant not in _DIST_KEYS:
        raise ConfigError(f"config.dist.variant: expected one of {sorted(_DIST_KEYS)}, got {variant!r}")
    need = _DIST_KEYS[variant]
    given = set(d) - {"variant"}
    if given - need:
        raise ConfigError(f"config.dist.{sorted(given - need)[0]}: not used by {variant}")
    if need - given:
        raise ConfigError(f"config.dist.{sorted(need - given)[0]}: required for {variant}")
    try:
        if variant == "atom_exp":
            return InnovationDist.atom_exp(d["rho"], d["zeta"], d["eps"])
        if variant == "exponential":
            return InnovationDist.exponential(d["eps"])
        return InnovationDist.degenerate(d["mu"])
    except ValidationError as exc:
        raise ConfigError(f"config.dist: {exc}") from None


def build_limit(cfg: dict) -> tuple[LimitRegime, float]:
    lim = _section(cfg, "limit")
    try:
        reg = LimitRegime(lim["lam_p"], lim["eps_p"], lim["zeta"], lim["n"])
    except KeyError as exc:
        raise ConfigError(f"config.limit.{exc.args[0]}: required") from None
    except ValidationError as exc:
        raise ConfigError(f"config.limit: {exc}") from None
    rho = lim.get("rho", 0.001)
    if not 0 < rho < 1:
        raise ConfigError("config.limit.rho: must lie in (0, 1)")
    return reg, rho


def build_model(cfg: dict) -> tuple[ModelParams, PayoffSpec, InnovationDist]:
    """Model triple; a limit section yields its finite approximant."""
    P = build_payoff(cfg)
    if "limit" in cfg and "dist" not in cfg:
        reg, rho = build_limit(cfg)
        params, F = reg.approximant(rho)
        return params, P, F
    return build_params(cfg), P, build_dist(cfg)


def build_grid(cfg: dict, params: ModelParams, P: PayoffSpec, F: InnovationDist) -> GridConfig:
    """[0, 4] at step 1e-3 when that covers the region where effort can be
    positive; otherwise the range grows and the step scales with it."""
    g = cfg.get("grid", {})
    tol = g.get("tol", VALUE_TOL)
    max_iter = g.get("max_iter", 200)
    if tol <= 0 or max_iter < 1:
        raise ConfigError("config.grid: tol must be positive and max_iter at least 1")
    if "x_max" in g:
        x_max = float(g["x_max"])
    else:
        x_max = 4.0
        for _ in range(60):
            try:
                check_uniqueness_condition(params, P, F, x_max)
                break
            except ValidationError:
                x_max *= 1.25
        if "limit" in cfg and "dist" not in cfg:
            x_max = max(x_max, 3.2)
    step = g.get("step")
    if step is None:
        step = 1e-3 if x_max <= 4.0 else x_max / 4000
        if "limit" in cfg and "dist" not in cfg:
            step = min(step, F.exp_mean / 5)
    if step <= 0 or x_max <= step:
        raise ConfigError("config.grid: need 0 < step < x_max")
    return GridConfig.from_step(x_max, step, tol=tol, max_iter=max_iter)


def build_concealment(cfg: dict, defaults: dict | None = None) -> ConcealmentConfig:
    c = {**(defaults or {}), **cfg.get("concealment", {})}
    try:
        return ConcealmentConfig(**c)
    except ValidationError as exc:
        raise ConfigError(f"config.concealment: {exc}") from None


def build_endogenous(cfg: dict) -> EndogenousParams:
    params = build_params(cfg)
    d = _section(cfg, "dist")
    if d.get("variant") != "atom_exp":
        raise ConfigError("config.dist.variant: the endogenous model needs atom_exp")
    try:
        return EndogenousParams(params.lam, params.n, d["rho"], d["zeta"], d["eps"], params.x0)
    except KeyError as exc:
        raise ConfigError(f"config.dist.{exc.args[0]}: required") from None
    except ValidationError as exc:
        raise ConfigError(f"config.dist: {exc}") from None


# --------------------------------------------------------------------------
# Artifacts
# --------------------------------------------------------------------------


def versions() -> dict:
    return {
        "collective_innovation": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


@dataclass
class Writer:
    out: Path
    command: str
    cfg: dict

    def __post_init__(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def write(self, name: str, text: str, residuals: dict | None = None) -> Path:
        path = self.out / name
        path.write_text(text, encoding="utf-8")
        manifest = {
            "artifact": name,
            "sha256": hashlib.sha256(text.encode()).hexdigest(),
            "command": self.command,
            "config_hash": config_hash(self.cfg),
            "config": self.cfg,
            "versions": versions(),
            "residuals": _jsonable(residuals or {}),
        }
        (self.out / f"{name}.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        self.files.append(name)
        return path

    def json(self, name: str, data: dict, residuals: dict | None = None) -> Path:
        return self.write(name, json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n", residuals)

    def curve(self, name: str, x: np.ndarray, y: np.ndarray, residuals: dict | None = None) -> Path:
        """``x,value`` CSV; a repeated x carries the two sides of a jump."""
        lines = ["x,value"] + [f"{float(a)!r},{float(b)!r}" for a, b in zip(x, np.broadcast_to(y, np.shape(x)))]
        return self.write(name, "\n".join(lines) + "\n", residuals)


def _window(fn: GridFn, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    m = (fn.nodes >= lo - 1e-12) & (fn.nodes <= hi + 1e-12)
    return fn.nodes[m], fn.values[m]


# --------------------------------------------------------------------------
# Welfare comparison
# --------------------------------------------------------------------------


def compare_welfare(
    params: ModelParams,
    P: PayoffSpec,
    F: InnovationDist,
    grid: GridConfig | None = None,
    ccfg: ConcealmentConfig | None = None,
) -> dict:
    """v_f, v_d and v_c at x0 for one parameter set."""
    x0 = params.x0
    grid = grid or build_grid({}, params, P, F)
    forced = solve_forced(params, P, F, grid)
    disp = solve_disposal(params, P, F, grid)
    det = detriment_report(forced, params, P, F, x0)
    dw = compare_welfare_disposal(forced, disp, x0, det.is_detrimental)
    conc = solve_concealment(params, F, ccfg, P)
    # past lam mu nobody searches, so the condition is vacuous
    holds = concealment_welfare_condition(params, F, x0).holds if x0 < params.lam * F.mean else False
    return {
        "n": params.n,
        "x0": x0,
        "v_f": float(forced.v_f(x0)),
        "v_d": float(disp.v_d(x0)),
        "v_c": conc.v_c,
        "is_detrimental": det.is_detrimental,
        "disposal_strict": dw.strict_at_x0,
        "disposal_consistent": dw.consistent,
        "condition_holds": holds,
        "concealment_residual": conc.residual,
        "concealment_iterations": conc.iterations,
        "tarski_gap": max(forced.report.gap, disp.report.gap),
    }


def welfare_sweep(
    params: ModelParams,
    P: PayoffSpec,
    F: InnovationDist,
    ns=(2, 5, 10, 20),
    ccfg: ConcealmentConfig | None = None,
    grid_cfg: dict | None = None,
) -> dict:
    """Compare the three regimes across team sizes. The caveat flag is set
    when the welfare condition holds yet concealment does not beat forced
    disclosure at the largest n, which finite step lengths can cause."""
    rows = []
    for n in ns:
        p = ModelParams(params.lam, n, params.x0)
        rows.append(compare_welfare(p, P, F, build_grid(grid_cfg or {}, p, P, F), ccfg))
    holds = all(r["condition_holds"] for r in rows)
    better = [r["n"] for r in rows if r["v_c"] > r["v_f"]]
    last = rows[-1]
    return {
        "rows": rows,
        "condition_holds": holds,
        "smallest_n_concealment_better": min(better) if better else None,
        "concealment_better_at_largest_n": last["v_c"] > last["v_f"],
        "finite_delta_caveat": holds and not last["v_c"] > last["v_f"],
        "disposal_consistent": all(r["disposal_consistent"] for r in rows),
    }


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def _cmd_solve_benchmark(cfg, w: Writer) -> dict:
    params, P, F = build_model(cfg)
    sol = solve_benchmark(params, P, F, build_grid(cfg, params, P, F))
    res = {"bellman": sol.bellman_residual, "tarski_gap": sol.report.gap}
    w.curve("benchmark_value.csv", sol.v_star.nodes, sol.v_star.values, res)
    w.curve("benchmark_effort.csv", sol.alpha_star.nodes, sol.alpha_star.values, res)
    w.json("benchmark.json", sol.summary(), res)
    return sol.summary()


def _cmd_solve_sse(cfg, w: Writer) -> dict:
    params, P, F = build_model(cfg)
    sol = solve_forced(params, P, F, build_grid(cfg, params, P, F))
    res = {"bellman": sol.bellman_residual, "tarski_gap": sol.report.gap}
    w.curve("sse_value.csv", sol.v_f.nodes, sol.v_f.values, res)
    w.curve("sse_effort.csv", sol.alpha_f.nodes, sol.alpha_f.values, res)
    w.json("sse.json", sol.summary(), res)
    return sol.summary()


def _cmd_solve_disposal(cfg, w: Writer) -> dict:
    params, P, F = build_model(cfg)
    sol = solve_disposal(params, P, F, build_grid(cfg, params, P, F))
    res = {"bellman": sol.bellman_residual, "tarski_gap": sol.report.gap}
    w.curve("disposal_value.csv", sol.v_d.nodes, sol.v_d.values, res)
    w.curve("disposal_effort.csv", sol.alpha_d.nodes, sol.alpha_d.values, res)
    w.write("discard_region.csv", sol.discard_region.to_csv(), res)
    w.json("disposal.json", sol.summary(), res)
    return sol.summary()


def _cmd_solve_concealment(cfg, w: Writer) -> dict:
    params, P, F = build_model(cfg)
    sol = solve_concealment(params, F, build_concealment(cfg), P)
    res = {"fixed_point": sol.residual, "bellman": sol.bellman_residual}
    w.write("concealment.json", sol.to_json() + "\n", res)
    for which in ("alpha", "v", "G"):
        w.write(f"concealment_{which}.csv", sol.matrix_csv(which), res)
    return json.loads(sol.to_json())


def _cmd_solve_endogenous(cfg, w: Writer) -> dict:
    ep = build_endogenous(cfg)
    step = cfg.get("grid", {}).get("step")
    dp = solve_endogenous_dp(ep, step)
    res = {"closed_form_gap": dp.closed_form_gap, "best_response_violation": dp.br_violation}
    w.curve("endogenous_value.csv", dp.x, dp.v_eq, res)
    w.curve("endogenous_effort.csv", dp.x, dp.alpha_eq, res)
    w.curve("endogenous_benchmark_value.csv", dp.x_star, dp.v_star, res)
    w.curve("endogenous_benchmark_effort.csv", dp.x_star, dp.alpha_star, res)
    summary = {**endo_cutoffs(ep), "monotone_condition": monotone_condition(ep), "value_monotone": value_monotone(ep), **res,
               "benchmark_gap": dp.benchmark_gap}
    try:
        summary["jumps"] = list(endo_equilibrium(ep, 0.0).jumps)
    except ModelError:
        summary["jumps"] = None
    w.json("endogenous.json", summary, res)
    return summary


def _cmd_simulate(cfg, w: Writer) -> dict:
    params, P, F = build_model(cfg)
    s = cfg.get("sim", {})
    regime = s.get("regime", "forced")
    reps = s.get("replications", 100_000)
    seed = s.get("seed", 0)
    cap = s.get("time_cap")
    if reps < 2:
        raise ConfigError("config.sim.replications: need at least 2")
    if seed < 0:
        raise ConfigError("config.sim.seed: must be non-negative")
    if cap is not None and cap <= 0:
        raise ConfigError("config.sim.time_cap: must be positive")
    if regime == "concealment":
        sol = solve_concealment(params, F, build_concealment(cfg), P)
        est = simulate_concealment(params, F, sol, params.x0, seed, reps)
        out = {**est.to_dict(), "regime": regime, "solver_value": sol.v_c, "seed": seed}
    elif regime in ("forced", "disposal"):
        grid = build_grid(cfg, params, P, F)
        if regime == "forced":
            sol = solve_forced(params, P, F, grid)
            effort, value, disposal = sol.alpha_f, sol.v_f, None
        else:
            sol = solve_disposal(params, P, F, grid)
            effort, value, disposal = sol.alpha_d, sol.v_d, sol
        est = estimate_payoff(params, P, F, effort, disposal, params.x0, reps, seed, cap)
        traj = simulate_markov(params, P, F, effort, disposal, params.x0, seed, cap)
        w.write("trajectory.csv", traj.to_csv(), {"tarski_gap": sol.report.gap})
        out = {**est.to_dict(), "regime": regime, "solver_value": float(value(params.x0)), "seed": seed}
    else:
        raise ConfigError(f"config.sim.regime: expected forced, disposal or concealment, got {regime!r}")
    out["z_score"] = (out["mean"] - out["solver_value"]) / out["stderr"] if out["stderr"] > 0 else 0.0
    w.json("estimate.json", out, {"stderr": out["stderr"]})
    return out


def _cmd_check_detrimental(cfg, w: Writer) -> dict:
    params, P, F = build_model(cfg)
    sol = solve_forced(params, P, F, build_grid(cfg, params, P, F))
    rep = detriment_report(sol, params, P, F, params.x0).to_dict()
    w.json("detrimental.json", rep, {"bellman": sol.bellman_residual, "tarski_gap": sol.report.gap})
    return rep


def _cmd_compare_welfare(cfg, w: Writer) -> dict:
    params, P, F = build_model(cfg)
    wel = cfg.get("welfare", {})
    ns = wel.get("ns", [2, 5, 10, 20])
    if any(n < 2 for n in ns):
        raise ConfigError("config.welfare.ns: team sizes must be at least 2")
    defaults = {"delta": wel.get("delta", 0.05), "horizon": wel.get("horizon", 160)}
    ccfg = build_concealment(cfg, defaults)
    grid_cfg = {k: v for k, v in cfg.get("grid", {}).items() if k in ("tol", "max_iter")}
    rep = welfare_sweep(params, P, F, ns, ccfg, grid_cfg)
    w.json("welfare.json", rep, {"concealment": max(r["concealment_residual"] for r in rep["rows"])})
    return rep


def _figure(name: str, cfg: dict, w: Writer) -> dict:
    lo, hi = FIG_RANGES[name]
    if name in ("fig1", "fig2"):
        params, P, F = build_model(cfg)
        grid = build_grid(cfg, params, P, F)
        if name == "fig1":
            sol = solve_benchmark(params, P, F, grid)
            v, a = sol.v_star, sol.alpha_star
            x, _ = _window(v, lo, hi)
            gap = float(np.abs(v.values[: x.size] - benchmark_closed_form_linear(params, F, x)).max())
            summary = {**sol.summary(), "closed_form_gap": gap}
        else:
            sol = solve_forced(params, P, F, grid)
            v, a = sol.v_f, sol.alpha_f
            x, vals = _window(v, lo, hi)
            m = x >= sol.y_f
            gap = float(np.abs(vals[m] - forced_closed_form_linear(params, F, x[m])[1]).max())
            det = detriment_report(sol, params, P, F, params.x0)
            summary = {**sol.summary(), "closed_form_gap": gap, "detriment": det.to_dict()}
        res = {"bellman": sol.bellman_residual, "tarski_gap": sol.report.gap}
        w.curve(f"{name}_effort.csv", *_window(a, lo, hi), res)
        w.curve(f"{name}_value.csv", *_window(v, lo, hi), res)
    elif name == "fig3":
        reg, rho = build_limit(cfg)
        x = np.linspace(lo, hi, 801)
        lim = disposal_closed_form_limit(reg, x)
        params, P, F = build_model(cfg)
        sol = solve_disposal(params, P, F, build_grid(cfg, params, P, F))
        xs, vs = _window(sol.v_d, lo, hi)
        gap = float(np.abs(vs - disposal_closed_form_limit(reg, xs).value).max())
        res = {"approximant_tarski_gap": sol.report.gap, "approximant_gap": gap}
        w.curve("fig3_effort.csv", x, lim.effort, res)
        w.curve("fig3_value.csv", x, lim.value, res)
        w.curve("fig3_approximant_value.csv", xs, vs, res)
        summary = {"y_d": lim.y_d, "xhat_f": lim.xhat_f, "x_f": lim.x_f, "approximant_rho": rho, **res}
    else:
        ep = build_endogenous(cfg)
        dp = solve_endogenous_dp(ep)
        m = (dp.x >= lo) & (dp.x <= hi)
        cf = endo_equilibrium(ep, dp.x[m])
        res = {"closed_form_gap": dp.closed_form_gap, "best_response_violation": dp.br_violation}
        w.curve("fig4_effort.csv", dp.x[m], cf.effort, res)
        w.curve("fig4_value.csv", dp.x[m], cf.value, res)
        w.curve("fig4_dp_value.csv", dp.x[m], dp.v_eq[m], res)
        summary = {**endo_cutoffs(ep), "jumps": list(cf.jumps), **res}
    w.json(f"{name}.json", summary, res)
    return summary


def _cmd_figures(cfg, w: Writer) -> dict:
    name = cfg.get("set")
    if name is None:
        raise ConfigError("config.set: figures needs a parameter set (fig1..fig4)")
    return _figure(name, cfg, w)


DISPATCH = {
    "solve-benchmark": _cmd_solve_benchmark,
    "solve-sse": _cmd_solve_sse,
    "solve-disposal": _cmd_solve_disposal,
    "solve-concealment": _cmd_solve_concealment,
    "solve-endogenous": _cmd_solve_endogenous,
    "simulate": _cmd_simulate,
    "check-detrimental": _cmd_check_detrimental,
    "compare-welfare": _cmd_compare_welfare,
    "figures": _cmd_figures,
}


def _error(kind: str, exc: BaseException, code: int, stream) -> int:
    report = {"error": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(report), file=stream)
    return code


def run(cfg: dict, out_dir=None, stream=None) -> int:
    """Execute one command; returns the exit status."""
    stream = sys.stderr if stream is None else stream
    try:
        cfg = resolve(cfg)
        command = cfg.get("command")
        if command not in DISPATCH:
            raise ConfigError(f"config.command: expected one of {', '.join(COMMANDS)}")
        out = Path(out_dir or cfg.get("output") or os.environ.get(OUT_ENV) or "out")
        cfg.pop("output", None)
        writer = Writer(out, command, cfg)
        summary = DISPATCH[command](cfg, writer)
    except ConvergenceError as exc:
        return _error("convergence", exc, EXIT_CONVERGENCE, stream)
    except ValidationError as exc:
        return _error("validation", exc, EXIT_VALIDATION, stream)
    except ModelError as exc:
        return _error("solver", exc, EXIT_CONVERGENCE, stream)
    except OSError as exc:
        return _error("io", exc, EXIT_IO, stream)
    print(json.dumps({"command": command, "output": str(out), "files": writer.files, "summary": _jsonable(summary)}, sort_keys=True))
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="collective-innovation", description=__doc__)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON configuration file")
    ap.add_argument("--set", dest="preset", choices=sorted(PRESETS), help="built-in parameter set")
    ap.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--grid-step", type=float)
    ap.add_argument("--tol", type=float)
    ap.add_argument("--delta", type=float)
    ap.add_argument("--horizon", type=int)
    ap.add_argument("--replications", type=int)
    ap.add_argument("--regime", choices=("forced", "disposal", "concealment"))
    return ap


def _flags(args) -> dict:
    over: dict = {}

    def put(section, key, value):
        if value is not None:
            over.setdefault(section, {})[key] = value

    put("grid", "step", args.grid_step)
    put("grid", "tol", args.tol)
    put("concealment", "delta", args.delta)
    put("concealment", "horizon", args.horizon)
    put("sim", "seed", args.seed)
    put("sim", "replications", args.replications)
    put("sim", "regime", args.regime)
    return over


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    cfg: dict = {}
    try:
        if args.config:
            cfg = load_config(args.config)
    except ValidationError as exc:
        return _error("validation", exc, EXIT_VALIDATION, sys.stderr)
    except OSError as exc:
        return _error("io", exc, EXIT_IO, sys.stderr)
    cfg = merge(cfg, _flags(args))
    cfg["command"] = args.command
    if args.preset:
        cfg["set"] = args.preset
    return run(cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
