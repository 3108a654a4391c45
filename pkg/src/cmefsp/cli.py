"""Command-line driver: JSON run configs in, plot-ready tables out.

A run config is a JSON object::

    {
      "model":  {"builtin": "lotka_volterra", "params": {"a": 0.1}}
                | {"species": [...], "reactions": [...]},
      "x0":     [50, 100],                  # optional for builtin models
      "solver": {"tf": 10, "dt": 0.1, ...}, # SolverConfig fields
      "output": {"dir": "out", "snapshots": true, "error_trace": true,
                 "state_size": true, "ssa": {"n": 1000, "seed": 0}}
    }

Unknown keys anywhere are rejected.  Inline reactions look like::

    {"name": "binding", "reactants": {"E": 1, "S": 1}, "products": {"ES": 1},
     "propensity": {"type": "mass_action", "rate": 0.01}, "caps": {}}

with propensity types ``mass_action`` (rate), ``constant`` (rate) and
``hill`` (base, amplitude, threshold, exponent, regulator, direction, scale).

Exit codes: 0 success, 2 config error, 3 budget refusal, 4 capacity,
5 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import inspect
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import bench
from .errors import (
    BudgetError,
    CapacityError,
    ConfigError,
    DegeneratePruneError,
    ExpmvFailure,
    FSPError,
)
from .network import Constant, Hill, MassAction, Reaction, ReactionNetwork
from .solver import SolverConfig, solve_adaptive, verify_budget
from .ssa import ensemble_stats

log = logging.getLogger(__name__)

__all__ = [
    "RunConfig",
    "SSAOptions",
    "parse_config",
    "load_config",
    "run",
    "main",
    "network_to_dict",
    "network_from_dict",
    "model_to_config",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_BUDGET",
    "EXIT_CAPACITY",
    "EXIT_NUMERICAL",
]

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_CAPACITY, EXIT_NUMERICAL = 0, 2, 3, 4, 5

TRACE_COLUMNS = ("t", "n_states_before", "n_states_after", "pruned_mass", "local_bound", "expmv_error", "cum_bound")
SIZE_COLUMNS = ("t", "n_states_before", "n_states_after", "n_added", "boundary_flux")
SSA_COLUMNS = ("t", "species", "fsp_mean", "ssa_mean", "ssa_sem")

_SOLVER_FIELDS = {f.name for f in dataclasses.fields(SolverConfig)}


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


@dataclass
class SSAOptions:
    n: int = 1000
    seed: int = 0


@dataclass
class RunConfig:
    network: ReactionNetwork
    x0: tuple
    solver: SolverConfig
    model: dict
    out_dir: Path = Path("fsp_out")
    snapshots: bool = True
    error_trace: bool = True
    state_size: bool = True
    ssa: Optional[SSAOptions] = None
    raw: dict = field(default_factory=dict)

    def echo(self) -> dict:
        """Resolved configuration as plain JSON data."""
        out = {
            "model": self.model,
            "x0": list(self.x0),
            "solver": dataclasses.asdict(self.solver),
            "output": {
                "dir": str(self.out_dir),
                "snapshots": self.snapshots,
                "error_trace": self.error_trace,
                "state_size": self.state_size,
                "ssa": dataclasses.asdict(self.ssa) if self.ssa else None,
            },
        }
        return out


# --- network <-> dict ------------------------------------------------------


def _law_to_dict(law) -> dict:
    if isinstance(law, MassAction):
        return {"type": "mass_action", "rate": law.rate}
    if isinstance(law, Constant):
        return {"type": "constant", "rate": law.rate}
    d = dataclasses.asdict(law)
    d["type"] = "hill"
    return d


def network_to_dict(network: ReactionNetwork) -> dict:
    names = network.species_names
    reactions = []
    for r in network.reactions:
        law = _law_to_dict(r.propensity)
        if law["type"] == "hill":
            law["regulator"] = names[law["regulator"]]
        reactions.append({
            "name": r.name,
            "reactants": {names[i]: a for i, a in r.reactants.items()},
            "products": {names[i]: b for i, b in r.products.items()},
            "propensity": law,
            "caps": {names[i]: c for i, c in r.caps.items()},
        })
    return {"species": names, "reactions": reactions}


def _strict(obj, allowed, where, required=()):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key {unknown[0]!r} (allowed: {', '.join(sorted(allowed))})")
    missing = [k for k in required if k not in obj]
    if missing:
        raise ConfigError(f"{where}: missing required key {missing[0]!r}")


def _law_from_dict(d, index, where):
    if not isinstance(d, dict) or "type" not in d:
        raise ConfigError(f"{where}: propensity needs a 'type'")
    kind = d["type"]
    try:
        if kind in ("mass_action", "constant"):
            _strict(d, {"type", "rate"}, where, ("rate",))
            return (MassAction if kind == "mass_action" else Constant)(float(d["rate"]))
        if kind == "hill":
            keys = {"type", "base", "amplitude", "threshold", "exponent", "regulator", "direction", "scale"}
            _strict(d, keys, where, ("base", "amplitude", "threshold", "exponent", "regulator"))
            reg = d["regulator"]
            if isinstance(reg, str):
                if reg not in index:
                    raise ConfigError(f"{where}.regulator: unknown species {reg!r}")
                reg = index[reg]
            return Hill(
                float(d["base"]), float(d["amplitude"]), float(d["threshold"]), int(d["exponent"]),
                int(reg), d.get("direction", "repressing"), float(d.get("scale", 1.0)),
            )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}.type: unknown propensity type {kind!r}")


def network_from_dict(d: dict, where: str = "model") -> ReactionNetwork:
    _strict(d, {"species", "reactions"}, where, ("species", "reactions"))
    species = d["species"]
    if not isinstance(species, list) or not all(isinstance(s, str) for s in species):
        raise ConfigError(f"{where}.species: expected a list of names")
    index = {s: i for i, s in enumerate(species)}
    if not isinstance(d["reactions"], list):
        raise ConfigError(f"{where}.reactions: expected a list")
    reactions = []
    for k, rd in enumerate(d["reactions"]):
        w = f"{where}.reactions[{k}]"
        _strict(rd, {"name", "reactants", "products", "propensity", "caps"}, w, ("propensity",))

        def coeffs(key):
            m = rd.get(key, {})
            if not isinstance(m, dict):
                raise ConfigError(f"{w}.{key}: expected an object")
            out = {}
            for name, c in m.items():
                if name not in index:
                    raise ConfigError(f"{w}.{key}: unknown species {name!r}")
                if not isinstance(c, int) or isinstance(c, bool) or c < 0:
                    raise ConfigError(f"{w}.{key}.{name}: expected a nonnegative integer")
                out[index[name]] = c
            return out

        try:
            reactions.append(Reaction(
                coeffs("reactants"), coeffs("products"),
                _law_from_dict(rd["propensity"], index, f"{w}.propensity"),
                rd.get("name", ""), coeffs("caps"),
            ))
        except FSPError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{w}: {exc}") from exc
    try:
        return ReactionNetwork(species, reactions)
    except FSPError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


# --- config parsing --------------------------------------------------------


def _builtin(model: dict):
    _strict(model, {"builtin", "params"}, "model", ("builtin",))
    name = model["builtin"]
    if name not in bench.BUILTINS:
        raise ConfigError(f"model.builtin: unknown model {name!r} (known: {', '.join(sorted(bench.BUILTINS))})")
    params = model.get("params", {}) or {}
    if not isinstance(params, dict):
        raise ConfigError("model.params: expected an object")
    ctor = bench.BUILTINS[name]
    try:
        if name == "toggle_switch":
            extra = {k: params[k] for k in ("tf",) if k in params}
            tp = {k: v for k, v in params.items() if k not in extra}
            allowed = {f.name for f in dataclasses.fields(bench.ToggleParams)}
            _strict(tp, allowed, "model.params")
            return ctor(bench.ToggleParams(**tp), **extra)
        allowed = set(inspect.signature(ctor).parameters) - {"x0"}
        _strict(params, allowed, "model.params")
        return ctor(**params)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"model.params: {exc}") from exc


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    """Parse and validate a JSON run config.

    Syntax errors report line and column; semantic errors name the
    offending key.  Relative output directories resolve against ``base_dir``.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    _strict(raw, {"model", "x0", "solver", "output"}, "config", ("model",))
    model = raw["model"]
    if not isinstance(model, dict):
        raise ConfigError("model: expected an object")
    has_builtin = "builtin" in model
    has_inline = "species" in model or "reactions" in model
    if has_builtin == has_inline:
        raise ConfigError("model: give exactly one of 'builtin' or an inline 'species'/'reactions' network")

    defaults = {}
    if has_builtin:
        bm = _builtin(model)
        network, x0 = bm.network, bm.x0
        defaults = dataclasses.asdict(bm.config)
    else:
        network = network_from_dict(model)
        x0 = None
    if "x0" in raw:
        x0 = raw["x0"]
        if (
            not isinstance(x0, list)
            or len(x0) != network.n_species
            or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in x0)
        ):
            raise ConfigError(f"x0: expected {network.n_species} nonnegative integers")
    if x0 is None:
        raise ConfigError("x0: required for inline models")

    solver_raw = raw.get("solver", {}) or {}
    _strict(solver_raw, _SOLVER_FIELDS, "solver")
    merged = {**defaults, **solver_raw}
    if "alpha" in solver_raw and "eps_time" not in solver_raw:
        merged["eps_time"] = None
    if "alpha" in solver_raw and "boundary_tol" not in solver_raw:
        merged["boundary_tol"] = None
    try:
        solver = SolverConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from exc

    out = raw.get("output", {}) or {}
    _strict(out, {"dir", "snapshots", "error_trace", "state_size", "ssa"}, "output")
    ssa = None
    if out.get("ssa"):
        s = out["ssa"]
        if s is True:
            s = {}
        _strict(s, {"n", "seed"}, "output.ssa")
        ssa = SSAOptions(**s)
        if ssa.n < 2:
            raise ConfigError("output.ssa.n: need at least 2 trajectories")
    out_dir = Path(out.get("dir", "fsp_out"))
    if base_dir is not None and not out_dir.is_absolute():
        out_dir = base_dir / out_dir
    for key in ("snapshots", "error_trace", "state_size"):
        if not isinstance(out.get(key, True), bool):
            raise ConfigError(f"output.{key}: expected true or false")
    return RunConfig(
        network=network,
        x0=tuple(int(v) for v in x0),
        solver=solver,
        model=model,
        out_dir=out_dir,
        snapshots=out.get("snapshots", True),
        error_trace=out.get("error_trace", True),
        state_size=out.get("state_size", True),
        ssa=ssa,
        raw=raw,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=None)


def model_to_config(model: bench.BenchmarkModel) -> dict:
    """Full run config with the model's network written inline."""
    return {
        "model": network_to_dict(model.network),
        "x0": list(model.x0),
        "solver": dataclasses.asdict(model.config),
    }


# --- writers ---------------------------------------------------------------


def _write_snapshots(path, snapshots):
    with open(path, "w") as fh:
        for s in snapshots:
            states = "[" + ",".join("[" + ",".join(str(int(v)) for v in row) + "]" for row in s.states) + "]"
            probs = "[" + ",".join(_num(p) for p in s.probs) + "]"
            fh.write(f'{{"t":{_num(s.t)},"states":{states},"probs":{probs}}}\n')


def _write_table(path, columns, rows):
    with open(path, "w") as fh:
        fh.write("\t".join(columns) + "\n")
        for row in rows:
            fh.write("\t".join(v if isinstance(v, str) else _num(v) for v in row) + "\n")


def _write_outputs(cfg: RunConfig, result):
    d = cfg.out_dir
    if cfg.snapshots:
        _write_snapshots(d / "snapshots.jsonl", result.snapshots)
    if cfg.error_trace:
        _write_table(d / "error_trace.tsv", TRACE_COLUMNS,
                     ([getattr(s, c) for c in TRACE_COLUMNS] for s in result.steps))
    if cfg.state_size:
        _write_table(d / "state_size.tsv", SIZE_COLUMNS,
                     ([getattr(s, c) for c in SIZE_COLUMNS] for s in result.steps))


def _ssa_rows(cfg: RunConfig, result):
    if result.snapshots:
        times = [s.t for s in result.snapshots]
        dists = [(s.states, s.probs) for s in result.snapshots]
    else:
        times = [result.t]
        dists = [(result.space.states, result.p.weights)]
    stats = ensemble_stats(cfg.network, cfg.x0, cfg.solver.tf, times, cfg.ssa.n, cfg.ssa.seed, t0=cfg.solver.t0)
    names = cfg.network.species_names
    rows = []
    for g, (t, (states, probs)) in enumerate(zip(times, dists)):
        for i, name in enumerate(names):
            rows.append([t, name, float(probs @ states[:, i]), stats.mean[g, i], stats.sem[g, i]])
    return rows


def _write_manifest(cfg: RunConfig, status, exit_code, wall, decision, overridden, failure=None, extra=None):
    manifest = {
        "status": status,
        "exit_code": exit_code,
        "config": cfg.echo(),
        "budget": dataclasses.asdict(decision) if decision is not None else None,
        "budget_overridden": overridden,
        "wall_time": wall,
    }
    if failure is not None:
        manifest["failure"] = failure
    if extra:
        manifest.update(extra)
    with open(cfg.out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run(cfg: RunConfig) -> int:
    """Execute one configured run and write its outputs; returns the exit code."""
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    decision = verify_budget(cfg.solver)
    overridden = not decision.passed and cfg.solver.override_budget
    if not decision.passed and not cfg.solver.override_budget:
        msg = f"budget check failed: bound {decision.bound:.6g} > eps_global {decision.eps_global:.6g}"
        log.error(msg)
        _write_manifest(cfg, "refused", EXIT_BUDGET, time.perf_counter() - start, decision, False,
                        {"kind": "budget", "message": msg})
        return EXIT_BUDGET
    try:
        result = solve_adaptive(cfg.network, cfg.x0, cfg.solver)
    except (CapacityError, ExpmvFailure, DegeneratePruneError) as exc:
        code = EXIT_CAPACITY if isinstance(exc, CapacityError) else EXIT_NUMERICAL
        partial = getattr(exc, "partial", None)
        if partial is not None:
            _write_outputs(cfg, partial)
        kind = "capacity" if code == EXIT_CAPACITY else "numerical"
        log.error("%s failure: %s", kind, exc)
        _write_manifest(cfg, "failed", code, time.perf_counter() - start, decision, overridden,
                        {"kind": kind, "message": str(exc),
                         "t_reached": partial.t if partial is not None else None})
        return code
    _write_outputs(cfg, result)
    extra = {
        "n_steps": len(result.steps),
        "final_t": result.t,
        "final_states": len(result.space),
        "cum_bound": result.cum_bound,
        "solve_wall_time": result.wall_time,
    }
    if cfg.ssa is not None:
        _write_table(cfg.out_dir / "ssa_comparison.tsv", SSA_COLUMNS, _ssa_rows(cfg, result))
    _write_manifest(cfg, "ok", EXIT_OK, time.perf_counter() - start, decision, overridden, extra=extra)
    return EXIT_OK


# --- entry point -----------------------------------------------------------


def _run_parser():
    p = argparse.ArgumentParser(
        prog="cmefsp",
        description="Adaptive FSP solver for the chemical master equation. "
        "Use 'cmefsp export-model NAME' to write a builtin model as a config.",
    )
    p.add_argument("--config", required=True, help="JSON run config")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--t-final", type=float, dest="tf")
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=("closed", "absorbing"), help="boundary mode")
    p.add_argument("--snapshot-every", type=int, dest="snapshot_every")
    p.add_argument("--strategy", choices=("quantile", "prune_to_mass", "fixed_threshold", "none"))
    p.add_argument("--override-budget", action="store_true", default=None, dest="override_budget")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _export_parser():
    p = argparse.ArgumentParser(prog="cmefsp export-model", description="Write a builtin model as a run config.")
    p.add_argument("name", choices=sorted(bench.BUILTINS))
    p.add_argument("--params", default="{}", help="JSON object of constructor parameters")
    p.add_argument("-o", "--output", help="file to write (default stdout)")
    return p


def _export(argv) -> int:
    args = _export_parser().parse_args(argv)
    try:
        params = json.loads(args.params)
        bm = _builtin({"builtin": args.name, "params": params})
    except (json.JSONDecodeError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = json.dumps(model_to_config(bm), indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "export-model":
        return _export(argv[1:])
    args = _run_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        text = Path(args.config).read_text()
        raw = json.loads(text) if text.strip() else None
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError:
        raw = None
    try:
        if raw is not None and isinstance(raw, dict):
            # flags override config fields
            solver = dict(raw.get("solver", {}) or {})
            for key in ("alpha", "dt", "tf", "seed", "snapshot_every", "strategy", "override_budget"):
                val = getattr(args, key)
                if val is not None:
                    solver[key] = val
            if args.mode is not None:
                solver["boundary"] = args.mode
            raw["solver"] = solver
            if args.out is not None:
                raw["output"] = {**(raw.get("output", {}) or {}), "dir": args.out}
            text = json.dumps(raw)
        cfg = parse_config(text)
        if args.seed is not None and cfg.ssa is not None:
            cfg.ssa.seed = args.seed
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code = run(cfg)
    if code == EXIT_BUDGET:
        print("refusing to run: error budget check failed (use --override-budget)", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
