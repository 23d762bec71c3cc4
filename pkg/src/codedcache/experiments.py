"""Config-driven experiment runner producing plot-ready CSV.

A run config is a YAML document::

    name: fig5
    seed: 1
    experiments:
      - name: afot_vs_n
        kind: AfotSweep
        channel: {alpha: 4, tau_db: -10}
        coding: {M: 20}
        popularity: {F: 100, gamma: 0.6}
        sweep: {n: [1, 2, 4, 8, 16]}

Each experiment sweeps exactly one of ``M``, ``gamma``, ``tau_db`` or ``n``;
the swept value overrides the same key in its block. Thresholds are given in
dB here and converted to linear scale before anything else sees them.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from . import __version__
from . import analytics as an
from . import kernels
from . import optimizer as opt
from . import simulator as sim
from .errors import ConfigError, DomainError, InstanceTooLargeError

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SWEEP_AXES = ("M", "gamma", "tau_db", "n")

_COMMON = ["sweep_param", "sweep_value"]
COLUMNS = {
    "DiffTable": _COMMON + ["n", "m", "t", "label", "delta", "fot"],
    "FotCurve": _COMMON + ["n", "m", "x", "fot", "fot_continuous"],
    "ValidateQk": _COMMON + ["tau", "k", "q_analytic", "q_sim", "stderr", "conditioned"],
    "ValidateFot": _COMMON + ["tau", "n", "m", "fot_analytic", "fot_sim", "stderr"],
    "AfotSweep": _COMMON + ["method", "afot", "updates", "m", "error"],
    "AerSweep": _COMMON + ["method", "aer", "updates", "m", "error"],
    "AlgCompare": _COMMON + ["method", "afot", "updates", "m", "error"],
}
KINDS = tuple(COLUMNS)

# parameters each kind reads (beyond the sweep axis)
_NEEDS = {
    "DiffTable": ("alpha", "tau_db", "n"),
    "FotCurve": ("alpha", "tau_db", "n"),
    "ValidateQk": ("alpha", "tau_db"),
    "ValidateFot": ("alpha", "tau_db", "n"),
    "AfotSweep": ("alpha", "tau_db", "n", "M", "F", "gamma"),
    "AerSweep": ("alpha", "n", "M", "F", "gamma"),
    "AlgCompare": ("alpha", "tau_db", "n", "M", "F", "gamma"),
}
_BLOCK_KEYS = {
    "channel": ("alpha", "tau_db"),
    "coding": ("n", "M"),
    "popularity": ("F", "gamma"),
    "simulation": ("lambda_b", "region_side", "trials", "max_layers", "chunk_size"),
}
_INT_KEYS = {"n", "M", "F", "trials", "max_layers", "chunk_size"}


def convert_db(tau_db: float) -> float:
    """Linear SIR threshold from a value in dB."""
    return 10.0 ** (tau_db / 10.0)


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.12g}"
    if isinstance(v, (tuple, list)):
        return " ".join(str(int(x)) for x in v)
    return str(v)


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    kind: str
    sweep_param: str
    sweep_values: tuple
    params: dict[str, Any] = field(default_factory=dict)
    simulation: dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    output: str | None = None

    def point(self, value) -> dict[str, Any]:
        out = dict(self.params)
        out[self.sweep_param] = value
        return out

    @property
    def csv_name(self) -> str:
        return self.output or f"{self.name}.csv"


def _check_number(path: str, key: str, value):
    if key in _INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
    elif isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    bad = (
        (key in _INT_KEYS and value < 1)
        or (key == "alpha" and not value > 2)
        or (key == "gamma" and value < 0)
        or (key in ("lambda_b", "region_side") and not value > 0)
    )
    if bad:
        raise ConfigError(path, f"value {value!r} is out of range")
    return float(value) if key not in _INT_KEYS else int(value)


def parse_experiment(raw: dict, index: int, seed: int) -> ExperimentSpec:
    where = f"experiments[{index}]"
    if not isinstance(raw, dict):
        raise ConfigError(where, "each experiment must be a mapping")
    name = raw.get("name")
    if not isinstance(name, str) or not name:
        raise ConfigError(f"{where}.name", "a non-empty string is required")
    where = f"experiments[{name}]"
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"{where}.kind", f"must be one of {', '.join(KINDS)}; got {kind!r}")

    unknown = set(raw) - {"name", "kind", "sweep", "output", "seed", *_BLOCK_KEYS}
    if unknown:
        raise ConfigError(f"{where}.{sorted(unknown)[0]}", "unknown key")

    params: dict[str, Any] = {}
    simulation: dict[str, Any] = {}
    for block, keys in _BLOCK_KEYS.items():
        body = raw.get(block, {}) or {}
        if not isinstance(body, dict):
            raise ConfigError(f"{where}.{block}", "must be a mapping")
        for key, value in body.items():
            if key not in keys:
                raise ConfigError(f"{where}.{block}.{key}", "unknown key")
            parsed = _check_number(f"{where}.{block}.{key}", key, value)
            (simulation if block == "simulation" else params)[key] = parsed
    params.setdefault("alpha", 4.0)

    sweep = raw.get("sweep")
    if not isinstance(sweep, dict) or len(sweep) != 1:
        raise ConfigError(f"{where}.sweep", f"exactly one sweep axis out of {SWEEP_AXES} is required")
    (axis, values), = sweep.items()
    if axis not in SWEEP_AXES:
        raise ConfigError(f"{where}.sweep", f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not isinstance(values, list) or not values:
        raise ConfigError(f"{where}.sweep.{axis}", "a non-empty list of values is required")
    values = tuple(_check_number(f"{where}.sweep.{axis}[{i}]", axis, v) for i, v in enumerate(values))

    missing = [k for k in _NEEDS[kind] if k not in params and k != axis]
    if missing:
        raise ConfigError(f"{where}.{_block_of(missing[0])}.{missing[0]}", f"required by kind {kind}")

    exp_seed = raw.get("seed", seed)
    if isinstance(exp_seed, bool) or not isinstance(exp_seed, int) or exp_seed < 0:
        raise ConfigError(f"{where}.seed", "must be a non-negative integer")
    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError(f"{where}.output", "must be a string")
    spec = ExperimentSpec(name, kind, axis, values, params, simulation, exp_seed, output)
    _check_points(spec, where)
    return spec


def _block_of(key: str) -> str:
    return next(b for b, keys in _BLOCK_KEYS.items() if key in keys)


def _check_points(spec: ExperimentSpec, where: str):
    for value in spec.sweep_values:
        pt = spec.point(value)
        if "n" in pt and "M" in pt and "F" in pt and spec.kind in ("AfotSweep", "AlgCompare"):
            if pt["M"] >= pt["F"]:
                raise ConfigError(f"{where}.coding.M", f"M={pt['M']} must be below F={pt['F']}")
        if spec.kind in ("ValidateQk", "ValidateFot"):
            try:
                _sim_config(spec, pt)
            except DomainError as exc:
                raise ConfigError(f"{where}.simulation", str(exc)) from None


def load_config(path, seed_override: int | None = None) -> tuple[str, int, list[ExperimentSpec], dict]:
    """Parse and validate a run config; returns (run name, seed, specs, raw document)."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<document>", f"not valid YAML: {exc}") from None
    return parse_config(doc, seed_override)


def parse_config(doc, seed_override: int | None = None):
    if not isinstance(doc, dict):
        raise ConfigError("<document>", "top level must be a mapping")
    unknown = set(doc) - {"name", "seed", "experiments"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    name = doc.get("name", "run")
    if not isinstance(name, str) or not name:
        raise ConfigError("name", "must be a non-empty string")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    if seed_override is not None:
        seed = seed_override
    raw = doc.get("experiments")
    if not isinstance(raw, list) or not raw:
        raise ConfigError("experiments", "a non-empty list is required")
    specs = [parse_experiment(r, i, seed) for i, r in enumerate(raw)]
    if seed_override is not None:
        specs = [ExperimentSpec(**{**asdict(s), "seed": seed_override}) for s in specs]
    names = [s.csv_name for s in specs]
    dup = next((n for n in names if names.count(n) > 1), None)
    if dup:
        raise ConfigError("experiments", f"two experiments write {dup}")
    return name, seed, specs, doc


# ---------------------------------------------------------------------------
# per-kind row builders


def _channel(pt) -> an.ChannelModel:
    return an.ChannelModel(pt["alpha"], convert_db(pt["tau_db"]))


def _problem(pt, objective="AFOT") -> opt.PlacementProblem:
    pop = an.zipf_popularity(pt["F"], pt["gamma"])
    cfg = an.CodingConfig(pt["n"], pt["M"])
    if objective == "AER":
        return opt.PlacementProblem(cfg, pop, opt.Objective.AER, alpha=pt["alpha"])
    return opt.PlacementProblem(cfg, pop, opt.Objective.AFOT, ch=_channel(pt))


def _sim_config(spec: ExperimentSpec, pt) -> sim.SimConfig:
    s = spec.simulation
    if spec.kind == "ValidateQk":
        depth = s.get("max_layers", 8)
    else:
        depth = pt["n"]
    return sim.SimConfig(
        lambda_b=s.get("lambda_b", 100.0),
        region_side=s.get("region_side", 4.0),
        trials=s.get("trials", 100_000),
        master_seed=spec.seed,
        alpha=pt["alpha"],
        max_layers=depth,
    )


def _rows_diff_table(spec, pt, ctx):
    ch = _channel(pt)
    table = an.difference_table(ch, pt["n"])
    fot = an.fot_table(ch, pt["n"])
    for m in range(1, pt["n"] + 1):
        yield {"n": pt["n"], "m": m, "t": table.region_labels[m][0], "label": table.label(m),
               "delta": table.deltas[m], "fot": float(fot[m])}


def _rows_fot_curve(spec, pt, ctx):
    ch = _channel(pt)
    n = pt["n"]
    fot = an.fot_table(ch, n)
    for m in range(n + 1):
        yield {"n": n, "m": m, "x": m / n, "fot": float(fot[m]),
               "fot_continuous": an.fot_continuous(ch, m / n)}


def _sample(spec, pt, ctx) -> sim.SirSample:
    cfg = _sim_config(spec, pt)
    cache = ctx.setdefault("samples", {})
    if cfg not in cache:
        chunk = spec.simulation.get("chunk_size", 2000)
        cache[cfg] = sim.run_trials(cfg, workers=ctx.get("threads", 1), chunk_size=chunk)
        ctx["redraws"] = ctx.get("redraws", 0) + cache[cfg].redraws
    return cache[cfg]


def _rows_validate_qk(spec, pt, ctx):
    sample = _sample(spec, pt, ctx)
    ch = _channel(pt)
    for est in sample.layer_success(ch.tau, sample.cfg.max_layers):
        if not est.defined:
            ctx["undefined"] = ctx.get("undefined", 0) + 1
        yield {"tau": ch.tau, "k": est.k, "q_analytic": an.layer_success_prob(ch, est.k),
               "q_sim": est.q_hat, "stderr": est.stderr, "conditioned": est.conditioned}


def _rows_validate_fot(spec, pt, ctx):
    sample = _sample(spec, pt, ctx)
    ch = _channel(pt)
    n = pt["n"]
    for m in range(1, n + 1):
        mean, err = sample.fot(ch.tau, n, m)
        yield {"tau": ch.tau, "n": n, "m": m, "fot_analytic": an.fot(ch, n, m),
               "fot_sim": mean, "stderr": err}


def _method_row(method, run, value_key):
    try:
        sol = run()
    except (DomainError, InstanceTooLargeError) as exc:
        return {"method": method, value_key: None, "updates": None, "m": None,
                "error": f"{type(exc).__name__}: {exc}"}
    if isinstance(sol, tuple):
        # continuous relaxation: (allocation, value)
        return {"method": method, value_key: sol[1], "updates": None, "m": None, "error": ""}
    return {"method": method, value_key: sol.objective_value, "updates": sol.updates,
            "m": sol.m, "error": ""}


def _failed_rows(methods, value_key, exc):
    for method in methods:
        yield {"method": method, value_key: None, "updates": None, "m": None,
               "error": f"{type(exc).__name__}: {exc}"}


def _rows_afot(spec, pt, ctx, methods):
    try:
        prob = _problem(pt)
    except DomainError as exc:
        yield from _failed_rows(methods, "afot", exc)
        return
    runners = {
        "greedy": lambda: opt.solve_afot_greedy(prob),
        "rounding": lambda: opt.solve_afot_rounding(prob),
        "continuous_ub": lambda: opt.solve_afot_continuous(prob),
        "exhaustive": lambda: opt.solve_exhaustive(prob),
        "mpc": lambda: opt.mpc_solution(prob),
    }
    for method in methods:
        yield _method_row(method, runners[method], "afot")


def _rows_afot_sweep(spec, pt, ctx):
    yield from _rows_afot(spec, pt, ctx, ("greedy", "rounding", "continuous_ub", "mpc"))


def _rows_alg_compare(spec, pt, ctx):
    yield from _rows_afot(spec, pt, ctx, ("greedy", "rounding", "continuous_ub", "exhaustive", "mpc"))


def _rows_aer_sweep(spec, pt, ctx):
    methods = ("heuristic", "exhaustive", "mpc")
    try:
        prob = _problem(pt, "AER")
    except DomainError as exc:
        yield from _failed_rows(methods, "aer", exc)
        return
    runners = {
        "heuristic": lambda: opt.solve_aer_heuristic(prob),
        "exhaustive": lambda: opt.solve_exhaustive(prob),
        "mpc": lambda: opt.mpc_solution(prob),
    }
    for method in methods:
        yield _method_row(method, runners[method], "aer")


_BUILDERS = {
    "DiffTable": _rows_diff_table,
    "FotCurve": _rows_fot_curve,
    "ValidateQk": _rows_validate_qk,
    "ValidateFot": _rows_validate_fot,
    "AfotSweep": _rows_afot_sweep,
    "AerSweep": _rows_aer_sweep,
    "AlgCompare": _rows_alg_compare,
}


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    columns: list[str]
    rows: list[dict]
    wall_time: float
    diagnostics: dict[str, int]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([format_value(row.get(c)) for c in self.columns])
        return buf.getvalue()


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    """Evaluate every sweep point of ``spec``; rows are deterministic given the seed."""
    ctx: dict[str, Any] = {"threads": threads}
    rows = []
    start = time.perf_counter()
    for value in spec.sweep_values:
        pt = spec.point(value)
        for row in _BUILDERS[spec.kind](spec, pt, ctx):
            rows.append({"sweep_param": spec.sweep_param, "sweep_value": value, **row})
    elapsed = time.perf_counter() - start
    diagnostics = {"redrawn_realizations": ctx.get("redraws", 0),
                   "undefined_estimates": ctx.get("undefined", 0)}
    return ExperimentResult(spec, COLUMNS[spec.kind], rows, elapsed, diagnostics)


def run_config(path, out_dir, seed: int | None = None, threads: int = 1) -> dict:
    """Run every experiment of a config file, writing CSVs and the manifest."""
    name, run_seed, specs, doc = load_config(path, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "run": name,
        "artifact_version": __version__,
        "schema_version": SCHEMA_VERSION,
        "kernel_backend": kernels.BACKEND,
        "seed": run_seed,
        "threads": threads,
        "config": doc,
        "experiments": [],
    }
    for spec in specs:
        log.info("running %s (%s)", spec.name, spec.kind)
        result = run_experiment(spec, threads=threads)
        (out / spec.csv_name).write_text(result.to_csv(), encoding="utf-8")
        manifest["experiments"].append({
            "name": spec.name,
            "kind": spec.kind,
            "csv": spec.csv_name,
            "columns": result.columns,
            "rows": len(result.rows),
            "seed": spec.seed,
            "wall_time_s": round(result.wall_time, 6),
            "diagnostics": result.diagnostics,
        })
    (out / f"manifest.{name}.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8")
    return manifest
