"""Scenario-driven command line: ``gsqg run|verify|resume``.

Heavy numerical modules are imported lazily so that ``--threads`` can cap
the BLAS/OpenMP pools before numpy starts.
"""

from __future__ import annotations

import argparse
import copy
import inspect
import json
import math
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import GsqgError, ScenarioError

ENV_OUT_DIR = "GSQG_OUT_DIR"
MODES = ("simulate", "splash_lab", "verify")
DOMAINS = ("plane", "half-plane")
_NAME_RE = re.compile(r"^[A-Za-z0-9_.-]+$")

STEPPER_DEFAULTS = {"dt": 1e-2, "scheme": "rk4", "redistribute_every": 10, "cfl_guard": 0.5}
QUAD_DEFAULTS = {"panels": 64, "singular_split_radius": 0.0, "tolerance": 1e-10, "upsample": 4}
OUTPUT_DEFAULTS = {"interval": 0.1, "directory": None}
DIAG_DEFAULTS = {"tangent_rmax": 0.5, "norm_cap_factor": 10.0}
SWEEP_DEFAULTS = {
    "kind": "J2_m", "values": None, "start": 1e-6, "stop": 1e-2, "num": 9,
    "R": 0.5, "A": 1.0, "a_over_m": 10.0, "m": 1e-6, "B": 1.0, "curvature": 1.0,
}
SWEEP_KINDS = ("J2_m", "J1_a", "simple")
TOP_KEYS = {"name", "mode", "domain", "alpha", "gamma", "patches", "stepper", "quadrature", "delta_override",
            "outputs", "horizon", "sweep", "diagnostics"}


@dataclass
class OutputPlan:
    interval: float = 0.1
    directory: str | None = None


@dataclass
class Scenario:
    name: str
    alpha: float
    mode: str = "simulate"
    domain: str = "plane"
    gamma: float = 0.5
    patches: list[dict] = field(default_factory=list)
    stepper: Any = None
    quadrature: Any = None
    delta_override: float | None = None
    outputs: OutputPlan = field(default_factory=OutputPlan)
    horizon: float = 1.0
    sweep: dict | None = None
    diagnostics: dict = field(default_factory=lambda: dict(DIAG_DEFAULTS))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "mode": self.mode,
            "domain": self.domain,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "patches": copy.deepcopy(self.patches),
            "stepper": {k: getattr(self.stepper, k) for k in STEPPER_DEFAULTS},
            "quadrature": {k: getattr(self.quadrature, k) for k in QUAD_DEFAULTS},
            "delta_override": self.delta_override,
            "outputs": {"interval": self.outputs.interval, "directory": self.outputs.directory},
            "horizon": self.horizon,
            "sweep": copy.deepcopy(self.sweep),
            "diagnostics": dict(self.diagnostics),
        }


def _number(value, path: str, *, positive: bool = False, integer: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError("expected a number", path)
    if integer and int(value) != value:
        raise ScenarioError("expected an integer", path)
    if not math.isfinite(value):
        raise ScenarioError("must be finite", path)
    if positive and value <= 0:
        raise ScenarioError("must be positive", path)
    return int(value) if integer else float(value)


def _section(doc: dict, key: str, defaults: dict) -> dict:
    raw = doc.get(key) or {}
    if not isinstance(raw, dict):
        raise ScenarioError("expected an object", key)
    unknown = sorted(set(raw) - set(defaults))
    if unknown:
        raise ScenarioError(f"unknown key(s) {unknown}", f"{key}.{unknown[0]}")
    out = dict(defaults)
    out.update(raw)
    return out


def _check_patch(spec, path: str) -> dict:
    from . import shapes

    if not isinstance(spec, dict):
        raise ScenarioError("expected an object", path)
    spec = copy.deepcopy(spec)
    if "strength" in spec:
        spec["strength"] = _number(spec["strength"], f"{path}.strength")
        if spec["strength"] == 0.0:
            raise ScenarioError("patch strength must be nonzero", f"{path}.strength")
    else:
        spec["strength"] = 1.0
    if "file" in spec:
        extra = set(spec) - {"file", "strength"}
        if extra:
            raise ScenarioError(f"unknown key(s) {sorted(extra)}", f"{path}.{sorted(extra)[0]}")
        try:
            data = json.loads(Path(spec["file"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"cannot read node file: {exc}", f"{path}.file") from exc
        return {"nodes_xy": data["nodes"], "strength": spec["strength"]}
    if "nodes_xy" in spec:
        extra = set(spec) - {"nodes_xy", "strength"}
        if extra:
            raise ScenarioError(f"unknown key(s) {sorted(extra)}", f"{path}.{sorted(extra)[0]}")
        return spec
    if "shape" not in spec:
        raise ScenarioError("missing required key 'shape' (or 'file'/'nodes_xy')", f"{path}.shape")
    builder = shapes.BUILTINS.get(spec["shape"])
    if builder is None:
        raise ScenarioError(f"unknown shape {spec['shape']!r}; choose from {sorted(shapes.BUILTINS)}",
                            f"{path}.shape")
    allowed = set(inspect.signature(builder).parameters) | {"shape", "strength"}
    extra = sorted(set(spec) - allowed)
    if extra:
        raise ScenarioError(f"unknown key(s) {extra}", f"{path}.{extra[0]}")
    return spec


def parse_scenario(text: str | dict) -> Scenario:
    """Validate a JSON scenario document and fill defaults."""
    from .dynamics import StepperConfig
    from .velocity import QuadratureSpec

    if isinstance(text, dict):
        doc = copy.deepcopy(text)
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    unknown = sorted(set(doc) - TOP_KEYS)
    if unknown:
        raise ScenarioError(f"unknown key(s) {unknown}", unknown[0])
    for key in ("name", "alpha"):
        if key not in doc:
            raise ScenarioError("missing required key", key)
    name = doc["name"]
    if not isinstance(name, str) or not _NAME_RE.match(name):
        raise ScenarioError("name must be non-empty and use only letters, digits, '_', '-', '.'", "name")
    mode = doc.get("mode", "simulate")
    if mode not in MODES:
        raise ScenarioError(f"must be one of {list(MODES)}", "mode")
    domain = doc.get("domain", "plane")
    if domain not in DOMAINS:
        raise ScenarioError(f"must be one of {list(DOMAINS)}", "domain")
    alpha = _number(doc["alpha"], "alpha")
    if not (0.0 < alpha < 1.0):
        raise ScenarioError("alpha must lie in (0, 1)", "alpha")
    if mode in ("simulate", "verify") and alpha >= 0.5:
        raise ScenarioError(
            "simulate/verify need alpha < 1/2: for alpha >= 1/2 the boundary velocity is infinite and only its "
            "principal-value normal component exists (use splash_lab mode)", "alpha")
    if "gamma" in doc:
        gamma = _number(doc["gamma"], "gamma")
    else:
        gamma = min(1.0, 2.0 * alpha / (1.0 - 2.0 * alpha)) if alpha < 0.5 else 1.0
    if not (0.0 < gamma <= 1.0):
        raise ScenarioError("gamma must lie in (0, 1]", "gamma")
    patches = doc.get("patches", [])
    if not isinstance(patches, list):
        raise ScenarioError("expected a list", "patches")
    patches = [_check_patch(p, f"patches[{k}]") for k, p in enumerate(patches)]

    st = _section(doc, "stepper", STEPPER_DEFAULTS)
    try:
        stepper = StepperConfig(
            dt=_number(st["dt"], "stepper.dt", positive=True), scheme=st["scheme"],
            redistribute_every=_number(st["redistribute_every"], "stepper.redistribute_every", integer=True),
            cfl_guard=_number(st["cfl_guard"], "stepper.cfl_guard"),
        )
    except ScenarioError:
        raise
    except GsqgError as exc:
        raise ScenarioError(str(exc), "stepper") from exc
    qd = _section(doc, "quadrature", QUAD_DEFAULTS)
    try:
        quad = QuadratureSpec(
            panels=_number(qd["panels"], "quadrature.panels", integer=True),
            singular_split_radius=_number(qd["singular_split_radius"], "quadrature.singular_split_radius"),
            tolerance=_number(qd["tolerance"], "quadrature.tolerance"),
            upsample=_number(qd["upsample"], "quadrature.upsample", integer=True),
        )
    except ScenarioError:
        raise
    except GsqgError as exc:
        raise ScenarioError(str(exc), "quadrature") from exc
    delta = doc.get("delta_override")
    if delta is not None:
        delta = _number(delta, "delta_override", positive=True)
        if delta >= math.pi:
            raise ScenarioError("delta_override must be below pi", "delta_override")
    out = _section(doc, "outputs", OUTPUT_DEFAULTS)
    outputs = OutputPlan(_number(out["interval"], "outputs.interval", positive=True), out["directory"])
    if outputs.directory is not None and not isinstance(outputs.directory, str):
        raise ScenarioError("expected a string or null", "outputs.directory")
    horizon = _number(doc.get("horizon", 1.0), "horizon")
    if horizon < 0.0:
        raise ScenarioError("horizon must be non-negative", "horizon")
    sweep = None
    if doc.get("sweep") is not None:
        sweep = _section(doc, "sweep", SWEEP_DEFAULTS)
        if sweep["kind"] not in SWEEP_KINDS:
            raise ScenarioError(f"must be one of {list(SWEEP_KINDS)}", "sweep.kind")
        if sweep["values"] is not None:
            if not isinstance(sweep["values"], list) or not sweep["values"]:
                raise ScenarioError("expected a non-empty list", "sweep.values")
            sweep["values"] = [_number(v, f"sweep.values[{k}]", positive=True) for k, v in enumerate(sweep["values"])]
    if mode == "splash_lab" and sweep is None:
        raise ScenarioError("splash_lab mode needs a sweep section", "sweep")
    diagnostics = _section(doc, "diagnostics", DIAG_DEFAULTS)
    for key in DIAG_DEFAULTS:
        diagnostics[key] = _number(diagnostics[key], f"diagnostics.{key}", positive=True)
    return Scenario(name=name, alpha=alpha, mode=mode, domain=domain, gamma=gamma, patches=patches,
                    stepper=stepper, quadrature=quad, delta_override=delta, outputs=outputs, horizon=horizon,
                    sweep=sweep, diagnostics=diagnostics)


def serialize_scenario(scenario: Scenario) -> str:
    return json.dumps(scenario.to_dict(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

@dataclass
class ExitReport:
    exit_code: int
    halt_reason: str = ""
    verdict: str = ""
    last_metrics: dict | None = None
    outputs: list[str] = field(default_factory=list)
    message: str = ""

    def to_dict(self) -> dict:
        return {"exit_code": self.exit_code, "halt_reason": self.halt_reason, "verdict": self.verdict,
                "last_metrics": self.last_metrics, "outputs": self.outputs, "message": self.message}


def default_out_dir(scenario: Scenario, override: str | None = None) -> Path:
    if override:
        return Path(override)
    if scenario.outputs.directory:
        return Path(scenario.outputs.directory)
    return Path(os.environ.get(ENV_OUT_DIR, "gsqg_out")) / scenario.name


def _write(path: Path, text: str, written: list[str]) -> None:
    path.write_text(text)
    written.append(path.name)


def _simulate(scenario: Scenario, out: Path, resume: dict | None) -> ExitReport:
    from .diagnostics import regularity_report
    from .dynamics import run

    written: list[str] = []
    series = run(scenario, out_dir=out, resume=resume)
    written.append("checkpoint.json")
    _write(out / "metrics.csv", series.to_csv(), written)
    report = regularity_report(series, scenario.alpha, cap_factor=scenario.diagnostics["norm_cap_factor"])
    _write(out / "report.txt", "\n".join(report.lines()) + "\n", written)
    last = None
    if series.records:
        r = series.records[-1]
        last = {"time": r.time, "m": r.m, "arc_chord": r.arc_chord, "c1gamma_norm": r.c1gamma.c1_norm,
                "approach_rate": r.approach_rate}
    code = 5 if series.halt_reason.startswith("splash") else 0
    rep = ExitReport(code, series.halt_reason, report.verdict, last, written)
    _write(out / "summary.json", json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n", written)
    return rep


def _splash_lab(scenario: Scenario, out: Path) -> ExitReport:
    from .splash_lab import run_sweep, sweep_csv

    written: list[str] = []
    rows, fit = run_sweep(scenario.sweep, scenario.alpha, scenario.gamma, scenario.quadrature)
    _write(out / "sweep.csv", sweep_csv(rows), written)
    _write(out / "slope.json", json.dumps(fit, indent=2, sort_keys=True) + "\n", written)
    return ExitReport(0, "sweep complete", "", None, written)


def _verify(scenario: Scenario, out: Path) -> ExitReport:
    from .dynamics import build_family
    from .verify import invariant_suite

    written: list[str] = []
    family = build_family(scenario)
    results = invariant_suite(family, scenario.quadrature)
    ok = all(r["passed"] for r in results)
    _write(out / "verify.json", json.dumps(results, indent=2, sort_keys=True) + "\n", written)
    return ExitReport(0 if ok else 4, "verify", "all invariants hold" if ok else "invariant failure", None, written)


def dispatch(scenario: Scenario, *, out_dir: str | Path | None = None, resume: dict | None = None) -> ExitReport:
    """Run the pipeline for ``scenario``; module errors become exit codes (2 parse, 3 geometry, 4 accuracy, 5 splash)."""
    out = default_out_dir(scenario, str(out_dir) if out_dir is not None else None)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if scenario.mode == "simulate":
            return _simulate(scenario, out, resume)
        if scenario.mode == "splash_lab":
            return _splash_lab(scenario, out)
        return _verify(scenario, out)
    except GsqgError as exc:
        step = getattr(exc, "step_index", None)
        msg = f"{type(exc).__name__}: {exc}" + (f" (step {step})" if step is not None else "")
        return ExitReport(exc.exit_code, "error", "", None, [], msg)


def checkpoint_roundtrip(state, series=None, scenario=None):
    """Serialize then parse a state; the result equals the input bit for bit."""
    from .checkpoint import dumps_checkpoint, loads_checkpoint

    return loads_checkpoint(dumps_checkpoint(state, series, scenario))["state"]


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="gsqg", description="g-SQG patch simulator and splash diagnostics")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run a scenario"), ("verify", "run the invariant suite on a scenario"),
                           ("resume", "continue a run from its checkpoint")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("path")
        p.add_argument("--out", default=None, help=f"output directory (default ${ENV_OUT_DIR}/<name>)")
        p.add_argument("--threads", type=int, default=None, help="cap BLAS/OpenMP threads")
        p.add_argument("--tolerance", type=float, default=None, help="override quadrature.tolerance")
    args = parser.parse_args(argv)
    _set_threads(args.threads)
    try:
        resume = None
        if args.command == "resume":
            from .checkpoint import load_checkpoint

            resume = load_checkpoint(args.path)
            if resume["scenario"] is None:
                raise ScenarioError("checkpoint carries no scenario")
            doc = resume["scenario"]
        else:
            try:
                doc = json.loads(Path(args.path).read_text())
            except OSError as exc:
                raise ScenarioError(f"cannot read scenario: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise ScenarioError(f"malformed JSON: {exc}") from exc
        if args.tolerance is not None:
            doc = dict(doc)
            doc["quadrature"] = dict(doc.get("quadrature") or {}, tolerance=args.tolerance)
        if args.command == "verify" and isinstance(doc, dict):
            doc = dict(doc, mode="verify")
        scenario = parse_scenario(doc)
        report = dispatch(scenario, out_dir=args.out, resume=resume)
    except GsqgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    line = f"{scenario.name}: exit {report.exit_code}"
    if report.halt_reason:
        line += f", {report.halt_reason}"
    if report.verdict:
        line += f", verdict: {report.verdict}"
    print(line)
    if report.message:
        print(report.message, file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
