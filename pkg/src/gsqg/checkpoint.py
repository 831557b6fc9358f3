"""Bit-exact JSON checkpoints of a simulation state and its metric series."""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from pathlib import Path

from .curve import ClosedCurve
from .diagnostics import MetricsSeries, SplashMetrics
from .errors import IntegrityError, MigrationError
from .velocity import PatchFamily

SCHEMA_VERSION = 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def scenario_hash(doc: dict) -> str:
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()


def _payload(state, series: MetricsSeries | None, scenario_doc: dict | None) -> dict:
    fam = state.family
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario_hash": scenario_hash(scenario_doc) if scenario_doc is not None else None,
        "scenario": scenario_doc,
        "step_index": state.step_index,
        "time": state.time,
        "areas0": list(state.areas0),
        "alpha": fam.alpha,
        "domain": fam.domain,
        "strengths": list(fam.strengths),
        "nodes": [c.nodes.tolist() for c in fam.curves],
        "series": None if series is None else {
            "records": [r.to_dict() for r in series.records],
            "halt_reason": series.halt_reason,
            "alpha": series.alpha,
            "gamma": series.gamma,
            "delta": series.delta,
        },
    }


def dumps_checkpoint(state, series: MetricsSeries | None = None, scenario=None) -> str:
    doc = scenario.to_dict() if hasattr(scenario, "to_dict") else scenario
    payload = _payload(state, series, doc)
    body = canonical_json(payload)
    return canonical_json({"payload": payload, "sha256": hashlib.sha256(body.encode()).hexdigest()})


def save_checkpoint(path, state, series: MetricsSeries | None = None, scenario=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(dumps_checkpoint(state, series, scenario))
    os.replace(tmp, path)
    return path


def loads_checkpoint(text: str, scenario=None) -> dict:
    """Parse a checkpoint; returns ``{"state", "series", "scenario", "hash_mismatch"}``.

    A checkpoint written for a different scenario loads with a warning and
    ``hash_mismatch=True``.
    """
    from .dynamics import SimulationState

    try:
        outer = json.loads(text)
        payload = outer["payload"]
        digest = outer["sha256"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise IntegrityError(f"checkpoint is unreadable or truncated: {exc}") from exc
    if hashlib.sha256(canonical_json(payload).encode()).hexdigest() != digest:
        raise IntegrityError("checkpoint checksum mismatch")
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise MigrationError(f"checkpoint schema_version {version} is not supported (expected {SCHEMA_VERSION})")
    curves = tuple(ClosedCurve(n) for n in payload["nodes"])
    family = PatchFamily(curves, tuple(payload["strengths"]), payload["alpha"], payload["domain"])
    state = SimulationState(family, payload["time"], payload["step_index"], tuple(payload["areas0"]))
    series = None
    if payload["series"] is not None:
        s = payload["series"]
        series = MetricsSeries([SplashMetrics.from_dict(r) for r in s["records"]], s["halt_reason"],
                               s["alpha"], s["gamma"], s["delta"])
    mismatch = False
    if scenario is not None:
        doc = scenario.to_dict() if hasattr(scenario, "to_dict") else scenario
        if payload["scenario_hash"] != scenario_hash(doc):
            mismatch = True
            warnings.warn("checkpoint was written for a different scenario", stacklevel=2)
    return {"state": state, "series": series, "scenario": payload["scenario"], "hash_mismatch": mismatch}


def load_checkpoint(path, scenario=None) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IntegrityError(f"cannot read checkpoint: {exc}") from exc
    return loads_checkpoint(text, scenario)
