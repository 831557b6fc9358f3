import json
import warnings

import numpy as np
import pytest

from gsqg import checkpoint
from gsqg.cli import (
    QUAD_DEFAULTS,
    STEPPER_DEFAULTS,
    checkpoint_roundtrip,
    dispatch,
    main,
    parse_scenario,
    serialize_scenario,
)
from gsqg.dynamics import SimulationState, build_family, run
from gsqg.errors import IntegrityError, MigrationError, ScenarioError

DISK = {"name": "disk", "alpha": 0.2, "patches": [{"shape": "circle", "r": 1.0, "nodes": 128}],
        "stepper": {"dt": 0.02}, "outputs": {"interval": 0.04}, "horizon": 0.16}

ELLIPSE = {"name": "ell", "alpha": 0.2, "gamma": 0.5,
           "patches": [{"shape": "ellipse", "a": 1.0, "b": 0.7, "nodes": 128}],
           "stepper": {"dt": 0.02}, "outputs": {"interval": 0.04}, "horizon": 0.2}


def test_parse_fills_defaults():
    sc = parse_scenario({"name": "x", "alpha": 0.2})
    assert sc.mode == "simulate" and sc.domain == "plane"
    assert sc.gamma == pytest.approx(2 / 3)
    assert {k: getattr(sc.stepper, k) for k in STEPPER_DEFAULTS} == STEPPER_DEFAULTS
    assert {k: getattr(sc.quadrature, k) for k in QUAD_DEFAULTS} == QUAD_DEFAULTS
    assert parse_scenario({"name": "x", "alpha": 0.4}).gamma == 1.0


def test_serialize_round_trip():
    sc = parse_scenario(DISK)
    again = parse_scenario(serialize_scenario(sc))
    assert again.to_dict() == sc.to_dict()


@pytest.mark.parametrize("doc,path", [
    ({"name": "x", "alpha": 0.6}, "alpha"),
    ({"name": "x", "alpha": 0.2, "colour": 1}, "colour"),
    ({"alpha": 0.2}, "name"),
    ({"name": "a b", "alpha": 0.2}, "name"),
    ({"name": "x", "alpha": 0.2, "patches": [{"shape": "blob"}]}, "patches[0].shape"),
    ({"name": "x", "alpha": 0.2, "patches": [{"shape": "circle", "radius": 1}]}, "patches[0].radius"),
    ({"name": "x", "alpha": 0.2, "stepper": {"dt": -1}}, "stepper.dt"),
    ({"name": "x", "alpha": 0.2, "quadrature": {"panels": 10}}, "quadrature"),
    ({"name": "x", "alpha": 0.2, "mode": "splash_lab"}, "sweep"),
])
def test_parse_errors_name_the_key(doc, path):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(doc)
    assert info.value.path == path


def test_splash_lab_accepts_large_alpha():
    sc = parse_scenario({"name": "s", "alpha": 0.6, "mode": "splash_lab", "sweep": {"kind": "J2_m"}})
    assert sc.sweep["num"] == 9


def test_malformed_json():
    with pytest.raises(ScenarioError):
        parse_scenario("{not json")


def test_dispatch_disk(tmp_path):
    rep = dispatch(parse_scenario(DISK), out_dir=tmp_path)
    assert rep.exit_code == 0 and rep.halt_reason == "horizon"
    assert rep.verdict.startswith("consistent")
    for name in ("metrics.csv", "report.txt", "summary.json", "checkpoint.json"):
        assert (tmp_path / name).exists()
    rows = (tmp_path / "metrics.csv").read_text().splitlines()
    assert len(rows) == 1 + 5
    assert json.loads((tmp_path / "summary.json").read_text())["exit_code"] == 0


def test_dispatch_splash_lab(tmp_path):
    doc = {"name": "lab", "alpha": 0.2, "gamma": 0.5, "mode": "splash_lab",
           "sweep": {"kind": "J2_m", "start": 1e-6, "stop": 1e-3, "num": 4}}
    rep = dispatch(parse_scenario(doc), out_dir=tmp_path)
    assert rep.exit_code == 0
    slope = json.loads((tmp_path / "slope.json").read_text())
    assert set(slope) == {"slope", "intercept", "r2", "window"}
    assert len((tmp_path / "sweep.csv").read_text().splitlines()) == 5


def test_dispatch_verify(tmp_path):
    doc = dict(ELLIPSE, mode="verify")
    rep = dispatch(parse_scenario(doc), out_dir=tmp_path)
    results = json.loads((tmp_path / "verify.json").read_text())
    assert rep.exit_code == 0, [r for r in results if not r["passed"]]


def test_dispatch_maps_geometry_errors(tmp_path):
    doc = dict(DISK, patches=[{"shape": "circle", "r": 1.0, "nodes": 64},
                              {"shape": "circle", "r": 1.0, "center": [0.5, 0.0], "nodes": 64}])
    rep = dispatch(parse_scenario(doc), out_dir=tmp_path)
    assert rep.exit_code == 3 and "GeometryError" in rep.message


def test_main_run_and_exit_codes(tmp_path, capsys):
    path = tmp_path / "disk.json"
    path.write_text(json.dumps(DISK))
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 0
    assert "disk: exit 0" in capsys.readouterr().out
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "x", "alpha": 0.7}))
    assert main(["run", str(bad)]) == 2
    assert main(["run", str(tmp_path / "missing.json")]) == 2


def _state_and_series():
    sc = parse_scenario(ELLIPSE)
    series = run(sc)
    state = SimulationState.initial(build_family(sc))
    return sc, state, series


def test_checkpoint_bit_exact():
    sc, state, series = _state_and_series()
    back = checkpoint_roundtrip(state, series, sc)
    for a, b in zip(state.family.curves, back.family.curves):
        assert np.array_equal(a.nodes, b.nodes)
    assert back.areas0 == state.areas0
    loaded = checkpoint.loads_checkpoint(checkpoint.dumps_checkpoint(state, series, sc))
    assert loaded["series"].records == series.records


def test_truncated_checkpoint(tmp_path):
    sc, state, series = _state_and_series()
    text = checkpoint.dumps_checkpoint(state, series, sc)
    with pytest.raises(IntegrityError):
        checkpoint.loads_checkpoint(text[: len(text) // 2])
    tampered = text.replace('"step_index":0', '"step_index":1', 1)
    with pytest.raises(IntegrityError):
        checkpoint.loads_checkpoint(tampered)
    with pytest.raises(IntegrityError):
        checkpoint.load_checkpoint(tmp_path / "nope.json")


def test_schema_version_mismatch():
    sc, state, _ = _state_and_series()
    payload = json.loads(checkpoint.dumps_checkpoint(state, None, sc))["payload"]
    payload["schema_version"] = 99
    body = checkpoint.canonical_json(payload)
    import hashlib

    text = checkpoint.canonical_json({"payload": payload, "sha256": hashlib.sha256(body.encode()).hexdigest()})
    with pytest.raises(MigrationError):
        checkpoint.loads_checkpoint(text)


def test_hash_mismatch_warns():
    sc, state, _ = _state_and_series()
    text = checkpoint.dumps_checkpoint(state, None, sc)
    other = parse_scenario(dict(ELLIPSE, horizon=0.4))
    with pytest.warns(UserWarning):
        out = checkpoint.loads_checkpoint(text, other)
    assert out["hash_mismatch"]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert not checkpoint.loads_checkpoint(text, sc)["hash_mismatch"]


class Interrupt(Exception):
    pass


def test_resume_matches_uninterrupted(tmp_path):
    sc = parse_scenario(ELLIPSE)
    full = tmp_path / "full"
    dispatch(sc, out_dir=full)

    part = tmp_path / "part"
    part.mkdir()

    def stop(state, series):
        if len(series) == 3:
            raise Interrupt

    with pytest.raises(Interrupt):
        run(sc, out_dir=part, on_output=stop)
    saved = checkpoint.load_checkpoint(part / "checkpoint.json", sc)
    assert len(saved["series"]) == 3
    dispatch(sc, out_dir=part, resume=saved)
    for name in ("metrics.csv", "report.txt", "summary.json", "checkpoint.json"):
        assert (full / name).read_bytes() == (part / name).read_bytes(), name


def test_main_resume(tmp_path):
    sc = parse_scenario(ELLIPSE)
    out = tmp_path / "o"
    dispatch(sc, out_dir=out)
    before = (out / "metrics.csv").read_bytes()
    assert main(["resume", str(out / "checkpoint.json"), "--out", str(out)]) == 0
    assert (out / "metrics.csv").read_bytes() == before


def test_identical_runs_are_byte_identical(tmp_path):
    sc = parse_scenario(ELLIPSE)
    dispatch(sc, out_dir=tmp_path / "a")
    dispatch(sc, out_dir=tmp_path / "b")
    for name in ("metrics.csv", "report.txt", "summary.json", "checkpoint.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
