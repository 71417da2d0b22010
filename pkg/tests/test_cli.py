from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from pepsgadget.cli import (
    EXIT_CONFIG,
    EXIT_FAIL,
    EXIT_OK,
    EXIT_RESOURCE,
    SWEEP_HEADER,
    ConfigError,
    load_config,
    main,
)
from pepsgadget.double_semion import build_corrupted_model
from pepsgadget.lattice import HoneycombSpec
from pepsgadget.peps import dump_maps_json

TORUS_1X1 = '{"kind": "honeycomb", "rows": 1, "cols": 1, "boundary": "torus"}'


def _report(out: Path) -> dict:
    return json.loads((out / "report.json").read_text())


@pytest.mark.parametrize("command", ["verify", "sweep", "compare"])
def test_trivial_commands_pass(tmp_path, command):
    out = tmp_path / command
    assert main([command, "--out", str(out)]) == EXIT_OK
    doc = _report(out)
    assert doc["command"] == command
    assert doc["passed"] is True
    assert doc["checks"] and all(c["pass"] for c in doc["checks"])
    assert {"package", "python", "numpy", "scipy"} <= set(doc["versions"])
    assert doc["scenario"]["model"] == "trivial"
    assert command in json.loads((out / "timings.json").read_text())


def test_report_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["verify", "--out", str(a), "--seed", "5"]) == EXIT_OK
    assert main(["verify", "--out", str(b), "--seed", "5"]) == EXIT_OK
    da, db = _report(a), _report(b)
    da["scenario"].pop("out"), db["scenario"].pop("out")
    assert json.dumps(da, sort_keys=True) == json.dumps(db, sort_keys=True)


def test_random_model_seeded(tmp_path):
    out = tmp_path / "r"
    # random maps with d < D**2 are generically not quasi-injective
    assert main(["verify", "--set", "model=random", "--seed", "3", "--out", str(out)]) == EXIT_FAIL
    doc = _report(out)
    assert doc["scenario"]["seed"] == 3
    checks = {c["name"]: c for c in doc["checks"]}
    assert checks["generator anti-hermiticity"]["pass"]
    assert checks["global off-diagonal residual slope"]["pass"]
    assert not checks["quasi-injectivity failures"]["pass"]


def test_sweep_csv(tmp_path):
    out = tmp_path / "s"
    assert main(["sweep", "--out", str(out)]) == EXIT_OK
    with open(out / "sweep.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == SWEEP_HEADER
    assert len(rows) == 1 + 3
    eps = [float(r[0]) for r in rows[1:]]
    assert eps == sorted(eps, reverse=True)


def test_config_file_and_override(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"model": "trivial", "epsilons": [0.05, 0.01], "n": 1}))
    cfg = load_config(str(cfg_path), ["n=3", "lattice.sites=5"])
    assert cfg.epsilons == [0.05, 0.01]
    assert cfg.n == 3
    assert cfg.lattice == {"kind": "ring", "sites": 5, "D": 2}


@pytest.mark.parametrize(
    "overrides, path",
    [
        (["bogus=1"], "bogus"),
        (["epsilons=[0.5, 1.5]"], "epsilons[1]"),
        (["epsilons=[]"], "epsilons"),
        (["n=-1"], "n"),
        (["model=nonexistent"], "model"),
        (["lattice.kind=square"], "lattice.kind"),
        (["lattice.sites=2"], "lattice.sites"),
        (["reference=both"], "reference"),
        (["j_max=1"], "j_max"),
        (["tolerances.distance=-1"], "tolerances.distance"),
        (["noequals"], "--set"),
    ],
)
def test_config_errors_name_field(overrides, path):
    with pytest.raises(ConfigError) as exc:
        load_config(None, overrides)
    assert exc.value.path == path


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["verify", "--set", "epsilons=[2]", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "epsilons[0]" in capsys.readouterr().err


def test_invalid_json_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["verify", "--config", str(p), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_unknown_command():
    assert main(["explode"]) == EXIT_CONFIG


def test_ds_on_ring_rejected(tmp_path):
    rc = main(["verify", "--set", "model=double-semion", "--set", 'lattice={"kind": "ring", "sites": 4}', "--out", str(tmp_path)])
    assert rc == EXIT_CONFIG


def test_corrupted_maps_fail(tmp_path):
    dsm = build_corrupted_model(HoneycombSpec(1, 1, "torus"))
    maps_path = tmp_path / "corrupted.json"
    maps_path.write_text(dump_maps_json(dict(zip(dsm.model.graph.sites, dsm.model.maps))))
    out = tmp_path / "out"
    rc = main(["verify", "--set", f"model={maps_path}", "--set", f"lattice={TORUS_1X1}", "--set", "epsilons=[0.04, 0.02]", "--out", str(out)])
    assert rc == EXIT_FAIL
    doc = _report(out)
    assert doc["passed"] is False
    assert any(c["name"] == "quasi-injectivity failures" and not c["pass"] for c in doc["checks"])


def test_resource_overrun(tmp_path):
    out = tmp_path / "big"
    assert main(["compare", "--set", "model=double-semion", "--out", str(out)]) == EXIT_RESOURCE
    doc = _report(out)
    assert doc["resource_overrun"] is True
    assert doc["passed"] is False
