import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest
from referencing import Registry, Resource

from maslov_stab.cli import main

SCHEMA_DIR = Path(__file__).resolve().parents[1] / "src" / "maslov_stab" / "schemas"


def _validate(doc, schema_name):
    resources = []
    for path in SCHEMA_DIR.glob("*.json"):
        schema = json.loads(path.read_text())
        resources.append((path.name, Resource.from_contents(schema)))
    registry = Registry().with_resources(resources)
    schema = json.loads((SCHEMA_DIR / schema_name).read_text())
    validator = jsonschema.Draft7Validator(schema, registry=registry)
    validator.validate(doc)


@pytest.fixture(scope="module")
def configs(tmp_path_factory):
    root = tmp_path_factory.mktemp("configs")
    (root / "scalar_pulse.toml").write_text(
        'name = "scalar-pulse"\n\n[potential]\nkind = "shifted-sech-pulse"\n'
        "\n[potential.params]\ncenter = 0.0\n")
    (root / "pt_c1_m1.toml").write_text(
        'name = "pt(1,1)"\n\n[potential]\nkind = "poeschl-teller"\n'
        "\n[potential.params]\nc = 1.0\nm = 1.0\n")
    (root / "pt_c1_m2.json").write_text(json.dumps({
        "name": "pt(1,2)",
        "potential": {"kind": "poeschl-teller", "params": {"c": 1.0, "m": 2.0}},
    }))
    (root / "negative_limit.toml").write_text(
        '[potential]\nkind = "constant"\n\n[potential.params]\nmatrix = [[-1.0]]\n')
    (root / "unknown_key.toml").write_text(
        'frobnicate = 1\n\n[potential]\nkind = "poeschl-teller"\n'
        "\n[potential.params]\nc = 1.0\nm = 1.0\n")
    (root / "garbage.toml").write_text("[potential\nkind =")
    return root


def test_check_ok(configs, tmp_path, capsys):
    code = main(["check", "--problem", str(configs / "pt_c1_m1.toml"),
                 "--out-dir", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "hypothesis_report.json").read_text())
    _validate(doc, "hypothesis_report.schema.json")
    assert doc["passed"]
    assert "OK" in capsys.readouterr().out


def test_check_negative_limit_exits_2(configs, tmp_path):
    code = main(["check", "--problem", str(configs / "negative_limit.toml"),
                 "--out-dir", str(tmp_path)])
    assert code == 2
    doc = json.loads((tmp_path / "hypothesis_report.json").read_text())
    _validate(doc, "hypothesis_report.schema.json")
    assert not doc["passed"]


def test_unknown_config_key_exits_64(configs, tmp_path):
    assert main(["check", "--problem", str(configs / "unknown_key.toml"),
                 "--out-dir", str(tmp_path)]) == 64


def test_malformed_file_exits_64(configs, tmp_path):
    assert main(["check", "--problem", str(configs / "garbage.toml"),
                 "--out-dir", str(tmp_path)]) == 64


def test_missing_subcommand_is_usage_error():
    assert main([]) == 64


def test_conjugate_points_artifacts(configs, tmp_path):
    code = main(["conjugate-points", "--problem", str(configs / "pt_c1_m2.json"),
                 "--L", "15", "--out-dir", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "conjugate_points.json").read_text())
    _validate(doc, "conjugate_points.schema.json")
    assert doc["count"] == 1
    assert abs(doc["crossings"][0]["s"]) < 1e-6
    trace = np.loadtxt(tmp_path / "trace_lambda0.csv", delimiter=",", skiprows=1)
    assert trace.shape[1] == 4


def test_maslov_rect_summary(configs, tmp_path, capsys):
    code = main(["maslov-rect", "--problem", str(configs / "pt_c1_m1.toml"),
                 "--L", "20", "--out-dir", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "A=(0,0,0,0); identity holds" in out
    doc = json.loads((tmp_path / "maslov_report.json").read_text())
    _validate(doc, "maslov_report.schema.json")
    sweep = np.loadtxt(tmp_path / "lambda_sweep.csv", delimiter=",", skiprows=1)
    assert sweep.shape == (200, 3)
    assert (tmp_path / "trace_lambda0.csv").exists()


def test_morse_summary(configs, tmp_path, capsys):
    code = main(["morse", "--problem", str(configs / "pt_c1_m2.json"),
                 "--out-dir", str(tmp_path), "--jobs", "2"])
    assert code == 0
    assert "Mor(H)=1 (maslov) = 1 (oracle) = 1 (evans)" in capsys.readouterr().out
    doc = json.loads((tmp_path / "morse_report.json").read_text())
    _validate(doc, "morse_report.schema.json")
    spectrum = np.loadtxt(tmp_path / "oracle_spectrum.csv", delimiter=",",
                          skiprows=1, ndmin=2)
    assert spectrum.shape[1] == 5


def test_tabulated_csv_config(tmp_path, capsys):
    import math
    xs = np.linspace(-15.0, 15.0, 1201)
    rows = np.column_stack([xs, [1.0 - 2.0 / math.cosh(x) ** 2 for x in xs]])
    np.savetxt(tmp_path / "well.csv", rows, delimiter=",")
    (tmp_path / "tabulated.toml").write_text(
        'name = "tabulated-well"\n\n[potential]\nkind = "tabulated"\n'
        'csv_path = "well.csv"\n')
    code = main(["check", "--problem", str(tmp_path / "tabulated.toml"),
                 "--out-dir", str(tmp_path / "out")])
    assert code == 0
    assert "OK" in capsys.readouterr().out


def test_evans_artifacts(configs, tmp_path):
    code = main(["evans", "--problem", str(configs / "pt_c1_m1.toml"),
                 "--out-dir", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "evans_report.json").read_text())
    _validate(doc, "evans_report.schema.json")
    assert doc["count"] == 0
    trace = np.loadtxt(tmp_path / "evans_trace.csv", delimiter=",", skiprows=1)
    assert trace.shape[1] == 3


def test_pulse_summary_and_verdict(configs, tmp_path, capsys):
    code = main(["pulse", "--problem", str(configs / "scalar_pulse.toml"),
                 "--out-dir", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "UNSTABLE: conjugate point at s=0.000000 (mult 1); Mor(H)=1" in out
    doc = json.loads((tmp_path / "verdict.json").read_text())
    _validate(doc, "verdict.schema.json")
    assert doc["verdict"] == "unstable"


def test_reports_are_deterministic(configs, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        assert main(["evans", "--problem", str(configs / "pt_c1_m1.toml"),
                     "--seed", "7", "--out-dir", str(out)]) == 0
    assert (out1 / "evans_report.json").read_bytes() == (out2 / "evans_report.json").read_bytes()
    assert (out1 / "evans_trace.csv").read_bytes() == (out2 / "evans_trace.csv").read_bytes()
