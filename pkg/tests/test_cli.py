import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import simpson

from genbvp import cli
from genbvp.config import Expression, RunConfig, build_problem, load_schema, parse_document
from genbvp.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def _run(tmp_path, command, config, *extra):
    out = tmp_path / f"{command}-{len(list(tmp_path.iterdir()))}"
    code = cli.main([command, "--input", str(config), "--out", str(out), *extra])
    return code, out


def _write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return path


def test_solve_dirichlet(tmp_path):
    code, out = _run(tmp_path, "solve", CONFIGS / "dirichlet.json")
    assert code == 0
    report = json.loads((out / "solution.json").read_text())
    assert report["status"] == "ok"
    assert report["characteristic_matrix"]["dim_ker"] == 0
    with open(out / "samples.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "y0_0", "y1_0", "y2_0"]
    t = np.array([float(r[0]) for r in rows[1:]])
    y = np.array([float(r[1]) for r in rows[1:]])
    assert np.allclose(y, t, atol=1e-10)


def test_analyze_then_solve_sine(tmp_path):
    code, out = _run(tmp_path, "analyze", CONFIGS / "sine_dirichlet.json")
    assert code == 0
    report = json.loads((out / "analysis.json").read_text())
    assert (report["dim_ker"], report["dim_coker"]) == (1, 1)
    assert report["well_posed"] is False
    code, out = _run(tmp_path, "solve", CONFIGS / "sine_dirichlet.json")
    assert code == 2
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["error"] == "SingularProblem" and diag["dim_ker"] == 1


def test_malformed_json_reports_line(tmp_path):
    path = _write(tmp_path, '{\n  "version": 1,\n  "problem": {\n}')
    code, out = _run(tmp_path, "solve", path)
    assert code == 3
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["where"].endswith(":4:2")


def test_schema_violation_reports_field(tmp_path):
    doc = json.loads((CONFIGS / "dirichlet.json").read_text())
    doc["problem"]["p"] = 0.5
    code, out = _run(tmp_path, "solve", _write(tmp_path, doc))
    assert code == 3
    assert json.loads((out / "diagnostics.json").read_text())["where"] == "/problem/p"


def test_bad_expression_is_config_error(tmp_path):
    doc = json.loads((CONFIGS / "dirichlet.json").read_text())
    doc["problem"]["rhs"] = "__import__('os').getcwd()"
    code, _ = _run(tmp_path, "solve", _write(tmp_path, doc))
    assert code == 3


def test_missing_sections(tmp_path):
    assert _run(tmp_path, "sweep", CONFIGS / "dirichlet.json")[0] == 3
    assert _run(tmp_path, "approximate", CONFIGS / "dirichlet.json")[0] == 3
    assert _run(tmp_path, "solve", tmp_path / "absent.json")[0] == 3


def test_negative_tolerance_rejected(tmp_path):
    assert cli.main(["solve", "--input", str(CONFIGS / "dirichlet.json"), "--out", str(tmp_path), "--tol", "-1"]) == 3


def test_numerical_failure_exit_code(tmp_path):
    doc = json.loads((CONFIGS / "dirichlet.json").read_text())
    doc["problem"]["r"] = 1
    doc["problem"]["coefficients"] = [-2000]
    doc["problem"]["boundary"] = {"kind": "canonical", "t0": 0, "alphas": [1], "phi": 0}
    doc["problem"]["target"] = [1]
    code, out = _run(tmp_path, "solve", _write(tmp_path, doc))
    assert code == 4
    assert json.loads((out / "diagnostics.json").read_text())["error"] == "IntegrationFailure"


def test_sweep_outputs(tmp_path):
    code, out = _run(tmp_path, "sweep", CONFIGS / "sweep_scalar.json")
    assert code == 0
    with open(out / "sweep.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["label", "distance", "d_tilde", "solution_error", "ratio"]
    assert len(rows) == 5
    verdict = json.loads((out / "sweep.json").read_text())["verdict"]
    assert set(verdict) == {"condition0", "limitI", "limitII", "a", "b", "c", "d", "strong", "uniform"}
    assert (out / "sweep.csv").read_bytes().count(b"\r\n") == 5


@pytest.mark.parametrize("command, config", [("sweep", "sweep_scalar.json"), ("analyze", "dirichlet.json")])
def test_byte_identical_reruns(tmp_path, command, config):
    _, a = _run(tmp_path, command, CONFIGS / config, "--seed", "5")
    _, b = _run(tmp_path, command, CONFIGS / config, "--seed", "5")
    for path in sorted(a.iterdir()):
        assert path.read_bytes() == (b / path.name).read_bytes()


def test_csv_round_trip_norm(tmp_path):
    doc = json.loads((CONFIGS / "sturm_liouville.json").read_text())
    del doc["plan"]
    code, out = _run(tmp_path, "solve", _write(tmp_path, doc), "--grid", "4001")
    assert code == 0
    report = json.loads((out / "solution.json").read_text())
    data = np.loadtxt(out / "samples.csv", delimiter=",", skiprows=1)
    t = data[:, 0]
    # W_2^{n+r} norm: sum of L_2 norms of y, y', y'', y'''
    norm = sum(math.sqrt(simpson(data[:, s] ** 2, x=t)) for s in range(1, data.shape[1]))
    assert norm == pytest.approx(report["sobolev_norm"], abs=1e-6)


def test_floats_use_seventeen_digits():
    assert cli.fmt(0.1) == "0.10000000000000001"
    assert cli.dumps({"b": 1.0, "a": [math.inf]}) == '{\n  "a": ["inf"],\n  "b": 1\n}\n'


def test_docs_schema_is_the_shipped_schema():
    assert json.loads((ROOT / "docs" / "schema" / "config.v1.json").read_text()) == load_schema()


def test_example_configs_validate():
    for path in sorted(CONFIGS.glob("*.json")):
        doc = parse_document(path.read_text(), str(path))
        mu0 = doc["family"]["mu0"] if "family" in doc else None
        build_problem(doc["problem"], mu0)


def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig("plot", Path("a"), Path("b"))
    with pytest.raises(ConfigError):
        RunConfig("solve", Path("a"), Path("b"), grid_points=1)


# -- expressions ------------------------------------------------------------


@pytest.mark.parametrize(
    "source, expected",
    [
        ("t^2 + 1", lambda t: t**2 + 1),
        ("exp(-t) * sin(pi * t)", lambda t: np.exp(-t) * np.sin(np.pi * t)),
        ("heaviside(t - 0.5)", lambda t: (t >= 0.5).astype(float)),
        ("3", lambda t: 3 + 0 * t),
    ],
)
def test_expression_values(source, expected):
    t = np.linspace(0.1, 0.9, 9)
    assert np.allclose(Expression(source)(t), expected(t))


@pytest.mark.parametrize("source", ["open('x')", "t.real", "lambda: 1", "t if t else 1", "x + 1", "sin(t"])
def test_expression_rejects(source):
    with pytest.raises(ConfigError):
        Expression(source)


def test_expression_mu():
    e = Expression("mu * t")
    assert e.uses_mu() and not Expression("t").uses_mu()
    assert e(np.array([2.0]), mu=0.5)[0] == 1.0
    with pytest.raises(ConfigError):
        e(np.array([1.0]))


def test_target_expressions():
    spec = {"interval": [0, 1], "r": 1, "boundary": {"kind": "canonical", "alphas": [1]}, "target": ["pi / 4"]}
    assert build_problem(spec).target[0] == pytest.approx(math.pi / 4)
    spec["target"] = ["1 + mu"]
    assert build_problem(spec, 0.5).target[0] == 1.5
