import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triquad.benchmarks import REGISTRY, rows_to_csv, run_suite
from triquad.cli import EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_OK, main
from triquad.config import OUTPUT_DIR_ENV, Numerics, RunConfig, parse_config, serialize_config
from triquad.errors import ConfigError
from triquad.model import ProblemSpec, TerminalPart
from triquad.pathdep import PathFunctional

MINIMAL = """
problem:
  n: 1
  d: 1
  horizon: 1.0
  lipschitz_C: 0.0
  terminal: [{kind: constant, value: 0.0}]
"""

TRIANGULAR = """
problem:
  n: 2
  d: 1
  horizon: 0.25
  lipschitz_C: 1.0
  terminal:
    - {kind: clamped_affine, bound: 3.0}
    - {kind: constant, value: 0.0}
  k: [{family: z_block_quadratic, weights: [1.0]}]
numerics: {paths: 20000, steps: 20, seed: 3, batches: 10}
"""


def _write(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_minimal_config_fills_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.numerics == Numerics()
    assert cfg.problem.alpha == 0.0 and cfg.output.format == "json"


@pytest.mark.parametrize("text, path", [
    (MINIMAL.replace("lipschitz_C: 0.0", "lipschitz_C: 0.0\n  alpha: 1.0"), "problem.alpha"),
    (MINIMAL + "  k: [{family: zero}]\n", "problem.k"),
    (MINIMAL + "numerics: {paths: 1}\n", "numerics.paths"),
    (MINIMAL + "numerics: {colour: red}\n", "numerics.colour"),
    (MINIMAL + "extra: 1\n", "extra"),
    (MINIMAL.replace("horizon: 1.0", "horizon: soon"), "problem.horizon"),
    (MINIMAL + "output: {format: xml}\n", "output.format"),
])
def test_invalid_configs_name_the_key(text, path):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert path in [p for p, _ in info.value.errors]


def test_alpha_message():
    with pytest.raises(ConfigError, match=r"alpha must lie in \[-1, 1\)"):
        parse_config(MINIMAL.replace("lipschitz_C: 0.0", "lipschitz_C: 0.0\n  alpha: 1.0"))


@given(n=st.integers(1, 3), C=st.floats(0, 5), alpha=st.floats(-1, 0.99), T=st.floats(0.01, 2),
       seed=st.integers(0, 2 ** 31), paths=st.integers(2, 10 ** 6), fmt=st.sampled_from(["json", "csv", "text"]),
       eps=st.floats(0, 1))
@settings(max_examples=40, deadline=None)
def test_config_round_trip(n, C, alpha, T, seed, paths, fmt, eps):
    term = [TerminalPart("tanh", {"scale": 1.5, "slope": [0.5]})] + [TerminalPart("constant", {"value": 0.1})] * (n - 1)
    spec = ProblemSpec(n, 1, T, C, alpha, term,
                       h_parts=[{"family": "bounded_sine", "amplitude": 0.1, "frequency": 2.0, "row": [1.0] * n}] * n,
                       k_parts=[{"family": "z_block_quadratic", "weights": [0.5] * (i - 1)} for i in range(2, n + 1)])
    cfg = RunConfig(spec, Numerics(paths=paths, seed=seed, ridge=1e-6), functionals=(PathFunctional("running_max", eps),) * n)
    cfg = cfg.with_overrides(fmt=fmt)
    assert parse_config(serialize_config(cfg)) == cfg


def test_output_dir_override(tmp_path, monkeypatch):
    cfg = parse_config(MINIMAL + "output: {path: res.json}\n")
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))
    assert cfg.output.resolved_path() == tmp_path / "res.json"


def test_constants_command_values(tmp_path, capsys):
    code = main(["constants", "--config", _write(tmp_path, MINIMAL)])
    out = json.loads(capsys.readouterr().out)
    assert code == EXIT_OK
    c = out["payload"]["constants"]
    assert (c["A"], c["eta"], c["lambda"]) == (2.0, 0.0625, 6.0)
    assert c["B"] == pytest.approx(1.41421356237, abs=1e-10)
    assert "wall_seconds" in out["timing"]


def test_validate_negative_k_exits_2(tmp_path, capsys):
    text = TRIANGULAR.replace("{family: z_block_quadratic, weights: [1.0]}", "{family: constant, value: -1.0}")
    assert main(["validate", "--config", _write(tmp_path, text)]) == EXIT_HYPOTHESIS
    captured = capsys.readouterr()
    assert json.loads(captured.err)["error"]["type"] == "HypothesisError"
    assert json.loads(captured.out)["payload"]["failures"] == ["A3"]


def test_solve_local_triangular(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["solve-local", "--config", _write(tmp_path, TRIANGULAR), "--out", str(out)]) == EXIT_OK
    payload = json.loads(out.read_text())["payload"]
    y0, se = np.array(payload["Y0"]), np.array(payload["Y0_stderr"])
    assert np.all(np.abs(y0 - [0.125, -0.25]) <= 3 * se + 1e-3)
    assert payload["bound_checks"]["tolerance"] == "3 standard errors"


def test_usage_and_config_errors_exit_4(tmp_path, capsys):
    assert main(["solve-local"]) == EXIT_CONFIG
    assert main(["frobnicate"]) == EXIT_CONFIG
    assert main(["constants", "--config", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG
    assert main(["constants", "--config", _write(tmp_path, MINIMAL), "--paths", "1"]) == EXIT_CONFIG
    assert main(["solve-delay", "--config", _write(tmp_path, MINIMAL)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "problem.delay" in err


def test_text_and_csv_formats(tmp_path, capsys):
    path = _write(tmp_path, MINIMAL)
    main(["constants", "--config", path, "--format", "text"])
    assert "eta" in capsys.readouterr().out
    main(["constants", "--config", path, "--format", "csv"])
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "key,value" and "constants.A,2" in lines


def test_benchmark_closed_form_smoke():
    rows = run_suite("closed-form", 1000, 10, 0)
    assert len(rows) == 6 and all(r["error"] == "" for r in rows)
    assert all(r["Y0_error"] < 0.05 for r in rows)
    text = rows_to_csv(rows)
    assert text.endswith("\n") and "\r" not in text
    assert text.splitlines()[0].startswith("case,backend,M,N,Y0,Y0_error")


def test_benchmark_manufactured_zero_control():
    rows = run_suite("manufactured", 500, 5, 0)
    assert all(r["Z_error_proxy"] <= 1e-12 for r in rows)


def test_benchmark_cli_csv(tmp_path, capsys):
    assert main(["benchmark", "--suite", "manufactured", "--format", "csv", "--paths", "200", "--steps", "4"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 1 + 2 * len([c for c in REGISTRY.values() if c.suite == "manufactured"])


def test_convergence_suite_doubles_sizes():
    rows = run_suite("convergence", 500, 5, 0, doublings=2)
    assert [(r["M"], r["N"]) for r in rows] == [(500, 5), (1000, 10), (2000, 20)]
