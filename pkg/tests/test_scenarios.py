import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slantgeom import numkit as nk
from slantgeom.scenarios import cli
from slantgeom.scenarios.config import ScenarioError, apply_grid_override, load_scenario, parse_scenario
from slantgeom.scenarios.expr import (
    BinOp,
    Call,
    ExprSyntaxError,
    Neg,
    Num,
    Pow,
    Sym,
    UnknownSymbolError,
    evaluate,
    parse_expr,
    to_text,
)
from slantgeom.scenarios.report import emit_report
from slantgeom.scenarios.runner import builtin_path, bundled_scenarios, load_builtin, load_bundled, run_builtin, run_scenario

HEADER = "# slantgeom-scenario v1\n"

LINEAR = HEADER + """
name = "small"
[ambient]
dim = 8
[structures.J]
preset = "standard"
[immersions.F1]
domain = 4
components = ["x1 + x2", "x1 - x2", "x3 + x4", "x3 - x4", "x1", "x2", "x3", "x4"]
[grids.line]
axes = [[-1, 1, 3], [0, 0, 1], [0, 0, 1], [0, 0, 1]]
[[checks]]
name = "angle"
kind = "slant_scan"
immersion = "F1"
structure = "J"
grid = "line"
expect_cos = "{expect}"
"""


# -- expressions ------------------------------------------------------------------------------


def test_parse_examples():
    e = parse_expr("2*abs(x1 + x2)/sqrt((4*x1^2 + 7)*(4*x2^2 + 7))")
    assert evaluate(e, [1.0, 1.0]) == pytest.approx(4 / 11)
    assert parse_expr("-x1^2") == Neg(Pow(Sym(1), 2))
    assert evaluate(parse_expr("x1^-2"), [2.0]) == 0.25
    assert evaluate(parse_expr("arccos(sec(0))"), []) == 0.0


def test_syntax_error_offset():
    with pytest.raises(ExprSyntaxError) as exc:
        parse_expr("2*(x1")
    assert exc.value.offset == 5
    assert "')'" in str(exc.value)
    with pytest.raises(ExprSyntaxError):
        parse_expr("")
    with pytest.raises(ExprSyntaxError):
        parse_expr("x1 $ 2")


def test_unknown_symbol_lists_valid_names():
    with pytest.raises(UnknownSymbolError) as exc:
        parse_expr("x1 + x3", nparams=2)
    assert exc.value.valid[:3] == ["x1", "x2", "abs"]
    with pytest.raises(UnknownSymbolError) as exc:
        parse_expr("tan(x1)")
    assert "sin" in exc.value.valid


def test_division_by_zero_is_domain_error():
    with pytest.raises(nk.EvaluationDomainError):
        evaluate(parse_expr("1/(x1 - x1)"), [0.5])


leaf = st.one_of(st.integers(0, 50).map(lambda v: Num(float(v))),
                 st.floats(0.01, 100, allow_nan=False).map(Num),
                 st.integers(1, 3).map(Sym))
exprs = st.recursive(
    leaf,
    lambda kids: st.one_of(
        st.builds(Neg, kids),
        st.builds(Pow, kids, st.integers(-3, 4)),
        st.builds(Call, st.sampled_from(["sin", "cos", "sqrt", "abs", "sec", "arccos"]), kids),
        st.builds(BinOp, st.sampled_from(["+", "-", "*", "/"]), kids, kids),
    ),
    max_leaves=12,
)


@settings(max_examples=200, deadline=None)
@given(exprs)
def test_print_parse_round_trip(e):
    text = to_text(e)
    back = parse_expr(text)
    assert back == e
    assert to_text(back) == text


def _float_eval(e, x):
    try:
        v = evaluate(e, x)
    except (nk.NumericalError, ZeroDivisionError, OverflowError, ValueError):
        return None
    return v if math.isfinite(v) and abs(v) < 1e6 else None


@settings(max_examples=100, deadline=None)
@given(exprs, st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_expression_jets_against_fd(e, x):
    h = 1e-6
    x = np.array(x)
    vals = [_float_eval(e, x + s * h * np.eye(3)[i]) for i in range(3) for s in (1, -1)]
    base = _float_eval(e, x)
    if base is None or any(v is None for v in vals):
        return
    try:
        val, jac, _ = nk.jet_eval(lambda u: [evaluate(e, u)], x)
    except nk.NumericalError:
        return
    assert val[0] == pytest.approx(base, rel=1e-12, abs=1e-12)
    for i in range(3):
        fwd = (vals[2 * i] - base) / h
        bwd = (base - vals[2 * i + 1]) / h
        # skip stencils that straddle a kink (abs) or a steep region
        if abs(fwd - bwd) > 1e-3 * (1 + abs(fwd)) or abs(fwd) > 1e3:
            continue
        assert jac[0][i] == pytest.approx(0.5 * (fwd + bwd), rel=1e-4, abs=1e-4)


# -- loading ------------------------------------------------------------------------------------


def test_bad_normalization_rejected():
    text = LINEAR.format(expect="1/3") + '[coefficients]\nbad = ["0.8", "0.7"]\n'
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text)
    assert exc.value.key == "coefficients.bad"
    assert "1.13" in str(exc.value)


def test_undefined_immersion_rejected():
    text = LINEAR.format(expect="1/3").replace('immersion = "F1"', 'immersion = "G"')
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text)
    assert exc.value.key.startswith("checks[0]")
    assert "'G'" in str(exc.value)


def test_header_and_syntax_errors():
    with pytest.raises(ScenarioError, match="header"):
        parse_scenario(LINEAR.format(expect="1/3")[len(HEADER):])
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(LINEAR.format(expect="2*(x1"))
    assert "offset 5" in str(exc.value)
    with pytest.raises(ScenarioError):
        load_scenario("/nonexistent/file.scn")


def test_grid_override():
    cfg = parse_scenario(LINEAR.format(expect="1/3"))
    apply_grid_override(cfg, "line.x1=-2:2:5")
    assert len(cfg.grid("line")) == 5
    with pytest.raises(ScenarioError):
        apply_grid_override(cfg, "x9=0:1:2")
    with pytest.raises(ScenarioError):
        apply_grid_override(cfg, "garbage")


# -- running ------------------------------------------------------------------------------------


@pytest.mark.parametrize("name", ["e1", "e2", "e3", "e4"])
def test_builtin_examples_pass(name):
    rep = run_builtin(name)
    failed = [c.name for c in rep.checks if not c.passed]
    assert not failed


@pytest.mark.parametrize("name", bundled_scenarios())
def test_bundled_scenarios_pass(name):
    rep = run_scenario(load_bundled(name))
    failed = [(c.name, c.note) for c in rep.checks if not c.passed]
    assert not failed


def test_empty_scenario_report():
    cfg = parse_scenario(HEADER + "[ambient]\ndim = 2\n")
    rep = run_scenario(cfg)
    doc = json.loads(emit_report(rep, "machine"))
    assert doc["checks"] == [] and doc["passed"] is True
    assert doc["schema_version"] == 1
    assert b"(no checks)" in emit_report(rep, "human")


def test_machine_report_content():
    doc = json.loads(emit_report(run_builtin("e3"), "machine"))
    assert set(doc["tolerances"]) == {"STRUCT_TOL", "SPECTRAL_TOL", "FD_TOL"}
    tr = next(c for c in doc["checks"] if c["kind"] == "transitivity")
    assert tr["points"] and all(p["cos_theta_tilde"] == pytest.approx(2 / 9, abs=1e-12) for p in tr["points"])


def test_failing_expectation_reported():
    rep = run_scenario(parse_scenario(LINEAR.format(expect="1/3 + 1e-6")))
    assert not rep.passed


def test_builtin_lookup():
    assert builtin_path("e3").name == "example3.scn"
    assert load_builtin("e1").name == "e1"
    with pytest.raises(ScenarioError):
        load_builtin("e9")


# -- command line --------------------------------------------------------------------------------


def _write(tmp_path, expect):
    p = tmp_path / "s.scn"
    p.write_text(LINEAR.format(expect=expect))
    return str(p)


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["run", _write(tmp_path, "1/3")]) == 0
    assert "overall: PASS" in capsys.readouterr().out
    assert cli.main(["run", _write(tmp_path, "1/3 + 1e-6")]) == 1
    assert cli.main(["run", str(tmp_path / "missing.scn")]) == 2
    assert "configuration error" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        cli.main(["example", "e7"])
    assert exc.value.code == 2


def test_cli_tolerance_override(tmp_path):
    path = _write(tmp_path, "1/3 + 1e-8")
    assert cli.main(["run", path]) == 1
    assert cli.main(["run", path, "--tol", "angle=1e-6"]) == 0
    assert cli.main(["run", path, "--tol", "angle=abc"]) == 2
    assert cli.main(["run", path, "--tol", "SPECTRAL_TOL=-1"]) == 2


def test_cli_grid_override_and_out(tmp_path):
    out = tmp_path / "r.json"
    path = _write(tmp_path, "1/3")
    assert cli.main(["run", path, "--grid", "x1=-3:3:7", "--format", "machine", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert len(doc["checks"][0]["points"]) == 7
    assert cli.main(["run", path, "--grid", "x1=oops"]) == 2


def test_cli_check_structure(capsys):
    assert cli.main(["check-structure", str(builtin_path("e1")), "--format", "machine"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert {c["kind"] for c in doc["checks"]} <= {"almost_hermitian", "anticommute"}
    assert doc["checks"]


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "slantgeom", "example", "e4", "--format", "machine"],
                       capture_output=True)
    assert r.returncode == 0
    assert json.loads(r.stdout)["scenario"] == "e4"


@pytest.mark.parametrize("name", ["e1", "e2", "e3", "e4"])
def test_machine_output_independent_of_workers(name):
    one = emit_report(run_builtin(name, workers=1), "machine")
    many = emit_report(run_builtin(name, workers=4), "machine")
    assert one == many
