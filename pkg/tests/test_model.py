import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from contextual_ro.errors import InputError
from contextual_ro.lp import LinearProgram, solve_lp
from contextual_ro.model import (
    ContextQuery,
    FirstStage,
    RawRecourse,
    ScenarioSet,
    TwoStageProblem,
    UncertaintyKind,
    load_problem,
    problem_from_dict,
    problem_to_dict,
    save_problem,
    to_standard_recourse,
    validate_problem,
)


def toy_problem(**over):
    sc = ScenarioSet(x=[[0.0], [1.0]], h=[[0.0], [10.0]])
    kw = dict(
        c=[1.0],
        Z=FirstStage(lb=[0.0], ub=[10.0]),
        q=[1.0, 0.0],
        W=[[1.0, -1.0]],
        scenarios=sc,
        kind=UncertaintyKind.RHS_H_ONLY,
        T=[[1.0]],
    )
    kw.update(over)
    return TwoStageProblem(**kw)


def test_valid_toy_has_no_diagnostics():
    assert validate_problem(toy_problem()) == []


def test_h_length_mismatch_single_diagnostic():
    p = toy_problem(scenarios=ScenarioSet(x=[[0.0]], h=[[1.0, 2.0, 3.0]]), W=[[1.0, -1.0], [0.0, 1.0]], T=[[1.0], [0.0]])
    diags = validate_problem(p)
    assert len(diags) == 1
    assert diags[0].invariant == "dimension"
    assert diags[0].index == ("scenarios.h",)


def test_empty_first_stage_diagnostic():
    p = toy_problem(Z=FirstStage(A_in=[[1.0]], b_in=[-1.0], lb=[0.0]))
    diags = validate_problem(p)
    assert [d.invariant for d in diags] == ["first_stage_feasible"]
    assert "first stage infeasible" in diags[0].message


def test_mixed_uncertainty_rejected():
    sc = ScenarioSet(x=[[0.0]], h=[[1.0]], q=[[1.0, 0.0]])
    diags = validate_problem(toy_problem(scenarios=sc))
    assert any(d.invariant == "uncertainty_kind" for d in diags)


def test_validate_is_idempotent_and_pure():
    p = toy_problem()
    before = problem_to_dict(p)
    assert validate_problem(p) == validate_problem(p)
    assert problem_to_dict(p) == before


def test_arrays_are_read_only():
    p = toy_problem()
    with pytest.raises(ValueError):
        p.W[0, 0] = 5.0


def test_context_query_rules():
    assert ContextQuery([0.5]).dual_norm == "one"
    assert ContextQuery([0.5], norm="one").dual_norm == "inf"
    with pytest.raises(InputError):
        ContextQuery([0.5], gamma=-1.0)
    with pytest.raises(InputError):
        ContextQuery([0.5], gamma=1.0, delta=0.1)
    with pytest.raises(InputError):
        ContextQuery([0.5], norm="two")


def test_slack_for_upper_row():
    raw = RawRecourse(q=[1.0], W=[[1.0]], senses=["<="])
    std = to_standard_recourse(raw)
    np.testing.assert_array_equal(std.W, [[1.0, 1.0]])
    np.testing.assert_array_equal(std.q, [1.0, 0.0])
    np.testing.assert_array_equal(std.map_h([5.0]), [5.0])


def test_free_bounded_variable_split():
    # -r <= d <= r with r = 2, d free otherwise
    raw = RawRecourse(q=[1.0], W=np.zeros((0, 1)), senses=[], lb=[-2.0], ub=[2.0])
    std = to_standard_recourse(raw)
    assert std.W.shape == (2, 4)  # d+, d-, two slacks
    np.testing.assert_array_equal(std.W[:, :2], [[-1.0, 1.0], [1.0, -1.0]])
    np.testing.assert_array_equal(std.h_const, [2.0, 2.0])
    sol = solve_lp(LinearProgram(std.q, std.W, std.map_h(np.zeros(0))))
    assert sol.objective == pytest.approx(-2.0, abs=1e-9)
    assert std.recover(sol.x) == pytest.approx([-2.0])


def _raw_lp(raw, h):
    rows_eq = [i for i, s in enumerate(raw.senses) if s == "=="]
    rows_le = [i for i, s in enumerate(raw.senses) if s == "<="]
    rows_ge = [i for i, s in enumerate(raw.senses) if s == ">="]
    W = np.asarray(raw.W)
    A_in = np.vstack([W[rows_le], -W[rows_ge]])
    b_in = np.concatenate([h[rows_le], -h[rows_ge]])
    return LinearProgram(raw.q, W[rows_eq], h[rows_eq], A_in, b_in, raw.lb, raw.ub)


def run_roundtrip(seed, n_rhs=20):
    rng = np.random.default_rng(seed)
    m, n = 2, int(rng.integers(2, 6))
    W = rng.integers(-3, 4, size=(m, n)).astype(float)
    senses = [["<=", "==", ">="][k] for k in rng.integers(0, 3, size=m)]
    lb = rng.choice([0.0, -np.inf, -2.0], size=n)
    ub = rng.choice([np.inf, 3.0], size=n)
    q = rng.integers(-2, 5, size=n).astype(float)
    raw = RawRecourse(q, W, senses, lb, ub)
    std = to_standard_recourse(raw)
    for _ in range(n_rhs):
        h = rng.integers(-5, 6, size=m).astype(float)
        a = solve_lp(_raw_lp(raw, h))
        b = solve_lp(LinearProgram(std.q, std.W, std.map_h(h)))
        assert a.status == b.status
        if a.optimal:
            assert b.objective == pytest.approx(a.objective, abs=1e-8)
            u = std.recover(b.x)
            assert raw.q @ u == pytest.approx(a.objective, abs=1e-8)
            assert np.all(u >= raw.lb - 1e-8) and np.all(u <= raw.ub + 1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_standardisation_preserves_value(seed):
    run_roundtrip(seed)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_standardisation_property(seed):
    run_roundtrip(seed, n_rhs=3)


def test_json_roundtrip(tmp_path):
    p = toy_problem()
    path = tmp_path / "p.json"
    save_problem(p, path)
    back = load_problem(path)
    assert problem_to_dict(back) == problem_to_dict(p)
    doc = json.loads(path.read_text())
    assert doc["dimensions"] == {"d_z": 1, "d_u": 2, "d_h": 1, "d_x": 1, "S": 2}


def test_json_rejects_nan(tmp_path):
    path = tmp_path / "bad.json"
    doc = problem_to_dict(toy_problem())
    text = json.dumps(doc).replace('"c": [1.0]', '"c": [NaN]')
    path.write_text(text)
    with pytest.raises(InputError, match="non-finite"):
        load_problem(path)


def test_json_dimension_disagreement():
    doc = problem_to_dict(toy_problem())
    doc["dimensions"]["S"] = 3
    with pytest.raises(InputError, match="dimensions.S"):
        problem_from_dict(doc)
