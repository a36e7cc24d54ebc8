import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mprgp.linop import dense_operator
from mprgp.problem import (BoxQP, InfeasiblePointError, active_set, cost, gradient,
                           load_problem, problem_from_dict, problem_to_dict, project,
                           split_gradient)


def qp(a, b, l=None, u=None, **kw):
    return BoxQP(dense_operator(np.asarray(a, float)), b, l, u, **kw)


def test_cost_examples():
    assert cost(qp(np.eye(2), [0, 0]), np.zeros(2)) == 0
    assert cost(qp(np.eye(2), [1, 1]), np.ones(2)) == -1
    p = qp(2 * np.eye(2), [2, 2])
    assert cost(p, np.ones(2)) == -2
    assert p.operator.mult_counter == 1
    # brute grid on [-2,2]^2: (1,1) minimizes
    grid = np.linspace(-2, 2, 41)
    vals = [(cost(p, np.array([s, t])), s, t) for s in grid for t in grid]
    assert min(vals)[1:] == pytest.approx((1.0, 1.0))


def test_gradient_examples():
    np.testing.assert_array_equal(gradient(qp(np.eye(2), [0, 0]), np.zeros(2)), [0, 0])
    np.testing.assert_array_equal(gradient(qp(np.eye(2), [1, 2]), np.array([1.0, 2.0])), [0, 0])
    np.testing.assert_array_equal(gradient(qp([[2, 1], [1, 2]], [0, 0]), np.array([1.0, 0])), [2, 1])


def test_dimension_mismatch():
    p = qp(np.eye(2), [0, 0])
    for f in (cost, gradient, project):
        with pytest.raises(ValueError):
            f(p, np.zeros(3))


def test_project_examples():
    p = qp(np.eye(3), np.zeros(3), np.zeros(3), np.ones(3))
    np.testing.assert_array_equal(project(p, np.array([-0.5, 0.5, 2])), [0, 0.5, 1])
    np.testing.assert_array_equal(project(p, np.array([0.2, 0.5, 1.0])), [0.2, 0.5, 1.0])
    p = qp(np.eye(2), np.zeros(2), None, [0, 0])
    np.testing.assert_array_equal(project(p, np.array([-3.0, 4.0])), [-3, 0])


def test_validation():
    with pytest.raises(ValueError):
        qp(np.eye(2), [0, 0], [1, 0], [0, 0])
    with pytest.raises(ValueError):
        qp(np.eye(2), [0, 0], [np.nan, 0])
    with pytest.raises(ValueError):
        qp(np.eye(2), [0, 0], eq_matrix=[[1, 1]])
    with pytest.raises(ValueError):
        qp(np.eye(2), [0, 0], eq_matrix=[[1, 1]], eq_rhs=[1, 2])
    with pytest.raises(ValueError):
        qp(np.eye(2), [0, 0, 0])


def test_split_examples():
    p = qp(np.eye(1), [0], [0], [1])
    s = split_gradient(p, np.array([0.5]), np.array([2.0]), 1.0)
    assert s.free[0] == 2 and s.chopped[0] == 0 and s.reduced_free[0] == 0.5
    s = split_gradient(p, np.array([0.0]), np.array([5.0]), 1.0)
    assert (s.free[0], s.reduced_free[0], s.chopped[0]) == (0, 0, 0)
    s = split_gradient(p, np.array([0.0]), np.array([-5.0]), 1.0)
    assert s.chopped[0] == -5 and s.projected_norm == 5
    with pytest.raises(InfeasiblePointError):
        split_gradient(p, np.array([2.0]), np.array([1.0]), 1.0)


def test_split_interior_and_unbounded():
    g = np.array([1.0, -2.0, 3.0])
    s = split_gradient(qp(np.eye(3), np.zeros(3)), np.zeros(3), g, 0.7)
    np.testing.assert_array_equal(s.free, g)
    np.testing.assert_array_equal(s.reduced_free, g)
    np.testing.assert_array_equal(s.chopped, 0)
    s = split_gradient(qp(np.eye(3), np.zeros(3), -np.ones(3), np.ones(3)), np.zeros(3), g, 10.0)
    np.testing.assert_array_equal(s.projected, g)


def test_equal_bounds_never_released():
    p = qp(np.eye(2), np.zeros(2), [0, 0], [0, 1])
    s = split_gradient(p, np.zeros(2), np.array([-4.0, -4.0]), 1.0)
    assert s.chopped[0] == 0 and s.chopped[1] == -4
    assert s.free[0] == 0


def test_active_set_examples():
    p = qp(np.eye(3), np.zeros(3), np.zeros(3), np.ones(3))
    snap = active_set(p, np.array([0.0, 0.5, 1.0]))
    assert snap.at_lower == {0} and snap.at_upper == {2}
    assert active_set(p, np.full(3, 0.5)).indices == frozenset()
    p = qp(np.eye(1), [0], [0], [0])
    snap = active_set(p, np.zeros(1))
    assert snap.at_lower == {0} and snap.at_upper == {0}


@st.composite
def box_point(draw, max_n=30):
    n = draw(st.integers(1, max_n))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    l = -rng.uniform(0, 2, n)
    u = rng.uniform(0, 2, n)
    kind = rng.integers(0, 5, n)
    l[kind == 1] = -np.inf
    u[kind == 2] = np.inf
    u[kind == 3] = l[kind == 3]
    x = rng.uniform(-3, 3, n)
    x = np.minimum(u, np.maximum(l, x))
    # put some components exactly on a bound
    pick = rng.random(n) < 0.3
    x[pick & np.isfinite(l)] = l[pick & np.isfinite(l)]
    g = rng.standard_normal(n) * rng.choice([0.0, 1.0, 10.0], n)
    p = qp(np.eye(n), np.zeros(n), l, u)
    return p, x, g, float(rng.uniform(0.01, 5))


@settings(max_examples=200, deadline=None)
@given(box_point())
def test_split_invariants(case):
    p, x, g, abar = case
    s = split_gradient(p, x, g, abar)
    assert np.all(s.free * s.chopped == 0)
    assert s.projected_norm ** 2 == pytest.approx(s.free @ s.free + s.chopped @ s.chopped)
    assert np.all(np.abs(s.reduced_free) <= np.abs(s.free))
    assert np.all(s.reduced_free * s.free >= 0)
    assert np.all(s.free[s.active] == 0)
    assert np.all(s.chopped[~s.active] == 0)


@settings(max_examples=200, deadline=None)
@given(box_point())
def test_projection_identity(case):
    p, x, g, abar = case
    s = split_gradient(p, x, g, abar)
    lhs = project(p, x - abar * s.free)
    rhs = x - abar * s.reduced_free
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-14 * max(1.0, np.abs(x).max()))


@settings(max_examples=200, deadline=None)
@given(box_point(), st.integers(0, 2**31))
def test_project_idempotent_nonexpansive(case, seed):
    p, _, _, _ = case
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(-5, 5, p.n), rng.uniform(-5, 5, p.n)
    px = project(p, x)
    assert p.is_feasible(px)
    np.testing.assert_array_equal(project(p, px), px)
    assert np.abs(px - project(p, y)).max() <= np.abs(x - y).max()


def test_json_roundtrip(tmp_path):
    p = qp([[2, 1], [1, 2]], [1, 0], [-np.inf, 0], [1, np.inf],
           eq_matrix=[[1, 1]], eq_rhs=[0.5])
    doc = problem_to_dict(p)
    assert doc["l"] == ["-inf", 0.0] and doc["u"] == [1.0, "inf"]
    path = tmp_path / "p.json"
    path.write_text(json.dumps(doc))
    q = load_problem(path)
    np.testing.assert_array_equal(q.lower, p.lower)
    np.testing.assert_array_equal(q.upper, p.upper)
    np.testing.assert_array_equal(q.eq_matrix, p.eq_matrix)
    np.testing.assert_array_equal(q.operator.to_dense(), p.operator.to_dense())


def test_json_absent_bounds_and_errors():
    p = problem_from_dict({"n": 2, "A": [[1, 0], [0, 1]], "b": [0, 0], "l": None, "u": None})
    assert not p.has_bounds and not p.has_equalities
    with pytest.raises(ValueError):
        problem_from_dict({"n": 2, "A": [[1, 0], [0, 1]]})
    with pytest.raises(ValueError):
        problem_from_dict({"n": 1, "A": [[1]], "b": [0], "l": ["minus"]})
