import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridid import _symreg_kernels as k
from hybridid import symreg as sr
from hybridid.dataset import feature_names
from hybridid.errors import ConfigError, DataError, DimensionError

from oracles import symbolic_targets

X5 = [f"x{i}" for i in range(1, 6)]

leaves = st.one_of(
    st.integers(0, 3).map(sr.Var),
    st.floats(-5, 5, allow_nan=False).map(lambda v: sr.Const(round(v, 3))),
)
trees = st.recursive(
    leaves,
    lambda sub: st.tuples(st.sampled_from(sr.OPS), sub, sub).map(lambda t: sr.Bin(*t)),
    max_leaves=12,
)
POINTS = np.random.default_rng(99).uniform(-2, 2, (40, 4))


def test_evaluate_projection_and_arithmetic():
    X = np.array([[1.0, 2.0, 7.0]])
    assert sr.evaluate(sr.Var(2), X)[0] == 7
    e = sr.parse("(x1 + 2)*x2", X5)
    assert sr.evaluate(e, np.array([[3.0, 4.0, 0, 0, 0]]))[0] == 20


def test_evaluate_identified_joint_equation():
    names = feature_names(7)
    row = np.random.default_rng(5).uniform(-3, 3, (1, 49))
    e = sr.parse("tau_i1 + tau_c1 + 6.721*qd1", names)
    hand = row[0, names.index("tau_i1")] + row[0, names.index("tau_c1")] + 6.721 * row[0, names.index("qd1")]
    assert sr.evaluate(e, row)[0] == pytest.approx(hand, rel=1e-14)


def test_evaluate_overflow_is_infinite():
    e = sr.Bin("*", sr.Var(0), sr.Var(0))
    out = sr.evaluate(e, np.array([[1e200], [2.0]]))
    assert out[0] == np.inf and out[1] == 4.0


def test_evaluate_dimension_check():
    with pytest.raises(DimensionError):
        sr.evaluate(sr.Var(3), np.zeros((2, 2)))


@settings(max_examples=200, deadline=None)
@given(trees)
def test_compiled_and_tree_evaluators_agree(e):
    XT = np.ascontiguousarray(POINTS.T)
    codes, args, consts = sr._compile(e)
    a = k.eval_postfix(codes, args, consts, XT, e.depth + 1)
    b = np.asarray(sr._eval_tree(e, POINTS), dtype=float) * np.ones(len(POINTS))
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_simplify_examples():
    assert sr.simplify(sr.parse("x1*1 + 0", X5)) == sr.Var(0)
    assert sr.simplify(sr.parse("2*3", X5)) == sr.Const(6.0)
    assert sr.simplify(sr.parse("x1 - x1 + x2*(4 - 4)", X5)) == sr.Const(0.0)


@settings(max_examples=300, deadline=None)
@given(trees)
def test_simplify_preserves_value(e):
    s = sr.simplify(e)
    a, b = sr.evaluate(e, POINTS), sr.evaluate(s, POINTS)
    scale = 1.0 + np.max(np.abs(a))
    assert np.max(np.abs(a - b)) <= 1e-12 * scale


@settings(max_examples=200, deadline=None)
@given(trees)
def test_simplify_is_idempotent(e):
    s = sr.simplify(e)
    assert sr.simplify(s) == s


@settings(max_examples=300, deadline=None)
@given(trees)
def test_render_parse_fixed_point(e):
    names = ["a", "b", "c", "d"]
    assert sr.parse(sr.render(e, names), names) == e


@settings(max_examples=100, deadline=None)
@given(trees)
def test_dict_round_trip(e):
    assert sr.from_dict(sr.to_dict(e)) == e


def test_render_examples():
    names = feature_names(7)
    e = sr.Bin("*", sr.Const(2.244), sr.Var(names.index("qd7")))
    assert sr.render(e, names) == "2.244*qd7"
    nested = sr.parse("x1 - (x2 + x3)*x4", X5)
    assert sr.render(nested, X5) == "x1 - (x2 + x3)*x4"
    assert sr.render(sr.parse("x1 - (x2 - x3)", X5), X5) == "x1 - (x2 - x3)"


def test_parse_errors():
    with pytest.raises(DataError):
        sr.parse("x1 + y9", X5)
    with pytest.raises(DataError):
        sr.parse("(x1 + x2", X5)


def _front(pairs):
    f = sr.ParetoFront()
    for c, m in pairs:
        assert f.insert(sr.Const(float(c)), m, c)
    return f


def test_select_knee():
    f = _front([(1, 100.0), (5, 0.001), (9, 0.0009)])
    assert sr.select_model(f).value == 5.0


def test_select_single_entry():
    assert sr.select_model(_front([(3, 2.0)])).value == 3.0


def test_select_tie_goes_to_lower_complexity():
    f = _front([(1, 1.0), (2, 0.5), (3, 0.25)])
    s2 = math.log(1.0) - math.log(0.5)
    s3 = math.log(0.5) - math.log(0.25)
    assert s2 == s3
    assert sr.select_model(f, band=10.0).value == 2.0


def test_front_is_monotone():
    f = sr.ParetoFront()
    assert f.insert(sr.Var(0), 1.0, 1)
    assert not f.insert(sr.Var(1), 2.0, 3)  # worse at higher complexity
    assert f.insert(sr.Var(2), 0.5, 3)
    assert f.insert(sr.Var(3), 0.4, 2)  # dominates the complexity-3 entry
    assert [c for c, _, _ in f] == [1, 2]


def test_constant_target():
    X = np.random.default_rng(0).uniform(-1, 1, (500, 3))
    front = sr.fit_symbolic(X, np.full(500, 4.2), sr.SymRegConfig(seed=1, generations=5))
    c, mse, e = next(iter(front))
    assert c == 1 and isinstance(e, sr.Const)
    assert e.value == pytest.approx(4.2) and mse < 1e-12


@pytest.mark.parametrize("target", ["3*x1 + x2", "x1*x2 + 2"])
def test_planted_expression(target):
    X, ys = symbolic_targets(np.random.default_rng(0))
    y = ys[target]
    t0 = time.perf_counter()
    front = sr.fit_symbolic(X, y, sr.SymRegConfig(seed=0))
    assert time.perf_counter() - t0 < 60
    hits = [(c, e) for c, m, e in front if np.mean((sr.evaluate(e, X) - y) ** 2) < 1e-8]
    assert hits and min(c for c, _ in hits) <= 7
    best = sr.select_model(front)
    assert np.mean((sr.evaluate(best, X) - y) ** 2) < 1e-8


def test_refine_constants_improves_embedded_constant():
    rng = np.random.default_rng(1)
    X = rng.uniform(-2, 2, (400, 2))
    y = 2.0 * X[:, 0] * (X[:, 1] + 1.5)
    start = sr.parse("x1*(x2 + 1)", X5[:2])
    fitted, mse = sr.refine_constants(start, X, y)
    assert mse < 1e-10
    assert np.max(np.abs(sr.evaluate(fitted, X) - y)) < 1e-4


def test_config_validation():
    with pytest.raises(ConfigError):
        sr.SymRegConfig(p_crossover=1.5)
    with pytest.raises(ConfigError):
        sr.SymRegConfig(population=1)
