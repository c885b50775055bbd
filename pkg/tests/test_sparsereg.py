import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridid import sparsereg as sp
from hybridid.errors import DimensionError

from oracles import planted_recovered


def test_library_enumeration():
    lib = sp.PolyLibrary(2)
    assert lib.p == 6
    np.testing.assert_array_equal(sp.expand(lib, [[2.0, 3.0]]), [[1, 2, 3, 4, 6, 9]])
    assert lib.names == ["1", "x1", "x2", "x1^2", "x1*x2", "x2^2"]
    assert sp.PolyLibrary(49).p == 1275


def test_expand_zero_input():
    T = sp.expand(sp.PolyLibrary(4), np.zeros((3, 4)))
    np.testing.assert_array_equal(T, np.tile(np.eye(15)[0], (3, 1)))


def test_expand_shape_check():
    with pytest.raises(DimensionError):
        sp.expand(sp.PolyLibrary(3), np.zeros((2, 4)))


def test_planted_two_term():
    rng = np.random.default_rng(0)
    lib = sp.PolyLibrary(5)
    X = rng.standard_normal((1000, 5))
    y = 2 * X[:, 0] - 3 * X[:, 1]
    model = sp.fit(lib, X, y)
    terms = sp.active_terms(model, lib)[0]
    assert [n for n, _ in terms] == ["x2", "x1"]
    np.testing.assert_allclose([c for _, c in terms], [-3, 2], atol=1e-6)
    # the default ridge shrinks by ~1e-7; a negligible ridge gives an exact round trip
    exact = sp.fit(lib, X, y, alpha=1e-12)
    assert np.max(np.abs(sp.predict(exact, lib, X)[:, 0] - y)) < 1e-10


def test_zero_target_gives_zero_model():
    lib = sp.PolyLibrary(3)
    X = np.random.default_rng(1).standard_normal((50, 3))
    with pytest.warns(sp.SparsityWarning):
        model = sp.fit(lib, X, np.zeros(50))
    assert np.all(model.W == 0) and np.all(model.b == 0)
    assert sp.active_terms(model, lib) == [[]]
    np.testing.assert_array_equal(sp.predict(model, lib, X), 0)


def test_zero_model_predicts_bias():
    lib = sp.PolyLibrary(2)
    model = sp.SparseLinearModel(np.zeros((2, lib.p)), np.array([1.5, -2.0]))
    np.testing.assert_array_equal(sp.predict(model, lib, np.ones((4, 2))), np.tile([1.5, -2.0], (4, 1)))


def test_single_term_prediction():
    lib = sp.PolyLibrary(2)
    W = np.zeros((1, lib.p))
    W[0, 1] = 0.7
    model = sp.SparseLinearModel(W, np.array([0.25]))
    assert sp.predict(model, lib, [[5.0, -1.0]])[0, 0] == pytest.approx(5 * 0.7 + 0.25)


def test_gram_route_matches_dense_route():
    rng = np.random.default_rng(2)
    lib = sp.PolyLibrary(6)
    X = rng.standard_normal((3000, 6))
    Y = np.column_stack([X[:, 0] * X[:, 2] - 0.5 * X[:, 5], 1.5 + X[:, 1] ** 2])
    a = sp.fit(lib, X, Y, block=700)
    b = sp.stlsq(sp.expand(lib, X), Y)
    np.testing.assert_allclose(a.coefficients, b.coefficients, atol=1e-10)


def test_standardized_option_recovers_support():
    rng = np.random.default_rng(3)
    lib = sp.PolyLibrary(4)
    X = rng.standard_normal((2000, 4)) * [1, 10, 0.1, 1]
    y = 0.5 * X[:, 1] + 4.0 * X[:, 2] ** 2
    model = sp.fit(lib, X, y, standardize=True)
    assert {n for n, _ in sp.active_terms(model, lib)[0]} == {"x2", "x3^2"}


def test_serialization_round_trip():
    rng = np.random.default_rng(4)
    lib = sp.PolyLibrary(3, ("a", "b", "c"))
    X = rng.standard_normal((500, 3))
    model = sp.fit(lib, X, 1.0 + X[:, 0] * X[:, 2])
    again, lib2 = sp.SparseLinearModel.from_dict(model.to_dict(lib))
    assert lib2 == lib
    np.testing.assert_array_equal(again.coefficients, model.coefficients)
    assert {n for n, _ in sp.active_terms(again, lib2)[0]} == {"1", "a*c"}


@pytest.mark.parametrize("seed", range(10))
def test_planted_oracle(seed):
    assert planted_recovered(seed)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.02, 0.5))
def test_support_only_shrinks_with_threshold(seed, thr):
    rng = np.random.default_rng(seed)
    lib = sp.PolyLibrary(3)
    X = rng.standard_normal((200, 3))
    y = X @ rng.uniform(-1, 1, 3) + 0.05 * rng.standard_normal(200)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sp.SparsityWarning)
        loose = sp.fit(lib, X, y, threshold=0.01)
        tight = sp.fit(lib, X, y, threshold=thr)
    assert tight.masks.sum() <= loose.masks.sum()
    C = tight.coefficients
    assert np.all((C == 0) | (np.abs(C) >= thr))
