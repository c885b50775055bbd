import warnings

import numpy as np
import pytest

from hybridid.errors import ConfigError, DataError, NumericError
from hybridid.numdiff import (
    DiffConfig,
    TvrConvergenceWarning,
    _saddle_band,
    derive_chain,
    differentiate,
    finite_difference,
    midpoint_chain,
    tvr_differentiate,
    tvr_objective,
    tvr_solve,
)


def test_fd_constant():
    assert np.all(finite_difference(np.full(50, 3.2), 0.1) == 0)


def test_fd_quadratic_exact():
    t = np.arange(0, 5, 0.1)
    np.testing.assert_allclose(finite_difference(t**2, 0.1)[1:-1], 2 * t[1:-1], atol=1e-12)


def test_fd_sine_error():
    dt = 0.01
    t = np.arange(0, 10, dt)
    err = np.abs(finite_difference(np.sin(t), dt) - np.cos(t))
    assert err[1:-1].max() < 2e-5
    # second-order one-sided ends carry a dt^2/3 constant instead of dt^2/6
    assert err.max() < 4e-5


def test_fd_input_validation():
    with pytest.raises(DataError):
        finite_difference([1.0, 2.0], 0.1)
    with pytest.raises(NumericError):
        finite_difference([1.0, np.nan, 2.0], 0.1)
    with pytest.raises(ConfigError):
        finite_difference([1.0, 2.0, 3.0], 0.0)


def test_tvr_ramp():
    dt = 0.01
    t = np.arange(0, 5, dt)
    u = tvr_differentiate(3 * t, dt)
    assert np.max(np.abs(u - 3)) < 1e-3


def test_tvr_ramp_small_alpha():
    dt = 0.01
    t = np.arange(0, 5, dt)
    u = tvr_differentiate(3 * t, dt, DiffConfig(method="tvr", alpha=1e-8))
    assert np.max(np.abs(u - 3)) < 1e-3


def test_tvr_kink_is_sharp():
    dt = 0.01
    t = np.arange(-2, 2 + dt / 2, dt)
    u = tvr_differentiate(np.abs(t), dt, DiffConfig(method="tvr", alpha=1e-3, iterations=200))
    off = np.abs(u - np.sign(t)) > 0.05
    assert off.sum() <= 3
    assert np.all(np.abs(np.flatnonzero(off) - np.argmin(np.abs(t))) <= 2)


def test_tvr_beats_naive_on_noise():
    dt = 1e-3
    t = np.arange(0, 10, dt)
    f = np.sin(t) + np.random.default_rng(0).normal(0, 0.01, t.size)
    naive = np.sqrt(np.mean((finite_difference(f, dt) - np.cos(t)) ** 2))
    tv = np.sqrt(np.mean((tvr_differentiate(f, dt) - np.cos(t)) ** 2))
    assert tv <= 0.5 * naive


def test_tvr_objective_monotone():
    dt = 0.01
    t = np.arange(0, 3, dt)
    f = np.sin(2 * t) + np.random.default_rng(1).normal(0, 0.01, t.size)
    res = tvr_solve(f, dt, alpha=1e-2, iterations=30)
    assert np.all(np.diff(res.objective) <= 1e-9 * np.abs(res.objective[:-1]) + 1e-14)
    assert tvr_objective(res.u, f - f[0], dt, 1e-2, 1e-8) == pytest.approx(min(res.objective))


def test_tvr_nonconvergence_warns_and_returns_iterate():
    dt = 0.01
    t = np.arange(0, 3, dt)
    f = np.sin(t) + np.random.default_rng(2).normal(0, 0.05, t.size)
    with pytest.warns(TvrConvergenceWarning):
        u = tvr_differentiate(f, dt, DiffConfig(method="tvr", iterations=1, tol=0.0))
    assert u.shape == f.shape and np.all(np.isfinite(u))


def test_tvr_rejects_nonfinite():
    with pytest.raises(NumericError):
        tvr_differentiate(np.array([0.0, 1.0, np.inf, 2.0]), 0.1)


def test_windowed_tvr_matches_whole_signal():
    dt = 0.01
    t = np.arange(0, 20, dt)
    f = np.sin(t)
    cfg = DiffConfig(method="tvr", alpha=1e-4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TvrConvergenceWarning)
        whole = tvr_differentiate(f, dt, cfg)
        parts, info = tvr_differentiate(
            f, dt, DiffConfig(method="tvr", alpha=1e-4, max_window=800, window=600), return_info=True
        )
    assert info["windows"] > 1
    inner = slice(10, -10)
    truth = np.cos(t)[inner]
    assert np.max(np.abs(parts[inner] - truth)) <= 1.05 * np.max(np.abs(whole[inner] - truth))
    assert np.max(np.abs(parts[inner] - whole[inner])) < 5e-3


def _dense_kkt(e, dt, alpha):
    """Reference saddle matrix from its blocks, then permuted to (u, w, lam) interleaving."""
    N = e.size + 1
    D = np.diff(np.eye(N), axis=0)
    L = (alpha / dt) * D.T @ np.diag(e) @ D
    A = np.zeros((N, N))  # trapezoid increments: (A u)_k = dt/2 (u_{k-1} + u_k)
    B = np.eye(N)  # (B w)_k = w_k - w_{k-1}; row 0 pins w_0
    for k in range(1, N):
        A[k, k - 1] = A[k, k] = dt / 2
        B[k, k - 1] = -1.0
    Z = np.zeros((N, N))
    K = np.block([[L, Z, -A.T], [Z, np.eye(N), B.T], [-A, B, Z]])
    perm = np.ravel(np.column_stack([np.arange(N), N + np.arange(N), 2 * N + np.arange(N)]))
    return K[np.ix_(perm, perm)]


def test_saddle_band_matches_dense_assembly():
    rng = np.random.default_rng(4)
    e = rng.uniform(0.5, 2.0, 9)
    ab = _saddle_band(e, 0.1, 0.3)
    n = ab.shape[1]
    dense = np.zeros((n, n))
    for i in range(n):
        for j in range(max(0, i - 5), min(n, i + 6)):
            dense[i, j] = ab[5 + i - j, j]
    np.testing.assert_allclose(dense, _dense_kkt(e, 0.1, 0.3), atol=1e-14)


def test_derive_chain_cubic():
    dt = 0.01
    t = np.arange(0, 2, dt)
    qd, qdd, qddd = derive_chain(t**3 / 6, dt)
    np.testing.assert_allclose(qd[1:-1], t[1:-1] ** 2 / 2, atol=1e-4)
    assert np.max(np.abs(qddd[3:-3] - 1)) < 1e-6


def test_derive_chain_constant():
    for d in derive_chain(np.full((40, 3), 0.7), 0.01):
        assert np.all(d == 0)


def test_derive_chain_from_velocity():
    dt = 0.01
    t = np.arange(0, 2, dt)
    out = derive_chain(t**2 / 2, dt, start=1)
    assert len(out) == 2
    assert np.max(np.abs(out[1][3:-3] - 1)) < 1e-6


def test_midpoint_chain_quadratic():
    dt = 0.05
    t = np.arange(0, 3, dt)
    dv, d2v = midpoint_chain(t**2, dt)
    tm = t[:-1] + dt / 2
    np.testing.assert_allclose(dv, 2 * tm, atol=1e-12)
    np.testing.assert_allclose(d2v, 2.0, atol=1e-9)


def test_midpoint_chain_tvr_on_smooth_signal():
    dt = 0.01
    t = np.arange(0, 4, dt)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TvrConvergenceWarning)
        dv, _ = midpoint_chain(np.sin(t), dt, DiffConfig(method="tvr", alpha=1e-6))
    tm = t[:-1] + dt / 2
    assert np.max(np.abs(dv[5:-5] - np.cos(tm[5:-5]))) < 5e-3


def test_differentiate_dispatch():
    f = np.linspace(0, 1, 30) ** 2
    np.testing.assert_array_equal(differentiate(f, 0.1), finite_difference(f, 0.1))


def test_diff_config_validation():
    with pytest.raises(ConfigError):
        DiffConfig(method="spline")
    with pytest.raises(ConfigError):
        DiffConfig(alpha=0)
    with pytest.raises(ConfigError):
        DiffConfig(align="nowhere")
    assert DiffConfig.from_dict(DiffConfig(method="tvr").to_dict()) == DiffConfig(method="tvr")
