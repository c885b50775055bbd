"""Polynomial feature library and sequentially thresholded ridge regression (STLSQ)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionError, NumericError


class SparsityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PolyLibrary:
    """Bias, linear terms and all degree-2 monomials of ``d`` inputs, in that order."""

    d: int
    input_names: tuple = ()

    def __post_init__(self):
        if self.d < 1:
            raise DimensionError("library needs at least one input")
        names = tuple(self.input_names) or tuple(f"x{i + 1}" for i in range(self.d))
        if len(names) != self.d:
            raise DimensionError(f"{len(names)} input names for {self.d} inputs")
        object.__setattr__(self, "input_names", names)

    @property
    def degree(self) -> int:
        return 2

    @property
    def p(self) -> int:
        return 1 + self.d + self.d * (self.d + 1) // 2

    def pairs(self):
        return np.triu_indices(self.d)

    @property
    def names(self) -> list:
        n = self.input_names
        i, j = self.pairs()
        quad = [f"{n[a]}^2" if a == b else f"{n[a]}*{n[b]}" for a, b in zip(i, j)]
        return ["1", *n, *quad]


def expand(library: PolyLibrary, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != library.d:
        raise DimensionError(f"expected (N, {library.d}) inputs, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataError("library input contains non-finite values")
    i, j = library.pairs()
    return np.hstack([np.ones((X.shape[0], 1)), X, X[:, i] * X[:, j]])


@dataclass
class SparseLinearModel:
    """``Y ~ Theta(X) @ W.T + b``; column 0 of ``W`` (the bias column) is kept at zero."""

    W: np.ndarray
    b: np.ndarray
    threshold: float = 0.01
    alpha: float = 1e-4
    max_iter: int = 100
    standardize: bool = False
    scales: np.ndarray | None = None
    iterations: list = field(default_factory=list)

    @property
    def masks(self) -> np.ndarray:
        m = self.W != 0
        m[:, 0] = self.b != 0
        return m

    @property
    def coefficients(self) -> np.ndarray:
        """Full coefficient matrix including the bias column."""
        C = self.W.copy()
        C[:, 0] = self.b
        return C

    def to_dict(self, library: PolyLibrary) -> dict:
        C = self.coefficients
        rows, cols = np.nonzero(self.W)
        return {
            "library": {"d": library.d, "degree": 2, "input_names": list(library.input_names)},
            "shape": list(self.W.shape),
            "W": [[int(r), int(c), float(self.W[r, c])] for r, c in zip(rows, cols)],
            "b": [float(v) for v in self.b],
            "threshold": self.threshold,
            "alpha": self.alpha,
            "max_iter": self.max_iter,
            "standardize": self.standardize,
            "scales": None if self.scales is None else [float(v) for v in self.scales],
            "iterations": list(self.iterations),
            "active": int(np.count_nonzero(C)),
        }

    @classmethod
    def from_dict(cls, doc: dict):
        lib = PolyLibrary(doc["library"]["d"], tuple(doc["library"]["input_names"]))
        W = np.zeros(doc["shape"])
        for r, c, v in doc["W"]:
            W[r, c] = v
        scales = None if doc.get("scales") is None else np.asarray(doc["scales"])
        model = cls(
            W, np.asarray(doc["b"], dtype=float), doc["threshold"], doc["alpha"], doc["max_iter"],
            doc["standardize"], scales, list(doc.get("iterations", [])),
        )
        return model, lib


def _ridge(G, B, alpha):
    A = G + alpha * np.eye(G.shape[0])
    try:
        return np.linalg.solve(A, B)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(A, B, rcond=None)[0]


def stlsq_gram(G, B, threshold=0.01, alpha=1e-4, max_iter=100):
    """STLSQ from the normal equations ``G = Theta'Theta`` and ``B = Theta'Y``.

    Returns ``(C, iterations)`` with ``C`` of shape (m, p). Each output keeps
    its own active set, which only shrinks.
    """
    G = np.asarray(G, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    p, m = B.shape
    if G.shape != (p, p):
        raise DimensionError(f"Gram matrix {G.shape} does not match {p} library terms")
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(B))):
        raise NumericError("non-finite normal equations")
    C = np.zeros((m, p))
    its = []
    for j in range(m):
        active = np.arange(p)
        w = np.zeros(0)
        k = 0
        for k in range(1, max_iter + 1):
            w = _ridge(G[np.ix_(active, active)], B[active, j], alpha)
            keep = np.abs(w) >= threshold
            if keep.all():
                break
            active = active[keep]
            if active.size == 0:
                w = np.zeros(0)
                break
        else:
            # iteration budget spent with pruning still going: one final solve
            if active.size:
                w = _ridge(G[np.ix_(active, active)], B[active, j], alpha)
                keep = np.abs(w) >= threshold
                active, w = active[keep], w[keep]
        C[j, active] = w
        its.append(k)
    return C, its


def gram(library: PolyLibrary, X, Y, block: int = 20_000, scales=None):
    """Accumulate ``Theta'Theta`` and ``Theta'Y`` over row blocks."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if len(X) != len(Y):
        raise DimensionError("feature and target row counts differ")
    if len(X) == 0:
        raise DataError("no rows to fit")
    p = library.p
    G = np.zeros((p, p))
    B = np.zeros((p, Y.shape[1]))
    for a in range(0, len(X), block):
        T = expand(library, X[a : a + block])
        if scales is not None:
            T /= scales
        G += T.T @ T
        B += T.T @ Y[a : a + block]
    return G, B


def column_rms(library: PolyLibrary, X, block: int = 20_000) -> np.ndarray:
    ss = np.zeros(library.p)
    for a in range(0, len(X), block):
        T = expand(library, X[a : a + block])
        ss += np.sum(T * T, axis=0)
    s = np.sqrt(ss / len(X))
    s[0] = 1.0
    s[s == 0] = 1.0
    return s


def stlsq(Theta, Y, threshold=0.01, alpha=1e-4, max_iter=100, standardize=False) -> SparseLinearModel:
    """Fit a sparse linear model on an already expanded library matrix (bias in column 0)."""
    Theta = np.asarray(Theta, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Theta.ndim != 2 or len(Theta) != len(Y):
        raise DimensionError("library matrix and targets are not row-aligned")
    if len(Theta) == 0:
        raise DataError("no rows to fit")
    scales = None
    if standardize:
        scales = np.sqrt(np.mean(Theta * Theta, axis=0))
        scales[0] = 1.0
        scales[scales == 0] = 1.0
        Theta = Theta / scales
    C, its = stlsq_gram(Theta.T @ Theta, Theta.T @ Y, threshold, alpha, max_iter)
    return _finish(C, its, threshold, alpha, max_iter, standardize, scales)


def fit(library: PolyLibrary, X, Y, threshold=0.01, alpha=1e-4, max_iter=100, standardize=False, block=20_000):
    """Expand and fit without materialising the whole library matrix."""
    scales = column_rms(library, X, block) if standardize else None
    G, B = gram(library, X, Y, block, scales)
    C, its = stlsq_gram(G, B, threshold, alpha, max_iter)
    return _finish(C, its, threshold, alpha, max_iter, standardize, scales)


def _finish(C, its, threshold, alpha, max_iter, standardize, scales):
    if scales is not None:
        C = C / scales
    if not np.all(np.isfinite(C)):
        raise NumericError("STLSQ produced non-finite coefficients")
    empty = [j for j in range(C.shape[0]) if not np.any(C[j])]
    if empty:
        warnings.warn(f"all library terms thresholded away for outputs {empty}", SparsityWarning, stacklevel=3)
    W = C.copy()
    b = W[:, 0].copy()
    W[:, 0] = 0.0
    return SparseLinearModel(W, b, threshold, alpha, max_iter, standardize, scales, list(its))


def predict(model: SparseLinearModel, library: PolyLibrary, X, block: int = 50_000) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if model.W.shape[1] != library.p:
        raise DimensionError(f"model has {model.W.shape[1]} terms, library has {library.p}")
    out = np.empty((len(X), model.W.shape[0]))
    for a in range(0, len(X), block):
        out[a : a + block] = expand(library, X[a : a + block]) @ model.W.T + model.b
    return out


def active_terms(model: SparseLinearModel, library: PolyLibrary) -> list:
    """Per output, ``(monomial, coefficient)`` pairs sorted by decreasing magnitude."""
    names = library.names
    C = model.coefficients
    out = []
    for row in C:
        idx = np.flatnonzero(row)
        idx = idx[np.argsort(-np.abs(row[idx]), kind="stable")]
        out.append([(names[i], float(row[i])) for i in idx])
    return out
