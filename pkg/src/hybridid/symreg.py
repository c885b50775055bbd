"""Genetic-programming symbolic regression over {+, -, *}.

Candidates are expression trees. Their fitness uses linear scaling: the
tree is split into its top-level additive terms, the term coefficients are
fitted by least squares, and the rebuilt expression (coefficients included)
is what gets scored, counted for complexity, and kept on the Pareto front.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass

import numpy as np

from . import _symreg_kernels as _k
from ._accel import USE_NUMBA
from .errors import ConfigError, DataError, DimensionError

__all__ = [
    "Var",
    "Const",
    "Bin",
    "Expression",
    "SymRegConfig",
    "ParetoFront",
    "evaluate",
    "fit_symbolic",
    "select_model",
    "simplify",
    "render",
    "parse",
    "to_dict",
    "from_dict",
    "coefficients",
    "variables",
]

OPS = ("+", "-", "*")


# -- expression trees ------------------------------------------------------------


class Expression:
    __slots__ = ("size", "depth", "_key")

    def __eq__(self, other):
        return isinstance(other, Expression) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return self.key

    @property
    def complexity(self) -> int:
        return self.size


class Var(Expression):
    __slots__ = ("index",)

    def __init__(self, index: int):
        if index < 0:
            raise DimensionError("variable index must be non-negative")
        self.index = int(index)
        self.size = 1
        self.depth = 1
        self._key = f"x{self.index}"

    @property
    def key(self):
        return self._key


class Const(Expression):
    __slots__ = ("value",)

    def __init__(self, value: float):
        self.value = float(value)
        self.size = 1
        self.depth = 1
        self._key = repr(self.value)

    @property
    def key(self):
        return self._key


class Bin(Expression):
    __slots__ = ("op", "left", "right")

    def __init__(self, op: str, left: Expression, right: Expression):
        if op not in OPS:
            raise ConfigError(f"unsupported operator '{op}'")
        self.op = op
        self.left = left
        self.right = right
        self.size = 1 + left.size + right.size
        self.depth = 1 + max(left.depth, right.depth)
        self._key = None

    @property
    def key(self):
        if self._key is None:
            self._key = f"({self.left.key}{self.op}{self.right.key})"
        return self._key


def nodes(expr: Expression, path=()):
    """Pre-order list of ``(node, path)``; a path is a tuple of 0/1 child choices."""
    out = [(expr, path)]
    if isinstance(expr, Bin):
        out += nodes(expr.left, path + (0,))
        out += nodes(expr.right, path + (1,))
    return out


def replace(expr: Expression, path, new: Expression) -> Expression:
    if not path:
        return new
    if path[0] == 0:
        return Bin(expr.op, replace(expr.left, path[1:], new), expr.right)
    return Bin(expr.op, expr.left, replace(expr.right, path[1:], new))


def variables(expr: Expression) -> set:
    return {n.index for n, _ in nodes(expr) if isinstance(n, Var)}


def coefficients(expr: Expression) -> list:
    return [n.value for n, _ in nodes(expr) if isinstance(n, Const)]


# -- evaluation -----------------------------------------------------------------


def _compile(expr: Expression):
    codes, args, consts = [], [], []
    stack = [(expr, False)]
    # iterative post-order walk
    while stack:
        node, done = stack.pop()
        if isinstance(node, Var):
            codes.append(_k.OP_VAR)
            args.append(node.index)
        elif isinstance(node, Const):
            codes.append(_k.OP_CONST)
            args.append(len(consts))
            consts.append(node.value)
        elif done:
            codes.append({"+": _k.OP_ADD, "-": _k.OP_SUB, "*": _k.OP_MUL}[node.op])
            args.append(0)
        else:
            stack.append((node, True))
            stack.append((node.right, False))
            stack.append((node.left, False))
    return np.array(codes, np.int64), np.array(args, np.int64), np.array(consts, float)


def _eval_tree(expr, X):
    if isinstance(expr, Var):
        return X[:, expr.index]
    if isinstance(expr, Const):
        return np.full(X.shape[0], expr.value)
    a = _eval_tree(expr.left, X)
    b = _eval_tree(expr.right, X)
    if expr.op == "+":
        return a + b
    if expr.op == "-":
        return a - b
    return a * b


def _eval_T(expr, XT):
    """Evaluate against a transposed (d, N) design; ``inf`` marks non-finite rows."""
    if USE_NUMBA:
        codes, args, consts = _compile(expr)
        return _k.eval_postfix(codes, args, consts, XT, expr.depth + 1)
    with np.errstate(all="ignore"):
        out = np.array(_eval_tree(expr, XT.T), dtype=float)
    out[~np.isfinite(out)] = np.inf
    return out


def evaluate(expr: Expression, X) -> np.ndarray:
    """Row-wise value of ``expr``; rows with a non-finite result come back as ``inf``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError("X must be two-dimensional")
    vs = variables(expr)
    if vs and max(vs) >= X.shape[1]:
        raise DimensionError(f"expression uses feature {max(vs)} but X has {X.shape[1]} columns")
    return _eval_T(expr, np.ascontiguousarray(X.T))


# -- simplification ----------------------------------------------------------------


def _is_const(e, v=None):
    return isinstance(e, Const) and (v is None or e.value == v)


def _simplify_once(e: Expression) -> Expression:
    if not isinstance(e, Bin):
        return e
    a, b = _simplify_once(e.left), _simplify_once(e.right)
    op = e.op
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value if op == "+" else a.value - b.value if op == "-" else a.value * b.value)
    if op == "*":
        if _is_const(a, 0.0) or _is_const(b, 0.0):
            return Const(0.0)
        if _is_const(a, 1.0):
            return b
        if _is_const(b, 1.0):
            return a
        if _is_const(b):
            a, b = b, a
        if _is_const(a) and isinstance(b, Bin) and b.op == "*" and _is_const(b.left):
            return Bin("*", Const(a.value * b.left.value), b.right)
        if _is_const(a) and isinstance(b, Bin) and b.op in "+-" and (_is_const(b.left) or _is_const(b.right)):
            # c*(x + k) -> c*x + c*k keeps constants at the top level
            return Bin(b.op, Bin("*", a, b.left), Bin("*", a, b.right))
        return Bin("*", a, b)
    if op == "+":
        if _is_const(a, 0.0):
            return b
        if _is_const(b, 0.0):
            return a
        if _is_const(a):
            a, b = b, a
        if _is_const(b) and b.value < 0:
            return Bin("-", a, Const(-b.value))
        if isinstance(b, Bin) and b.op in "+-":
            return Bin(b.op, Bin("+", a, b.left), b.right)
        if _is_const(b) and isinstance(a, Bin) and a.op in "+-" and _is_const(a.right):
            k = a.right.value if a.op == "+" else -a.right.value
            return Bin("+", a.left, Const(k + b.value))
        return Bin("+", a, b)
    # subtraction
    if _is_const(b, 0.0):
        return a
    if a == b:
        return Const(0.0)
    if _is_const(a, 0.0):
        return Bin("*", Const(-1.0), b)
    if _is_const(b) and b.value < 0:
        return Bin("+", a, Const(-b.value))
    if isinstance(b, Bin) and b.op in "+-":
        return Bin("-" if b.op == "+" else "+", Bin("-", a, b.left), b.right)
    if _is_const(b) and isinstance(a, Bin) and a.op in "+-" and _is_const(a.right):
        k = a.right.value if a.op == "+" else -a.right.value
        return Bin("+", a.left, Const(k - b.value))
    if _is_const(a):
        return Bin("+", Bin("*", Const(-1.0), b), a)
    return Bin("-", a, b)


def simplify(expr: Expression, max_passes: int = 50) -> Expression:
    """Constant folding, neutral/absorbing elements, x - x, constants first in products and last in sums."""
    for _ in range(max_passes):
        new = _simplify_once(expr)
        if new == expr:
            return new
        expr = new
    return expr


# -- text form -------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2}


def _fmt_const(v: float, digits):
    s = repr(v) if digits is None else f"{v:.{digits}g}"
    return f"({s})" if v < 0 or s.startswith("-") else s


def render(expr: Expression, registry, digits: int | None = None) -> str:
    """Infix text with feature names. Right operands of equal precedence are
    parenthesised, so parsing the text gives back the same tree."""
    names = list(registry)

    def go(e):
        if isinstance(e, Var):
            if e.index >= len(names):
                raise DimensionError(f"no name for feature index {e.index}")
            return names[e.index]
        if isinstance(e, Const):
            return _fmt_const(e.value, digits)
        p = _PREC[e.op]
        ls, rs = go(e.left), go(e.right)
        if isinstance(e.left, Bin) and _PREC[e.left.op] < p:
            ls = f"({ls})"
        if isinstance(e.right, Bin) and _PREC[e.right.op] <= p:
            rs = f"({rs})"
        sep = "*" if e.op == "*" else f" {e.op} "
        return f"{ls}{sep}{rs}"

    if isinstance(expr, Const):
        return repr(expr.value) if digits is None else f"{expr.value:.{digits}g}"
    return go(expr)


_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|inf|nan)|([A-Za-z_][A-Za-z0-9_]*)|(.))")


def parse(text: str, registry) -> Expression:
    """Inverse of :func:`render`."""
    index = {n: i for i, n in enumerate(registry)}
    toks = []
    for m in _TOKEN.finditer(text.strip()):
        num, name, sym = m.groups()
        if num is not None:
            toks.append(("num", float(num)))
        elif name is not None:
            if name not in index:
                raise DataError(f"unknown feature name '{name}'")
            toks.append(("var", index[name]))
        elif sym is not None and not sym.isspace():
            toks.append(("sym", sym))
    pos = 0

    def peek():
        return toks[pos] if pos < len(toks) else (None, None)

    def take():
        nonlocal pos
        if pos >= len(toks):
            raise DataError(f"unexpected end of expression '{text}'")
        pos += 1
        return toks[pos - 1]

    def atom():
        kind, val = take()
        if kind == "num":
            return Const(val)
        if kind == "var":
            return Var(val)
        if (kind, val) == ("sym", "-"):
            k2, v2 = take()
            if k2 != "num":
                raise DataError("unary minus is only allowed on numbers")
            return Const(-v2)
        if (kind, val) == ("sym", "("):
            e = expr_()
            if take() != ("sym", ")"):
                raise DataError("unbalanced parentheses")
            return e
        raise DataError(f"unexpected token {val!r} in '{text}'")

    def term():
        e = atom()
        while peek() == ("sym", "*"):
            take()
            e = Bin("*", e, atom())
        return e

    def expr_():
        e = term()
        while peek() in (("sym", "+"), ("sym", "-")):
            op = take()[1]
            e = Bin(op, e, term())
        return e

    out = expr_()
    if pos != len(toks):
        raise DataError(f"trailing input in '{text}'")
    return out


def to_dict(expr: Expression) -> dict:
    if isinstance(expr, Var):
        return {"var": expr.index}
    if isinstance(expr, Const):
        return {"const": expr.value}
    return {"op": expr.op, "left": to_dict(expr.left), "right": to_dict(expr.right)}


def from_dict(doc: dict) -> Expression:
    if "var" in doc:
        return Var(doc["var"])
    if "const" in doc:
        return Const(doc["const"])
    return Bin(doc["op"], from_dict(doc["left"]), from_dict(doc["right"]))


# -- configuration and front -------------------------------------------------------


@dataclass(frozen=True)
class SymRegConfig:
    population: int = 500
    generations: int = 200
    tournament: int = 7
    p_crossover: float = 0.7
    p_point: float = 0.2
    p_constant: float = 0.3
    p_hoist: float = 0.05
    p_insert: float = 0.15
    p_delete: float = 0.1
    max_complexity: int = 30
    max_depth: int = 10
    parsimony: float = 1e-6
    batch_size: int = 10_000
    seed: int = 0
    restarts: int = 4
    patience: int = 25  # generations without a front improvement before a restart ends
    elite: int = 5
    p_constant_leaf: float = 0.15
    init_depth: int = 4
    golden_iterations: int = 50

    def __post_init__(self):
        for name in ("p_crossover", "p_point", "p_constant", "p_hoist", "p_insert", "p_delete", "p_constant_leaf"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be a probability, got {v}")
        if self.batch_size < 1 or self.population < 2 or self.tournament < 1:
            raise ConfigError("batch_size, population and tournament must be positive (population >= 2)")
        if self.max_complexity < 1 or self.restarts < 1 or self.generations < 0:
            raise ConfigError("max_complexity and restarts must be >= 1, generations >= 0")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


class ParetoFront:
    """Best expression per complexity; loss strictly falls as complexity grows."""

    def __init__(self, scale: float = 1.0):
        self.entries: dict = {}  # complexity -> (mse, expr)
        self.scale = float(scale)  # mean square of the target, sets the "exact fit" floor

    @property
    def floor(self) -> float:
        return 1e-14 * self.scale + 1e-300

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        for c in sorted(self.entries):
            mse, e = self.entries[c]
            yield c, mse, e

    def levels(self, max_complexity: int) -> np.ndarray:
        """Best MSE reachable at each complexity 1..max_complexity."""
        out = np.full(max_complexity, math.inf)
        for c, (m, _) in self.entries.items():
            if c <= max_complexity:
                out[c - 1] = m
        out = np.minimum.accumulate(out)
        return np.maximum(out, self.floor)

    def best_below(self, c: int) -> float:
        vals = [m for k, (m, _) in self.entries.items() if k <= c]
        return min(vals) if vals else math.inf

    def insert(self, expr: Expression, mse: float, complexity: int | None = None) -> bool:
        c = expr.size if complexity is None else int(complexity)
        if not math.isfinite(mse):
            return False
        ref = self.best_below(c)
        if math.isfinite(ref) and mse >= ref - max(1e-9 * ref, self.floor):
            return False
        self.entries[c] = (float(mse), expr)
        for k in [k for k, (m, _) in self.entries.items() if k > c and m >= mse - max(1e-9 * mse, self.floor)]:
            del self.entries[k]
        return True

    def merge(self, other: "ParetoFront"):
        for c, m, e in other:
            self.insert(e, m, c)
        return self

    def to_list(self, registry=None):
        out = []
        for c, m, e in self:
            item = {"complexity": c, "mse": m, "tree": to_dict(e)}
            if registry is not None:
                item["infix"] = render(e, registry)
            out.append(item)
        return out


def select_model(front: ParetoFront, band: float = 1.5) -> Expression:
    """Entry with the largest drop in log-MSE per unit of added complexity.

    Only entries whose MSE is within ``band`` times the best front MSE are
    eligible (MSEs below the front's exact-fit floor count as equal). The
    first entry scores 0; ties go to lower complexity.
    """
    items = list(front)
    if not items:
        raise DataError("empty Pareto front")
    floor = front.floor
    mses = [max(m, floor) for _, m, _ in items]
    best = min(mses)
    choice, best_score = None, -math.inf
    for k, (c, _, e) in enumerate(items):
        score = 0.0 if k == 0 else (math.log(mses[k - 1]) - math.log(mses[k])) / (c - items[k - 1][0])
        if mses[k] <= band * best and score > best_score:
            choice, best_score = e, score
    return choice


# -- linear scaling --------------------------------------------------------------


def _additive_terms(expr, sign=1.0, out=None):
    out = [] if out is None else out
    if isinstance(expr, Bin) and expr.op in "+-":
        _additive_terms(expr.left, sign, out)
        _additive_terms(expr.right, sign if expr.op == "+" else -sign, out)
    else:
        out.append(expr)
    return out


def _strip_coefficient(t):
    """Drop a leading constant factor; the fitted coefficient replaces it."""
    while isinstance(t, Bin) and t.op == "*" and isinstance(t.left, Const):
        t = t.right
    while isinstance(t, Bin) and t.op == "*" and isinstance(t.right, Const):
        t = t.left
    return t


def _unique_terms(expr):
    terms, seen, has_const = [], set(), False
    for t in _additive_terms(expr):
        t = _strip_coefficient(t)
        if isinstance(t, Const):
            has_const = True
            continue
        if t.key not in seen:
            seen.add(t.key)
            terms.append(t)
    return terms, has_const


def _solve(G, by):
    """Solve the normal equations, falling back to a pseudo-inverse when ill-conditioned."""
    d = np.sqrt(np.diag(G))
    if np.all(d > 0):
        Gs = G / np.outer(d, d)
        try:
            L = np.linalg.cholesky(Gs)
            if np.min(np.diag(L)) ** 2 > 1e-11:
                z = np.linalg.solve(L, by / d)
                return np.linalg.solve(L.T, z) / d
        except np.linalg.LinAlgError:
            pass
    return np.linalg.pinv(G, rcond=1e-13, hermitian=True) @ by


def _rebuild(terms, has_const, beta):
    expr = None
    for t, b in zip(terms, beta):
        if b == 0:
            continue
        piece = Bin("*", Const(b), t)
        expr = piece if expr is None else Bin("+", expr, piece)
    if has_const:
        c = Const(beta[-1])
        expr = c if expr is None else Bin("+", expr, c)
    return simplify(expr if expr is not None else Const(0.0))


class _Design:
    """Data for linear scaling, with a bounded cache of evaluated term columns."""

    def __init__(self, XT, y, cache_size: int = 4000):
        self.XT, self.y = XT, y
        self.n = len(y)
        self.yy = float(y @ y)
        self.cache: dict = {}
        self.cache_size = cache_size

    def column(self, t):
        col = self.cache.get(t.key)
        if col is None:
            col = _eval_T(t, self.XT)
            if len(self.cache) >= self.cache_size:
                self.cache.clear()
            self.cache[t.key] = col
        return col

    def scale(self, expr):
        terms, has_const = _unique_terms(expr)
        cols = [self.column(t) for t in terms]
        if has_const or not cols:
            has_const = True
            cols.append(np.ones(self.n))
        T = np.array(cols)
        with np.errstate(all="ignore"):
            G = T @ T.T
            by = T @ self.y
            if not (np.all(np.isfinite(G)) and np.all(np.isfinite(by))):
                return expr, math.inf
            beta = _solve(G, by)
            # terms whose fitted contribution is round-off noise are dropped and the rest refitted
            contrib = np.abs(beta) * np.sqrt(np.diag(G))
            keep = contrib > 1e-10 * math.sqrt(self.yy) + 1e-300
            if not keep.all() and keep.any():
                if has_const and not keep[-1]:
                    has_const = False
                terms = [t for t, k in zip(terms, keep[: len(terms)]) if k]
                T, G, by = T[keep], G[np.ix_(keep, keep)], by[keep]
                beta = _solve(G, by)
            sse = self.yy - 2.0 * beta @ by + beta @ G @ beta
            if sse < 1e-6 * self.yy:
                r = beta @ T - self.y
                sse = float(r @ r)
            mse = max(float(sse), 0.0) / self.n
        if not (np.all(np.isfinite(beta)) and math.isfinite(mse)):
            return expr, math.inf
        if not terms:
            return Const(beta[0]), mse
        return _rebuild(terms, has_const, beta), mse


def scale_terms(expr, XT, y):
    """Least-squares coefficients for the additive terms of ``expr``.

    Returns ``(rebuilt_expression, mse)``; ``mse`` is ``inf`` for non-finite terms.
    """
    return _Design(XT, np.asarray(y, dtype=float), cache_size=0).scale(expr)


def _mse(expr, XT, y):
    r = _eval_T(expr, XT) - y
    if not np.all(np.isfinite(r)):
        return math.inf
    return float(r @ r) / len(y)


# -- genetic operators -------------------------------------------------------------


class _Gp:
    def __init__(self, d, cfg: SymRegConfig, rng: np.random.Generator):
        self.d, self.cfg, self.rng = d, cfg, rng

    def leaf(self):
        if self.rng.random() < self.cfg.p_constant_leaf:
            return Const(round(float(self.rng.uniform(-2.0, 2.0)), 3))
        return Var(int(self.rng.integers(self.d)))

    def tree(self, depth, full):
        if depth <= 1 or (not full and self.rng.random() < 0.3):
            return self.leaf()
        op = OPS[int(self.rng.integers(3))]
        return Bin(op, self.tree(depth - 1, full), self.tree(depth - 1, full))

    def random_node(self, e):
        ns = nodes(e)
        return ns[int(self.rng.integers(len(ns)))]

    def crossover(self, a, b):
        _, pa = self.random_node(a)
        sub, _ = self.random_node(b)
        return replace(a, pa, sub)

    def point(self, e):
        node, path = self.random_node(e)
        if isinstance(node, Var):
            new = Var(int(self.rng.integers(self.d)))
        elif isinstance(node, Const):
            new = Const(round(float(self.rng.uniform(-2.0, 2.0)), 3))
        else:
            new = Bin(OPS[int(self.rng.integers(3))], node.left, node.right)
        return replace(e, path, new)

    def constant(self, e):
        consts = [(n, p) for n, p in nodes(e) if isinstance(n, Const)]
        if not consts:
            return e
        node, path = consts[int(self.rng.integers(len(consts)))]
        if self.rng.random() < 0.1:
            v = float(self.rng.uniform(-2.0, 2.0))
        else:
            v = node.value * (1.0 + 0.1 * float(self.rng.standard_normal()))
        return replace(e, path, Const(v))

    def hoist(self, e):
        ns = nodes(e)
        if len(ns) < 2:
            return e
        return ns[1 + int(self.rng.integers(len(ns) - 1))][0]

    def insert(self, e):
        sub = self.tree(int(self.rng.integers(1, 3)), False)
        return Bin("+" if self.rng.random() < 0.7 else "*", e, sub)

    def delete(self, e):
        terms = _additive_terms(e)
        if len(terms) < 2:
            return e
        k = int(self.rng.integers(len(terms)))
        out = None
        for i, t in enumerate(terms):
            if i != k:
                out = t if out is None else Bin("+", out, t)
        return out

    def offspring(self, a, b):
        c = self.cfg
        r = self.rng
        e = self.crossover(a, b) if r.random() < c.p_crossover else a
        if r.random() < c.p_point:
            e = self.point(e)
        if r.random() < c.p_constant:
            e = self.constant(e)
        if r.random() < c.p_hoist:
            e = self.hoist(e)
        if r.random() < c.p_insert:
            e = self.insert(e)
        if r.random() < c.p_delete:
            e = self.delete(e)
        if e.size > c.max_complexity or e.depth > c.max_depth:
            return a
        return e


def _search(XT, y, cfg: SymRegConfig, rng, scale, var_y):
    N = XT.shape[1]
    gp = _Gp(XT.shape[0], cfg, rng)
    front = ParetoFront(scale)
    full_batch = N <= cfg.batch_size
    cache: dict = {}
    design = _Design(XT, y)

    def fitness(tree):
        hit = cache.get(tree.key)
        if hit is not None:
            return hit
        rebuilt, mse = design.scale(tree)
        f = mse / var_y + cfg.parsimony * rebuilt.size if math.isfinite(mse) else math.inf
        cache[tree.key] = (f, mse, rebuilt)
        return cache[tree.key]

    depths = [1 + (k % cfg.init_depth) for k in range(cfg.population)]
    pop = [gp.tree(dp, k % 2 == 0) for k, dp in enumerate(depths)]
    idle = 0
    for _gen in range(cfg.generations + 1):
        if not full_batch:
            rows = np.sort(rng.choice(N, cfg.batch_size, replace=False))
            design = _Design(np.ascontiguousarray(XT[:, rows]), y[rows])
            cache.clear()
        scored = [fitness(t) for t in pop]
        fit = np.array([s[0] for s in scored])
        before = front.levels(cfg.max_complexity)
        for _f, mse, rebuilt in scored:
            c = rebuilt.size
            if not math.isfinite(mse) or c > cfg.max_complexity:
                continue
            if mse < front.best_below(c):
                full = mse if full_batch else _mse(rebuilt, XT, y)
                front.insert(rebuilt, full, c)
        after = front.levels(cfg.max_complexity)
        # only improvements of more than 1% at some complexity level reset the patience counter
        idle = 0 if np.any(after < 0.99 * before) else idle + 1
        if front.best_below(cfg.max_complexity) <= front.floor or idle >= cfg.patience:
            break
        if _gen == cfg.generations:
            break
        order = np.argsort(fit, kind="stable")
        new = [pop[i] for i in order[: cfg.elite]]
        while len(new) < cfg.population:
            a = pop[_tournament(fit, cfg.tournament, rng)]
            b = pop[_tournament(fit, cfg.tournament, rng)]
            new.append(gp.offspring(a, b))
        pop = new
    return front


def _tournament(fit, k, rng):
    idx = rng.integers(len(fit), size=k)
    return int(idx[np.argmin(fit[idx])])


def _embedded_constants(expr):
    """Paths of constants that are not plain top-level coefficients."""
    out = []
    top = set()
    stack = [(expr, ())]
    while stack:
        e, p = stack.pop()
        if isinstance(e, Bin) and e.op in "+-":
            stack += [(e.left, p + (0,)), (e.right, p + (1,))]
        else:
            top.add(p)
            if isinstance(e, Bin) and e.op == "*" and isinstance(e.left, Const):
                top.add(p + (0,))
    for n, p in nodes(expr):
        if isinstance(n, Const) and p not in top:
            out.append(p)
    return out


def _get(expr, path):
    for k in path:
        expr = expr.left if k == 0 else expr.right
    return expr


def refine_constants(expr, X, y, iterations: int = 50):
    """Golden-section search on each embedded constant, re-fitting the linear coefficients each time."""
    XT = np.ascontiguousarray(np.asarray(X, dtype=float).T)
    y = np.asarray(y, dtype=float)
    design = _Design(XT, y)
    best, best_mse = design.scale(expr)
    base = expr
    gr = (math.sqrt(5) - 1) / 2
    for path in _embedded_constants(base):
        c0 = _get(base, path).value
        w = max(abs(c0), 1.0)
        lo, hi = c0 - w, c0 + w

        def f(v):
            return design.scale(replace(base, path, Const(v)))[1]

        a, b = lo + (1 - gr) * (hi - lo), lo + gr * (hi - lo)
        fa, fb = f(a), f(b)
        for _ in range(iterations):
            if fa <= fb:
                hi, b, fb = b, a, fa
                a = lo + (1 - gr) * (hi - lo)
                fa = f(a)
            else:
                lo, a, fa = a, b, fb
                b = lo + gr * (hi - lo)
                fb = f(b)
        v = a if fa <= fb else b
        cand = replace(base, path, Const(v))
        rebuilt, mse = design.scale(cand)
        if mse < best_mse:
            base, best, best_mse = cand, rebuilt, mse
    return best, best_mse


def fit_symbolic(X, y, cfg: SymRegConfig | None = None) -> ParetoFront:
    """Evolve expressions for ``y`` from the columns of ``X``; returns the merged front over all restarts."""
    cfg = cfg or SymRegConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or len(X) != len(y):
        raise DimensionError("X must be (N, d) and row-aligned with y")
    if len(y) == 0:
        raise DataError("no rows to fit")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("symbolic regression input contains non-finite values")
    XT = np.ascontiguousarray(X.T)
    scale = float(np.mean(y * y))
    var_y = float(np.var(y))
    var_y = var_y if var_y > 0 else (scale if scale > 0 else 1.0)
    front = ParetoFront(scale)
    front.insert(Const(float(np.mean(y))), float(np.var(y)), 1)
    master = np.random.SeedSequence(cfg.seed)
    for child in master.spawn(cfg.restarts):
        front.merge(_search(XT, y, cfg, np.random.default_rng(child), scale, var_y))
        if front.best_below(cfg.max_complexity) <= front.floor:
            break
    return front
