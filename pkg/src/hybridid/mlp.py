"""Fully connected ReLU network trained with Adam on a mean-squared-error loss.

Inputs are standardised with statistics frozen from the training data, and
so are the outputs: the network works in standardised target units and the
wrapper maps back to torques.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DimensionError, NumericError


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 1024
    epochs: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    standardize_targets: bool = True

    def __post_init__(self):
        if not (self.lr > 0 and self.batch_size >= 1 and self.epochs >= 0):
            raise ConfigError("learning rate and batch size must be positive, epochs non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ConfigError("invalid Adam moment parameters")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


@dataclass
class Mlp:
    sizes: tuple
    weights: list  # weights[l] has shape (sizes[l], sizes[l+1])
    biases: list
    x_mean: np.ndarray = None
    x_scale: np.ndarray = None
    y_mean: np.ndarray = None
    y_scale: np.ndarray = None

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise DimensionError("layer count does not match sizes")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.sizes[k], self.sizes[k + 1]) or b.shape != (self.sizes[k + 1],):
                raise DimensionError(f"layer {k} parameter shapes do not match sizes {self.sizes}")
        d, m = self.sizes[0], self.sizes[-1]
        self.x_mean = np.zeros(d) if self.x_mean is None else np.asarray(self.x_mean, float)
        self.x_scale = np.ones(d) if self.x_scale is None else np.asarray(self.x_scale, float)
        self.y_mean = np.zeros(m) if self.y_mean is None else np.asarray(self.y_mean, float)
        self.y_scale = np.ones(m) if self.y_scale is None else np.asarray(self.y_scale, float)

    def params(self) -> list:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp(
            self.sizes, [W.copy() for W in self.weights], [b.copy() for b in self.biases],
            self.x_mean.copy(), self.x_scale.copy(), self.y_mean.copy(), self.y_scale.copy(),
        )

    def to_dict(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "params": [p.ravel().tolist() for p in self.params()],
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_mean": self.y_mean.tolist(),
            "y_scale": self.y_scale.tolist(),
        }

    @classmethod
    def from_dict(cls, doc) -> "Mlp":
        sizes = doc["sizes"]
        flat = doc["params"]
        Ws = [np.asarray(flat[2 * k], float).reshape(sizes[k], sizes[k + 1]) for k in range(len(sizes) - 1)]
        bs = [np.asarray(flat[2 * k + 1], float) for k in range(len(sizes) - 1)]
        return cls(sizes, Ws, bs, doc["x_mean"], doc["x_scale"], doc["y_mean"], doc["y_scale"])


def init_mlp(sizes=(49, 128, 128, 7), seed: int = 0) -> Mlp:
    """Weights and biases uniform in +-1/sqrt(fan_in)."""
    rng = np.random.default_rng(seed)
    Ws, bs = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        lim = 1.0 / np.sqrt(a)
        Ws.append(rng.uniform(-lim, lim, (a, b)))
        bs.append(rng.uniform(-lim, lim, b))
    return Mlp(tuple(sizes), Ws, bs)


def _check_input(net, X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.sizes[0]:
        raise DimensionError(f"network expects {net.sizes[0]} inputs, got shape {X.shape}")
    return X


def _raw_forward(net, Z):
    """Forward pass in standardised units; returns output and per-layer activations."""
    acts = [Z]
    h = Z
    L = len(net.weights)
    for k in range(L):
        h = h @ net.weights[k] + net.biases[k]
        if k < L - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return h, acts


def forward(net: Mlp, X) -> np.ndarray:
    X = _check_input(net, X)
    out, _ = _raw_forward(net, (X - net.x_mean) / net.x_scale)
    return out * net.y_scale + net.y_mean


def _loss_grad(net, Z, T):
    """MSE over all entries of (f(Z) - T) and its gradient for each parameter array."""
    # overflow is caught by the callers' finiteness checks
    with np.errstate(over="ignore", invalid="ignore"):
        out, acts = _raw_forward(net, Z)
        R = out - T
        loss = float(np.sum(R * R)) / R.size
    n = R.size
    g = 2.0 * R / n
    grads = [None] * (2 * len(net.weights))
    for k in range(len(net.weights) - 1, -1, -1):
        grads[2 * k] = acts[k].T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        if k > 0:
            g = (g @ net.weights[k].T) * (acts[k] > 0)
    return loss, grads


def _targets(net, Y, base):
    Y = np.asarray(Y, dtype=float)
    E = Y if base is None else Y - np.asarray(base, dtype=float)
    return (E - net.y_mean) / net.y_scale


def train(net: Mlp, X, Y, cfg: TrainConfig | None = None, residual_base=None):
    """Minibatch Adam. Returns ``(trained_net, losses)`` with ``losses[e]`` the full-data loss after ``e`` epochs.

    With ``residual_base`` the prediction inside the loss is
    ``residual_base + network(X)``, compared against ``Y``.
    """
    cfg = cfg or TrainConfig()
    X = _check_input(net, X)
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (len(X), net.sizes[-1]):
        raise DimensionError(f"targets must have shape {(len(X), net.sizes[-1])}, got {Y.shape}")
    if residual_base is not None and np.shape(residual_base) != Y.shape:
        raise DimensionError("residual base must match the target shape")
    net = net.copy()
    if cfg.epochs == 0:
        return net, []
    # frozen standardisation
    net.x_mean = X.mean(axis=0)
    sx = X.std(axis=0)
    net.x_scale = np.where(sx > 0, sx, 1.0)
    E = Y if residual_base is None else Y - residual_base
    if cfg.standardize_targets:
        net.y_mean = E.mean(axis=0)
        sy = E.std(axis=0)
        net.y_scale = np.where(sy > 0, sy, 1.0)
    else:
        net.y_mean = np.zeros(Y.shape[1])
        net.y_scale = np.ones(Y.shape[1])
    Z = (X - net.x_mean) / net.x_scale
    T = _targets(net, Y, residual_base)

    params = net.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    rng = np.random.default_rng(cfg.seed)
    step = 0
    losses = [_loss_grad(net, Z, T)[0]]
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(Z))
        for a in range(0, len(Z), cfg.batch_size):
            idx = order[a : a + cfg.batch_size]
            loss, grads = _loss_grad(net, Z[idx], T[idx])
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite training loss at epoch {epoch}, step {step} (lr={cfg.lr}); lower the learning rate"
                )
            step += 1
            c1 = 1.0 - cfg.beta1**step
            c2 = 1.0 - cfg.beta2**step
            for p, g, mk, vk in zip(params, grads, m, v):
                mk *= cfg.beta1
                mk += (1 - cfg.beta1) * g
                vk *= cfg.beta2
                vk += (1 - cfg.beta2) * g * g
                p -= cfg.lr * (mk / c1) / (np.sqrt(vk / c2) + cfg.eps)
        full = _loss_grad(net, Z, T)[0]
        if not np.isfinite(full):
            raise NumericError(f"non-finite training loss after epoch {epoch} (lr={cfg.lr})")
        losses.append(full)
    return net, losses


def gradient_check(net: Mlp, X, Y, h: float = 1e-5, floor: float = 1e-6) -> float:
    """Largest relative gap between backprop and central-difference gradients.

    Works in the network's standardised units. Gaps are divided by
    ``max(|analytic|, |numeric|, floor)``; the floor keeps entries whose size is
    near the round-off of the difference quotient (about eps*loss/h) from
    dominating.
    """
    X = _check_input(net, X)
    Z = (X - net.x_mean) / net.x_scale
    T = _targets(net, Y, None)
    _, grads = _loss_grad(net, Z, T)
    worst = 0.0
    for p, g in zip(net.params(), grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            lp = _loss_grad(net, Z, T)[0]
            flat[i] = old - h
            lm = _loss_grad(net, Z, T)[0]
            flat[i] = old
            num = (lp - lm) / (2 * h)
            den = max(abs(gflat[i]), abs(num), floor)
            worst = max(worst, abs(gflat[i] - num) / den)
    return worst


def parameter_gradients(net: Mlp, X, Y) -> list:
    """Backprop gradients of the standardised MSE, ordered like :meth:`Mlp.params`."""
    X = _check_input(net, X)
    return _loss_grad(net, (X - net.x_mean) / net.x_scale, _targets(net, Y, None))[1]


__all__ = ["TrainConfig", "Mlp", "init_mlp", "forward", "train", "gradient_check", "parameter_gradients"]
