"""Closed-loop simulation: viscous damping, semi-implicit Euler, controller rollouts."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _rbd_kernels as _nb
from . import _rbd_numpy as _np
from ._accel import USE_NUMBA
from .errors import ConfigError, DataError, DimensionError, NumericError
from .rbd import JointState, RobotModel

__all__ = ["SimConfig", "Rollout", "damping_torque", "step", "rollout"]


@dataclass(frozen=True)
class SimConfig:
    dt_env: float = 0.01
    substeps: int = 10
    horizon: float = 10.0
    blowup: float = 100.0  # rad/s

    def __post_init__(self):
        if not self.dt_env > 0:
            raise ConfigError("dt_env must be positive")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ConfigError("substeps must be a positive integer")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")

    @property
    def dt_sim(self) -> float:
        return self.dt_env / self.substeps

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt_env))

    def tgrid(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt_env

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


@dataclass
class Rollout:
    """Recorded trajectory: N+1 states, N motor torques, references on the same grid."""

    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    tau: np.ndarray
    q_ref: np.ndarray
    qd_ref: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        N1 = len(self.t)
        n = np.shape(self.q)[1]
        for name, rows in (("q", N1), ("qd", N1), ("q_ref", N1), ("qd_ref", N1), ("tau", N1 - 1)):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (rows, n):
                raise DimensionError(f"rollout field {name} has shape {arr.shape}, expected {(rows, n)}")
            setattr(self, name, arr)
        self.t = np.asarray(self.t, dtype=float)
        if N1 > 1 and not np.all(np.diff(self.t) > 0):
            raise DataError("rollout timestamps must be strictly increasing")

    @property
    def n(self) -> int:
        return self.q.shape[1]

    def __len__(self):
        return len(self.t)

    def header(self):
        n = self.n
        cols = ["t"]
        for prefix in ("q", "qd", "taum", "qstar", "qdstar"):
            cols += [f"{prefix}{j + 1}" for j in range(n)]
        return cols

    def save(self, path) -> None:
        """Write ``<path>.csv`` plus a ``<path>.json`` sidecar holding ``meta``."""
        path = Path(path).with_suffix("")
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path.with_suffix(".csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header())
            for k in range(len(self.t)):
                tau = [_fmt(v) for v in self.tau[k]] if k < len(self.tau) else [""] * self.n
                row = [_fmt(self.t[k])]
                row += [_fmt(v) for v in self.q[k]]
                row += [_fmt(v) for v in self.qd[k]]
                row += tau
                row += [_fmt(v) for v in self.q_ref[k]]
                row += [_fmt(v) for v in self.qd_ref[k]]
                w.writerow(row)
        with open(path.with_suffix(".json"), "w") as fh:
            json.dump(self.meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Rollout":
        path = Path(path).with_suffix("")
        csv_path = path.with_suffix(".csv")
        if not csv_path.is_file():
            raise DataError(f"rollout file not found: {csv_path}")
        with open(csv_path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        n = (len(header) - 1) // 5
        if len(header) != 1 + 5 * n or not body:
            raise DataError(f"malformed rollout header in {csv_path}")
        data = np.array([[float(v) if v != "" else np.nan for v in r] for r in body])
        cols = lambda k: data[:, 1 + k * n : 1 + (k + 1) * n]  # noqa: E731
        meta = {}
        if path.with_suffix(".json").is_file():
            meta = json.loads(path.with_suffix(".json").read_text())
        return cls(data[:, 0], cols(0), cols(1), cols(2)[:-1], cols(3), cols(4), meta)


def _fmt(x: float) -> str:
    return repr(float(x))


def damping_torque(model: RobotModel, qd) -> np.ndarray:
    qd = np.asarray(qd, dtype=float)
    if qd.shape[-1] != model.n:
        raise DimensionError(f"expected {model.n} velocities, got shape {qd.shape}")
    return model.damping * qd


def _check_finite(*arrays, what="state"):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite {what}")


def step(model: RobotModel, state: JointState, tau_m, dt_sim: float) -> JointState:
    """Advance one integration step: velocity first, then position with the new velocity."""
    if not dt_sim > 0:
        raise ConfigError("dt_sim must be positive")
    tau_m = np.asarray(tau_m, dtype=float)
    if tau_m.shape != (model.n,) or state.q.shape != (model.n,):
        raise DimensionError("state/torque dimension mismatch")
    _check_finite(state.q, state.qd)
    _check_finite(tau_m, what="torque")
    q, qd, ok = _integrate(model, state.q, state.qd, tau_m, dt_sim, 1)
    if not ok:
        raise NumericError("singular inertia matrix during integration")
    return JointState(q, qd)


def _integrate(model, q, qd, tau_m, dt, substeps):
    if USE_NUMBA:
        return _nb.integrate_held_torque(
            *model.params(), model.gravity, model.damping, q, qd, tau_m, dt, substeps
        )
    q = q[None].copy()
    qd = qd[None].copy()
    for _ in range(substeps):
        qdd, ok = _np.forward(*model.params(), model.gravity, q, qd, (tau_m - model.damping * qd[0])[None])
        if not ok:
            return q[0], qd[0], False
        qd = qd + dt * qdd
        q = q + dt * qd
    return q[0], qd[0], True


def rollout(model: RobotModel, controller, q_ref, qd_ref, cfg: SimConfig, meta=None) -> Rollout:
    """Simulate the closed loop along a reference sampled on ``cfg.tgrid()``.

    The controller is called once per environment step and its torque is held
    over ``cfg.substeps`` integration steps.
    """
    t = cfg.tgrid()
    q_ref = np.asarray(q_ref, dtype=float)
    qd_ref = np.asarray(qd_ref, dtype=float)
    if q_ref.shape != (len(t), model.n) or qd_ref.shape != q_ref.shape:
        raise DimensionError(f"reference must have shape {(len(t), model.n)}, got {q_ref.shape}")
    N = cfg.n_steps
    Q = np.empty((N + 1, model.n))
    QD = np.empty((N + 1, model.n))
    TAU = np.empty((N, model.n))
    q = q_ref[0].copy()
    qd = qd_ref[0].copy()
    Q[0], QD[0] = q, qd
    ctrl = controller.initial_state(model.n)
    for k in range(N):
        tau, ctrl = controller(model, JointState(q, qd), q_ref[k], qd_ref[k], ctrl, cfg.dt_env)
        if not np.all(np.isfinite(tau)):
            raise NumericError(f"controller returned non-finite torque at step {k}")
        q, qd, ok = _integrate(model, q, qd, tau, cfg.dt_sim, cfg.substeps)
        if not ok:
            raise NumericError(f"singular inertia matrix at step {k}")
        if not np.all(np.isfinite(qd)) or np.max(np.abs(qd)) > cfg.blowup:
            raise NumericError(
                f"simulation diverged at step {k} (t={t[k + 1]:.3f} s): max |qd| = {np.max(np.abs(qd)):.3g} rad/s"
            )
        TAU[k] = tau
        Q[k + 1], QD[k + 1] = q, qd
    return Rollout(t, Q, QD, TAU, q_ref, qd_ref, dict(meta or {}))
