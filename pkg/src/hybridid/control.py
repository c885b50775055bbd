"""Joint-space PID with gravity compensation and a clipped integral state."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, NumericError
from .rbd import JointState, RobotModel, gravity_torque


@dataclass(frozen=True)
class PidGains:
    """Diagonal gains; ``clip`` bounds the integral state (rad*s) componentwise."""

    kp: np.ndarray
    ki: np.ndarray
    kd: np.ndarray
    clip: np.ndarray

    def __post_init__(self):
        for name in ("kp", "ki", "kd", "clip"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arr)
        if np.any(self.kp < 0) or np.any(self.ki < 0) or np.any(self.kd < 0):
            raise ConfigError("PID gains must be non-negative")
        if np.any(self.clip <= 0):
            raise ConfigError("integral clip bound must be positive")

    @classmethod
    def uniform(cls, n, kp=200.0, ki=20.0, kd=20.0, clip=2.0):
        return cls(*(np.full(n, float(v)) for v in (kp, ki, kd, clip)))

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("kp", "ki", "kd", "clip")}

    @classmethod
    def from_dict(cls, doc: dict, n: int) -> "PidGains":
        vals = []
        for k, default in (("kp", 200.0), ("ki", 20.0), ("kd", 20.0), ("clip", 2.0)):
            v = np.asarray(doc.get(k, default), dtype=float)
            try:
                vals.append(np.broadcast_to(v, (n,)).copy())
            except ValueError:
                raise ConfigError(f"controller gain '{k}' has {v.size} entries for {n} joints") from None
        return cls(*vals)


# Gains for the built-in 7-joint arm. The integral gain is a tenth of the
# proportional one; derivative gains keep every joint well damped.
FRANKA_GAINS = {
    "kp": [800.0, 800.0, 500.0, 500.0, 250.0, 200.0, 150.0],
    "ki": [80.0, 80.0, 50.0, 50.0, 25.0, 20.0, 15.0],
    "kd": [60.0, 60.0, 40.0, 40.0, 20.0, 15.0, 12.0],
    "clip": [2.0] * 7,
}


def pid_step(gains: PidGains, model: RobotModel, state: JointState, q_ref, qd_ref, integral, dt_env):
    """One controller update. Returns ``(tau_m, new_integral)``.

    The integral accumulates the position error at the controller period and
    is clipped after accumulation.
    """
    q_ref = np.asarray(q_ref, dtype=float)
    qd_ref = np.asarray(qd_ref, dtype=float)
    integral = np.asarray(integral, dtype=float)
    n = model.n
    for arr in (state.q, q_ref, qd_ref, integral):
        if arr.shape != (n,):
            raise DimensionError(f"expected {n} values, got shape {arr.shape}")
    if not (
        np.all(np.isfinite(state.q))
        and np.all(np.isfinite(state.qd))
        and np.all(np.isfinite(q_ref))
        and np.all(np.isfinite(qd_ref))
        and np.all(np.isfinite(integral))
    ):
        raise NumericError("non-finite controller input")
    err = q_ref - state.q
    integral = np.clip(integral + err * dt_env, -gains.clip, gains.clip)
    tau = gravity_torque(model, state.q) + gains.kp * err + gains.ki * integral + gains.kd * (qd_ref - state.qd)
    return tau, integral


class PidController:
    """Stateless wrapper: the integral travels in and out explicitly."""

    def __init__(self, gains: PidGains):
        self.gains = gains

    def initial_state(self, n: int) -> np.ndarray:
        return np.zeros(n)

    def __call__(self, model, state, q_ref, qd_ref, ctrl_state, dt_env):
        return pid_step(self.gains, model, state, q_ref, qd_ref, ctrl_state, dt_env)
