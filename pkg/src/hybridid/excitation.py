"""Random multi-sine reference trajectories scaled into joint limits."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class MultiSineSpec:
    n_modes: int = 5
    amplitude: tuple = (0.1, 1.0)  # rad
    frequency: tuple = (0.05, 0.5)  # Hz
    margin: float = 0.1  # rad
    eps: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        a_lo, a_hi = self.amplitude
        f_lo, f_hi = self.frequency
        if self.n_modes < 1:
            raise ConfigError("n_modes must be >= 1")
        if not 0 < a_lo <= a_hi:
            raise ConfigError("amplitude range must satisfy 0 < lo <= hi")
        if not 0 < f_lo <= f_hi:
            raise ConfigError("frequency range must satisfy 0 < lo <= hi")
        if self.margin < 0:
            raise ConfigError("margin must be >= 0")
        if not 0 < self.eps < 1e-3:
            raise ConfigError("eps must be small and positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        for k in ("amplitude", "frequency"):
            if k in doc:
                doc[k] = tuple(doc[k])
        return cls(**doc)


@dataclass(frozen=True)
class Modes:
    """Per-joint sine parameters, arrays of shape (n_joints, n_modes)."""

    amplitude: np.ndarray
    frequency: np.ndarray
    phase: np.ndarray


def draw_modes(spec: MultiSineSpec, n: int, rng: np.random.Generator) -> Modes:
    shape = (n, spec.n_modes)
    a = rng.uniform(spec.amplitude[0], spec.amplitude[1], shape)
    f = rng.uniform(spec.frequency[0], spec.frequency[1], shape)
    phi = rng.uniform(0.0, 2 * np.pi, shape)
    return Modes(a, f, phi)


def multisine(modes: Modes, t):
    """Sampled sine sums and their analytic time derivatives, each (len(t), n)."""
    t = np.asarray(t, dtype=float)
    w = 2 * np.pi * modes.frequency  # (n, m)
    arg = w[None] * t[:, None, None] + modes.phase[None]  # (N, n, m)
    q = np.sum(modes.amplitude[None] * np.sin(arg), axis=-1)
    qd = np.sum(modes.amplitude[None] * w[None] * np.cos(arg), axis=-1)
    return q, qd


def sample_initial_config(q_min, q_max, margin, rng: np.random.Generator) -> np.ndarray:
    lo = np.asarray(q_min, dtype=float) + margin
    hi = np.asarray(q_max, dtype=float) - margin
    if np.any(lo >= hi):
        bad = np.flatnonzero(lo >= hi).tolist()
        raise ConfigError(f"margin {margin} leaves an empty sampling interval for joints {bad}")
    return rng.uniform(lo, hi)


def scale_to_limits(q0, q_raw, qd_raw, q_min, q_max, qd_max, margin, eps=1e-9):
    """Per-joint scaling of the raw signals. Returns ``(q_ref, qd_ref, s)``.

    One factor per joint scales position and velocity together; it may
    exceed 1. Raises :class:`DataError` if ``q0`` leaves no position margin.
    """
    q0 = np.asarray(q0, dtype=float)
    r = np.minimum(np.asarray(q_max) - q0, q0 - np.asarray(q_min)) - margin
    if np.any(r <= 0):
        raise DataError(f"initial configuration too close to a limit on joints {np.flatnonzero(r <= 0).tolist()}")
    alpha_pos = r / (np.max(np.abs(q_raw), axis=0) + eps)
    alpha_vel = np.asarray(qd_max, dtype=float) / (np.max(np.abs(qd_raw), axis=0) + eps)
    s = np.minimum(alpha_pos, alpha_vel)
    return q0 + s * q_raw, s * qd_raw, s


def generate_reference(model, spec: MultiSineSpec, t, rng: np.random.Generator, max_tries: int = 100):
    """Draw ``q0`` and sine modes until the scaling is feasible.

    Returns ``(q_ref, qd_ref, q0, modes, s)``.
    """
    for _ in range(max_tries):
        q0 = sample_initial_config(model.q_min, model.q_max, spec.margin, rng)
        modes = draw_modes(spec, model.n, rng)
        q_raw, qd_raw = multisine(modes, t)
        try:
            q_ref, qd_ref, s = scale_to_limits(
                q0, q_raw, qd_raw, model.q_min, model.q_max, model.qd_max, spec.margin, spec.eps
            )
        except DataError:
            continue
        return q_ref, qd_ref, q0, modes, s
    raise DataError(f"no feasible reference after {max_tries} draws")
