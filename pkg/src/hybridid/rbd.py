"""Rigid-body dynamics of fixed-base revolute serial chains.

All operations accept a single state (shape ``(n,)``) or a batch (shape
``(B, n)``) and return arrays of the matching rank. The compiled kernels
are used unless ``HYBRIDID_DISABLE_NUMBA`` is set.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import _rbd_kernels as _nb
from . import _rbd_numpy as _np
from ._accel import USE_NUMBA
from .errors import DimensionError, ModelError, NumericError

__all__ = [
    "RobotModel",
    "JointState",
    "load_model",
    "model_from_dict",
    "franka7_synthetic",
    "pendulum",
    "planar_2link",
    "inertia_matrix",
    "gravity_torque",
    "coriolis_torque",
    "inverse_dynamics",
    "forward_dynamics",
    "kinetic_energy",
    "inertial_torque",
]


def rpy_to_matrix(rpy) -> np.ndarray:
    """Fixed-axis roll/pitch/yaw to rotation matrix, R = Rz(yaw) Ry(pitch) Rx(roll)."""
    r, p, y = rpy
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def _frozen(a, shape=None):
    arr = np.array(a, dtype=float)
    if shape is not None and arr.shape != shape:
        raise ModelError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RobotModel:
    """Kinematic and inertial description of a revolute serial chain.

    Per-joint arrays have leading dimension ``n``. ``inertia`` is the 3x3
    rotational inertia about the link centre of mass, in the link frame.
    Construction only normalises array shapes; call :meth:`validate` (the
    loaders do) to enforce the physical invariants.
    """

    axes: np.ndarray
    origin_xyz: np.ndarray
    origin_rpy: np.ndarray
    mass: np.ndarray
    com: np.ndarray
    inertia: np.ndarray
    damping: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray
    qd_max: np.ndarray
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    name: str = "robot"

    def __post_init__(self):
        n = len(np.atleast_1d(self.mass))
        shapes = {
            "axes": (n, 3),
            "origin_xyz": (n, 3),
            "origin_rpy": (n, 3),
            "mass": (n,),
            "com": (n, 3),
            "inertia": (n, 3, 3),
            "damping": (n,),
            "q_min": (n,),
            "q_max": (n,),
            "qd_max": (n,),
            "gravity": (3,),
        }
        for key, shape in shapes.items():
            try:
                object.__setattr__(self, key, _frozen(getattr(self, key), shape))
            except ModelError as exc:
                raise ModelError(f"{key}: {exc}") from None
        R0 = np.array([rpy_to_matrix(r) for r in self.origin_rpy]).reshape(n, 3, 3)
        object.__setattr__(self, "_R0", _frozen(R0))

    @property
    def n(self) -> int:
        return self.mass.shape[0]

    @property
    def origin_rot(self) -> np.ndarray:
        return self._R0

    def validate(self) -> "RobotModel":
        for j in range(self.n):
            if abs(np.linalg.norm(self.axes[j]) - 1.0) > 1e-9:
                raise ModelError("axis must have unit norm", joint=j)
            if not self.mass[j] > 0:
                raise ModelError("mass must be positive", joint=j)
            I = self.inertia[j]
            if not np.allclose(I, I.T, atol=1e-12):
                raise ModelError("inertia must be symmetric", joint=j)
            if np.linalg.eigvalsh(I).min() < -1e-12:
                raise ModelError("inertia must be positive semidefinite", joint=j)
            if not self.damping[j] > 0:
                raise ModelError("damping must be positive", joint=j)
            if not self.q_min[j] < self.q_max[j]:
                raise ModelError("q_min must be below q_max", joint=j)
            if not self.qd_max[j] > 0:
                raise ModelError("qd_max must be positive", joint=j)
        for key in ("origin_xyz", "origin_rpy", "com", "gravity"):
            if not np.all(np.isfinite(getattr(self, key))):
                raise ModelError(f"{key} must be finite")
        return self

    def params(self):
        return (self._R0, self.origin_xyz, self.axes, self.mass, self.com, self.inertia)

    def with_gravity(self, g) -> "RobotModel":
        return replace(self, gravity=np.asarray(g, dtype=float))

    def to_dict(self) -> dict:
        joints = []
        for j in range(self.n):
            I = self.inertia[j]
            joints.append(
                {
                    "axis": self.axes[j].tolist(),
                    "origin_xyz": self.origin_xyz[j].tolist(),
                    "origin_rpy": self.origin_rpy[j].tolist(),
                    "mass": float(self.mass[j]),
                    "com": self.com[j].tolist(),
                    "inertia": [I[0, 0], I[0, 1], I[0, 2], I[1, 1], I[1, 2], I[2, 2]],
                    "damping": float(self.damping[j]),
                    "q_min": float(self.q_min[j]),
                    "q_max": float(self.q_max[j]),
                    "qd_max": float(self.qd_max[j]),
                }
            )
        return {"name": self.name, "gravity": self.gravity.tolist(), "joints": joints}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class JointState:
    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        qd = np.asarray(self.qd, dtype=float)
        if q.shape != qd.shape or q.ndim != 1:
            raise DimensionError(f"q and qd must be 1-D of equal length, got {q.shape} and {qd.shape}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qd", qd)


_JOINT_KEYS = ("axis", "origin_xyz", "origin_rpy", "mass", "com", "inertia", "damping", "q_min", "q_max", "qd_max")


def model_from_dict(doc: dict) -> RobotModel:
    """Build and validate a model from the JSON document layout."""
    try:
        joints = doc["joints"]
    except (KeyError, TypeError):
        raise ModelError("model document needs a 'joints' array") from None
    if not isinstance(joints, list) or not joints:
        raise ModelError("'joints' must be a non-empty array")
    cols = {k: [] for k in _JOINT_KEYS}
    for j, jd in enumerate(joints):
        for k in _JOINT_KEYS:
            if k not in jd:
                raise ModelError(f"missing field '{k}'", joint=j)
        try:
            ixx, ixy, ixz, iyy, iyz, izz = (float(v) for v in jd["inertia"])
            vals = {
                "axis": np.asarray(jd["axis"], dtype=float).reshape(3),
                "origin_xyz": np.asarray(jd["origin_xyz"], dtype=float).reshape(3),
                "origin_rpy": np.asarray(jd["origin_rpy"], dtype=float).reshape(3),
                "com": np.asarray(jd["com"], dtype=float).reshape(3),
                "inertia": np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]]),
            }
            for k in ("mass", "damping", "q_min", "q_max", "qd_max"):
                vals[k] = float(jd[k])
        except (TypeError, ValueError) as exc:
            raise ModelError(f"malformed value ({exc})", joint=j) from None
        for k in _JOINT_KEYS:
            cols[k].append(vals[k])
    model = RobotModel(
        axes=cols["axis"],
        origin_xyz=cols["origin_xyz"],
        origin_rpy=cols["origin_rpy"],
        mass=cols["mass"],
        com=cols["com"],
        inertia=cols["inertia"],
        damping=cols["damping"],
        q_min=cols["q_min"],
        q_max=cols["q_max"],
        qd_max=cols["qd_max"],
        gravity=doc.get("gravity", [0.0, 0.0, -9.81]),
        name=str(doc.get("name", "robot")),
    )
    return model.validate()


def load_model(source) -> RobotModel:
    """Load a model from a JSON path, or by built-in name (``franka7-synthetic``)."""
    if str(source) in _BUILTIN:
        text = resources.files("hybridid.data").joinpath(_BUILTIN[str(source)]).read_text()
    else:
        path = Path(source)
        if not path.is_file():
            raise ModelError(f"model file not found: {path}")
        text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"model file is not valid JSON: {exc}") from None
    return model_from_dict(doc)


_BUILTIN = {"franka7-synthetic": "franka7_synthetic.json"}


def franka7_synthetic() -> RobotModel:
    return load_model("franka7-synthetic")


def pendulum(mass=1.0, length=0.5, inertia_axis=0.02, damping=0.5, gravity=(0.0, 0.0, -9.81)) -> RobotModel:
    """Single revolute joint about the base y axis, COM at ``length`` along +x when q = 0."""
    I = np.diag([inertia_axis, inertia_axis, inertia_axis])
    return RobotModel(
        axes=[[0.0, 1.0, 0.0]],
        origin_xyz=[[0.0, 0.0, 0.0]],
        origin_rpy=[[0.0, 0.0, 0.0]],
        mass=[mass],
        com=[[length, 0.0, 0.0]],
        inertia=[I],
        damping=[damping],
        q_min=[-np.pi],
        q_max=[np.pi],
        qd_max=[10.0],
        gravity=gravity,
        name="pendulum",
    ).validate()


def planar_2link(m1=1.0, m2=0.8, l1=0.5, lc1=0.25, lc2=0.2, I1=0.02, I2=0.015, damping=(0.5, 0.3)) -> RobotModel:
    """Planar arm in the x-y plane with joint axes along z and gravity along -y."""
    return RobotModel(
        axes=[[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]],
        origin_xyz=[[0.0, 0.0, 0.0], [l1, 0.0, 0.0]],
        origin_rpy=np.zeros((2, 3)),
        mass=[m1, m2],
        com=[[lc1, 0.0, 0.0], [lc2, 0.0, 0.0]],
        inertia=[np.diag([I1, I1, I1]), np.diag([I2, I2, I2])],
        damping=damping,
        q_min=[-np.pi, -np.pi],
        q_max=[np.pi, np.pi],
        qd_max=[10.0, 10.0],
        gravity=[0.0, -9.81, 0.0],
        name="planar-2link",
    ).validate()


# -- dynamics ------------------------------------------------------------------


def _batch(model, *arrays):
    n = model.n
    first = np.asarray(arrays[0], dtype=float)
    single = first.ndim == 1
    out = []
    for a in arrays:
        a = np.asarray(a, dtype=float)
        if a.ndim == 1:
            a = a[None, :]
        if a.ndim != 2 or a.shape[1] != n:
            raise DimensionError(f"expected {n} joint values per row, got shape {np.shape(a)}")
        out.append(np.ascontiguousarray(a))
    rows = {a.shape[0] for a in out}
    if len(rows) != 1:
        raise DimensionError(f"row counts differ: {sorted(rows)}")
    return single, out


def _rnea(model, gravity, Q, QD, QDD):
    g = np.asarray(gravity, dtype=float)
    if USE_NUMBA:
        return _nb.rnea_batch(*model.params(), g, Q, QD, QDD)
    return _np.rnea(*model.params(), g, Q, QD, QDD)


def inverse_dynamics(model: RobotModel, q, qd, qdd) -> np.ndarray:
    """tau = M(q) qdd + C(q, qd) qd + tau_g(q), by recursive Newton-Euler."""
    single, (Q, QD, QDD) = _batch(model, q, qd, qdd)
    tau = _rnea(model, model.gravity, Q, QD, QDD)
    return tau[0] if single else tau


def gravity_torque(model: RobotModel, q) -> np.ndarray:
    single, (Q,) = _batch(model, q)
    Z = np.zeros_like(Q)
    tau = _rnea(model, model.gravity, Q, Z, Z)
    return tau[0] if single else tau


def coriolis_torque(model: RobotModel, q, qd) -> np.ndarray:
    """C(q, qd) qd, i.e. inverse dynamics at zero acceleration minus the gravity torque."""
    single, (Q, QD) = _batch(model, q, qd)
    # gravity-free recursion: identical to ID(q, qd, 0) - tau_g(q) without the cancellation
    tau = _rnea(model, np.zeros(3), Q, QD, np.zeros_like(Q))
    return tau[0] if single else tau


def inertia_matrix(model: RobotModel, q) -> np.ndarray:
    single, (Q,) = _batch(model, q)
    if USE_NUMBA:
        M = _nb.crba_batch(*model.params(), Q)
    else:
        M = _np.inertia_matrix(*model.params(), Q)
    return M[0] if single else M


def forward_dynamics(model: RobotModel, q, qd, tau_eff) -> np.ndarray:
    """qdd = M(q)^-1 (tau_eff - C(q, qd) qd - tau_g(q))."""
    single, (Q, QD, TAU) = _batch(model, q, qd, tau_eff)
    if USE_NUMBA:
        qdd, ok = _nb.forward_batch(*model.params(), model.gravity, Q, QD, TAU)
    else:
        qdd, ok = _np.forward(*model.params(), model.gravity, Q, QD, TAU)
    if not ok:
        raise NumericError(f"inertia matrix of model '{model.name}' is numerically singular")
    return qdd[0] if single else qdd


def kinetic_energy(model: RobotModel, q, qd) -> np.ndarray:
    M = inertia_matrix(model, q)
    qd = np.asarray(qd, dtype=float)
    if qd.ndim == 1:
        return 0.5 * qd @ M @ qd
    return 0.5 * np.einsum("bi,bij,bj->b", qd, M, qd)




def inertial_torque(model: RobotModel, q, qdd) -> np.ndarray:
    """M(q) qdd without forming M: inverse dynamics with no gravity and no velocity."""
    single, (Q, QDD) = _batch(model, q, qdd)
    tau = _rnea(model, np.zeros(3), Q, np.zeros_like(Q), QDD)
    return tau[0] if single else tau
