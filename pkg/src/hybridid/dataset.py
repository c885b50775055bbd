"""Regressor construction, residual targets, dataset persistence and external ingestion.

Feature layout is fixed: for an n-joint robot the 7n columns are
``q | qd | qdd | qddd | tau_i | tau_c | tau_g``, each block ordered by joint.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError
from .numdiff import DiffConfig, derive_chain, midpoint_chain
from .rbd import RobotModel, coriolis_torque, gravity_torque, inertial_torque
from .sim import Rollout

BLOCKS = ("q", "qd", "qdd", "qddd", "tau_i", "tau_c", "tau_g")


def feature_names(n: int) -> list[str]:
    return [f"{b}{j + 1}" for b in BLOCKS for j in range(n)]


def block_slice(block: str, n: int) -> slice:
    k = BLOCKS.index(block)
    return slice(k * n, (k + 1) * n)


@dataclass
class FeatureMatrix:
    values: np.ndarray
    names: list

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise DimensionError(f"feature matrix shape {self.values.shape} does not match {len(self.names)} names")
        if len(self.names) % len(BLOCKS):
            raise DimensionError("feature count must be a multiple of 7")
        if not np.all(np.isfinite(self.values)):
            raise DataError("feature matrix contains non-finite entries")

    @property
    def n(self) -> int:
        return len(self.names) // len(BLOCKS)

    def block(self, name: str) -> np.ndarray:
        return self.values[:, block_slice(name, self.n)]

    def tau_rbd(self) -> np.ndarray:
        return self.block("tau_i") + self.block("tau_c") + self.block("tau_g")

    def __len__(self):
        return self.values.shape[0]


@dataclass
class TargetMatrix:
    values: np.ndarray
    kind: str = "motor"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.kind not in ("motor", "residual"):
            raise DataError(f"unknown target kind '{self.kind}'")
        if not np.all(np.isfinite(self.values)):
            raise DataError("target matrix contains non-finite entries")

    def __len__(self):
        return self.values.shape[0]


def _rollout_dt(r: Rollout) -> float:
    return float((r.t[-1] - r.t[0]) / (len(r.t) - 1))


def build_features(rollout: Rollout, model: RobotModel, diff: DiffConfig | None = None):
    """Feature rows for every recorded torque sample. Returns ``(FeatureMatrix, TargetMatrix)``.

    Accelerations and jerks come from differentiating the recorded velocity.
    With ``diff.align == "interval"`` torque sample k is paired with the state
    and derivatives at the middle of [t_k, t_k+1], the interval over which it
    was applied; with ``"sample"`` it is paired with the state at t_k.
    """
    diff = diff or DiffConfig()
    if rollout.n != model.n:
        raise DimensionError(f"rollout has {rollout.n} joints, model has {model.n}")
    if len(rollout) < 5:
        raise DataError("need at least 5 samples to build features")
    dt = _rollout_dt(rollout)
    m = len(rollout.tau)
    if diff.align == "interval":
        if m != len(rollout) - 1:
            raise DataError("interval alignment needs one torque per sample interval")
        q = 0.5 * (rollout.q[1:] + rollout.q[:-1])
        qd = 0.5 * (rollout.qd[1:] + rollout.qd[:-1])
        qdd, qddd = midpoint_chain(rollout.qd, dt, diff)
    else:
        qdd, qddd = derive_chain(rollout.qd, dt, diff, start=1)
        q, qd, qdd, qddd = rollout.q[:m], rollout.qd[:m], qdd[:m], qddd[:m]
    if not (np.all(np.isfinite(qdd)) and np.all(np.isfinite(qddd))):
        raise DataError("non-finite derivative estimates")
    tau_i = inertial_torque(model, q, qdd)
    tau_c = coriolis_torque(model, q, qd)
    tau_g = gravity_torque(model, q)
    X = np.hstack([q, qd, qdd, qddd, tau_i, tau_c, tau_g])
    return FeatureMatrix(X, feature_names(model.n)), TargetMatrix(rollout.tau.copy(), "motor")


def residual_targets(Y: TargetMatrix, X: FeatureMatrix, model: RobotModel | None = None) -> TargetMatrix:
    """tau_m - (tau_i + tau_c + tau_g), using the torque columns already in ``X``."""
    if Y.kind != "motor":
        raise DataError("targets are already residuals")
    if model is not None and model.n != X.n:
        raise DimensionError(f"model has {model.n} joints, features have {X.n}")
    if len(Y) != len(X):
        raise DimensionError("feature and target row counts differ")
    return TargetMatrix(Y.values - X.tau_rbd(), "residual")


# -- datasets -------------------------------------------------------------------


def rollout_digest(r: Rollout) -> str:
    h = hashlib.sha256()
    for a in (r.t, r.q, r.qd, r.tau):
        h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return h.hexdigest()


@dataclass
class Dataset:
    """Train/test feature and target matrices plus provenance."""

    splits: dict  # name -> (FeatureMatrix, TargetMatrix)
    provenance: dict = field(default_factory=dict)

    def X(self, split="train") -> FeatureMatrix:
        return self._get(split)[0]

    def Y(self, split="train") -> TargetMatrix:
        return self._get(split)[1]

    def _get(self, split):
        if split not in self.splits:
            raise DataError(f"dataset has no '{split}' split")
        return self.splits[split]

    @property
    def names(self) -> list:
        return next(iter(self.splits.values()))[0].names

    @property
    def digest(self) -> str:
        blob = json.dumps(self.provenance, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        meta = {
            "columns": self.names,
            "provenance": self.provenance,
            "digest": self.digest,
            "splits": {},
        }
        for split, (X, Y) in self.splits.items():
            _write_matrix(d / f"X_{split}.csv", X.names, X.values)
            _write_matrix(d / f"Y_{split}.csv", [f"tau{j + 1}" for j in range(Y.values.shape[1])], Y.values)
            meta["splits"][split] = {"rows": len(X), "target_kind": Y.kind}
        (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return d

    @classmethod
    def load(cls, directory) -> "Dataset":
        d = Path(directory)
        if not (d / "meta.json").is_file():
            raise DataError(f"no dataset found in {d} (missing meta.json)")
        meta = json.loads((d / "meta.json").read_text())
        splits = {}
        for split, info in meta["splits"].items():
            names, X = _read_matrix(d / f"X_{split}.csv")
            _, Y = _read_matrix(d / f"Y_{split}.csv")
            if names != meta["columns"]:
                raise DataError(f"column registry mismatch in X_{split}.csv")
            splits[split] = (FeatureMatrix(X, names), TargetMatrix(Y, info["target_kind"]))
        ds = cls(splits, meta["provenance"])
        if ds.digest != meta.get("digest"):
            raise DataError("dataset provenance digest does not match meta.json")
        return ds


def _write_matrix(path, header, values):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in values:
            w.writerow([repr(float(v)) for v in row])


def _read_matrix(path):
    if not Path(path).is_file():
        raise DataError(f"missing dataset file {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    values = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    return header, values


def assemble(train: list, test: list, model: RobotModel, diff: DiffConfig, sources=None) -> Dataset:
    """Build features for each rollout and stack them per split."""
    sources = sources or {}
    splits = {}
    prov = {"model": model.digest(), "diff": diff.to_dict(), "rollouts": {}}
    for name, rollouts in (("train", train), ("test", test)):
        if not rollouts:
            continue
        Xs, Ys = [], []
        for r in rollouts:
            X, Y = build_features(r, model, diff)
            Xs.append(X.values)
            Ys.append(Y.values)
        names = feature_names(model.n)
        splits[name] = (FeatureMatrix(np.vstack(Xs), names), TargetMatrix(np.vstack(Ys), "motor"))
        prov["rollouts"][name] = [
            {"digest": rollout_digest(r), "rows": len(r.tau), "source": str(s)}
            for r, s in zip(rollouts, sources.get(name, [""] * len(rollouts)))
        ]
    if "train" in splits and "test" in splits:
        a = {x["digest"] for x in prov["rollouts"]["train"]}
        b = {x["digest"] for x in prov["rollouts"]["test"]}
        if a & b:
            raise DataError("train and test splits share a rollout")
    return Dataset(splits, prov)


# -- external data ----------------------------------------------------------------


@dataclass
class ColumnMap:
    """Assignment of file columns to time, positions, torques and (optionally) velocities."""

    t: str
    q: list
    tau: list
    qd: list | None = None
    delimiter: str = ","
    test: list | None = None  # explicit test files; default: last file in lexicographic order
    n_test: int = 1

    @classmethod
    def from_dict(cls, doc: dict) -> "ColumnMap":
        missing = [k for k in ("t", "q", "tau") if k not in doc]
        if missing:
            raise DataError(f"column map lacks required keys: {missing}")
        known = {"t", "q", "tau", "qd", "delimiter", "test", "n_test"}
        return cls(**{k: v for k, v in doc.items() if k in known})

    @classmethod
    def identity(cls, n: int) -> "ColumnMap":
        return cls(
            t="t",
            q=[f"q{j + 1}" for j in range(n)],
            qd=[f"qd{j + 1}" for j in range(n)],
            tau=[f"taum{j + 1}" for j in range(n)],
        )


def _read_columns(path: Path, cmap: ColumnMap):
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=cmap.delimiter)
        rows = [r for r in reader if r]
    if len(rows) < 2:
        raise DataError(f"{path.name}: no data rows")
    header = [h.strip() for h in rows[0]]
    index = {h: i for i, h in enumerate(header)}
    wanted = [cmap.t, *cmap.q, *cmap.tau, *(cmap.qd or [])]
    for name in wanted:
        if name not in index:
            raise DataError(f"{path.name}: missing column '{name}'")

    def col(name):
        out = np.empty(len(rows) - 1)
        for k, r in enumerate(rows[1:]):
            v = r[index[name]].strip() if index[name] < len(r) else ""
            out[k] = float(v) if v != "" else np.nan
        return out

    return {name: col(name) for name in wanted}


def ingest_external(directory, column_map, model: RobotModel, diff: DiffConfig | None = None):
    """Read every ``*.csv``/``*.txt`` file in ``directory`` into a :class:`Rollout`.

    Returns ``(rollouts, split)`` where ``split`` maps file names to "train" or
    "test". Velocities are estimated with ``diff`` (TVR by default) when the
    map has none. The torque on the final row is not used.
    """
    diff = diff or DiffConfig(method="tvr")
    cmap = column_map if isinstance(column_map, ColumnMap) else ColumnMap.from_dict(column_map)
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"not a directory: {d}")
    files = sorted(p for p in d.iterdir() if p.suffix in (".csv", ".txt") and p.is_file())
    if not files:
        raise DataError(f"no data files in {d}")
    if len(cmap.q) != model.n or len(cmap.tau) != model.n or (cmap.qd is not None and len(cmap.qd) != model.n):
        raise DimensionError(f"column map must name {model.n} columns per joint signal")
    rollouts = []
    for path in files:
        cols = _read_columns(path, cmap)
        t = cols[cmap.t]
        q = np.column_stack([cols[c] for c in cmap.q])
        tau = np.column_stack([cols[c] for c in cmap.tau])
        last_tau_empty = np.all(np.isnan(tau[-1]))
        tau = tau[:-1]
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(q)) and np.all(np.isfinite(tau))):
            raise DataError(f"{path.name}: NaN or missing values")
        if len(t) < 5:
            raise DataError(f"{path.name}: too few samples")
        steps = np.diff(t)
        dt = float(np.median(steps))
        if not dt > 0 or np.max(np.abs(steps - dt)) > 0.01 * dt:
            raise DataError(f"{path.name}: sampling is not uniform within 1% jitter")
        if cmap.qd is not None:
            qd = np.column_stack([cols[c] for c in cmap.qd])
            if not np.all(np.isfinite(qd)):
                raise DataError(f"{path.name}: NaN or missing velocity values")
        else:
            qd = derive_chain(q, (t[-1] - t[0]) / (len(t) - 1), diff)[0]
        nan = np.full_like(q, np.nan)
        meta = {"source": path.name, "last_row_torque_empty": bool(last_tau_empty)}
        rollouts.append(Rollout(t, q, qd, tau, nan, nan, meta))
    names = [p.name for p in files]
    test = list(cmap.test) if cmap.test is not None else names[-cmap.n_test :]
    unknown = set(test) - set(names)
    if unknown:
        raise DataError(f"test files not found: {sorted(unknown)}")
    split = {name: ("test" if name in test else "train") for name in names}
    if all(v == "test" for v in split.values()):
        raise DataError("no training files left after the split")
    return rollouts, split
