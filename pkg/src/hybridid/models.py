"""Method orchestration: fitting the seven model kinds, hybrid prediction, metrics and reports."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import mlp, sparsereg, symreg
from .dataset import Dataset, FeatureMatrix, residual_targets
from .errors import ConfigError, DataError, DimensionError
from .rbd import RobotModel

KINDS = ("sr", "sindy", "r-sr", "r-sindy", "r-sindy-sr", "nn", "r-nn")
RESIDUAL_KINDS = {"r-sr", "r-sindy", "r-sindy-sr", "r-nn"}

# Symbolic search settings used by the pipeline: smaller than the engine
# defaults, with early stopping doing most of the work.
PIPELINE_SYMREG = {"population": 300, "restarts": 1, "batch_size": 2000, "patience": 15}
STLSQ_DEFAULTS = {"threshold": 0.01, "alpha": 1e-4, "max_iter": 100, "standardize": False}


def default_config(kind: str) -> dict:
    if kind in ("sr", "r-sr"):
        return {"symreg": dict(PIPELINE_SYMREG)}
    if kind in ("sindy", "r-sindy"):
        return {"stlsq": dict(STLSQ_DEFAULTS)}
    if kind == "r-sindy-sr":
        return {"stlsq": dict(STLSQ_DEFAULTS), "symreg": dict(PIPELINE_SYMREG)}
    if kind in ("nn", "r-nn"):
        return {"mlp": mlp.TrainConfig().to_dict(), "hidden": [128, 128]}
    raise ConfigError(f"unknown method kind '{kind}'")


@dataclass
class MethodSpec:
    kind: str
    config: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown method kind '{self.kind}'; expected one of {', '.join(KINDS)}")
        merged = default_config(self.kind)
        for key, val in (self.config or {}).items():
            if key not in merged:
                raise ConfigError(f"config key '{key}' does not apply to method '{self.kind}'")
            merged[key] = {**merged[key], **val} if isinstance(val, dict) else val
        self.config = merged
        # validate eagerly so bad configs fail before any training
        if "symreg" in merged:
            symreg.SymRegConfig(**merged["symreg"])
        if "mlp" in merged:
            mlp.TrainConfig(**merged["mlp"])

    def to_dict(self):
        return {"kind": self.kind, "config": self.config, "seed": self.seed}


@dataclass
class TrainedModel:
    kind: str
    names: list
    stage1: object  # list of expressions | (SparseLinearModel, PolyLibrary) | Mlp
    stage2: list | None = None
    provenance: dict = field(default_factory=dict)
    fronts: list | None = None

    @property
    def residual(self) -> bool:
        return self.kind in RESIDUAL_KINDS

    def to_dict(self) -> dict:
        doc = {"kind": self.kind, "residual": self.residual, "names": list(self.names), "provenance": self.provenance}
        doc["stage1"] = _stage_to_dict(self.kind, self.stage1, self.names, self.fronts)
        if self.stage2 is not None:
            doc["stage2"] = _exprs_to_dict(self.stage2, self.names)
        return doc

    @classmethod
    def from_dict(cls, doc) -> "TrainedModel":
        kind = doc["kind"]
        s1 = doc["stage1"]
        if kind in ("sr", "r-sr"):
            stage1 = [symreg.from_dict(e["tree"]) for e in s1["expressions"]]
        elif kind in ("sindy", "r-sindy", "r-sindy-sr"):
            stage1 = sparsereg.SparseLinearModel.from_dict(s1)
        else:
            stage1 = mlp.Mlp.from_dict(s1)
        stage2 = None
        if "stage2" in doc:
            stage2 = [symreg.from_dict(e["tree"]) for e in doc["stage2"]["expressions"]]
        return cls(kind, list(doc["names"]), stage1, stage2, doc.get("provenance", {}))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TrainedModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _exprs_to_dict(exprs, names, fronts=None):
    out = {"expressions": [{"tree": symreg.to_dict(e), "infix": symreg.render(e, names)} for e in exprs]}
    if fronts is not None:
        out["fronts"] = [f.to_list(names) for f in fronts]
    return out


def _stage_to_dict(kind, stage, names, fronts=None):
    if kind in ("sr", "r-sr"):
        return _exprs_to_dict(stage, names, fronts)
    if kind in ("sindy", "r-sindy", "r-sindy-sr"):
        model, lib = stage
        return model.to_dict(lib)
    return stage.to_dict()


def _joint_seed(seed: int, j: int) -> int:
    return int(np.random.SeedSequence([int(seed), j]).generate_state(1)[0])


def _fit_symbolic_columns(X, Y, cfg_doc, seed, refine=True):
    exprs, fronts = [], []
    for j in range(Y.shape[1]):
        cfg = symreg.SymRegConfig(**{**cfg_doc, "seed": _joint_seed(seed, j)})
        front = symreg.fit_symbolic(X, Y[:, j], cfg)
        expr = symreg.select_model(front)
        if refine:
            expr, _ = symreg.refine_constants(expr, X, Y[:, j], cfg.golden_iterations)
        exprs.append(expr)
        fronts.append(front)
    return exprs, fronts


def _fit_sparse(X, Y, cfg_doc):
    lib = sparsereg.PolyLibrary(len(X.names), tuple(X.names))
    model = sparsereg.fit(lib, X.values, Y, **cfg_doc)
    return model, lib


def _provenance(spec: MethodSpec, dataset: Dataset, robot: RobotModel | None):
    return {
        "method": spec.to_dict(),
        "dataset": dataset.digest,
        "model": robot.digest() if robot is not None else None,
        "columns": hashlib.sha256(",".join(dataset.names).encode()).hexdigest(),
    }


def train_method(spec: MethodSpec, dataset: Dataset, robot: RobotModel | None = None) -> TrainedModel:
    X = dataset.X("train")
    Y = dataset.Y("train")
    if robot is not None and robot.n != X.n:
        raise DimensionError(f"robot has {robot.n} joints, dataset has {X.n}")
    kind, cfg = spec.kind, spec.config
    target = Y.values if kind in ("sr", "sindy", "nn") else residual_targets(Y, X).values
    prov = _provenance(spec, dataset, robot)
    if kind in ("sr", "r-sr"):
        exprs, fronts = _fit_symbolic_columns(X.values, target, cfg["symreg"], spec.seed)
        return TrainedModel(kind, X.names, exprs, None, prov, fronts)
    if kind in ("sindy", "r-sindy"):
        return TrainedModel(kind, X.names, _fit_sparse(X, target, cfg["stlsq"]), None, prov)
    if kind == "r-sindy-sr":
        stage1 = _fit_sparse(X, target, cfg["stlsq"])
        first = TrainedModel("r-sindy", X.names, stage1)
        y2 = Y.values - predict(first, X)
        exprs, _ = _fit_symbolic_columns(X.values, y2, cfg["symreg"], spec.seed)
        # a second stage that does not lower the training error is replaced by zero
        for j, e in enumerate(exprs):
            r = y2[:, j] - symreg.evaluate(e, X.values)
            if not float(r @ r) <= float(y2[:, j] @ y2[:, j]):
                exprs[j] = symreg.Const(0.0)
        return TrainedModel(kind, X.names, stage1, exprs, prov)
    # neural networks
    sizes = (X.values.shape[1], *cfg["hidden"], Y.values.shape[1])
    net = mlp.init_mlp(sizes, seed=spec.seed)
    tcfg = mlp.TrainConfig(**{**cfg["mlp"], "seed": spec.seed})
    base = X.tau_rbd() if kind == "r-nn" else None
    net, losses = mlp.train(net, X.values, Y.values, tcfg, residual_base=base)
    prov["losses"] = losses
    return TrainedModel(kind, X.names, net, None, prov)


def _check_registry(model: TrainedModel, X: FeatureMatrix):
    if list(model.names) != list(X.names):
        raise DataError("feature registry of the data does not match the one the model was trained on")


def residual_prediction(model: TrainedModel, X: FeatureMatrix) -> np.ndarray:
    """Output of the learned part alone (the full torque for non-residual kinds)."""
    _check_registry(model, X)
    V = X.values
    if model.kind in ("sr", "r-sr"):
        return np.column_stack([symreg.evaluate(e, V) for e in model.stage1])
    if model.kind in ("sindy", "r-sindy", "r-sindy-sr"):
        sm, lib = model.stage1
        out = sparsereg.predict(sm, lib, V)
        if model.stage2 is not None:
            out = out + np.column_stack([symreg.evaluate(e, V) for e in model.stage2])
        return out
    return mlp.forward(model.stage1, V)


def predict(model: TrainedModel, X: FeatureMatrix) -> np.ndarray:
    """Predicted motor torques; residual kinds add tau_i + tau_c + tau_g taken from ``X``."""
    out = residual_prediction(model, X)
    if model.residual:
        out = out + X.tau_rbd()
    return out


def relative_rmse(pred, target, return_flags: bool = False):
    """Per joint RMS(pred - target) / RMS(target).

    Joints whose target is identically zero get the unnormalised error RMS
    and are flagged.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape or pred.ndim != 2 or len(pred) == 0:
        raise DimensionError(f"shape mismatch: {pred.shape} vs {target.shape}")
    err = np.sqrt(np.mean((pred - target) ** 2, axis=0))
    ref = np.sqrt(np.mean(target**2, axis=0))
    degenerate = ref == 0
    out = np.where(degenerate, err, err / np.where(degenerate, 1.0, ref))
    return (out, degenerate) if return_flags else out


# -- reporting -------------------------------------------------------------------


def equations(model: TrainedModel, digits: int = 4) -> list:
    """One closed-form string per joint, or ``None`` for networks."""
    names = model.names
    if model.kind in ("nn", "r-nn"):
        return None
    if model.kind in ("sr", "r-sr"):
        return [symreg.render(symreg.simplify(e), names, digits) for e in model.stage1]
    sm, lib = model.stage1
    out = []
    for j, terms in enumerate(sparsereg.active_terms(sm, lib)):
        text = " + ".join(
            f"{c:.{digits}g}" if name == "1" else f"{c:.{digits}g}*{name}" for name, c in terms
        ) or "0"
        if model.stage2 is not None:
            text += "  ||  " + symreg.render(symreg.simplify(model.stage2[j]), names, digits)
        out.append(text.replace("+ -", "- "))
    return out


def _best(values):
    """Index of the strict minimum after rounding to 3 decimals, or None on a tie."""
    r = np.round(np.asarray(values, dtype=float), 3)
    k = int(np.argmin(r))
    return k if np.count_nonzero(r == r[k]) == 1 else None


def report(models: list, dataset: Dataset) -> tuple:
    """Returns ``(document, text)``: per-joint relative RMSE tables and equations."""
    if not models:
        raise DataError("no trained models to report")
    n = dataset.X("train").n
    doc = {"dataset": dataset.digest, "methods": [m.kind for m in models], "joints": n, "rmse": {}, "equations": {}}
    for split in ("train", "test"):
        if split not in dataset.splits:
            continue
        X, Y = dataset.X(split), dataset.Y(split)
        table = {}
        for m in models:
            table[m.kind] = [float(v) for v in relative_rmse(predict(m, X), Y.values)]
        best = []
        for j in range(n):
            k = _best([table[m.kind][j] for m in models])
            best.append(None if k is None else models[k].kind)
        doc["rmse"][split] = {"table": table, "best": best}
    for m in models:
        eqs = equations(m)
        if eqs is not None:
            entry = {"text": eqs}
            if m.kind in ("sr", "r-sr"):
                entry["trees"] = [symreg.to_dict(e) for e in m.stage1]
            elif m.stage2 is not None:
                entry["stage2_trees"] = [symreg.to_dict(e) for e in m.stage2]
            doc["equations"][m.kind] = entry
    return doc, render_report(doc)


def render_report(doc: dict) -> str:
    kinds = doc["methods"]
    width = max(10, *(len(k) + 2 for k in kinds))
    lines = []
    for split, content in doc["rmse"].items():
        lines.append(f"Relative RMSE ({split}); * marks the best method per joint")
        lines.append("joint".ljust(7) + "".join(k.rjust(width) for k in kinds))
        for j in range(doc["joints"]):
            cells = []
            for k in kinds:
                mark = "*" if content["best"][j] == k else " "
                cells.append(f"{content['table'][k][j]:.3f}{mark}".rjust(width))
            lines.append(str(j + 1).ljust(7) + "".join(cells))
        lines.append("")
    if doc["equations"]:
        lines.append("Equations")
        for k, entry in doc["equations"].items():
            lines.append(f"[{k}]")
            for j, text in enumerate(entry["text"]):
                lines.append(f"  tau{j + 1} = {text}")
        lines.append("")
    return "\n".join(lines)


__all__ = [
    "KINDS",
    "MethodSpec",
    "TrainedModel",
    "train_method",
    "predict",
    "residual_prediction",
    "relative_rmse",
    "equations",
    "report",
    "render_report",
    "default_config",
]
