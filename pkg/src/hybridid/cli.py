"""Command-line pipeline: simulate, build, train, evaluate, report, ingest.

Every subcommand reads one JSON experiment config. Outputs go below the
config's output directory, which ``--output`` or the ``HYBRIDID_OUTPUT``
environment variable can override.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .control import FRANKA_GAINS, PidController, PidGains
from .dataset import ColumnMap, Dataset, assemble, ingest_external
from .errors import ConfigError, DataError, HybridIdError, NumericError
from .excitation import MultiSineSpec, generate_reference
from .models import KINDS, MethodSpec, TrainedModel, predict, relative_rmse, report, train_method
from .numdiff import DiffConfig
from .rbd import load_model
from .sim import Rollout, SimConfig, rollout

OUTPUT_ENV = "HYBRIDID_OUTPUT"

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


@dataclass
class ExperimentConfig:
    model: str = "franka7-synthetic"
    sim: SimConfig = field(default_factory=SimConfig)
    controller: dict = field(default_factory=lambda: dict(FRANKA_GAINS))
    excitation: MultiSineSpec = field(default_factory=MultiSineSpec)
    n_train: int = 10
    n_test: int = 10
    diff: DiffConfig = field(default_factory=DiffConfig)
    ingest_diff: DiffConfig = field(default_factory=lambda: DiffConfig(method="tvr"))
    methods: list = field(default_factory=lambda: [MethodSpec(k) for k in KINDS])
    output: str = "runs/default"
    seed: int = 0
    base_dir: str = "."  # relative paths in the config resolve against this

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("rollout counts must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "ExperimentConfig":
        known = {
            "model", "sim", "controller", "excitation", "n_train", "n_test",
            "diff", "ingest_diff", "methods", "output", "seed",
        }
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            kw = {k: doc[k] for k in ("model", "n_train", "n_test", "output", "seed") if k in doc}
            if "controller" in doc:
                kw["controller"] = dict(doc["controller"])
            if "sim" in doc:
                kw["sim"] = SimConfig.from_dict(doc["sim"])
            if "excitation" in doc:
                kw["excitation"] = MultiSineSpec.from_dict(doc["excitation"])
            if "diff" in doc:
                kw["diff"] = DiffConfig.from_dict(doc["diff"])
            if "ingest_diff" in doc:
                kw["ingest_diff"] = DiffConfig.from_dict(doc["ingest_diff"])
            if "methods" in doc:
                kw["methods"] = [
                    MethodSpec(m) if isinstance(m, str) else MethodSpec(m["kind"], m.get("config", {}), m.get("seed", 0))
                    for m in doc["methods"]
                ]
        except TypeError as exc:
            raise ConfigError(f"invalid config: {exc}") from None
        return cls(**kw, base_dir=str(base_dir))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(doc, path.parent)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "sim": self.sim.to_dict(),
            "controller": self.controller,
            "excitation": self.excitation.to_dict(),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "diff": self.diff.to_dict(),
            "ingest_diff": self.ingest_diff.to_dict(),
            "methods": [m.to_dict() for m in self.methods],
            "output": self.output,
            "seed": self.seed,
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    # -- resolved locations ----------------------------------------------------
    def _resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def root(self) -> Path:
        env = os.environ.get(OUTPUT_ENV)
        return Path(env) if env else self._resolve(self.output)

    def robot(self):
        src = self.model
        if not src.endswith(".json") and "/" not in src:
            return load_model(src)
        return load_model(self._resolve(src))

    def method(self, kind: str) -> MethodSpec:
        """Configured ``MethodSpec`` for ``kind``, its seed combined with the master seed."""
        spec = next((m for m in self.methods if m.kind == kind), None) or MethodSpec(kind)
        seed = int(np.random.SeedSequence([self.seed, spec.seed]).generate_state(1)[0])
        return MethodSpec(spec.kind, spec.config, seed)


# -- subcommands -------------------------------------------------------------------


def _rollout_dir(cfg):
    return cfg.root / "rollouts"


def cmd_simulate(cfg: ExperimentConfig) -> list:
    """Write train/test rollouts with per-rollout seeds derived from the master seed."""
    robot = cfg.robot()
    gains = PidGains.from_dict(cfg.controller, robot.n)
    ctrl = PidController(gains)
    t = cfg.sim.tgrid()
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_train + cfg.n_test)
    out = _rollout_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    for old in list(out.glob("*.csv")) + list(out.glob("*.json")):
        old.unlink()
    paths = []
    for k, ss in enumerate(seeds):
        split, idx = ("train", k) if k < cfg.n_train else ("test", k - cfg.n_train)
        rng = np.random.default_rng(ss)
        q_ref, qd_ref, q0, _modes, s = generate_reference(robot, cfg.excitation, t, rng)
        meta = {
            "split": split,
            "index": idx,
            "seed_entropy": str(ss.entropy),
            "seed_spawn_key": list(ss.spawn_key),
            "q0": q0.tolist(),
            "scale": s.tolist(),
            "model": robot.digest(),
            "sim": cfg.sim.to_dict(),
            "controller": gains.to_dict(),
        }
        r = rollout(robot, ctrl, q_ref, qd_ref, cfg.sim, meta)
        path = out / f"{split}_{idx:03d}"
        r.save(path)
        paths.append(path.with_suffix(".csv"))
    return paths


def _load_rollouts(cfg, split):
    files = sorted(_rollout_dir(cfg).glob(f"{split}_*.csv"))
    if not files:
        raise DataError(f"no {split} rollouts in {_rollout_dir(cfg)}; run `simulate` first")
    return [Rollout.load(f) for f in files], [f.name for f in files]


def cmd_build(cfg: ExperimentConfig) -> Path:
    robot = cfg.robot()
    train, tr_names = _load_rollouts(cfg, "train")
    test, te_names = _load_rollouts(cfg, "test")
    ds = assemble(train, test, robot, cfg.diff, {"train": tr_names, "test": te_names})
    return ds.save(cfg.root / "dataset")


def _dataset(cfg) -> Dataset:
    d = cfg.root / "dataset"
    if not (d / "meta.json").is_file():
        raise DataError(f"no dataset in {d}; run `build` or `ingest` first")
    return Dataset.load(d)


def cmd_train(cfg: ExperimentConfig, method: str = "all") -> list:
    kinds = [m.kind for m in cfg.methods] if method == "all" else [method]
    for k in kinds:
        if k not in KINDS:
            raise ConfigError(f"unknown method '{k}'; expected one of {', '.join(KINDS)} or 'all'")
    ds = _dataset(cfg)
    robot = cfg.robot()
    out = cfg.root / "models"
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in kinds:
        model = train_method(cfg.method(k), ds, robot)
        path = out / f"{k}.json"
        model.save(path)
        paths.append(path)
    return paths


def _trained(cfg, ds) -> list:
    d = cfg.root / "models"
    order = {k: i for i, k in enumerate(KINDS)}
    files = sorted(d.glob("*.json"), key=lambda p: order.get(p.stem, len(KINDS))) if d.is_dir() else []
    if not files:
        raise DataError(f"no trained models in {d}; run `train` first")
    models = []
    for f in files:
        m = TrainedModel.load(f)
        if m.provenance.get("dataset") != ds.digest:
            raise DataError(f"model {f.name} was trained on a different dataset; retrain it")
        models.append(m)
    return models


def cmd_evaluate(cfg: ExperimentConfig) -> Path:
    ds = _dataset(cfg)
    doc = {"dataset": ds.digest, "rmse": {}}
    for m in _trained(cfg, ds):
        doc["rmse"][m.kind] = {
            split: [float(v) for v in relative_rmse(predict(m, ds.X(split)), ds.Y(split).values)]
            for split in ds.splits
        }
    path = cfg.root / "evaluation.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def cmd_report(cfg: ExperimentConfig) -> Path:
    ds = _dataset(cfg)
    doc, text = report(_trained(cfg, ds), ds)
    (cfg.root / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    (cfg.root / "report.txt").write_text(text)
    return cfg.root / "report.json"


def cmd_ingest(cfg: ExperimentConfig, directory, column_map) -> Path:
    robot = cfg.robot()
    if not isinstance(column_map, dict):
        p = Path(column_map)
        if not p.is_file():
            raise ConfigError(f"column map not found: {p}")
        try:
            column_map = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"column map is not valid JSON: {exc}") from None
    rollouts, split = ingest_external(directory, ColumnMap.from_dict(column_map), robot, cfg.ingest_diff)
    names = sorted(split)
    groups = {"train": [], "test": []}
    sources = {"train": [], "test": []}
    for name, r in zip(names, rollouts):
        groups[split[name]].append(r)
        sources[split[name]].append(name)
    ds = assemble(groups["train"], groups["test"], robot, cfg.ingest_diff, sources)
    ds.provenance["split"] = split
    return ds.save(cfg.root / "dataset")


def cmd_run(cfg: ExperimentConfig) -> Path:
    cmd_simulate(cfg)
    cmd_build(cfg)
    cmd_train(cfg, "all")
    cmd_evaluate(cfg)
    return cmd_report(cfg)


# -- entry point -------------------------------------------------------------------


def _parser():
    p = argparse.ArgumentParser(prog="hybridid", description=__doc__.splitlines()[0])
    p.add_argument("--config", "-c", help="experiment config (JSON); defaults are used when omitted")
    p.add_argument("--output", "-o", help="override the output directory")
    p.add_argument("--seed", type=int, help="override the master seed")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", help="generate train/test rollouts")
    sub.add_parser("build", help="build the feature dataset from rollouts")
    t = sub.add_parser("train", help="fit one method or all configured methods")
    t.add_argument("--method", default="all", help=f"one of {', '.join(KINDS)} or 'all'")
    sub.add_parser("evaluate", help="relative RMSE of trained models on both splits")
    sub.add_parser("report", help="write report.json and report.txt")
    i = sub.add_parser("ingest", help="build a dataset from external trajectory files")
    i.add_argument("--dir", required=True, help="directory of delimited text files")
    i.add_argument("--map", required=True, help="JSON column map")
    sub.add_parser("run", help="simulate, build, train all, evaluate and report")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        if args.output:
            cfg.output = str(Path(args.output).resolve())
        if args.seed is not None:
            cfg.seed = args.seed
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            if args.command == "simulate":
                res = cmd_simulate(cfg)
                print(f"wrote {len(res)} rollouts to {_rollout_dir(cfg)}")
            elif args.command == "build":
                print(f"dataset written to {cmd_build(cfg)}")
            elif args.command == "train":
                for path in cmd_train(cfg, args.method):
                    print(f"trained {path}")
            elif args.command == "evaluate":
                print(f"evaluation written to {cmd_evaluate(cfg)}")
            elif args.command == "report":
                path = cmd_report(cfg)
                print((path.parent / "report.txt").read_text())
            elif args.command == "ingest":
                print(f"dataset written to {cmd_ingest(cfg, args.dir, args.map)}")
            elif args.command == "run":
                path = cmd_run(cfg)
                print((path.parent / "report.txt").read_text())
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except HybridIdError as exc:  # pragma: no cover - every subclass is handled above
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
