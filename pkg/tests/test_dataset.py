import shutil

import numpy as np
import pytest

from hybridid import rbd
from hybridid.control import FRANKA_GAINS, PidController, PidGains
from hybridid.dataset import (
    ColumnMap,
    Dataset,
    FeatureMatrix,
    TargetMatrix,
    assemble,
    build_features,
    feature_names,
    ingest_external,
    residual_targets,
)
from hybridid.errors import DataError
from hybridid.excitation import MultiSineSpec, generate_reference
from hybridid.numdiff import DiffConfig
from hybridid.sim import Rollout, SimConfig, rollout

FD = DiffConfig()


def _simulate(model, seed, horizon=3.0):
    cfg = SimConfig(horizon=horizon)
    q_ref, qd_ref, *_ = generate_reference(model, MultiSineSpec(), cfg.tgrid(), np.random.default_rng(seed))
    return rollout(model, PidController(PidGains.from_dict(FRANKA_GAINS, 7)), q_ref, qd_ref, cfg)


@pytest.fixture(scope="module")
def runs(franka):
    return [_simulate(franka, s) for s in range(4)]


def test_feature_layout(franka, runs):
    X, Y = build_features(runs[0], franka, FD)
    assert X.values.shape == (300, 49)
    assert X.names[:2] == ["q1", "q2"] and X.names[7] == "qd1" and X.names[-1] == "tau_g7"
    assert X.names == feature_names(7)
    assert Y.values.shape == (300, 7) and Y.kind == "motor"


def test_static_rollout(franka):
    q0 = np.linspace(-0.5, 0.5, 7)
    t = np.arange(21) * 0.01
    Q = np.tile(q0, (21, 1))
    tau = np.tile(rbd.gravity_torque(franka, q0), (20, 1))
    r = Rollout(t, Q, np.zeros_like(Q), tau, Q, np.zeros_like(Q))
    X, Y = build_features(r, franka, FD)
    assert np.max(np.abs(X.block("tau_i"))) < 1e-12
    assert np.max(np.abs(X.block("tau_c"))) < 1e-12
    np.testing.assert_allclose(X.block("tau_g"), tau, atol=1e-12)
    np.testing.assert_allclose(Y.values, X.block("tau_g"), atol=1e-12)


def test_rbd_torques_explain_motor_torque(franka, runs):
    X, Y = build_features(runs[0], franka, FD)
    err = Y.values - X.tau_rbd() - franka.damping * X.block("qd")
    assert np.max(np.abs(err)) < 0.02 * np.max(np.abs(Y.values))


def test_residual_is_damping(franka, runs):
    X, Y = build_features(runs[1], franka, FD)
    R = residual_targets(Y, X, franka).values
    D = franka.damping * X.block("qd")
    rel = np.sqrt(np.mean((R - D) ** 2, axis=0)) / np.sqrt(np.mean(D**2, axis=0))
    assert np.all(rel < 0.02), rel


def test_residual_of_exact_model_is_zero(franka, runs):
    X, _ = build_features(runs[0], franka, FD)
    R = residual_targets(TargetMatrix(X.tau_rbd()), X)
    assert np.all(R.values == 0)


def test_residual_twice_is_an_error(franka, runs):
    X, Y = build_features(runs[0], franka, FD)
    with pytest.raises(DataError):
        residual_targets(residual_targets(Y, X), X)


def test_sample_alignment_is_shorter_lagged_variant(franka, runs):
    Xi, _ = build_features(runs[0], franka, FD)
    Xs, _ = build_features(runs[0], franka, DiffConfig(align="sample"))
    assert Xs.values.shape == Xi.values.shape
    np.testing.assert_array_equal(Xs.block("q"), runs[0].q[:-1])


def test_feature_matrix_validation():
    with pytest.raises(DataError):
        FeatureMatrix(np.full((2, 7), np.nan), feature_names(1))


def test_dataset_save_load(tmp_path, franka, runs):
    ds = assemble(runs[:2], runs[2:3], franka, FD)
    ds.save(tmp_path / "ds")
    back = Dataset.load(tmp_path / "ds")
    assert back.digest == ds.digest
    for split in ("train", "test"):
        np.testing.assert_array_equal(back.X(split).values, ds.X(split).values)
        np.testing.assert_array_equal(back.Y(split).values, ds.Y(split).values)
    assert ds.provenance["diff"]["method"] == "finite"
    assert len(ds.X("train")) == 600


def test_dataset_rebuild_same_digest(franka, runs):
    a = assemble(runs[:2], runs[2:3], franka, FD)
    b = assemble(runs[:2], runs[2:3], franka, FD)
    assert a.digest == b.digest


def test_dataset_tampered_meta_rejected(tmp_path, franka, runs):
    ds = assemble(runs[:1], runs[1:2], franka, FD)
    d = ds.save(tmp_path / "ds")
    meta = (d / "meta.json").read_text().replace('"finite"', '"tvr"')
    (d / "meta.json").write_text(meta)
    with pytest.raises(DataError, match="digest"):
        Dataset.load(d)


def test_overlapping_splits_rejected(franka, runs):
    with pytest.raises(DataError):
        assemble(runs[:2], runs[1:2], franka, FD)


# -- external files ------------------------------------------------------------------


def _export(runs, directory):
    directory.mkdir(parents=True, exist_ok=True)
    for k, r in enumerate(runs):
        r.save(directory / f"traj_{k}")
    for p in directory.glob("*.json"):
        p.unlink()


def test_ingest_round_trip_is_bit_equal(tmp_path, franka, runs):
    _export(runs[:2], tmp_path / "ext")
    got, split = ingest_external(tmp_path / "ext", ColumnMap.identity(7), franka, FD)
    assert split == {"traj_0.csv": "train", "traj_1.csv": "test"}
    for a, b in zip(got, runs[:2]):
        for name in ("t", "q", "qd", "tau"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    ds_ext = assemble([got[0]], [got[1]], franka, FD)
    ds_sim = assemble([runs[0]], [runs[1]], franka, FD)
    for split_name in ("train", "test"):
        np.testing.assert_array_equal(ds_ext.X(split_name).values, ds_sim.X(split_name).values)
        np.testing.assert_array_equal(ds_ext.Y(split_name).values, ds_sim.Y(split_name).values)


def test_ingest_four_files_three_one(tmp_path, franka, runs):
    _export(runs, tmp_path / "ext")
    cmap = ColumnMap.identity(7)
    cmap.qd = None  # velocities estimated from positions
    got, split = ingest_external(tmp_path / "ext", cmap, franka, FD)
    assert len(got) == 4
    assert sorted(split.values()) == ["test", "train", "train", "train"]
    assert split["traj_3.csv"] == "test"


def test_ingest_missing_column_named(tmp_path, franka, runs):
    _export(runs[:2], tmp_path / "ext")
    doc = {"t": "t", "q": [f"q{j}" for j in range(1, 8)], "tau": [f"tau{j}" for j in range(1, 8)]}
    with pytest.raises(DataError, match="tau1"):
        ingest_external(tmp_path / "ext", doc, franka, FD)


def test_ingest_rejects_nan_and_jitter(tmp_path, franka, runs):
    src = tmp_path / "ext"
    _export(runs[:2], src)
    bad = tmp_path / "bad"
    shutil.copytree(src, bad)
    lines = (bad / "traj_0.csv").read_text().splitlines()
    cells = lines[5].split(",")
    cells[3] = "nan"
    lines[5] = ",".join(cells)
    (bad / "traj_0.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match="NaN"):
        ingest_external(bad, ColumnMap.identity(7), franka, FD)

    jit = tmp_path / "jitter"
    shutil.copytree(src, jit)
    lines = (jit / "traj_0.csv").read_text().splitlines()
    cells = lines[5].split(",")
    cells[0] = repr(float(cells[0]) + 0.002)
    lines[5] = ",".join(cells)
    (jit / "traj_0.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match="jitter"):
        ingest_external(jit, ColumnMap.identity(7), franka, FD)
