import numpy as np
import pytest

from hybridid import rbd
from hybridid.control import FRANKA_GAINS, PidController, PidGains, pid_step
from hybridid.errors import ConfigError, DataError, NumericError
from hybridid.excitation import (
    Modes,
    MultiSineSpec,
    generate_reference,
    multisine,
    sample_initial_config,
    scale_to_limits,
)
from hybridid.rbd import JointState
from hybridid.sim import Rollout, SimConfig, damping_torque, rollout, step

NOMINAL = np.array([6.75, 6.0, 5.25, 4.5, 3.75, 3.0, 2.25])


# -- damping and integration -----------------------------------------------------


def test_damping_torque(franka):
    assert np.all(damping_torque(franka, np.zeros(7)) == 0)
    np.testing.assert_allclose(damping_torque(franka, np.ones(7)), NOMINAL)
    np.testing.assert_allclose(damping_torque(franka, -np.eye(7)[0]), -6.75 * np.eye(7)[0])


def test_step_at_rest_without_gravity(franka):
    m0 = franka.with_gravity([0, 0, 0])
    s = JointState(np.full(7, 0.2), np.zeros(7))
    out = step(m0, s, np.zeros(7), 1e-3)
    np.testing.assert_array_equal(out.q, s.q)
    np.testing.assert_array_equal(out.qd, s.qd)


def test_step_one_dof_formula():
    # starting at rest, so the velocity-proportional damping does not act yet
    m = rbd.pendulum(mass=2.0, length=0.3, inertia_axis=0.05, damping=0.5, gravity=(0, 0, 0))
    M = 0.05 + 2.0 * 0.09
    a, dt, q0, v0 = 1.7, 0.01, 0.4, 0.0
    out = step(m, JointState(np.array([q0]), np.array([v0])), np.array([a * M]), dt)
    np.testing.assert_allclose(out.qd, [v0 + dt * a], atol=1e-14)
    np.testing.assert_allclose(out.q, [q0 + dt * (v0 + dt * a)], atol=1e-14)


def test_step_exact_compensation(franka, rng):
    q = rng.uniform(-1, 1, 7)
    tau = rbd.gravity_torque(franka, q) + damping_torque(franka, np.zeros(7))
    out = step(franka, JointState(q, np.zeros(7)), tau, 1e-3)
    np.testing.assert_allclose(out.q, q, atol=1e-14)
    np.testing.assert_allclose(out.qd, 0, atol=1e-12)


def test_step_rejects_nonfinite_torque(franka):
    with pytest.raises(NumericError):
        step(franka, JointState(np.zeros(7), np.zeros(7)), np.full(7, np.nan), 1e-3)


# -- closed loop -------------------------------------------------------------------


def test_rollout_stays_at_equilibrium(franka, rng):
    cfg = SimConfig(horizon=1.0)
    q0 = rng.uniform(-1, 1, 7)
    t = cfg.tgrid()
    q_ref = np.tile(q0, (len(t), 1))
    r = rollout(franka, PidController(PidGains.uniform(7)), q_ref, np.zeros_like(q_ref), cfg)
    assert np.max(np.abs(r.q - q0)) < 1e-9


def test_rollout_bookkeeping():
    m = rbd.pendulum()
    cfg = SimConfig(dt_env=0.01, substeps=10, horizon=10.0)
    t = cfg.tgrid()
    q_ref = 0.3 * np.sin(t)[:, None]
    r = rollout(m, PidController(PidGains.uniform(1)), q_ref, 0.3 * np.cos(t)[:, None], cfg)
    assert r.tau.shape == (1000, 1)
    assert r.q.shape == (1001, 1) and r.qd.shape == (1001, 1)


def test_multisine_tracking_within_tenth_radian(franka):
    cfg = SimConfig()
    rng = np.random.default_rng(0)
    q_ref, qd_ref, *_ = generate_reference(franka, MultiSineSpec(), cfg.tgrid(), rng)
    ctrl = PidController(PidGains.from_dict(FRANKA_GAINS, 7))
    r = rollout(franka, ctrl, q_ref, qd_ref, cfg)
    err = np.max(np.abs(r.q - q_ref), axis=0)
    assert err.max() < 0.1, err


def test_rollout_blowup_detected():
    m = rbd.pendulum(gravity=(0, 0, 0))

    class Kick:
        def initial_state(self, n):
            return None

        def __call__(self, model, state, q_ref, qd_ref, ctrl, dt):
            return np.array([1e4]), ctrl

    cfg = SimConfig(horizon=1.0)
    t = cfg.tgrid()
    with pytest.raises(NumericError, match="diverged"):
        rollout(m, Kick(), np.zeros((len(t), 1)), np.zeros((len(t), 1)), cfg)


def test_rollout_save_load_round_trip(tmp_path):
    m = rbd.planar_2link()
    cfg = SimConfig(horizon=0.5)
    t = cfg.tgrid()
    q_ref = np.column_stack([0.2 * np.sin(3 * t), 0.1 * np.cos(2 * t)])
    qd_ref = np.column_stack([0.6 * np.cos(3 * t), -0.2 * np.sin(2 * t)])
    gains = PidGains.uniform(2, kp=20.0, ki=2.0, kd=1.0)
    r = rollout(m, PidController(gains), q_ref, qd_ref, cfg, meta={"k": 1})
    r.save(tmp_path / "a")
    back = Rollout.load(tmp_path / "a.csv")
    for name in ("t", "q", "qd", "tau", "q_ref", "qd_ref"):
        np.testing.assert_array_equal(getattr(back, name), getattr(r, name))
    assert back.meta == {"k": 1}


def test_sim_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(substeps=0)
    with pytest.raises(ConfigError):
        SimConfig(dt_env=-1)


# -- controller ----------------------------------------------------------------------


def test_pid_zero_error_is_gravity(franka, rng):
    q = rng.uniform(-1, 1, 7)
    qd = rng.uniform(-1, 1, 7)
    tau, integ = pid_step(PidGains.uniform(7), franka, JointState(q, qd), q, qd, np.zeros(7), 0.01)
    np.testing.assert_allclose(tau, rbd.gravity_torque(franka, q), atol=1e-12)
    assert np.all(integ == 0)


def test_pid_unit_errors_without_integral(franka, rng):
    g = PidGains(np.arange(1.0, 8.0), np.zeros(7), np.full(7, 3.0), np.full(7, 2.0))
    q = rng.uniform(-1, 1, 7)
    qd = np.zeros(7)
    tau, _ = pid_step(g, franka, JointState(q, qd), q + 1, qd + 1, np.zeros(7), 0.01)
    np.testing.assert_allclose(tau - rbd.gravity_torque(franka, q), g.kp + g.kd, atol=1e-12)


def test_pid_integral_saturates_exactly():
    m = rbd.pendulum(gravity=(0, 0, 0))
    g = PidGains.uniform(1, kp=0, ki=1.0, kd=0, clip=0.3)
    state = JointState(np.zeros(1), np.zeros(1))
    integ = np.zeros(1)
    trace = []
    for _ in range(100):
        _, integ = pid_step(g, m, state, np.array([0.5]), np.zeros(1), integ, 0.01)
        trace.append(integ[0])
    expected = np.minimum(0.005 * np.arange(1, 101), 0.3)
    np.testing.assert_allclose(trace, expected, rtol=0, atol=1e-12)
    assert trace[-1] == 0.3


def test_gain_length_mismatch():
    with pytest.raises(ConfigError):
        PidGains.from_dict({"kp": [1.0, 2.0]}, 7)
    with pytest.raises(ConfigError):
        PidGains.uniform(3, kp=-1)


# -- excitation -------------------------------------------------------------------------


def test_initial_config_covers_limits():
    rng = np.random.default_rng(1)
    draws = np.array([sample_initial_config([-1.0], [1.0], 0.0, rng)[0] for _ in range(100_000)])
    assert draws.min() >= -1 and draws.max() <= 1
    assert draws.min() < -0.99 and draws.max() > 0.99


def test_initial_config_empty_interval():
    with pytest.raises(ConfigError):
        sample_initial_config([-1.0], [1.0], 1.0, np.random.default_rng(0))


def test_initial_config_deterministic():
    a = sample_initial_config(-np.ones(7), np.ones(7), 0.1, np.random.default_rng(7))
    b = sample_initial_config(-np.ones(7), np.ones(7), 0.1, np.random.default_rng(7))
    np.testing.assert_array_equal(a, b)


def test_single_mode_multisine():
    t = np.linspace(0, 2, 201)
    modes = Modes(np.array([[1.0]]), np.array([[1.0]]), np.array([[0.0]]))
    q, qd = multisine(modes, t)
    np.testing.assert_allclose(q[:, 0], np.sin(2 * np.pi * t), atol=1e-14)
    assert qd[0, 0] == pytest.approx(2 * np.pi)
    shifted = Modes(np.array([[0.7]]), np.array([[1.0]]), np.array([[np.pi / 2]]))
    assert multisine(shifted, np.array([0.0]))[0][0, 0] == pytest.approx(0.7)


@pytest.mark.parametrize("dt", [1e-2, 5e-3])
def test_multisine_velocity_matches_central_difference(dt):
    rng = np.random.default_rng(3)
    modes = Modes(rng.uniform(0.1, 1, (3, 5)), rng.uniform(0.05, 0.5, (3, 5)), rng.uniform(0, 6, (3, 5)))
    t = np.arange(0, 10, dt)
    q, qd = multisine(modes, t)
    fd = (q[2:] - q[:-2]) / (2 * dt)
    # third derivative bound: sum a w^3, error <= dt^2/6 * bound
    bound = np.sum(modes.amplitude * (2 * np.pi * modes.frequency) ** 3, axis=1) * dt**2 / 6
    assert np.all(np.max(np.abs(fd - qd[1:-1]), axis=0) <= bound)


def test_scale_boundary_case():
    t = np.linspace(0, 1, 101)
    q_raw = (0.4 * np.sin(2 * np.pi * t))[:, None]
    qd_raw = (0.8 * np.pi * np.cos(2 * np.pi * t))[:, None]
    # q0 = 0, limits +-0.5, margin 0.1 -> r = 0.4 = max |q_raw|
    _, _, s = scale_to_limits([0.0], q_raw, qd_raw, [-0.5], [0.5], [1e9], 0.1, eps=1e-15)
    assert s[0] == pytest.approx(1.0, abs=1e-12)


def test_scale_amplifies_small_signals():
    t = np.linspace(0, 1, 101)
    q_raw = (1e-3 * np.sin(2 * np.pi * t))[:, None]
    qd_raw = (2e-3 * np.pi * np.cos(2 * np.pi * t))[:, None]
    q_ref, qd_ref, s = scale_to_limits([0.0], q_raw, qd_raw, [-1.0], [1.0], [2.0], 0.1)
    assert s[0] > 1
    assert np.all(np.abs(q_ref) <= 0.9 + 1e-12) and np.all(np.abs(qd_ref) <= 2.0 + 1e-12)


def test_scale_rejects_start_at_limit():
    with pytest.raises(DataError):
        scale_to_limits([0.95], np.zeros((3, 1)), np.zeros((3, 1)), [-1.0], [1.0], [1.0], 0.1)


def test_reference_respects_limits(franka):
    spec = MultiSineSpec()
    t = SimConfig().tgrid()
    for seed in range(5):
        q_ref, qd_ref, *_ = generate_reference(franka, spec, t, np.random.default_rng(seed))
        assert np.all(q_ref >= franka.q_min + spec.margin - 1e-9)
        assert np.all(q_ref <= franka.q_max - spec.margin + 1e-9)
        assert np.all(np.abs(qd_ref) <= franka.qd_max + 1e-9)


def test_excitation_spec_validation():
    with pytest.raises(ConfigError):
        MultiSineSpec(amplitude=(0.0, 1.0))
    with pytest.raises(ConfigError):
        MultiSineSpec(n_modes=0)
