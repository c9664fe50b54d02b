import math
from dataclasses import replace

import numpy as np
import pytest

from dynqd import lander_physics as lp
from dynqd.environments import (EvaluationError, LanderEnvironment, LanderState, PhysicsConfig,
                                ShiftSchedule, SphereEnvironment, SphereState, apply_lander_shift,
                                apply_sphere_shift, lander_shift, lander_simulate, sample_physics,
                                sphere_bcs, sphere_objective, sphere_shift)

S0 = SphereState()


# -- schedule -------------------------------------------------------------------

def test_schedule_fires_on_multiples_only():
    s = ShiftSchedule(10)
    assert [t for t in range(35) if s.fires(t)] == [10, 20, 30]
    assert s.shift_iterations(35) == [10, 20, 30]
    assert not ShiftSchedule(None).fires(10) and ShiftSchedule(None).shift_iterations(100) == []
    with pytest.raises(ValueError):
        ShiftSchedule(0)


# -- sphere ---------------------------------------------------------------------

def test_sphere_objective_values():
    n = 100
    assert sphere_objective(np.full(n, 2.048), S0) == 0.0
    # closed form 100 * 2.048^2, checked against a plain summation
    zero = sphere_objective(np.zeros(n), S0)
    assert zero == pytest.approx(419.4304, rel=1e-12)
    assert zero == pytest.approx(sum((0 - 2.048) ** 2 for _ in range(n)), rel=1e-12)
    assert sphere_objective(np.full(n, 2.048), replace(S0, sigma_obj=3.0)) == pytest.approx(900.0)


def test_sphere_bcs_values():
    n = 100
    assert sphere_bcs(np.zeros(n), S0) == (0.0, 0.0)
    assert sphere_bcs(np.zeros(n), replace(S0, sigma_bc1=3.5, sigma_bc2=-2.0)) == (3.5, -2.0)
    assert sphere_bcs(np.full(n, 10.0), S0) == pytest.approx((256.0, 256.0))
    g = np.r_[np.full(50, -7.0), np.full(50, 1.0)]
    assert sphere_bcs(g, S0) == pytest.approx((-256.0, 50.0))


def test_sphere_rejects_non_finite():
    g = np.zeros(100)
    g[3] = np.nan
    with pytest.raises(EvaluationError):
        sphere_objective(g, S0)
    with pytest.raises(EvaluationError):
        SphereEnvironment().evaluate(g)


def test_sphere_shift_substitution():
    s = apply_sphere_shift(S0, +1, 4.2, -1, (1.0, 2.5))
    assert s.sigma_obj == pytest.approx(4.2)
    assert (s.sigma_bc1, s.sigma_bc2) == (-1.0, -2.5)


def test_sphere_shift_monte_carlo():
    rng = np.random.default_rng(11)
    s = S0
    signs = []
    for _ in range(1000):
        t = sphere_shift(s, rng)
        d_obj = t.sigma_obj - s.sigma_obj
        d1, d2 = t.sigma_bc1 - s.sigma_bc1, t.sigma_bc2 - s.sigma_bc2
        assert abs(d_obj) <= 10 and abs(d1) <= 5 and abs(d2) <= 5
        assert np.sign(d1) == np.sign(d2)
        signs.append(np.sign(d_obj))
        s = t
    # Rademacher mean is 0 with sd 1/sqrt(1000)
    assert abs(np.mean(signs)) < 3 / math.sqrt(1000)


def test_environment_counter_and_epochs():
    env = SphereEnvironment()
    g = np.ones(100)
    a, b = env.evaluate(g), env.evaluate(g)
    assert a == b and env.evaluations == 2
    env.shift(np.random.default_rng(0))
    c = env.evaluate(g)
    assert c.epoch - a.epoch == 1 and env.evaluations == 3
    env.evaluate_batch(np.ones((4, 100)))
    assert env.evaluations == 7


def test_snapshot_has_own_counter_and_state():
    env = SphereEnvironment()
    env.evaluate(np.zeros(100))
    snap = env.snapshot()
    snap.evaluate(np.zeros(100))
    assert env.evaluations == 1 and snap.evaluations == 1
    env.shift(np.random.default_rng(1))
    assert snap.epoch == 0 and snap.state == S0


def test_sphere_qd_contribution_convention():
    env = SphereEnvironment()
    assert env.qd_offset == pytest.approx(100 * 10.24 ** 2)
    assert env.qd_contribution([0.0])[0] == env.qd_offset
    assert env.qd_contribution([419.4304])[0] == pytest.approx(env.qd_offset - 419.4304)


# -- lander -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def lander_state():
    return LanderState(physics=sample_physics(np.random.default_rng(5)))


def test_lander_zero_policy_deterministic(lander_state):
    a = lander_simulate(np.zeros(32), lander_state)
    b = lander_simulate(np.zeros(32), lander_state)
    assert a == b
    lo, hi = a[1]
    assert -1 <= lo <= 1 and -3 <= hi <= 0


def test_lander_batch_matches_single(lander_state):
    rng = np.random.default_rng(2)
    g = rng.uniform(-1, 1, size=(6, 32))
    env = LanderEnvironment(lander_state)
    batch = env.evaluate_batch(g)
    single = [env.evaluate(x) for x in g]
    assert batch == single


def test_lander_zero_wind_equals_wind_disabled(lander_state):
    rng = np.random.default_rng(4)
    calm = replace(lander_state, sigma_w=0.0, sigma_tau=0.0)
    off = replace(calm, physics=replace(calm.physics, wind_enabled=False))
    for g in rng.uniform(-1, 1, size=(5, 32)):
        assert lander_simulate(g, calm) == lander_simulate(g, off)


def test_lander_wind_changes_impact(lander_state):
    g = np.zeros(32)
    ph = lander_state.physics
    args = (ph.as_params(), np.asarray(ph.initial_pose), ph.wind_k0, ph.torque_k0)
    r5 = lp.simulate_episode(g, args[0], args[1], 5.0, 1.0, args[2], args[3])
    r15 = lp.simulate_episode(g, args[0], args[1], 15.0, 1.0, args[2], args[3])
    assert r5[4] != lp.STEP_CAP or r15[4] != lp.STEP_CAP
    assert r5[1] != r15[1]


def test_lander_wind_monotone_impact_x(lander_state):
    g = np.zeros(32)
    calm_tau = replace(lander_state, sigma_tau=0.0)
    xs = [lander_simulate(g, replace(calm_tau, sigma_w=w))[1][0] for w in np.linspace(0, 20, 21)]
    d = np.diff(xs)
    assert np.all(d > 0) or np.all(d < 0)


def test_lander_shift_clamps():
    s = LanderState(sigma_w=20.0, sigma_tau=0.0)
    t = apply_lander_shift(s, +1, 0.1, -1, 0.05)
    assert t.sigma_w == 20.0 and t.sigma_tau == 0.0
    t = apply_lander_shift(LanderState(), +1, 0.12, +1, 0.0)
    assert t.sigma_w == pytest.approx(10.12)


def test_lander_shift_stays_in_range():
    rng = np.random.default_rng(0)
    s = LanderState(sigma_w=19.95, sigma_tau=0.05)
    for _ in range(2000):
        t = lander_shift(s, rng)
        assert 0 <= t.sigma_w <= 20 and 0 <= t.sigma_tau <= 2
        assert abs(t.sigma_w - s.sigma_w) <= 0.15 and abs(t.sigma_tau - s.sigma_tau) <= 0.1
        s = t


def test_lander_rejects_wrong_length_and_bad_state():
    with pytest.raises(ValueError):
        lander_simulate(np.zeros(31), LanderState())
    with pytest.raises(ValueError):
        LanderState(sigma_w=25.0)


def test_lander_divergence_is_an_error():
    huge = LanderState(physics=replace(PhysicsConfig(), gravity=-math.inf))
    with pytest.raises(EvaluationError):
        LanderEnvironment(huge).evaluate(np.ones(32))
