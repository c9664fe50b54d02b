from dataclasses import replace

import numpy as np
import pytest

from dynqd.archive import GridArchive
from dynqd.environments import SphereEnvironment, sphere_bcs, sphere_objective
from dynqd.metrics import (EvalCache, IterationMetrics, ideal_archive, mean_evaluation_cost, measure,
                           mse_metrics, run_means, survival_rate)

from helpers import TableEnv, put, unit_archive


def row(i, surv, evals, **kw):
    base = dict(iteration=i, epoch=0, occupancy=1, survival=surv, mse_obj=0.0, mse_bc1=0.0,
                mse_bc2=0.0, mse_qd=0.0, evals_search=evals, evals_oracle=0)
    base.update(kw)
    return IterationMetrics(**base)


# -- ideal archive and survival ------------------------------------------------------------

def test_static_ideal_equals_live():
    env = TableEnv({k: (float(k), k + 0.5, 0.5) for k in range(5)})
    a = unit_archive()
    for k in range(5):
        put(a, env, k)
    ideal = ideal_archive(a, env.snapshot())
    assert ideal.as_dict() == {c: (e.id, e.eval.objective, e.eval.bcs)
                               for c, e in zip(a.occupied_cells(), a.elites())}
    assert survival_rate(a, ideal) == 1.0
    assert mse_metrics(a, ideal, env) == (0.0, 0.0, 0.0, 0.0)


def test_collision_drops_one_and_keeps_better():
    env = TableEnv({0: (3.0, 0.5, 0.5), 1: (1.0, 1.5, 0.5)})
    a = unit_archive()
    put(a, env, 0)
    put(a, env, 1)
    env.set({0: (3.0, 1.5, 0.5)})  # 0 now collides with 1 and is worse
    ideal = ideal_archive(a, env.snapshot())
    assert len(ideal) == len(a) - 1 and list(ideal.ids) == [1]
    assert survival_rate(a, ideal) == 0.5


def test_collision_tie_keeps_lower_id():
    env = TableEnv({0: (1.0, 0.5, 0.5), 1: (1.0, 1.5, 0.5)})
    a = unit_archive()
    put(a, env, 0)
    put(a, env, 1)
    env.set({1: (1.0, 0.5, 0.5)})
    assert list(ideal_archive(a, env.snapshot()).ids) == [0]


def test_ideal_does_not_mutate_live_or_count_search():
    env = TableEnv({0: (1.0, 0.5, 0.5)})
    a = unit_archive()
    e = put(a, env, 0)
    env.set({0: (7.0, 4.5, 4.5)})
    before = env.evaluations
    ideal = ideal_archive(a, env.snapshot())
    assert env.evaluations == before and ideal.oracle_evaluations == 1
    assert e.eval.objective == 1.0 and a.cell_of(e) == (0, 0)


def test_survival_definition():
    assert survival_rate(unit_archive(), ideal_archive(unit_archive(), TableEnv({}))) == 1.0
    env = TableEnv({k: (1.0, k + 0.5, 0.5) for k in range(10)})
    a = unit_archive()
    for k in range(10):
        put(a, env, k)
    # three elites move onto cells of better ones
    env.set({k: (5.0, k + 7.5, 0.5) for k in range(3)} | {k: (0.0, k + 0.5, 0.5) for k in (7, 8, 9)})
    assert survival_rate(a, ideal_archive(a, env.snapshot())) == pytest.approx(0.7)


def test_post_shift_sphere_hand_computed():
    rng = np.random.default_rng(0)
    env = SphereEnvironment()
    a = GridArchive((100, 100), ((-256, 256), (-256, 256)))
    genomes = rng.uniform(-3, 3, size=(5, 100))
    for g in genomes:
        a.try_insert(g, env.evaluate(g))
    env.state = replace(env.state, sigma_obj=4.0, sigma_bc1=2.5, sigma_bc2=1.0)
    ideal = ideal_archive(a, env.snapshot())
    for i, o, b in zip(ideal.ids, ideal.objectives, ideal.bcs):
        g = genomes[i]
        assert o == pytest.approx(np.sum((g - 6.048) ** 2))
        assert o == pytest.approx(sphere_objective(g, env.state))
        assert tuple(b) == pytest.approx(sphere_bcs(g, env.state))
        assert tuple(b) == pytest.approx((2.5 + g[:50].sum(), 1.0 + g[50:].sum()))


# -- MSE ---------------------------------------------------------------------------------------

def test_single_survivor_off_by_three():
    env = TableEnv({0: (2.0, 0.5, 0.5)})
    a = unit_archive()
    put(a, env, 0)
    env.set({0: (5.0, 0.5, 0.5)})
    ideal = ideal_archive(a, env.snapshot())
    assert mse_metrics(a, ideal, env) == (9.0, 0.0, 0.0, 9.0)


def test_mse_null_without_survivors_and_excluded_from_means():
    rows = [row(0, 1.0, 10, mse_obj=4.0), row(1, 0.5, 10, mse_obj=None, mse_bc1=None, mse_bc2=None)]
    means = run_means(rows)
    assert means["mse_obj"] == 4.0 and means["survival"] == 0.75


def test_mse_nonnegative_on_random_archives():
    rng = np.random.default_rng(1)
    for _ in range(20):
        env = TableEnv({k: (float(rng.normal()), *rng.uniform(0, 10, 2)) for k in range(15)})
        a = unit_archive()
        for k in range(15):
            put(a, env, k)
        env.set({k: (float(rng.normal()), *rng.uniform(0, 10, 2)) for k in range(15)})
        vals = mse_metrics(a, ideal_archive(a, env.snapshot()), env)
        assert all(v is None or v >= 0 for v in vals)


def test_measure_uses_snapshot_counters():
    env = SphereEnvironment()
    a = GridArchive((100, 100), ((-256, 256), (-256, 256)))
    g = np.zeros(100)
    a.try_insert(g, env.evaluate(g))
    m = measure(0, a, env, 1)
    assert env.evaluations == 1 and m.evals_oracle == 1 and m.evals_search == 1


def test_eval_cache_matches_direct_and_invalidates_on_epoch():
    env = TableEnv({0: (1.0, 0.5, 0.5), 1: (2.0, 1.5, 0.5)})
    a = unit_archive()
    put(a, env, 0)
    put(a, env, 1)
    cache = EvalCache()
    snap = env.snapshot()
    assert ideal_archive(a, snap, cache).as_dict() == ideal_archive(a, snap).as_dict()
    n = snap.evaluations
    ideal_archive(a, snap, cache)
    assert snap.evaluations == n  # served from the memo
    env.set({0: (4.0, 3.5, 0.5)})
    assert ideal_archive(a, env.snapshot(), cache).as_dict() == ideal_archive(a, env.snapshot()).as_dict()


# -- MEC -----------------------------------------------------------------------------------------

def test_mec_all_surviving_interval_mode():
    rows = [row(i, 1.0, 10) for i in range(50)]
    res = mean_evaluation_cost(rows, [10, 20, 30, 40], 0.5)
    assert res.mec == 100 and res.success_ratio == 1.0 and res.intervals == 4


def test_mec_first_hit_mode():
    rows = [row(i, 1.0, 10) for i in range(50)]
    assert mean_evaluation_cost(rows, [10, 20, 30, 40], 0.5, "first_hit").mec == 10
    rows = [row(i, 0.9 if i % 10 >= 3 else 0.1, 10) for i in range(50)]
    assert mean_evaluation_cost(rows, [10, 20, 30, 40], 0.75, "first_hit").mec == 40


def test_mec_never_reached():
    rows = [row(i, 0.6, 10) for i in range(50)]
    res = mean_evaluation_cost(rows, [10, 20, 30, 40], 0.75)
    assert res.mec is None and res.success_ratio == 0.0


def test_mec_partial_success_and_accounting():
    rng = np.random.default_rng(2)
    rows = [row(i, float(rng.uniform()), int(rng.integers(5, 50))) for i in range(100)]
    shifts = list(range(10, 100, 10))
    res = mean_evaluation_cost(rows, shifts, 0.75)
    assert 0 < res.successes <= res.intervals == 9
    total = sum(r.evals_search for r in rows)
    assert res.mec * res.successes <= total
    with pytest.raises(ValueError):
        mean_evaluation_cost([], shifts, 0.5)
    with pytest.raises(ValueError):
        mean_evaluation_cost(rows, shifts, 0.5, "bogus")
