"""Property-based checks of the archive, environment, emitter, dynamics and metrics invariants."""
from collections import Counter

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from dynqd.archive import Evaluation, InsertKind
from dynqd.cma import CmaState
from dynqd.dynamics import detect_shift, reevaluate_all, reevaluate_replacees_cascade
from dynqd.emitters import improvement_order
from dynqd.environments import LanderState, SphereState, lander_shift, sphere_objective, sphere_shift
from dynqd.metrics import ideal_archive, mse_metrics, survival_rate

from helpers import TableEnv, put, unit_archive

SETTINGS = settings(max_examples=60, deadline=None)

value = st.floats(0.0, 9.999, allow_nan=False)
entry = st.tuples(st.integers(0, 4).map(float), value, value)
table = st.lists(entry, min_size=1, max_size=30)


class CountingEnv(TableEnv):
    """Counts evaluations per key so the single-re-evaluation rule can be checked."""

    def __init__(self, table):
        super().__init__(table)
        self.calls = Counter()

    def _raw(self, genomes):
        for g in genomes:
            self.calls[int(g[0])] += 1
        return super()._raw(genomes)


def build(entries, env_cls=TableEnv, dims=(5, 5)):
    env = env_cls(dict(enumerate(entries)))
    a = unit_archive(dims)
    for k in range(len(entries)):
        env.table[k] = (entries[k][0], entries[k][1] * dims[0] / 10, entries[k][2] * dims[1] / 10)
        put(a, env, k)
    return env, a


def cells(a):
    return {c: (e.id, e.eval.objective, e.eval.bcs) for c, e in zip(a.occupied_cells(), a.elites())}


# -- archive -------------------------------------------------------------------------------

@SETTINGS
@given(table)
def test_occupancy_consistency_and_monotone_elitism(entries):
    env = TableEnv(dict(enumerate(entries)))
    a = unit_archive((5, 5))
    best = {}
    for k, (o, b1, b2) in enumerate(entries):
        env.table[k] = (o, b1 / 2, b2 / 2)
        put(a, env, k)
        for c, e in zip(a.occupied_cells(), a.elites()):
            assert a.cell_index(e.eval.bcs) == c
            assert e.eval.objective <= best.get(c, np.inf)
            best[c] = e.eval.objective


@SETTINGS
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3), st.floats(0, 5)), max_size=40),
       st.integers(0, 2**31))
def test_beta_floor_and_reset(ops, seed):
    rng = np.random.default_rng(seed)
    env = TableEnv({})
    a = unit_archive((4, 4))
    for k, (r, c, o) in enumerate(ops):
        env.table[k] = (o, r + 0.5, c + 0.5)
        out = a.try_insert(np.array([float(k)]), Evaluation(o, (r + 0.5, c + 0.5)))
        if out.kind is not InsertKind.REJECTED_WORSE:
            assert (a.alpha[out.cell], a.beta[out.cell]) == (1.0, 1.0)
        a.update_beta_params([tuple(x) for x in rng.integers(0, 4, size=(rng.integers(0, 3), 2))])
        assert a.alpha.min() >= 1 and a.beta.min() >= 1


@SETTINGS
@given(st.lists(st.tuples(st.lists(st.integers(0, 15), max_size=3),
                          st.lists(st.integers(0, 15), max_size=3)), min_size=1, max_size=25))
def test_age_law(schedule):
    """age == iterations since last evaluation, from an independent counter."""
    env = TableEnv({k: (1.0, k // 4 + 0.5, k % 4 + 0.5) for k in range(16)})
    a = unit_archive((4, 4))
    last = {}
    for t, (inserts, reevals) in enumerate(schedule):
        for k in reevals:
            e = a.occupant((k // 4, k % 4))
            if e is not None:
                reevaluate_replacees_cascade(a, env, [e])
                last[e.id] = t
        for k in inserts:
            if a.occupant((k // 4, k % 4)) is None:
                last[put(a, env, k).id] = t
        a.tick_ages()
        for e in a.elites():
            assert e.age == t - last[e.id]


# -- environments ----------------------------------------------------------------------------

@SETTINGS
@given(st.integers(0, 2**31), st.integers(1, 50))
def test_shift_bounds(seed, n):
    rng = np.random.default_rng(seed)
    s, lan = SphereState(), LanderState()
    for _ in range(n):
        t = sphere_shift(s, rng)
        d1, d2 = t.sigma_bc1 - s.sigma_bc1, t.sigma_bc2 - s.sigma_bc2
        assert abs(t.sigma_obj - s.sigma_obj) <= 10 and abs(d1) <= 5 and abs(d2) <= 5
        assert np.sign(d1) == np.sign(d2) or d1 == 0 or d2 == 0
        s = t
        lan = lander_shift(lan, rng)
        assert 0 <= lan.sigma_w <= 20 and 0 <= lan.sigma_tau <= 2


@SETTINGS
@given(st.lists(st.floats(-10, 10), min_size=100, max_size=100), st.floats(-20, 20))
def test_sphere_nonnegative_and_zero_at_center(genome, shift):
    s = SphereState(sigma_obj=shift)
    assert sphere_objective(np.array(genome), s) >= 0
    assert sphere_objective(np.full(100, s.center + shift), s) == 0


# -- emitters ----------------------------------------------------------------------------------

@SETTINGS
@given(st.integers(0, 2**31), st.integers(2, 8), st.integers(1, 6))
def test_cma_symmetry_and_positive_step(seed, n, rounds):
    rng = np.random.default_rng(seed)
    cma = CmaState(np.zeros(n), 0.5, 8)
    for _ in range(rounds):
        x = cma.ask(rng)
        ranked = x[np.argsort(np.sum(x ** 2, axis=1))]
        cma.tell(ranked)
        cma.scaled_update(ranked[: rng.integers(1, 5)], float(rng.uniform()))
        assert np.abs(cma.C - cma.C.T).max() < 1e-9
        assert cma.sigma > 0


@SETTINGS
@given(st.lists(st.tuples(st.floats(0, 5), st.sampled_from(list(InsertKind)), st.floats(0, 5)),
                min_size=1, max_size=12),
       st.randoms(use_true_random=False))
def test_improvement_ranking_total_order(items, rnd):
    from dynqd.archive import InsertOutcome
    genomes = [np.array([float(i)]) for i in range(len(items))]
    evals = [Evaluation(o, (0.0, 0.0)) for o, _, _ in items]
    outs = [InsertOutcome(k, (0, 0), old_objective=o + d) for o, k, d in items]
    ranked = [tuple(genomes[i]) for i in improvement_order(genomes, evals, outs, False)]
    perm = list(range(len(items)))
    rnd.shuffle(perm)
    shuffled = [tuple(genomes[perm[i]]) for i in
                improvement_order([genomes[p] for p in perm], [evals[p] for p in perm],
                                  [outs[p] for p in perm], False)]
    assert ranked == shuffled


# -- dynamics ------------------------------------------------------------------------------------

@SETTINGS
@given(table, st.lists(entry, min_size=30, max_size=30), st.data())
def test_cascade_bounds_single_evaluation_and_oracle(entries, shifted, data):
    env, a = build(entries, CountingEnv)
    a.tick_ages()
    env.set({k: (shifted[k][0], shifted[k][1] / 2, shifted[k][2] / 2) for k in range(len(entries))})
    env.calls.clear()
    live = a.elites()
    probes = data.draw(st.lists(st.sampled_from(live), unique_by=lambda e: e.id, max_size=len(live)))
    seeds = data.draw(st.lists(st.sampled_from(live), unique_by=lambda e: e.id, max_size=len(live)))
    occupancy = len(a)
    rep = detect_shift(env, probes)
    casc = reevaluate_replacees_cascade(a, env, probes, known={i: new for i, _, new in rep.probes})
    casc2 = reevaluate_replacees_cascade(a, env, [e for e in seeds if e in a])
    assert casc.reevaluated + casc2.reevaluated <= occupancy
    assert all(n == 1 for n in env.calls.values())
    a.tick_ages()
    # the whole archive as seeds reproduces the oracle rebuild
    expected = ideal_archive(a, env.snapshot()).as_dict()
    reevaluate_replacees_cascade(a, env, a.elites())
    assert cells(a) == expected


@SETTINGS
@given(table, st.lists(entry, min_size=30, max_size=30))
def test_reevaluate_all_equals_ideal(entries, shifted):
    env, a = build(entries)
    a.tick_ages()
    env.set({k: (shifted[k][0], shifted[k][1] / 2, shifted[k][2] / 2) for k in range(len(entries))})
    expected = ideal_archive(a, env.snapshot())
    reevaluate_all(a, env)
    assert cells(a) == expected.as_dict()
    after = ideal_archive(a, env.snapshot())
    assert survival_rate(a, after) == 1.0
    assert mse_metrics(a, after, env) == (0.0, 0.0, 0.0, 0.0)


@SETTINGS
@given(table, st.lists(entry, min_size=30, max_size=30))
def test_zero_false_positives(entries, _):
    env, a = build(entries)
    assert not detect_shift(env, a.elites()).shift_detected
