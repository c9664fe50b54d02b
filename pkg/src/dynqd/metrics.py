"""Perfect-information instrumentation against an ideal, fully refreshed archive."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .archive import GridArchive, cell_indices


@dataclass
class IdealArchive:
    """Best refreshed elite per cell, stored as parallel arrays sorted by cell."""

    dims: tuple
    ids: np.ndarray
    cells: np.ndarray  # (k, 2)
    objectives: np.ndarray
    bcs: np.ndarray  # (k, 2)
    oracle_evaluations: int = 0

    def __len__(self) -> int:
        return len(self.ids)

    def as_dict(self) -> dict:
        """cell -> (id, objective, bcs); handy for equality checks."""
        return {(int(c[0]), int(c[1])): (int(i), float(o), (float(b[0]), float(b[1])))
                for i, c, o, b in zip(self.ids, self.cells, self.objectives, self.bcs)}


@dataclass
class IterationMetrics:
    iteration: int
    epoch: int
    occupancy: int
    survival: float
    mse_obj: Optional[float]
    mse_bc1: Optional[float]
    mse_bc2: Optional[float]
    mse_qd: float
    evals_search: int
    evals_oracle: int


@dataclass
class MecResult:
    threshold: float
    mec: Optional[float]
    success_ratio: float
    intervals: int = 0
    successes: int = 0


class EvalCache:
    """Per-epoch memo of oracle evaluations keyed by elite id.

    Evaluation is deterministic within an epoch and genomes never change, so
    a hit is exactly what a fresh evaluation would return.
    """

    def __init__(self):
        self.epoch = None
        self._store: dict[int, tuple] = {}

    def lookup(self, env, elites):
        if env.epoch != self.epoch:
            self.epoch = env.epoch
            self._store.clear()
        miss = [e for e in elites if e.id not in self._store]
        if miss:
            objs, bcs = env.evaluate_arrays(np.stack([e.genome for e in miss]))
            for e, o, b in zip(miss, objs.tolist(), bcs.tolist()):
                self._store[e.id] = (o, tuple(b))
        return [self._store[e.id] for e in elites]


def ideal_archive(live: GridArchive, env, cache: Optional[EvalCache] = None) -> IdealArchive:
    """Re-evaluate copies of every live elite and bin them into an empty grid.

    ``env`` should be a snapshot so the live environment's counters stay
    untouched. Cell conflicts keep the better objective; exact ties keep the
    lower id.
    """
    elites = live.elites()
    n = len(elites)
    if n == 0:
        e2 = np.empty((0, 2))
        return IdealArchive(live.dims, np.empty(0, dtype=np.int64), e2.astype(np.int64),
                            np.empty(0), e2, 0)
    if cache is not None:
        vals = cache.lookup(env, elites)
        objs = np.array([v[0] for v in vals])
        bcs = np.array([v[1] for v in vals], dtype=float)
    else:
        objs, bcs = env.evaluate_arrays(np.stack([e.genome for e in elites]))
    ids = np.array([e.id for e in elites], dtype=np.int64)
    cells = cell_indices(bcs, live.bounds, live.dims)
    flat = cells[:, 0] * live.dims[1] + cells[:, 1]
    signed = -objs if live.maximize else objs
    order = np.lexsort((ids, signed, flat))
    first = np.ones(n, dtype=bool)
    first[1:] = flat[order][1:] != flat[order][:-1]
    keep = order[first]
    return IdealArchive(live.dims, ids[keep], cells[keep], objs[keep], bcs[keep], n)


def survival_rate(live: GridArchive, ideal: IdealArchive) -> float:
    """Share of live elites that also sit in the ideal archive (1.0 when empty)."""
    if len(live) == 0:
        return 1.0
    return len(ideal) / len(live)


def qd_score(objectives, env) -> float:
    return float(np.sum(env.qd_contribution(objectives)))


def mse_metrics(live: GridArchive, ideal: IdealArchive, env):
    """(mse_obj, mse_bc1, mse_bc2, mse_qd); per-elite terms are None without survivors."""
    elites = live.elites()
    live_obj = np.array([e.eval.objective for e in elites])
    qd_live = qd_score(live_obj, env) if len(elites) else 0.0
    qd_ideal = qd_score(ideal.objectives, env) if len(ideal) else 0.0
    mse_qd = (qd_live - qd_ideal) ** 2
    if len(ideal) == 0:
        return None, None, None, mse_qd
    by_id = {e.id: e for e in elites}
    surv = [by_id[int(i)] for i in ideal.ids]
    o = np.array([e.eval.objective for e in surv])
    b = np.array([e.eval.bcs for e in surv], dtype=float)
    d_obj = o - ideal.objectives
    d_bc = b - ideal.bcs
    return (float(np.mean(d_obj ** 2)), float(np.mean(d_bc[:, 0] ** 2)),
            float(np.mean(d_bc[:, 1] ** 2)), float(mse_qd))


def measure(iteration: int, live: GridArchive, env, evals_search: int,
            cache: Optional[EvalCache] = None) -> IterationMetrics:
    """Full metrics row; ``env`` is snapshotted so the live counters are untouched."""
    snap = env.snapshot()
    ideal = ideal_archive(live, snap, cache)
    mo, m1, m2, mq = mse_metrics(live, ideal, env)
    return IterationMetrics(iteration, env.epoch, len(live), survival_rate(live, ideal),
                            mo, m1, m2, mq, evals_search, ideal.oracle_evaluations)


def mean_evaluation_cost(rows: Sequence, shift_iterations: Sequence[int], threshold: float,
                         cost_mode: str = "interval") -> MecResult:
    """Mean search evaluations spent per known-shift interval that reaches ``threshold``.

    Intervals run from each known shift iteration up to the next one (the
    last one up to the end of the log). An interval succeeds if survival
    reaches the threshold at some iteration inside it. ``cost_mode``
    "interval" charges every search evaluation made in a successful
    interval; "first_hit" stops counting at the first iteration meeting the
    threshold.
    """
    if not rows:
        raise ValueError("empty run log")
    if cost_mode not in ("interval", "first_hit"):
        raise ValueError(f"unknown cost_mode {cost_mode!r}")
    get = (lambda r, k: r[k]) if isinstance(rows[0], dict) else (lambda r, k: getattr(r, k))
    its = np.array([int(get(r, "iteration")) for r in rows])
    surv = np.array([float(get(r, "survival")) for r in rows])
    cost = np.array([int(get(r, "evals_search")) for r in rows])
    end = int(its.max()) + 1
    bounds = sorted(s for s in shift_iterations if s < end)
    costs = []
    for k, s in enumerate(bounds):
        e = bounds[k + 1] if k + 1 < len(bounds) else end
        mask = (its >= s) & (its < e)
        if not mask.any():
            continue
        hits = np.nonzero(mask & (surv >= threshold))[0]
        if len(hits) == 0:
            costs.append(None)
            continue
        if cost_mode == "interval":
            costs.append(int(cost[mask].sum()))
        else:
            costs.append(int(cost[mask & (its <= its[hits[0]])].sum()))
    n_int = len(costs)
    ok = [c for c in costs if c is not None]
    mec = float(np.mean(ok)) if ok else None
    return MecResult(threshold, mec, (len(ok) / n_int) if n_int else 0.0, n_int, len(ok))


def run_means(rows: Sequence[IterationMetrics]) -> dict:
    """Per-run averages; null MSE rows are skipped rather than counted as zero."""
    out = {"survival": float(np.mean([r.survival for r in rows]))}
    for k in ("mse_obj", "mse_bc1", "mse_bc2", "mse_qd"):
        vals = [getattr(r, k) for r in rows if getattr(r, k) is not None]
        out[k] = float(np.mean(vals)) if vals else None
    return out
