"""Shift detection and archive re-evaluation strategies.

Detection re-evaluates a handful of stored elites and compares the fresh
values with the stored ones exactly. Re-evaluation either follows the
replacees (cascading through cells that refreshed elites move into) or
rebuilds the whole archive.
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .archive import Cell, Elite, Evaluation, GridArchive, cell_indices


class DetectionKind(enum.Enum):
    NONE = "none"
    OLDEST = "oldest"
    REPLACEES = "replacees"


class ReevaluationKind(enum.Enum):
    NONE = "none"
    REPLACEES = "replacees"
    ALL = "all"


@dataclass(frozen=True)
class DetectionStrategy:
    kind: DetectionKind = DetectionKind.NONE
    m_detectors: Optional[int] = None  # None -> offspring per iteration
    lambda_age: float = 0.1

    def __post_init__(self):
        if self.m_detectors is not None and self.m_detectors < 1:
            raise ValueError("m_detectors must be >= 1")
        if self.lambda_age <= 0:
            raise ValueError("lambda_age must be positive")

    @property
    def tag(self) -> str:
        return {"none": "d_none", "oldest": "d_O", "replacees": "d_R"}[self.kind.value]


@dataclass(frozen=True)
class ReevaluationStrategy:
    kind: ReevaluationKind = ReevaluationKind.NONE

    @property
    def tag(self) -> str:
        return {"none": "e_none", "replacees": "e_R", "all": "e_all"}[self.kind.value]


@dataclass
class DetectionReport:
    shift_detected: bool
    probes: list = field(default_factory=list)  # (elite id, old eval, new eval)
    evaluations_spent: int = 0


@dataclass
class CascadeReport:
    reevaluated: int = 0
    moved: int = 0
    discarded: int = 0

    def __iadd__(self, other: "CascadeReport"):
        self.reevaluated += other.reevaluated
        self.moved += other.moved
        self.discarded += other.discarded
        return self


def sample_detectors_oldest(archive: GridArchive, m: int, lambda_age: float,
                            rng: np.random.Generator) -> list[Elite]:
    """Draw min(m, occupancy) distinct elites with weight exp(lambda * age)."""
    elites = archive.elites()
    if not elites:
        return []
    ages = np.array([e.age for e in elites], dtype=float)
    # shift by the max age so the exponent never overflows
    w = np.exp(lambda_age * (ages - ages.max()))
    k = min(m, len(elites))
    idx = rng.choice(len(elites), size=k, replace=False, p=w / w.sum())
    return [elites[i] for i in idx]


def target_cells(archive: GridArchive, evals: Sequence[Evaluation]) -> list[Cell]:
    if not evals:
        return []
    bcs = np.array([e.bcs for e in evals], dtype=float)
    return [tuple(int(v) for v in c) for c in cell_indices(bcs, archive.bounds, archive.dims)]


def replacee_probes(archive: GridArchive, offspring_evals: Sequence[Evaluation]) -> list[Elite]:
    """Occupants of the cells the offspring would land in (deduplicated, offspring order)."""
    seen, out = set(), []
    for cell in target_cells(archive, offspring_evals):
        occ = archive.occupant(cell)
        if occ is not None and occ.id not in seen:
            seen.add(occ.id)
            out.append(occ)
    return out


def detect_shift(env, probes: Sequence[Elite]) -> DetectionReport:
    """Re-evaluate ``probes`` and compare with stored values (no tolerance).

    The caller is responsible for writing the fresh values back, normally via
    :func:`reevaluate_replacees_cascade` with ``known`` set.
    """
    if not probes:
        return DetectionReport(False)
    fresh = env.evaluate_batch(np.stack([p.genome for p in probes]))
    rows = [(p.id, p.eval, ev) for p, ev in zip(probes, fresh)]
    changed = any(not old.same_values(new) for _, old, new in rows)
    return DetectionReport(changed, rows, len(probes))


def reevaluate_replacees_cascade(archive: GridArchive, env, seed_elites: Iterable[Elite],
                                 known: Optional[dict] = None) -> CascadeReport:
    """Refresh ``seed_elites`` and follow every cell they move into.

    ``known`` maps elite ids to evaluations already made this iteration
    (detection probes) so they are stored without a second evaluation.
    Conflicts with a stale occupant re-evaluate that occupant first; if it
    stays put the two compete, otherwise it moves on and is processed in
    turn. Conflicts between two refreshed elites discard the loser.
    """
    known = dict(known or {})
    report = CascadeReport()
    start: dict[int, Cell] = {}
    pending: dict[int, Elite] = {}
    queue: deque[Elite] = deque()

    def fresh_eval(e: Elite) -> Evaluation:
        if e.id in known:
            return known.pop(e.id)
        report.reevaluated += 1
        return env.evaluate(e.genome)

    for e in seed_elites:
        if e in archive and e.id not in start:
            start[e.id] = archive.cell_of(e)
            queue.append(e)

    def settle(e: Elite, target: Cell, occ: Elite) -> None:
        """``e`` is pending and wants ``target`` which ``occ`` holds."""
        if not archive.was_evaluated(occ) or occ.id in known:
            start.setdefault(occ.id, target)
            res = archive.relocate(occ, fresh_eval(occ))
            if res.moved_to != target:
                # occupant left; e takes the freed cell
                archive.place(e, target)
                pending.pop(e.id, None)
                if res.conflict is not None:
                    pending[occ.id] = occ
                    queue.append(occ)
                return
        if archive.beats(e, occ):
            archive.evict(occ)
            archive.place(e, target)
            loser = occ
        else:
            loser = e
        pending.pop(e.id, None)
        pending.pop(loser.id, None)
        report.discarded += 1

    while queue:
        e = queue.popleft()
        if e.id in pending:
            res = archive.contend(e)
            if res.conflict is None:
                pending.pop(e.id)
            else:
                settle(e, res.moved_to, res.conflict)
            continue
        if e not in archive:
            continue  # discarded earlier in this cascade
        if archive.was_evaluated(e) and e.id not in known:
            continue  # single re-evaluation per iteration
        res = archive.relocate(e, fresh_eval(e))
        if res.conflict is not None:
            pending[e.id] = e
            settle(e, res.moved_to, res.conflict)

    if pending:  # defensive: every pending elite is resolved above
        raise RuntimeError(f"cascade left {len(pending)} elites unplaced")
    report.moved = sum(1 for eid, c0 in start.items()
                       if eid in archive._where and archive._where[eid] != c0)
    return report


def reevaluate_all(archive: GridArchive, env) -> int:
    """Re-evaluate every elite not yet refreshed this iteration and rebuild the grid.

    Returns the number of evaluations performed (the occupancy when nothing
    was refreshed before). Conflicts keep the better objective, ties the
    older elite.
    """
    elites = archive.elites()
    stale = [e for e in elites if not archive.was_evaluated(e)]
    if stale:
        fresh = env.evaluate_batch(np.stack([e.genome for e in stale]))
        for e, ev in zip(stale, fresh):
            archive.refresh(e, ev)
    before = {c: archive.occupant(c).id for c in archive.occupied_cells()}
    archive.clear()
    for e in sorted(elites, key=lambda e: e.id):
        archive.add_elite(e)
    for c in archive.occupied_cells():
        if before.get(c) != archive.occupant(c).id:
            archive.alpha[c] = 1.0
            archive.beta[c] = 1.0
    return len(stale)
