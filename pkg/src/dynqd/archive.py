"""Grid archive of elites with per-cell Beta parameters and age bookkeeping."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

Cell = tuple[int, int]


class CorruptEvaluationError(ValueError):
    """Raised when an evaluation carries non-finite values."""


@dataclass(frozen=True)
class Evaluation:
    objective: float
    bcs: tuple[float, float]
    epoch: int = 0

    def same_values(self, other: "Evaluation") -> bool:
        # exact comparison, no slack: environments are declared non-noisy
        return self.objective == other.objective and self.bcs == other.bcs


@dataclass(eq=False)
class Elite:
    genome: np.ndarray
    eval: Evaluation
    id: int
    age: int = 0


class InsertKind(enum.Enum):
    FILLED_EMPTY = "filled_empty"
    REPLACED_WORSE = "replaced_worse"
    REJECTED_WORSE = "rejected_worse"


@dataclass(frozen=True)
class InsertOutcome:
    kind: InsertKind
    cell: Cell
    displaced: Optional[Elite] = None
    elite: Optional[Elite] = None
    # old_objective is what the offspring had to beat (None for empty cells)
    old_objective: Optional[float] = None

    @property
    def added(self) -> bool:
        return self.kind is not InsertKind.REJECTED_WORSE


@dataclass(frozen=True)
class RelocationResult:
    moved_to: Cell
    conflict: Optional[Elite] = None


def cell_indices(bcs, bounds, dims) -> np.ndarray:
    """Vectorised uniform binning of an (N, 2) BC array into (N, 2) cell indices.

    Out-of-range values land in the edge bins.
    """
    bcs = np.asarray(bcs, dtype=float)
    if not np.all(np.isfinite(bcs)):
        raise CorruptEvaluationError("non-finite behaviour characteristic")
    out = np.empty(bcs.shape, dtype=np.int64)
    for d, ((lo, hi), n) in enumerate(zip(bounds, dims)):
        idx = np.floor((bcs[..., d] - lo) * n / (hi - lo))
        out[..., d] = np.clip(idx, 0, n - 1)
    return out


def cell_index(bcs: Sequence[float], bounds, dims) -> Cell:
    """Map a BC pair to its (row, col) cell.

    Scalar twin of :func:`cell_indices`; the float operations are identical
    so both always agree.
    """
    out = []
    for v, (lo, hi), n in zip(bcs, bounds, dims):
        v = float(v)
        if not math.isfinite(v):
            raise CorruptEvaluationError("non-finite behaviour characteristic")
        out.append(min(max(math.floor((v - lo) * n / (hi - lo)), 0), n - 1))
    return out[0], out[1]


def _check_eval(evaluation: Evaluation) -> None:
    if not (math.isfinite(evaluation.objective) and all(math.isfinite(b) for b in evaluation.bcs)):
        raise CorruptEvaluationError(f"non-finite evaluation {evaluation!r}")


@dataclass
class GridArchive:
    """Two-dimensional MAP-Elites feature map.

    Besides the elites themselves the archive owns the per-cell Beta
    parameters used by biased parent selection and the set of elites that
    were (re-)evaluated during the current iteration, which drives the age
    counters.
    """

    dims: tuple[int, int]
    bounds: tuple[tuple[float, float], tuple[float, float]]
    maximize: bool = False
    rng_stream_id: int = 0
    alpha: np.ndarray = field(init=False, repr=False)
    beta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.dims = (int(self.dims[0]), int(self.dims[1]))
        self.bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if min(self.dims) < 1:
            raise ValueError(f"archive dims must be >= 1x1, got {self.dims}")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ValueError(f"BC bounds need lo < hi, got {(lo, hi)}")
        self.alpha = np.ones(self.dims)
        self.beta = np.ones(self.dims)
        self._grid: dict[Cell, Elite] = {}
        self._where: dict[int, Cell] = {}
        self._touched: set[int] = set()
        self._next_id = 0

    # -- queries ---------------------------------------------------------
    def __len__(self) -> int:
        return len(self._grid)

    def __contains__(self, elite: Elite) -> bool:
        return elite.id in self._where

    def __iter__(self):
        return iter(self.elites())

    def cell_index(self, bcs: Sequence[float]) -> Cell:
        return cell_index(bcs, self.bounds, self.dims)

    def occupant(self, cell: Cell) -> Optional[Elite]:
        return self._grid.get(cell)

    def cell_of(self, elite: Elite) -> Cell:
        try:
            return self._where[elite.id]
        except KeyError:
            raise LookupError(f"elite {elite.id} is not stored in the archive") from None

    def elites(self) -> list[Elite]:
        """All stored elites in row-major cell order."""
        return [self._grid[c] for c in sorted(self._grid)]

    def occupied_cells(self) -> list[Cell]:
        return sorted(self._grid)

    def is_better(self, a: float, b: float) -> bool:
        """True if objective ``a`` strictly beats ``b``."""
        return a > b if self.maximize else a < b

    def was_evaluated(self, elite: Elite) -> bool:
        """Whether the elite was (re-)evaluated during the current iteration."""
        return elite.id in self._touched

    def new_id(self) -> int:
        self._next_id += 1
        return self._next_id - 1

    # -- mutation --------------------------------------------------------
    def _reset_beta(self, cell: Cell) -> None:
        self.alpha[cell] = 1.0
        self.beta[cell] = 1.0

    def _put(self, elite: Elite, cell: Cell) -> None:
        self._grid[cell] = elite
        self._where[elite.id] = cell

    def try_insert(self, genome: np.ndarray, evaluation: Evaluation) -> InsertOutcome:
        """Offer a freshly evaluated solution to the archive."""
        _check_eval(evaluation)
        cell = self.cell_index(evaluation.bcs)
        incumbent = self._grid.get(cell)
        if incumbent is not None and not self.is_better(evaluation.objective, incumbent.eval.objective):
            return InsertOutcome(InsertKind.REJECTED_WORSE, cell, old_objective=incumbent.eval.objective)
        elite = Elite(np.array(genome, dtype=float, copy=True), evaluation, self.new_id())
        self._touched.add(elite.id)
        if incumbent is None:
            self._put(elite, cell)
            self._reset_beta(cell)
            return InsertOutcome(InsertKind.FILLED_EMPTY, cell, elite=elite)
        del self._where[incumbent.id]
        self._put(elite, cell)
        self._reset_beta(cell)
        return InsertOutcome(InsertKind.REPLACED_WORSE, cell, displaced=incumbent, elite=elite,
                             old_objective=incumbent.eval.objective)

    def add_elite(self, elite: Elite) -> InsertOutcome:
        """Insert an existing elite object (keeps its id); used for rebuilds and restores."""
        _check_eval(elite.eval)
        cell = self.cell_index(elite.eval.bcs)
        incumbent = self._grid.get(cell)
        if incumbent is not None:
            if not self.beats(elite, incumbent):
                return InsertOutcome(InsertKind.REJECTED_WORSE, cell, old_objective=incumbent.eval.objective)
            del self._where[incumbent.id]
        self._put(elite, cell)
        self._next_id = max(self._next_id, elite.id + 1)
        if incumbent is None:
            return InsertOutcome(InsertKind.FILLED_EMPTY, cell, elite=elite)
        return InsertOutcome(InsertKind.REPLACED_WORSE, cell, displaced=incumbent, elite=elite)

    def beats(self, a: Elite, b: Elite) -> bool:
        """Contest between two elites holding up-to-date values.

        Strictly better objective wins; on exact ties the older elite (lower id)
        keeps the cell.
        """
        if a.eval.objective == b.eval.objective:
            return a.id < b.id
        return self.is_better(a.eval.objective, b.eval.objective)

    def relocate(self, elite: Elite, new_eval: Evaluation) -> RelocationResult:
        """Store a re-evaluation and move the elite to the cell its new BCs map to.

        When the target cell is occupied the elite is left *pending* (not in
        the grid) and the occupant is returned as ``conflict``; the caller
        decides who keeps the cell.
        """
        old = self.cell_of(elite)
        _check_eval(new_eval)
        elite.eval = new_eval
        elite.age = 0
        self._touched.add(elite.id)
        target = self.cell_index(new_eval.bcs)
        if target == old:
            return RelocationResult(old)
        self.evict(elite)
        return self.contend(elite)

    def contend(self, elite: Elite) -> RelocationResult:
        """Try to place a pending elite at the cell of its stored BCs."""
        target = self.cell_index(elite.eval.bcs)
        occ = self._grid.get(target)
        if occ is None:
            self.place(elite, target)
            return RelocationResult(target)
        return RelocationResult(target, conflict=occ)

    def evict(self, elite: Elite) -> Cell:
        """Remove an elite from the grid, returning the cell it held."""
        cell = self.cell_of(elite)
        del self._grid[cell]
        del self._where[elite.id]
        return cell

    def place(self, elite: Elite, cell: Cell) -> None:
        if cell in self._grid:
            raise LookupError(f"cell {cell} is already occupied")
        self._put(elite, cell)
        self._reset_beta(cell)

    def refresh(self, elite: Elite, new_eval: Evaluation) -> None:
        """Overwrite stored values without moving (used for pending elites)."""
        _check_eval(new_eval)
        elite.eval = new_eval
        elite.age = 0
        self._touched.add(elite.id)

    def mark_evaluated(self, elite: Elite) -> None:
        self._touched.add(elite.id)

    def tick_ages(self) -> None:
        """End-of-iteration age update; clears the evaluated-this-iteration set."""
        for elite in self._grid.values():
            if elite.id in self._touched:
                elite.age = 0
            else:
                elite.age += 1
        self._touched.clear()

    def update_beta_params(self, parent_cells: Iterable[Cell]) -> None:
        """alpha += 1 everywhere, beta += 1 wherever no parent was picked."""
        self.alpha += 1.0
        mask = np.ones(self.dims, dtype=bool)
        for cell in set(parent_cells):
            mask[cell] = False
        self.beta[mask] += 1.0

    def clear(self) -> None:
        self._grid.clear()
        self._where.clear()

    # -- serialisation ---------------------------------------------------
    def to_dict(self) -> dict:
        cells = []
        for cell in sorted(self._grid):
            e = self._grid[cell]
            cells.append({
                "row": cell[0], "col": cell[1], "id": e.id,
                "genome": [float(v) for v in e.genome],
                "objective": e.eval.objective, "bcs": list(e.eval.bcs),
                "age": e.age, "epoch": e.eval.epoch,
            })
        return {"dims": list(self.dims), "bounds": [list(b) for b in self.bounds],
                "maximize": self.maximize, "cells": cells}

    @classmethod
    def from_dict(cls, data: dict) -> "GridArchive":
        archive = cls(tuple(data["dims"]), tuple(tuple(b) for b in data["bounds"]),
                      maximize=data.get("maximize", False))
        for i, c in enumerate(data["cells"]):
            ev = Evaluation(float(c["objective"]), tuple(float(b) for b in c["bcs"]), int(c["epoch"]))
            elite = Elite(np.asarray(c["genome"], dtype=float), ev, int(c.get("id", i)), int(c["age"]))
            archive._put(elite, (int(c["row"]), int(c["col"])))
            archive._next_id = max(archive._next_id, elite.id + 1)
        return archive
