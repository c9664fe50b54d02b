"""Offspring generation: MAP-Elites mutation and CMA-ME improvement emitters."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .archive import Cell, Elite, Evaluation, GridArchive, InsertKind, InsertOutcome
from .cma import CmaState, DegenerateCovariance, log_weights


class EmptyArchiveError(LookupError):
    """Parent selection on an empty archive; bootstrap with random genomes first."""


class SelectionMode(enum.Enum):
    UNIFORM = "uniform"
    BETA = "beta"


class RestartRule(enum.Enum):
    NO_IMPROVEMENT = "no_improvement"
    BASIC = "basic"


def me_select_parents(archive: GridArchive, k: int, mode: SelectionMode,
                      rng: np.random.Generator) -> list[tuple[Cell, Elite]]:
    """Pick ``k`` parent cells.

    Uniform draws cells with replacement. Beta mode draws one sample per
    occupied cell from Beta(alpha, beta) and keeps the k largest; when k
    exceeds occupancy further rounds of fresh draws are appended.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    cells = archive.occupied_cells()
    if not cells:
        raise EmptyArchiveError("archive is empty; generate random genomes to bootstrap")
    if mode is SelectionMode.UNIFORM:
        picks = rng.integers(len(cells), size=k)
    else:
        rows, cols = np.array(cells).T
        a, b = archive.alpha[rows, cols], archive.beta[rows, cols]
        picks = []
        while len(picks) < k:
            draws = rng.beta(a, b)
            # stable sort keeps row-major order among exact ties
            order = np.argsort(-draws, kind="stable")
            picks.extend(order[: k - len(picks)].tolist())
    return [(cells[i], archive.occupant(cells[i])) for i in picks]


def me_mutate(parent, sigma: float, rng: np.random.Generator, bounds=None) -> np.ndarray:
    """Gaussian mutation, clamped to ``bounds`` when given."""
    if sigma <= 0:
        raise ValueError("mutation sigma must be positive")
    parent = np.asarray(parent, dtype=float)
    child = parent + rng.normal(0.0, sigma, size=parent.shape)
    if bounds is not None:
        child = np.clip(child, bounds[0], bounds[1])
    return child


def random_genomes(n: int, n_dims: int, bounds, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(bounds[0], bounds[1], size=(n, n_dims))


@dataclass
class MapElitesEmitter:
    batch_size: int = 10
    mutation_sigma: float = 0.5
    selection_mode: SelectionMode = SelectionMode.UNIFORM
    genome_bounds: tuple = (-10.24, 10.24)
    n_dims: int = 100
    rng_stream_id: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.mutation_sigma <= 0:
            raise ValueError("mutation_sigma must be positive")

    def ask(self, archive: GridArchive, rng: np.random.Generator,
            bootstrap_rng: Optional[np.random.Generator] = None):
        """Return (genomes, parent cells). Empty archive -> uniform random genomes."""
        if len(archive) == 0:
            g = random_genomes(self.batch_size, self.n_dims, self.genome_bounds,
                               bootstrap_rng if bootstrap_rng is not None else rng)
            return g, []
        parents = me_select_parents(archive, self.batch_size, self.selection_mode, rng)
        genomes = np.stack([p.genome for _, p in parents])
        noise = rng.normal(0.0, self.mutation_sigma, size=genomes.shape)
        genomes = np.clip(genomes + noise, *self.genome_bounds)
        return genomes, [c for c, _ in parents]

    def tell(self, archive: GridArchive, parent_cells: Sequence[Cell]) -> None:
        archive.update_beta_params(parent_cells)


def improvement_order(genomes, evals: Sequence[Evaluation], outcomes: Sequence[InsertOutcome],
                      maximize: bool) -> list[int]:
    """Indices ranked: filled-empty by objective, then replaced by improvement, then rejected.

    Ties fall back to objective and then the genome itself, so the order
    does not depend on how the batch was permuted.
    """
    sign = -1.0 if maximize else 1.0
    keys = []
    for i, (g, ev, out) in enumerate(zip(genomes, evals, outcomes)):
        obj = sign * ev.objective  # smaller is better
        if out.kind is InsertKind.FILLED_EMPTY:
            group, primary = 0, obj
        elif out.kind is InsertKind.REPLACED_WORSE:
            delta = sign * (out.old_objective - ev.objective)  # positive improvement
            group, primary = 1, -delta
        else:
            group, primary = 2, obj
        keys.append((group, primary, obj, tuple(np.asarray(g, dtype=float).tolist()), i))
    return [k[-1] for k in sorted(keys)]


@dataclass
class CmaMeEmitter:
    """Improvement emitter wrapping one CMA-ES instance."""

    x0: np.ndarray
    sigma0: float = 0.5
    batch_size: int = 20
    genome_bounds: tuple = (-10.24, 10.24)
    restart_rule: RestartRule = RestartRule.NO_IMPROVEMENT
    gamma: float = 0.5
    m_retention: Optional[int] = None
    patience: int = 5
    maximize: bool = False
    name: str = "emitter0"
    optimizer: CmaState = field(init=False)
    stagnation: int = field(init=False, default=0)
    restarts: int = field(init=False, default=0)
    events: list = field(init=False, default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.m_retention is None:
            self.m_retention = self.batch_size
        self.optimizer = CmaState(np.array(self.x0, dtype=float), self.sigma0, self.batch_size,
                                  self.genome_bounds[0], self.genome_bounds[1])

    def _log(self, event: str, **info) -> None:
        self.events.append({"emitter": self.name, "event": event, **info})

    def restart(self, archive: GridArchive, rng: np.random.Generator, reason: str = "") -> None:
        elites = archive.elites()
        if elites:
            mean = elites[int(rng.integers(len(elites)))].genome
        else:
            mean = rng.uniform(*self.genome_bounds, size=self.optimizer.n)
        self.optimizer.reset(mean)
        self.stagnation = 0
        self.restarts += 1
        self._log("restart", reason=reason, restarts=self.restarts)

    def ask(self, archive: GridArchive, rng: np.random.Generator) -> np.ndarray:
        try:
            self.optimizer.decompose(force=True)
        except (DegenerateCovariance, np.linalg.LinAlgError):
            self.restart(archive, rng, reason="degenerate_covariance")
        return self.optimizer.ask(rng)

    def tell(self, genomes, evals: Sequence[Evaluation], outcomes: Sequence[InsertOutcome],
             archive: GridArchive, rng: np.random.Generator) -> None:
        genomes = np.asarray(genomes, dtype=float)
        if len(genomes) != self.batch_size:
            raise ValueError(f"tell expects {self.batch_size} candidates, got {len(genomes)}")
        n_improved = sum(o.added for o in outcomes)
        if n_improved == 0:
            self.stagnation += 1
        else:
            self.stagnation = 0
            order = improvement_order(genomes, evals, outcomes, self.maximize)
            try:
                self.optimizer.tell(genomes[order], log_weights(n_improved))
            except DegenerateCovariance:
                self.restart(archive, rng, reason="degenerate_covariance")
                return
        # a degenerate covariance is caught by the next ask
        if self.restart_rule is RestartRule.NO_IMPROVEMENT and self.stagnation >= self.patience:
            self.restart(archive, rng, reason="no_improvement")

    def retention_update(self, archive: GridArchive, rng: np.random.Generator) -> int:
        """Pull the search distribution toward stale elites; returns how many were used."""
        stale = [e for e in archive.elites() if not archive.was_evaluated(e)]
        if not stale or self.gamma == 0.0:
            return 0
        k = min(self.m_retention, len(stale))
        picked = [stale[i] for i in sorted(rng.choice(len(stale), size=k, replace=False))]
        sign = -1.0 if self.maximize else 1.0
        picked.sort(key=lambda e: (sign * e.eval.objective, e.id))
        self.optimizer.scaled_update(np.stack([e.genome for e in picked]), self.gamma)
        self._log("retention", used=k, gamma=self.gamma)
        return k
