"""Shared fixtures: a table-driven environment for hand-built archive scenarios."""
import numpy as np

from dynqd.archive import Evaluation, GridArchive
from dynqd.environments import DynamicEnvironment


class TableEnv(DynamicEnvironment):
    """Genome[0] is a key into ``table``: key -> (objective, bc1, bc2)."""

    name = "table"

    def __init__(self, table, maximize=False):
        super().__init__()
        self.table = dict(table)
        self.maximize = maximize

    def _raw(self, genomes):
        rows = np.array([self.table[int(g[0])] for g in genomes], dtype=float)
        return rows[:, 0].copy(), rows[:, 1:3].copy()

    def set(self, table):
        """Swap the table as a shift would."""
        self.table.update(table)
        self.epoch += 1

    def sigma_values(self):
        return {}


def unit_archive(dims=(10, 10), maximize=False):
    """Cells of width 1 so BC (r + 0.5, c + 0.5) lands in cell (r, c)."""
    return GridArchive(dims, ((0.0, float(dims[0])), (0.0, float(dims[1]))), maximize=maximize)


def put(archive, env, key):
    """Insert genome ``key`` at its current table values."""
    g = np.array([float(key)])
    o, b1, b2 = env.table[key]
    return archive.try_insert(g, Evaluation(o, (b1, b2), env.epoch)).elite
