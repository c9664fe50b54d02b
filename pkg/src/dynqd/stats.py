"""Confidence intervals, Welch's t-test and Bonferroni correction."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special


def t_sf(t: float, dof: float) -> float:
    """Upper tail of Student's t via the regularized incomplete beta."""
    x = dof / (dof + t * t)
    tail = 0.5 * special.betainc(dof / 2.0, 0.5, x)
    return float(tail if t >= 0 else 1.0 - tail)


def t_ppf(q: float, dof: float) -> float:
    return float(special.stdtrit(dof, q))


def confidence_interval_95(samples: Sequence[float]) -> tuple[float, float]:
    """(mean, half width) of a Student-t 95% interval."""
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n < 2:
        raise ValueError("need at least two samples for a confidence interval")
    mean = float(x.mean())
    s = float(x.std(ddof=1))
    return mean, t_ppf(0.975, n - 1) * s / math.sqrt(n)


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> tuple[float, float, float]:
    """Two-sided Welch test; returns (t, dof, p)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each group needs at least two samples")
    va = a.var(ddof=1) / len(a)
    vb = b.var(ddof=1) / len(b)
    diff = a.mean() - b.mean()
    if va + vb == 0.0:
        if diff == 0.0:
            return 0.0, float(len(a) + len(b) - 2), 1.0
        return math.copysign(math.inf, diff), float(len(a) + len(b) - 2), 0.0
    t = diff / math.sqrt(va + vb)
    dof = (va + vb) ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    p = min(1.0, 2.0 * t_sf(abs(t), dof))
    return float(t), float(dof), p


def bonferroni(pvalues: Sequence[float], k: int) -> list[float]:
    if k < 1:
        raise ValueError("k must be >= 1")
    return [min(1.0, p * k) for p in pvalues]


@dataclass
class ComparisonResult:
    metric: str
    group_a: str
    group_b: str
    mean_a: float
    mean_b: float
    t: float
    dof: float
    p_raw: float
    p_corrected: float

    @property
    def significant(self) -> bool:
        return self.p_corrected < 0.05


def compare_groups(metric: str, groups: dict[str, Sequence[float]]) -> list[ComparisonResult]:
    """All pairwise Welch tests with Bonferroni over the number of pairs."""
    names = list(groups)
    pairs = [(a, b) for i, a in enumerate(names) for b in names[i + 1:]]
    raw = []
    for a, b in pairs:
        raw.append(welch_t_test(groups[a], groups[b]))
    corrected = bonferroni([r[2] for r in raw], max(1, len(pairs)))
    return [ComparisonResult(metric, a, b, float(np.mean(groups[a])), float(np.mean(groups[b])),
                             t, dof, p, pc)
            for (a, b), (t, dof, p), pc in zip(pairs, raw, corrected)]
