"""Plain CMA-ES state and update rules (positive log weights, lazy eigendecomposition)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class DegenerateCovariance(ArithmeticError):
    """Covariance lost positive-definiteness; the owner should restart."""


def log_weights(mu: int) -> np.ndarray:
    """Positive recombination weights for the ``mu`` best, summing to one."""
    if mu < 1:
        raise ValueError("mu must be >= 1")
    w = math.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    return w / w.sum()


def mu_effective(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return float(w.sum() ** 2 / np.sum(w ** 2))


@dataclass
class StrategyParams:
    weights: np.ndarray
    mu_eff: float
    cc: float
    cs: float
    c1: float
    cmu: float
    damps: float


def strategy_params(n: int, weights: np.ndarray, mu_eff: Optional[float] = None) -> StrategyParams:
    """Learning rates for dimension ``n`` given recombination weights."""
    mueff = mu_effective(weights) if mu_eff is None else float(mu_eff)
    cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
    cs = (mueff + 2) / (n + mueff + 5)
    c1 = 2 / ((n + 1.3) ** 2 + mueff)
    cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
    damps = 1 + 2 * max(0.0, math.sqrt(max(0.0, mueff - 1) / (n + 1)) - 1) + cs
    return StrategyParams(np.asarray(weights, dtype=float), mueff, cc, cs, c1, cmu, damps)


@dataclass
class CmaState:
    """Mean, covariance, step size and evolution paths of one CMA-ES instance.

    ``lower``/``upper`` optionally clamp samples to a box.
    """

    mean: np.ndarray
    sigma0: float
    lam: int
    lower: Optional[float] = None
    upper: Optional[float] = None
    sigma: float = field(init=False)
    C: np.ndarray = field(init=False, repr=False)
    pc: np.ndarray = field(init=False, repr=False)
    ps: np.ndarray = field(init=False, repr=False)
    generation: int = field(init=False, default=0)

    def __post_init__(self):
        self.mean = np.array(self.mean, dtype=float)
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        if self.lam < 2:
            raise ValueError("population size must be >= 2")
        self.reset(self.mean)

    @property
    def n(self) -> int:
        return self.mean.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return log_weights(self.lam // 2)

    @property
    def mu_eff(self) -> float:
        return mu_effective(self.weights)

    def reset(self, mean) -> None:
        n = len(mean)
        self.mean = np.array(mean, dtype=float)
        self.sigma = float(self.sigma0)
        self.C = np.eye(n)
        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        self.generation = 0
        self._B = np.eye(n)
        self._D = np.ones(n)
        self._eigen_gen = 0
        self._stale = False

    # -- eigendecomposition ------------------------------------------------
    def _eigen_interval(self) -> int:
        p = strategy_params(self.n, self.weights)
        return max(1, int(1.0 / (10 * self.n * (p.c1 + p.cmu))))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.C).min())

    def decompose(self, force: bool = False) -> None:
        if not (force or self._stale) and self.generation - self._eigen_gen < self._eigen_interval():
            return
        self.C = (self.C + self.C.T) / 2
        evals, B = np.linalg.eigh(self.C)
        if not np.all(np.isfinite(evals)) or evals.min() < 1e-14:
            raise DegenerateCovariance(f"min eigenvalue {evals.min():.3g}")
        self._B = B
        self._D = np.sqrt(evals)
        self._eigen_gen = self.generation
        self._stale = False

    def degenerate(self) -> bool:
        try:
            ev = np.linalg.eigvalsh((self.C + self.C.T) / 2)
        except np.linalg.LinAlgError:
            return True
        return (not np.all(np.isfinite(ev))) or ev.min() < 1e-14 or not (self.sigma > 0)

    def _invsqrt_times(self, v: np.ndarray) -> np.ndarray:
        return self._B @ ((self._B.T @ v) / self._D)

    # -- ask / tell ----------------------------------------------------------
    def ask(self, rng: np.random.Generator, n_samples: Optional[int] = None) -> np.ndarray:
        """Draw ``n_samples`` (default lam) candidates x = m + sigma * B D z."""
        self.decompose()
        k = self.lam if n_samples is None else n_samples
        z = rng.standard_normal((k, self.n))
        x = self.mean + self.sigma * (z * self._D) @ self._B.T
        if self.lower is not None or self.upper is not None:
            x = np.clip(x, self.lower, self.upper)
        return x

    def tell(self, ranked: np.ndarray, weights: Optional[np.ndarray] = None) -> None:
        """Standard update from candidates ordered best first.

        ``weights`` defaults to log weights over the best lam//2; passing
        weights of a different length selects that many parents.
        """
        ranked = np.atleast_2d(np.asarray(ranked, dtype=float))
        w = self.weights if weights is None else np.asarray(weights, dtype=float)
        mu = len(w)
        if ranked.shape[0] < mu:
            raise ValueError(f"need at least {mu} ranked candidates, got {ranked.shape[0]}")
        p = strategy_params(self.n, w)
        n = self.n
        chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
        self.decompose()

        old = self.mean
        y = (ranked[:mu] - old) / self.sigma
        y_w = w @ y
        self.mean = old + self.sigma * y_w

        self.ps = (1 - p.cs) * self.ps + math.sqrt(p.cs * (2 - p.cs) * p.mu_eff) * self._invsqrt_times(y_w)
        self.generation += 1
        ps_norm = float(np.linalg.norm(self.ps))
        h_sig = ps_norm / math.sqrt(1 - (1 - p.cs) ** (2 * self.generation)) < (1.4 + 2 / (n + 1)) * chi_n
        self.pc = (1 - p.cc) * self.pc + h_sig * math.sqrt(p.cc * (2 - p.cc) * p.mu_eff) * y_w

        delta_h = (1 - h_sig) * p.cc * (2 - p.cc)
        rank_mu = (y.T * w) @ y
        self.C = ((1 - p.c1 - p.cmu + p.c1 * delta_h) * self.C
                  + p.c1 * np.outer(self.pc, self.pc) + p.cmu * rank_mu)
        self.C = (self.C + self.C.T) / 2
        self.sigma *= math.exp((p.cs / p.damps) * (ps_norm / chi_n - 1))
        if not math.isfinite(self.sigma) or self.sigma <= 0:
            raise DegenerateCovariance(f"step size became {self.sigma}")

    def scaled_update(self, ranked: np.ndarray, gamma: float) -> None:
        """One mean + rank-mu covariance step with w and mu_eff scaled by gamma.

        Evolution paths and step size are left untouched, so gamma = 0 is an
        exact no-op and the scaling does not persist.
        """
        if not 0.0 <= gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        ranked = np.atleast_2d(np.asarray(ranked, dtype=float))
        if gamma == 0.0 or ranked.shape[0] == 0:
            return
        w = log_weights(ranked.shape[0])
        p = strategy_params(self.n, gamma * w, gamma * mu_effective(w))
        gw = gamma * w
        y = (ranked - self.mean) / self.sigma
        self.mean = self.mean + self.sigma * (gw @ y)
        rank_mu = (y.T * gw) @ y
        self.C = (1 - p.cmu * gw.sum()) * self.C + p.cmu * rank_mu
        self.C = (self.C + self.C.T) / 2
        self._stale = True
