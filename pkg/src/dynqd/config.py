"""Experiment configuration: YAML file -> :class:`ExperimentConfig`."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import yaml

from .dynamics import DetectionKind, DetectionStrategy, ReevaluationKind, ReevaluationStrategy

OUTPUT_ENV_VAR = "DYNQD_OUTPUT_DIR"
SMOKE_ITERATIONS = 200

_ALIASES = {
    "map_elites": "map_elites", "mapelites": "map_elites", "me": "map_elites",
    "cma_me": "cma_me", "cmame": "cma_me",
    "none": "none", "d_none": "none", "e_none": "none", "null": "none",
    "oldest": "oldest", "d_o": "oldest",
    "replacees": "replacees", "d_r": "replacees", "e_r": "replacees",
    "all": "all", "e_all": "all",
}

# per (environment, algorithm): offspring per emitter, emitters
_DEFAULT_BATCH = {
    ("sphere", "map_elites"): (10, 1), ("sphere", "cma_me"): (20, 4),
    ("lander", "map_elites"): (5, 1), ("lander", "cma_me"): (10, 4),
}
_DEFAULT_DIMS = {"sphere": (100, 100), "lander": (50, 50)}
_DEFAULT_BOUNDS = {"sphere": ((-256.0, 256.0), (-256.0, 256.0)),
                   "lander": ((-1.0, 1.0), (-3.0, 0.0))}
_DEFAULT_MUTATION = {"sphere": 8.0, "lander": 0.1}
_DEFAULT_CMA_SIGMA0 = {"sphere": 0.18, "lander": 0.5}


class ConfigError(ValueError):
    pass


def _norm(value, what: str) -> str:
    key = str(value).strip().lower().replace("-", "_")
    if key not in _ALIASES:
        raise ConfigError(f"unknown {what}: {value!r}")
    return _ALIASES[key]


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    environment: str = "sphere"
    env_params: dict = field(default_factory=dict)
    algorithm: str = "map_elites"
    sampling: str = "default"
    detection: DetectionStrategy = field(default_factory=DetectionStrategy)
    reevaluation: ReevaluationStrategy = field(default_factory=ReevaluationStrategy)
    archive_dims: Optional[tuple] = None
    archive_bounds: Optional[tuple] = None
    total_iterations: int = 2000
    shift_period: Optional[int] = 10
    batch_size: Optional[int] = None
    n_emitters: Optional[int] = None
    mutation_sigma: Optional[float] = None
    cma_sigma0: Optional[float] = None
    gamma: float = 0.5
    m_retention: Optional[int] = None
    metrics_every: int = 1
    seeds: list = field(default_factory=lambda: [0])
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.environment not in ("sphere", "lander"):
            raise ConfigError(f"unknown environment {self.environment!r}")
        if self.algorithm not in ("map_elites", "cma_me"):
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.sampling not in ("default", "custom"):
            raise ConfigError(f"sampling must be 'default' or 'custom', got {self.sampling!r}")
        b, k = _DEFAULT_BATCH[(self.environment, self.algorithm)]
        if self.batch_size is None:
            self.batch_size = b
        if self.n_emitters is None:
            self.n_emitters = k if self.algorithm == "cma_me" else 1
        if self.archive_dims is None:
            self.archive_dims = _DEFAULT_DIMS[self.environment]
        if self.archive_bounds is None:
            self.archive_bounds = _DEFAULT_BOUNDS[self.environment]
        if self.mutation_sigma is None:
            self.mutation_sigma = _DEFAULT_MUTATION[self.environment]
        if self.cma_sigma0 is None:
            self.cma_sigma0 = _DEFAULT_CMA_SIGMA0[self.environment]
        self.archive_dims = tuple(int(v) for v in self.archive_dims)
        self.archive_bounds = tuple(tuple(float(v) for v in b) for b in self.archive_bounds)
        self.seeds = [int(s) for s in self.seeds]
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"seeds must be distinct: {self.seeds}")
        if self.total_iterations < 1:
            raise ConfigError("total_iterations must be >= 1")
        if self.shift_period is not None and self.total_iterations < self.shift_period:
            raise ConfigError("total_iterations must be >= shift_period")
        if self.batch_size < 1 or self.n_emitters < 1 or self.metrics_every < 1:
            raise ConfigError("batch_size, n_emitters and metrics_every must be >= 1")
        if self.mutation_sigma <= 0 or self.cma_sigma0 <= 0:
            raise ConfigError("mutation_sigma and cma_sigma0 must be > 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must lie in [0, 1]")

    @property
    def offspring_per_iteration(self) -> int:
        return self.batch_size * self.n_emitters

    @property
    def tag(self) -> str:
        return f"{self.detection.tag}-{self.reevaluation.tag}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["detection"] = {"kind": self.detection.kind.value, "m_detectors": self.detection.m_detectors,
                          "lambda_age": self.detection.lambda_age}
        d["reevaluation"] = self.reevaluation.kind.value
        d["archive_dims"] = list(self.archive_dims)
        d["archive_bounds"] = [list(b) for b in self.archive_bounds]
        return d

    def config_hash(self) -> str:
        """Hash of everything that shapes a run except seeds and where output goes."""
        d = self.to_dict()
        d.pop("seeds")
        d.pop("output_dir")
        d.pop("name")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir or os.environ.get(OUTPUT_ENV_VAR) or "results")


def _detection(raw) -> DetectionStrategy:
    if raw is None:
        return DetectionStrategy()
    if isinstance(raw, str):
        return DetectionStrategy(DetectionKind(_norm(raw, "detection")))
    raw = dict(raw)
    kind = DetectionKind(_norm(raw.pop("kind", "none"), "detection"))
    return DetectionStrategy(kind, **raw)


def _reevaluation(raw) -> ReevaluationStrategy:
    if raw is None:
        return ReevaluationStrategy()
    if isinstance(raw, dict):
        raw = raw.get("kind", "none")
    return ReevaluationStrategy(ReevaluationKind(_norm(raw, "reevaluation")))


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config from the nested layout documented in the README.

    Unknown keys are rejected so typos do not silently fall back to defaults.
    """
    data = dict(data or {})
    kw: dict = {}
    env = data.pop("environment", "sphere")
    if isinstance(env, dict):
        env = dict(env)
        kw["environment"] = str(env.pop("kind", "sphere")).lower()
        kw["env_params"] = env
    else:
        kw["environment"] = str(env).lower()
    algo = data.pop("algorithm", "map_elites")
    if isinstance(algo, dict):
        algo = dict(algo)
        kw["algorithm"] = _norm(algo.pop("kind", "map_elites"), "algorithm")
        for key in ("sampling", "batch_size", "n_emitters", "mutation_sigma", "cma_sigma0",
                    "gamma", "m_retention"):
            if key in algo:
                kw[key] = algo.pop(key)
        if algo:
            raise ConfigError(f"unknown algorithm keys: {sorted(algo)}")
    else:
        kw["algorithm"] = _norm(algo, "algorithm")
    kw["detection"] = _detection(data.pop("detection", None))
    kw["reevaluation"] = _reevaluation(data.pop("reevaluation", None))
    arch = data.pop("archive", None)
    if arch:
        arch = dict(arch)
        if "dims" in arch:
            kw["archive_dims"] = tuple(arch.pop("dims"))
        if "bounds" in arch:
            kw["archive_bounds"] = tuple(tuple(b) for b in arch.pop("bounds"))
        if arch:
            raise ConfigError(f"unknown archive keys: {sorted(arch)}")
    known = {f for f in ExperimentConfig.__dataclass_fields__}
    for key in list(data):
        if key not in known:
            raise ConfigError(f"unknown config key: {key!r}")
        kw[key] = data.pop(key)
    try:
        return ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    data = data or {}
    data.setdefault("name", path.stem)
    return config_from_dict(data)


def with_overrides(cfg: ExperimentConfig, seed: Optional[int] = None, n_seeds: Optional[int] = None,
                   out: Optional[str] = None, smoke: bool = False) -> ExperimentConfig:
    """Apply CLI flags. ``--seeds K`` expands to K consecutive seeds from ``--seed`` (or 0)."""
    kw = {}
    if n_seeds is not None:
        if n_seeds < 1:
            raise ConfigError("--seeds must be >= 1")
        base = seed if seed is not None else 0
        kw["seeds"] = list(range(base, base + n_seeds))
    elif seed is not None:
        kw["seeds"] = [seed]
    if out is not None:
        kw["output_dir"] = out
    if smoke:
        kw["total_iterations"] = min(cfg.total_iterations, SMOKE_ITERATIONS)
    return replace(cfg, **kw) if kw else cfg
