"""The dynamic QD run loop and seeded repetition management."""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .archive import GridArchive
from .config import ExperimentConfig
from .dynamics import (CascadeReport, DetectionKind, DetectionReport, ReevaluationKind,
                       detect_shift, reevaluate_all, reevaluate_replacees_cascade,
                       replacee_probes, sample_detectors_oldest)
from .emitters import CmaMeEmitter, MapElitesEmitter, RestartRule, SelectionMode
from .environments import (LanderEnvironment, LanderState, PhysicsConfig, ShiftSchedule,
                           SphereEnvironment, SphereState, sample_physics)
from .metrics import EvalCache, mean_evaluation_cost, measure

STREAMS = ("env_shift", "emitter", "detection", "bootstrap", "physics", "retention")
THRESHOLDS = (0.5, 0.75)


class RunError(RuntimeError):
    """A run aborted; ``partial`` holds whatever was recorded before the failure."""

    def __init__(self, message: str, partial: Optional["RunRecord"] = None):
        super().__init__(message)
        self.partial = partial


def make_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators per purpose, derived from the run seed."""
    return {name: np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
            for i, name in enumerate(STREAMS)}


def _pick(params: dict, cls) -> dict:
    names = {f.name for f in fields(cls)}
    return {k: v for k, v in params.items() if k in names}


def build_environment(cfg: ExperimentConfig, physics_rng: np.random.Generator):
    p = dict(cfg.env_params)
    if cfg.environment == "sphere":
        return SphereEnvironment(SphereState(**_pick(p, SphereState)),
                                 n_dims=int(p.get("n_dims", 100)),
                                 genome_bounds=tuple(p.get("genome_bounds", (-10.24, 10.24))))
    base = PhysicsConfig(**_pick(p.get("physics", {}), PhysicsConfig))
    physics = sample_physics(physics_rng, base, init_speed=float(p.get("init_speed", 0.5)),
                             init_angle=float(p.get("init_angle", 0.2)))
    state_kw = _pick(p, LanderState)
    state_kw.pop("physics", None)
    return LanderEnvironment(LanderState(physics=physics, **state_kw),
                             genome_bounds=tuple(p.get("genome_bounds", (-1.0, 1.0))))


def build_emitters(cfg: ExperimentConfig, env) -> list:
    if cfg.algorithm == "map_elites":
        mode = SelectionMode.BETA if cfg.sampling == "custom" else SelectionMode.UNIFORM
        return [MapElitesEmitter(cfg.batch_size, cfg.mutation_sigma, mode, env.genome_bounds,
                                 env.n_dims)]
    return [CmaMeEmitter(np.zeros(env.n_dims), cfg.cma_sigma0, cfg.batch_size, env.genome_bounds,
                         RestartRule.NO_IMPROVEMENT, cfg.gamma, cfg.m_retention,
                         maximize=env.maximize, name=f"emitter{i}")
            for i in range(cfg.n_emitters)]


@dataclass
class RunRecord:
    config: ExperimentConfig
    config_hash: str
    seed: int
    rows: list = field(default_factory=list)
    evals_search: list = field(default_factory=list)
    mec: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    archive: Optional[GridArchive] = None
    env: object = None  # final environment, for post-hoc oracle checks
    shift_log: list = field(default_factory=list)
    dynamics_log: list = field(default_factory=list)
    emitter_log: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    error: Optional[str] = None


def run_experiment(cfg: ExperimentConfig, seed: int, metrics: bool = True,
                   trace: bool = False) -> RunRecord:
    """Execute one seeded run of the detect / re-evaluate / insert / update / shift loop."""
    t0 = time.perf_counter()
    rngs = make_streams(seed)
    env = build_environment(cfg, rngs["physics"])
    archive = GridArchive(cfg.archive_dims, cfg.archive_bounds, maximize=env.maximize)
    schedule = ShiftSchedule(cfg.shift_period)
    emitters = build_emitters(cfg, env)
    m_det = cfg.detection.m_detectors or cfg.offspring_per_iteration
    # sphere oracle calls are cheap and vectorised; the memo pays off for episodes
    cache = EvalCache() if metrics and cfg.environment == "lander" else None
    rec = RunRecord(cfg, cfg.config_hash(), seed, archive=archive, env=env)
    log = rec.trace.append if trace else (lambda item: None)
    t = -1
    try:
        for t in range(cfg.total_iterations):
            _iteration(t, cfg, env, archive, emitters, rngs, m_det, rec, log)
            if metrics and t % cfg.metrics_every == 0:
                rec.rows.append(measure(t, archive, env, rec.evals_search[-1], cache))
            if schedule.fires(t + 1):
                env.shift(rngs["env_shift"])
                rec.shift_log.append({"iteration": t + 1, "epoch": env.epoch,
                                      "sigma_values": env.sigma_values()})
                log((t, "shift"))
    except Exception as exc:
        rec.error = f"iteration {t}: {type(exc).__name__}: {exc}"
        rec.wall_clock = time.perf_counter() - t0
        raise RunError(rec.error, rec) from exc
    shifts = schedule.shift_iterations(cfg.total_iterations)
    if rec.rows:
        rec.mec = {th: mean_evaluation_cost(rec.rows, shifts, th) for th in THRESHOLDS}
    rec.wall_clock = time.perf_counter() - t0
    return rec


def _iteration(t, cfg, env, archive, emitters, rngs, m_det, rec, log) -> None:
    start_evals = env.evaluations
    # (1) offspring
    if cfg.algorithm == "map_elites":
        genomes, parents = emitters[0].ask(archive, rngs["emitter"], rngs["bootstrap"])
        sizes = [len(genomes)]
    else:
        batches = [em.ask(archive, rngs["emitter"]) for em in emitters]
        genomes, parents = np.concatenate(batches), []
        sizes = [len(b) for b in batches]
    off_evals = env.evaluate_batch(genomes)
    log((t, "generate"))

    # (2) detection; probe values are written back whatever the outcome
    kind = cfg.detection.kind
    if kind is DetectionKind.OLDEST:
        probes = sample_detectors_oldest(archive, m_det, cfg.detection.lambda_age, rngs["detection"])
    elif kind is DetectionKind.REPLACEES:
        probes = replacee_probes(archive, off_evals)
    else:
        probes = []
    report, cascade = DetectionReport(False), CascadeReport()
    if probes:
        report = detect_shift(env, probes)
        cascade += reevaluate_replacees_cascade(archive, env, probes,
                                                known={pid: new for pid, _, new in report.probes})
    log((t, "detect"))

    # (3) re-evaluation
    if report.shift_detected:
        rk = cfg.reevaluation.kind
        if rk is ReevaluationKind.REPLACEES:
            cascade += reevaluate_replacees_cascade(archive, env, replacee_probes(archive, off_evals))
        elif rk is ReevaluationKind.ALL:
            before = len(archive)
            cascade.reevaluated += reevaluate_all(archive, env)
            cascade.discarded += before - len(archive)
        if rk is not ReevaluationKind.NONE:
            log((t, "reevaluate"))

    # (4) insertion
    outcomes = [archive.try_insert(g, ev) for g, ev in zip(genomes, off_evals)]
    log((t, "insert"))

    # (5) emitter updates, then ages
    if cfg.algorithm == "map_elites":
        emitters[0].tell(archive, parents)
    else:
        offset = 0
        for em, n in zip(emitters, sizes):
            sl = slice(offset, offset + n)
            em.tell(genomes[sl], off_evals[sl], outcomes[sl], archive, rngs["emitter"])
            offset += n
        if report.shift_detected and cfg.sampling == "custom":
            for em in emitters:
                em.retention_update(archive, rngs["retention"])
        for em in emitters:
            for ev in em.events:
                rec.emitter_log.append({"iteration": t, **ev})
            em.events.clear()
    archive.tick_ages()
    log((t, "update"))

    spent = env.evaluations - start_evals
    rec.evals_search.append(spent)
    rec.dynamics_log.append({
        "iteration": t, "strategy": cfg.tag, "probes": [pid for pid, _, _ in report.probes],
        "shift_detected": report.shift_detected, "reevaluated": cascade.reevaluated,
        "moved": cascade.moved, "discarded": cascade.discarded,
        "evaluations_spent": report.evaluations_spent + cascade.reevaluated,
    })


def _run_one(args):
    cfg, seed = args
    return run_experiment(cfg, seed)


def run_set(cfg: ExperimentConfig, workers: int = 1) -> list[RunRecord]:
    """All seeds of a config; runs are independent so they may use separate processes."""
    if workers <= 1 or len(cfg.seeds) == 1:
        return [run_experiment(cfg, s) for s in cfg.seeds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, [(cfg, s) for s in cfg.seeds]))
