"""Dynamic benchmark environments.

Both environments are deterministic functions of (genome, state). Shifts
mutate the state at fixed schedule boundaries and bump the epoch counter
that stamps every :class:`~dynqd.archive.Evaluation`.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import lander_physics as lp
from .archive import Evaluation


class EvaluationError(RuntimeError):
    """An evaluation produced non-finite values (corrupt genome or physics divergence)."""


@dataclass(frozen=True)
class ShiftSchedule:
    """Fixed-period shifts; ``period=None`` means the environment never changes."""

    period: Optional[int] = 10
    rng_stream_id: int = 0

    def __post_init__(self):
        if self.period is not None and self.period < 1:
            raise ValueError("shift period must be >= 1")

    def fires(self, iteration: int) -> bool:
        return self.period is not None and iteration > 0 and iteration % self.period == 0

    def shift_iterations(self, total: int) -> list[int]:
        if self.period is None:
            return []
        return list(range(self.period, total, self.period))


def rademacher(rng: np.random.Generator) -> int:
    return 1 if rng.random() < 0.5 else -1


# ---------------------------------------------------------------------------
# sphere


@dataclass(frozen=True)
class SphereState:
    sigma_obj: float = 0.0
    sigma_bc1: float = 0.0
    sigma_bc2: float = 0.0
    center: float = 2.048
    gamma_obj: float = 10.0
    gamma_bc: float = 5.0
    clip_bound: float = 5.12


def _as_matrix(genomes) -> np.ndarray:
    g = np.asarray(genomes, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if not np.all(np.isfinite(g)):
        raise EvaluationError("genome contains non-finite entries")
    return g


def sphere_objective_batch(genomes, state: SphereState) -> np.ndarray:
    g = _as_matrix(genomes)
    return np.sum(np.square(g - (state.center + state.sigma_obj)), axis=1)


def sphere_bcs_batch(genomes, state: SphereState) -> np.ndarray:
    g = _as_matrix(genomes)
    half = g.shape[1] // 2
    clipped = np.clip(g, -state.clip_bound, state.clip_bound)
    out = np.empty((g.shape[0], 2))
    out[:, 0] = state.sigma_bc1 + np.sum(clipped[:, :half], axis=1)
    out[:, 1] = state.sigma_bc2 + np.sum(clipped[:, half:], axis=1)
    return out


def sphere_objective(genome, state: SphereState) -> float:
    """Shifted sphere, minimised at theta_i = center + sigma_obj."""
    return float(sphere_objective_batch(genome, state)[0])


def sphere_bcs(genome, state: SphereState) -> tuple[float, float]:
    """Offset sums of the clipped first and second halves of the genome."""
    b = sphere_bcs_batch(genome, state)[0]
    return float(b[0]), float(b[1])


def apply_sphere_shift(state: SphereState, sign_obj: int, u_obj: float,
                       sign_bc: int, u_bc: tuple[float, float]) -> SphereState:
    return replace(state,
                   sigma_obj=state.sigma_obj + sign_obj * u_obj,
                   sigma_bc1=state.sigma_bc1 + sign_bc * u_bc[0],
                   sigma_bc2=state.sigma_bc2 + sign_bc * u_bc[1])


def sphere_shift(state: SphereState, rng: np.random.Generator) -> SphereState:
    """Random-walk the three offsets; both BC offsets share one sign."""
    sign_obj = rademacher(rng)
    u_obj = rng.uniform(0.0, state.gamma_obj)
    sign_bc = rademacher(rng)
    u_bc = rng.uniform(0.0, state.gamma_bc, size=2)
    return apply_sphere_shift(state, sign_obj, u_obj, sign_bc, (float(u_bc[0]), float(u_bc[1])))


# ---------------------------------------------------------------------------
# lander


@dataclass(frozen=True)
class PhysicsConfig:
    timestep: float = 0.02
    gravity: float = -10.0
    main_acc: float = 18.0
    side_acc: float = 1.5
    side_ang_acc: float = 3.0
    mass: float = 5.0
    inertia: float = 10.0
    leg_dx: float = 0.6
    leg_dy: float = -0.6
    body_radius: float = 0.4
    half_width: float = 10.0
    y_scale: float = 20.0 / 3.0
    start_height: float = 10.0
    landing_vy: float = 2.0
    landing_vx: float = 1.5
    landing_angle: float = 0.4
    max_steps: int = 1000
    wind_enabled: bool = True
    # initial pose (x, y, vx, vy, angle, omega) and generator offsets;
    # filled once per run from the physics RNG stream
    initial_pose: tuple = (0.0, 10.0, 0.0, 0.0, 0.0, 0.0)
    wind_k0: int = 0
    torque_k0: int = 0

    def as_params(self) -> np.ndarray:
        p = np.zeros(lp.N_PARAMS)
        p[lp.P_DT] = self.timestep
        p[lp.P_GRAVITY] = self.gravity
        p[lp.P_MAIN_ACC] = self.main_acc
        p[lp.P_SIDE_ACC] = self.side_acc
        p[lp.P_SIDE_ANG_ACC] = self.side_ang_acc
        p[lp.P_MASS] = self.mass
        p[lp.P_INERTIA] = self.inertia
        p[lp.P_LEG_DX] = self.leg_dx
        p[lp.P_LEG_DY] = self.leg_dy
        p[lp.P_BODY_R] = self.body_radius
        p[lp.P_HALF_WIDTH] = self.half_width
        p[lp.P_Y_SCALE] = self.y_scale
        p[lp.P_LAND_VY] = self.landing_vy
        p[lp.P_LAND_VX] = self.landing_vx
        p[lp.P_LAND_ANGLE] = self.landing_angle
        p[lp.P_MAX_STEPS] = self.max_steps
        p[lp.P_WIND_ON] = 1.0 if self.wind_enabled else 0.0
        return p


def sample_physics(rng: np.random.Generator, base: PhysicsConfig = PhysicsConfig(),
                   init_speed: float = 0.5, init_angle: float = 0.2,
                   offset_window: int = 40) -> PhysicsConfig:
    """Draw the run-wide initial pose and wind-generator offsets.

    Offsets are confined to ``[0, offset_window)`` so the leading half-wave of
    the wind generator always points the same way.
    """
    vx, vy = rng.uniform(-init_speed, init_speed), rng.uniform(-init_speed, 0.0)
    angle = rng.uniform(-init_angle, init_angle)
    pose = (0.0, base.start_height, float(vx), float(vy), float(angle), 0.0)
    k0 = int(rng.integers(0, offset_window))
    t0 = int(rng.integers(0, offset_window))
    return replace(base, initial_pose=pose, wind_k0=k0, torque_k0=t0)


@dataclass(frozen=True)
class LanderState:
    sigma_w: float = 10.0
    sigma_tau: float = 1.0
    gamma_w: float = 0.15
    gamma_tau: float = 0.1
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    max_w: float = 20.0
    max_tau: float = 2.0

    def __post_init__(self):
        if not (0.0 <= self.sigma_w <= self.max_w and 0.0 <= self.sigma_tau <= self.max_tau):
            raise ValueError("wind parameters outside their clamp ranges")


def lander_simulate_batch(genomes, state: LanderState) -> tuple[np.ndarray, np.ndarray]:
    """Return (objectives, bcs) for a batch of flattened 8x4 policies."""
    g = _as_matrix(genomes)
    if g.shape[1] != 32:
        raise ValueError(f"lander policies have 32 weights, got {g.shape[1]}")
    ph = state.physics
    out, codes = lp.simulate_batch(np.ascontiguousarray(g), ph.as_params(),
                                   np.asarray(ph.initial_pose, dtype=float),
                                   float(state.sigma_w), float(state.sigma_tau),
                                   int(ph.wind_k0), int(ph.torque_k0))
    if np.any(codes == lp.DIVERGED):
        raise EvaluationError("lander physics diverged")
    bcs = np.empty((g.shape[0], 2))
    bcs[:, 0] = np.clip(out[:, 1], -1.0, 1.0)
    bcs[:, 1] = np.clip(out[:, 2], -3.0, 0.0)
    return out[:, 0].copy(), bcs


def lander_simulate(genome, state: LanderState) -> tuple[float, tuple[float, float]]:
    objs, bcs = lander_simulate_batch(genome, state)
    return float(objs[0]), (float(bcs[0, 0]), float(bcs[0, 1]))


def apply_lander_shift(state: LanderState, sign_w: int, u_w: float,
                       sign_tau: int, u_tau: float) -> LanderState:
    return replace(state,
                   sigma_w=max(min(state.sigma_w + sign_w * u_w, state.max_w), 0.0),
                   sigma_tau=max(min(state.sigma_tau + sign_tau * u_tau, state.max_tau), 0.0))


def lander_shift(state: LanderState, rng: np.random.Generator) -> LanderState:
    """Clamped random walk of wind power and turbulence (independent signs)."""
    sign_w = rademacher(rng)
    u_w = rng.uniform(0.0, state.gamma_w)
    sign_tau = rademacher(rng)
    u_tau = rng.uniform(0.0, state.gamma_tau)
    return apply_lander_shift(state, sign_w, float(u_w), sign_tau, float(u_tau))


# ---------------------------------------------------------------------------
# environment objects used by the run loop


class DynamicEnvironment:
    """Common behaviour: epoch stamping, evaluation counting, snapshots."""

    name = "base"
    maximize = False

    def __init__(self):
        self.epoch = 0
        self.evaluations = 0

    # subclasses implement _raw(genomes) -> (objectives, bcs) and _next_state(rng)
    def _raw(self, genomes):
        raise NotImplementedError

    def _next_state(self, rng):
        raise NotImplementedError

    def evaluate_arrays(self, genomes) -> tuple[np.ndarray, np.ndarray]:
        """Counted evaluation returning (objectives, (N, 2) bcs) arrays."""
        g = _as_matrix(genomes)
        if g.shape[0] == 0:
            return np.empty(0), np.empty((0, 2))
        objs, bcs = self._raw(g)
        if not (np.all(np.isfinite(objs)) and np.all(np.isfinite(bcs))):
            raise EvaluationError("environment returned non-finite values")
        self.evaluations += g.shape[0]
        return objs, bcs

    def evaluate_batch(self, genomes) -> list[Evaluation]:
        objs, bcs = self.evaluate_arrays(genomes)
        return [Evaluation(o, (b0, b1), self.epoch)
                for o, (b0, b1) in zip(objs.tolist(), bcs.tolist())]

    def evaluate(self, genome) -> Evaluation:
        return self.evaluate_batch(np.asarray(genome, dtype=float)[None, :])[0]

    def shift(self, rng: np.random.Generator) -> None:
        self._next_state(rng)
        self.epoch += 1

    def snapshot(self) -> "DynamicEnvironment":
        """Independent copy with its own evaluation counter."""
        other = copy.copy(self)
        other.evaluations = 0
        return other

    def qd_contribution(self, objectives) -> np.ndarray:
        return np.asarray(objectives, dtype=float)

    def sigma_values(self) -> dict:
        raise NotImplementedError


class SphereEnvironment(DynamicEnvironment):
    name = "sphere"
    maximize = False

    def __init__(self, state: SphereState = SphereState(), n_dims: int = 100,
                 genome_bounds=(-10.24, 10.24)):
        super().__init__()
        if n_dims % 2:
            raise ValueError("sphere genome length must be even")
        self.state = state
        self.n_dims = n_dims
        self.genome_bounds = tuple(genome_bounds)

    @property
    def qd_offset(self) -> float:
        return self.n_dims * (2.0 * self.state.clip_bound) ** 2

    def _raw(self, genomes):
        if genomes.shape[1] != self.n_dims:
            raise ValueError(f"expected genomes of length {self.n_dims}, got {genomes.shape[1]}")
        return sphere_objective_batch(genomes, self.state), sphere_bcs_batch(genomes, self.state)

    def _next_state(self, rng):
        self.state = sphere_shift(self.state, rng)

    def qd_contribution(self, objectives) -> np.ndarray:
        return self.qd_offset - np.asarray(objectives, dtype=float)

    def sigma_values(self) -> dict:
        s = self.state
        return {"sigma_obj": s.sigma_obj, "sigma_bc1": s.sigma_bc1, "sigma_bc2": s.sigma_bc2}


class LanderEnvironment(DynamicEnvironment):
    name = "lander"
    maximize = True
    n_dims = 32

    def __init__(self, state: LanderState = LanderState(), genome_bounds=(-1.0, 1.0)):
        super().__init__()
        self.state = state
        self.genome_bounds = tuple(genome_bounds)

    def _raw(self, genomes):
        return lander_simulate_batch(genomes, self.state)

    def _next_state(self, rng):
        self.state = lander_shift(self.state, rng)

    def sigma_values(self) -> dict:
        return {"sigma_w": self.state.sigma_w, "sigma_tau": self.state.sigma_tau}


def evaluate(env: DynamicEnvironment, genome) -> Evaluation:
    """Evaluate one genome against the environment's current state."""
    return env.evaluate(genome)

