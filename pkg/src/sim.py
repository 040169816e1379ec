"""Closed-loop simulation of ẋ = κ(x), safety audits and seeded batch experiments."""

from __future__ import annotations

import asyncio
import logging
import math
import pickle
from collections import Counter
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Literal, Optional

import numpy as np

from src.control import (
    MARGIN_TOLERANCE,
    nominal_control,
    project_discontinuous,
    project_smooth,
    smoothing_factor,
)
from src.errors import InputError, NumericalError
from src.geometry import boundary_query, clearance_lower_bounds, contains
from src.models import (
    AuditReport,
    BatchSummary,
    ControllerConfig,
    ControllerKind,
    Environment,
    Mode,
    Outcome,
    SafetyInput,
    SimConfig,
    Trajectory,
    as_point,
)
from src.sensors.lidar import scan_to_safety_input, simulate_lidar

logger = logging.getLogger(__name__)

SLOW_SPEED = 1e-6  # m/s under which a step counts towards an equilibrium trap
TRAP_STEPS = 100
MAX_SAMPLE_ATTEMPTS = 10_000
DEFAULT_WORKERS = 4

VelocityField = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class FieldSample:
    velocity: np.ndarray
    mode: Mode
    distance: float
    safety: Optional[SafetyInput] = None  # smooth kinds only


class ClosedLoop:
    """The feedback field x ↦ κ(x) of one controller kind.

    The discontinuous law treats the boundary as a layer whose width is either
    fixed (``boundary_layer``) or the Euler step length ‖κ0(x)‖·dt.
    """

    def __init__(
        self,
        env: Environment,
        controller: ControllerConfig,
        kind: ControllerKind,
        *,
        lidar_beams: int = 360,
        dt: Optional[float] = None,
        boundary_layer: Optional[float] = None,
    ):
        self._env = env
        self._cfg = controller
        self._kind = ControllerKind(kind)
        self._beams = lidar_beams
        self._dt = dt
        self._layer = boundary_layer
        if self._kind is ControllerKind.DISCONTINUOUS_EXACT and dt is None and boundary_layer is None:
            raise InputError("the discontinuous law needs dt or a boundary layer width")

    @property
    def kind(self) -> ControllerKind:
        return self._kind

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.sample(x).velocity

    def sample(self, x) -> FieldSample:
        if self._kind is ControllerKind.DISCONTINUOUS_EXACT:
            return self._discontinuous(x)
        s = self.safety_input(x)
        kappa = nominal_control(x, self._cfg)
        return FieldSample(project_smooth(x, s, self._cfg), _smooth_mode(kappa, s, self._cfg), s.distance, s)

    def safety_input(self, x) -> SafetyInput:
        """(distance, bearing gradient) from one scan or from the exact geometry."""
        if self._kind is ControllerKind.SMOOTH_LIDAR:
            scan = simulate_lidar(self._env, x, self._beams, self._cfg.sensing_radius)
            return scan_to_safety_input(scan)[0]
        q = boundary_query(self._env, x)
        return SafetyInput(distance=q.distance, bearing_gradient=q.gradient)

    def held(self, s: SafetyInput) -> VelocityField:
        """The smooth law with the reading *s* frozen; only κ0 varies with the state."""
        return lambda p: project_smooth(p, s, self._cfg)

    def _discontinuous(self, x) -> FieldSample:
        q = boundary_query(self._env, x)
        kappa = nominal_control(x, self._cfg)
        layer = self._layer if self._layer is not None else float(np.linalg.norm(kappa)) * self._dt
        on_boundary = q.gradient is not None and q.distance <= layer
        nu = -q.gradient if on_boundary else None
        velocity = project_discontinuous(x, on_boundary, nu, self._cfg)
        projecting = on_boundary and float(nu @ kappa) >= 0.0
        return FieldSample(velocity, Mode.FULL_PROJECTION if projecting else Mode.NOMINAL, q.distance)


def _smooth_mode(kappa: np.ndarray, s: SafetyInput, cfg: ControllerConfig) -> Mode:
    g = s.bearing_gradient
    if g is None or s.distance > cfg.epsilon_prime or float(kappa @ g) > 0.0:
        return Mode.NOMINAL
    phi = smoothing_factor(s.distance, cfg)
    if phi <= 0.0:
        return Mode.NOMINAL
    return Mode.FULL_PROJECTION if phi >= 1.0 else Mode.BLENDING


def step(
    x,
    velocity_field: VelocityField,
    dt: float,
    method: Literal["rk4", "euler"] = "rk4",
    k1: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Advance one fixed step; *k1* reuses a velocity already evaluated at *x*."""
    if not dt > 0:
        raise InputError(f"dt must be positive, got {dt!r}")
    x = np.asarray(x, dtype=float)

    def f(p: np.ndarray) -> np.ndarray:
        v = np.asarray(velocity_field(p), dtype=float)
        if not np.all(np.isfinite(v)):
            raise NumericalError(f"non-finite velocity {v.tolist()} at {p.tolist()}")
        return v

    k1 = f(x) if k1 is None else k1
    if method == "euler":
        return x + dt * k1
    if method != "rk4":
        raise InputError(f"unknown integrator {method!r}")
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def safety_floor(cfg: SimConfig) -> float:
    """Distance below which a run is a safety violation."""
    if cfg.kind is ControllerKind.DISCONTINUOUS_EXACT:
        return 0.0
    return 0.5 * cfg.controller.epsilon


def run(cfg: SimConfig) -> Trajectory:
    """Integrate the closed loop from ``cfg.initial`` until convergence, timeout or violation."""
    if cfg.initial is None:
        raise InputError("run() needs an initial state; use batch_run() for sampling specs")
    env, controller = cfg.environment, cfg.controller
    x = np.array(cfg.initial, dtype=float)
    if not contains(env, x):
        raise InputError(f"initial state {x.tolist()} is not in the free space")
    _check_reach(env, controller)

    loop = ClosedLoop(env, controller, cfg.kind, lidar_beams=cfg.lidar_beams, dt=cfg.dt)
    method = "euler" if cfg.kind is ControllerKind.DISCONTINUOUS_EXACT else "rk4"
    smooth = cfg.kind is not ControllerKind.DISCONTINUOUS_EXACT
    # LiDAR readings are taken once per step and held through the RK4 stages
    hold = cfg.kind is ControllerKind.SMOOTH_LIDAR
    floor = safety_floor(cfg)
    max_steps = max(0, math.ceil(cfg.max_time / cfg.dt - 1e-9))

    sample = loop.sample(x)
    if smooth and sample.distance < controller.epsilon - MARGIN_TOLERANCE:
        raise InputError(
            f"initial state is {sample.distance:.6g} m from the obstacles, "
            f"inside the margin epsilon={controller.epsilon}"
        )

    times, states, distances, goal_distances, velocities, modes = [], [], [], [], [], []
    margin_violations: list[int] = []
    slow_steps = 0
    j = 0
    while True:
        goal_distance = float(np.linalg.norm(x - controller.goal))
        times.append(j * cfg.dt)
        states.append(x.copy())
        distances.append(sample.distance)
        goal_distances.append(goal_distance)
        velocities.append(sample.velocity)
        modes.append(sample.mode)

        speed = float(np.linalg.norm(sample.velocity))
        slow_steps = slow_steps + 1 if speed < SLOW_SPEED else 0
        if sample.distance < floor:
            outcome = Outcome.SAFETY_VIOLATION
            break
        if goal_distance < cfg.goal_tolerance:
            outcome = Outcome.CONVERGED
            break
        if j >= max_steps:
            outcome = Outcome.EQUILIBRIUM_TRAP if speed < SLOW_SPEED else Outcome.TIMEOUT
            break
        if slow_steps >= TRAP_STEPS:
            outcome = Outcome.EQUILIBRIUM_TRAP
            break
        if smooth and sample.distance < controller.epsilon - MARGIN_TOLERANCE:
            if not margin_violations:
                logger.warning("Margin violated at t=%.4g (distance %.6g)", j * cfg.dt, sample.distance)
            margin_violations.append(j)

        field = loop.held(sample.safety) if hold else loop
        x = step(x, field, cfg.dt, method, k1=sample.velocity)
        j += 1
        if not contains(env, x):
            sample = FieldSample(np.zeros_like(x), Mode.NOMINAL, -math.inf)
        else:
            sample = loop.sample(x)

    logger.debug(
        "Run finished: %s after %d steps (t=%.4g, |x - x_d|=%.4g)",
        outcome.value,
        j,
        j * cfg.dt,
        goal_distances[-1],
    )
    return Trajectory(
        times=np.array(times),
        states=np.array(states),
        distances=np.array(distances),
        goal_distances=np.array(goal_distances),
        velocities=np.array(velocities),
        modes=tuple(modes),
        outcome=outcome,
        margin_violations=tuple(margin_violations),
    )


def safety_audit(
    traj: Trajectory,
    env: Environment,
    cfg: ControllerConfig,
    floor: float = 0.0,
) -> AuditReport:
    """Recompute exact distances along *traj*; report the minimum, first violation and max ΔV.

    Exact queries are made only at states whose clearance lower bound could
    still set the minimum or fall under *floor*; the report is the same as
    querying every state.
    """
    lower = clearance_lower_bounds(env, traj.states)
    exact: dict[int, float] = {}

    def distance(i: int) -> float:
        if i not in exact:
            x = traj.states[i]
            exact[i] = boundary_query(env, x).distance if contains(env, x) else -math.inf
        return exact[i]

    min_distance = math.inf
    for i in np.argsort(lower, kind="stable"):
        if lower[i] >= min_distance:
            break
        min_distance = min(min_distance, distance(int(i)))
    first_violation = next((int(i) for i in np.flatnonzero(lower < floor) if distance(int(i)) < floor), None)
    logger.debug("Audit: %d exact queries over %d states", len(exact), lower.size)

    goal = np.linalg.norm(traj.states - cfg.goal, axis=1)
    increase = float(np.max(np.diff(goal))) if goal.size > 1 else 0.0
    return AuditReport(
        min_distance=min_distance,
        first_violation=first_violation,
        max_lyapunov_increase=max(0.0, increase),
        floor=floor,
    )


def exponential_envelope(traj: Trajectory, cfg: ControllerConfig) -> float:
    """max_j ‖x_j − x_d‖ / (‖x_0 − x_d‖ e^{−k t_j}); ≤ 1 under the nominal flow."""
    e0 = traj.goal_distances[0]
    if e0 == 0:
        return 0.0
    bound = e0 * np.exp(-cfg.k * (traj.times - traj.times[0]))
    return float(np.max(traj.goal_distances / bound))


def sample_starts(cfg: SimConfig) -> list[np.ndarray]:
    """Seeded rejection sampling of starts with clearance ≥ ε′, one child seed per run."""
    spec = cfg.sampling
    if spec is None:
        raise InputError("batch runs need a sampling spec")
    env, controller = cfg.environment, cfg.controller
    if env.dim is not None and spec.lower.size != env.dim:
        raise InputError("sampling box dimension does not match the environment")

    starts = []
    for index, child in enumerate(np.random.SeedSequence(spec.seed).spawn(spec.count)):
        rng = np.random.default_rng(child)
        for attempt in range(MAX_SAMPLE_ATTEMPTS):
            candidate = rng.uniform(spec.lower, spec.upper)
            if contains(env, candidate) and (
                boundary_query(env, candidate).distance >= controller.epsilon_prime
            ):
                starts.append(candidate)
                if attempt >= MAX_SAMPLE_ATTEMPTS // 2:
                    logger.warning("Sample %d needed %d draws; the sampling box is mostly blocked", index, attempt + 1)
                break
        else:
            raise InputError(
                f"no admissible start found for sample {index} after {MAX_SAMPLE_ATTEMPTS} draws"
            )
    return starts


def _check_reach(env: Environment, controller: ControllerConfig) -> None:
    if env.reach is not None and controller.epsilon_prime > env.reach:
        raise InputError(
            f"epsilon_prime ({controller.epsilon_prime!r}) exceeds the environment reach h={env.reach!r}"
        )


def check_goal(env: Environment, controller: ControllerConfig) -> None:
    """Reject configurations whose goal is outside the interior of the free space."""
    _check_reach(env, controller)
    goal = as_point(controller.goal, name="goal")
    if not contains(env, goal) or boundary_query(env, goal).distance <= 0.0:
        raise InputError(f"goal {goal.tolist()} is not in the interior of the free space")


def _executor(cfg: SimConfig, workers: int) -> Executor:
    """Worker processes, or threads when the environment holds unpicklable level functions."""
    try:
        pickle.dumps(cfg)
    except (pickle.PicklingError, AttributeError, TypeError) as e:
        logger.debug("Batch falls back to threads: %s", e)
        return ThreadPoolExecutor(max_workers=workers)
    return ProcessPoolExecutor(max_workers=workers)


def _run_and_audit(cfg: SimConfig) -> tuple[Trajectory, AuditReport]:
    traj = run(cfg)
    return traj, safety_audit(traj, cfg.environment, cfg.controller, safety_floor(cfg))


async def _run_all(configs: list[SimConfig], workers: int) -> list[tuple[Trajectory, AuditReport]]:
    loop = asyncio.get_running_loop()
    with _executor(configs[0], min(workers, len(configs))) as pool:
        return list(await asyncio.gather(*(loop.run_in_executor(pool, _run_and_audit, c) for c in configs)))


def batch_run(cfg: SimConfig, workers: int = DEFAULT_WORKERS) -> BatchSummary:
    """Run every sampled start and summarise outcomes, clearance and Lyapunov monotonicity."""
    check_goal(cfg.environment, cfg.controller)
    starts = sample_starts(cfg)
    if not starts:
        return BatchSummary(0, {}, math.inf, 0.0, 0.0)

    configs = [replace(cfg, initial=s, sampling=None) for s in starts]
    logger.info("Batch: %d runs (%s) with %d workers", len(configs), cfg.kind.value, workers)
    results = asyncio.run(_run_all(configs, workers))
    trajectories = [t for t, _ in results]
    audits = [a for _, a in results]
    outcomes = Counter(t.outcome.value for t in trajectories)
    min_distance = min(a.min_distance for a in audits)
    summary = BatchSummary(
        runs=len(trajectories),
        outcomes=dict(outcomes),
        min_distance=min_distance,
        max_margin_violation=max(0.0, cfg.controller.epsilon - min_distance)
        if cfg.kind is not ControllerKind.DISCONTINUOUS_EXACT
        else max(0.0, -min_distance),
        max_lyapunov_increase=max(a.max_lyapunov_increase for a in audits),
        starts=tuple(tuple(float(v) for v in s) for s in starts),
    )
    logger.info("Batch done: %s, min distance %.4g", summary.outcomes, summary.min_distance)
    return summary
