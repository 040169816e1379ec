"""Sphere worlds: closed-form undesired equilibria, residual checks and instability probes."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from src.control import nominal_control, project_discontinuous
from src.errors import InputError, PrimitiveTypeError, SceneValidationError
from src.geometry import check_separation, validate_sphere_world
from src.models import (
    Ball,
    ControllerConfig,
    ControllerKind,
    Environment,
    SimConfig,
    Trajectory,
    as_point,
)
from src.sim import check_goal, run

logger = logging.getLogger(__name__)

RESIDUAL_BOUNDARY_TOLERANCE = 1e-9
ESCAPE_RADIUS = 0.1
PROBE_DT = 1e-3
PROBE_GOAL_TOLERANCE = 0.05


@dataclass(frozen=True, eq=False)
class SphereWorld:
    """Workspace ball ℬ(c₀, r₀) minus M disjoint open balls, validated on construction.

    ``radius=None`` leaves the workspace unbounded (𝒪₀ = ℝⁿ); only obstacle
    separation is checked then.
    """

    radius: Optional[float]
    obstacles: tuple[Ball, ...] = ()
    center: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        dim = self.obstacles[0].dim if self.obstacles else 2
        center = np.zeros(dim) if self.center is None else self.center
        object.__setattr__(self, "center", as_point(center, name="workspace center"))
        if any(not isinstance(o, Ball) for o in self.obstacles):
            raise PrimitiveTypeError("sphere worlds contain balls only")
        if self.radius is None:
            report = check_separation(self.obstacles)
        else:
            report = validate_sphere_world(self.environment())
        if not report.passed:
            raise SceneValidationError(report.message, report)

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def bounded(self) -> bool:
        return self.radius is not None

    def environment(self, **kwargs) -> Environment:
        workspace = Ball(self.center, self.radius) if self.bounded else None
        return Environment(obstacles=self.obstacles, workspace=workspace, **kwargs)

    @classmethod
    def from_environment(cls, env: Environment) -> "SphereWorld":
        if env.workspace is None:
            return cls(radius=None, obstacles=env.obstacles)
        return cls(radius=env.workspace.radius, obstacles=env.obstacles, center=env.workspace.center)


@dataclass(frozen=True, eq=False)
class Equilibrium:
    index: int  # obstacle index, 1..M
    point: np.ndarray
    alpha: float
    residual: float
    manifold_origin: np.ndarray  # the stable manifold is {origin + t·direction, t > 0}
    manifold_direction: np.ndarray


@dataclass(frozen=True)
class EquilibriumReport:
    points: tuple[Equilibrium, ...]

    def as_dict(self) -> dict:
        return {
            "format_version": 1,
            "equilibria": [
                {
                    "index": e.index,
                    "point": e.point.tolist(),
                    "alpha": e.alpha,
                    "residual": e.residual,
                    "stable_manifold": {
                        "origin": e.manifold_origin.tolist(),
                        "direction": e.manifold_direction.tolist(),
                    },
                }
                for e in self.points
            ],
        }


@dataclass(frozen=True, eq=False)
class ProbeReport:
    index: int
    start: np.ndarray
    escaped: bool
    escape_time: Optional[float]
    terminal_distance: float  # ‖x(T) − x_d‖
    trajectory: Trajectory


def _check_goal(world: SphereWorld, cfg: ControllerConfig) -> None:
    if cfg.goal.size != world.dim:
        raise InputError("goal dimension does not match the sphere world")
    check_goal(world.environment(), cfg)


def undesired_equilibria(world: SphereWorld, cfg: ControllerConfig) -> EquilibriumReport:
    """x̄_i = (1 − α_i)x_d + α_i c_i with α_i = 1 + r_i/‖x_d − c_i‖, one per obstacle."""
    _check_goal(world, cfg)
    goal = cfg.goal
    points = []
    for i, ball in enumerate(world.obstacles, start=1):
        offset = ball.center - goal
        length = float(np.linalg.norm(offset))
        alpha = 1.0 + ball.radius / length
        point = (1.0 - alpha) * goal + alpha * ball.center
        nu = -(point - ball.center) / np.linalg.norm(point - ball.center)
        residual = float(np.linalg.norm(project_discontinuous(point, True, nu, cfg)))
        points.append(
            Equilibrium(
                index=i,
                point=point,
                alpha=alpha,
                residual=residual,
                manifold_origin=point,
                manifold_direction=offset / length,
            )
        )
    return EquilibriumReport(tuple(points))


def outward_normal(world: SphereWorld, x: np.ndarray) -> np.ndarray:
    """ν(x) of the sphere x lies on; ν₀ points out of the workspace, ν_i into obstacle i."""
    if world.bounded:
        gap = abs(float(np.linalg.norm(x - world.center)) - world.radius)
        if gap <= RESIDUAL_BOUNDARY_TOLERANCE:
            return (x - world.center) / np.linalg.norm(x - world.center)
    for ball in world.obstacles:
        gap = abs(float(np.linalg.norm(x - ball.center)) - ball.radius)
        if gap <= RESIDUAL_BOUNDARY_TOLERANCE:
            return -(x - ball.center) / np.linalg.norm(x - ball.center)
    raise InputError(f"{x.tolist()} is not on the boundary of the sphere world")


def equilibrium_residual(world: SphereWorld, x, cfg: ControllerConfig) -> float:
    """Speed of the discontinuous law at a boundary point; zero exactly on the equilibria."""
    x = as_point(x)
    nu = outward_normal(world, x)
    kappa = nominal_control(x, cfg)
    if float(nu @ kappa) > 0.0:
        return float(np.linalg.norm(kappa - nu * float(nu @ kappa)))
    return float(np.linalg.norm(kappa))


def tangent_direction(nu: np.ndarray) -> np.ndarray:
    """Unit vector orthogonal to ν built from the lowest-index basis vector not parallel to it."""
    for axis in range(nu.size):
        e = np.zeros(nu.size)
        e[axis] = 1.0
        t = e - nu * float(nu @ e)
        norm = float(np.linalg.norm(t))
        if norm > 1e-8:
            return t / norm
    raise InputError("cannot build a tangent direction")  # unreachable for n ≥ 2


def instability_probe(
    world: SphereWorld,
    index: int,
    cfg: ControllerConfig,
    perturbation: float = 1e-3,
    horizon: float = 100.0,
    *,
    direction: Literal["tangential", "manifold"] = "tangential",
    dt: float = PROBE_DT,
) -> ProbeReport:
    """Start near x̄_index and integrate the discontinuous law to see whether it escapes.

    ``tangential`` displaces the start along the obstacle sphere by an arc of
    length *perturbation*; ``manifold`` moves it outward along the stable
    half-line.
    """
    if not 1 <= index <= len(world.obstacles):
        raise InputError(f"obstacle index {index} out of range 1..{len(world.obstacles)}")
    if perturbation < 0:
        raise InputError("perturbation must be non-negative")
    equilibrium = undesired_equilibria(world, cfg).points[index - 1]
    ball = world.obstacles[index - 1]

    radial = (equilibrium.point - ball.center) / ball.radius
    # radius scaled by (1 + 1e-12): the start must test as free space
    radius = ball.radius * (1.0 + 1e-12)
    if direction == "tangential":
        angle = perturbation / ball.radius
        tangent = tangent_direction(radial)
        start = ball.center + radius * (math.cos(angle) * radial + math.sin(angle) * tangent)
    elif direction == "manifold":
        start = ball.center + radius * radial + perturbation * equilibrium.manifold_direction
    else:
        raise InputError(f"unknown probe direction {direction!r}")

    sim_cfg = SimConfig(
        environment=world.environment(),
        controller=cfg,
        kind=ControllerKind.DISCONTINUOUS_EXACT,
        initial=start,
        dt=dt,
        max_time=horizon,
        goal_tolerance=PROBE_GOAL_TOLERANCE,
    )
    traj = run(sim_cfg)
    away = np.linalg.norm(traj.states - equilibrium.point, axis=1)
    escaped_at = np.flatnonzero(away > ESCAPE_RADIUS)
    escape_time = float(traj.times[escaped_at[0]]) if escaped_at.size else None
    logger.info(
        "Probe %d (%s, %.3g m): escaped=%s outcome=%s",
        index,
        direction,
        perturbation,
        escape_time is not None,
        traj.outcome.value,
    )
    return ProbeReport(
        index=index,
        start=start,
        escaped=escape_time is not None,
        escape_time=escape_time,
        terminal_distance=float(traj.goal_distances[-1]),
        trajectory=traj,
    )


def instability_probes(
    world: SphereWorld,
    cfg: ControllerConfig,
    perturbation: float = 1e-3,
    horizon: float = 100.0,
    workers: int = 4,
) -> list[ProbeReport]:
    """Probe every obstacle's equilibrium, in parallel."""
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(instability_probe, world, i, cfg, perturbation, horizon)
            for i in range(1, len(world.obstacles) + 1)
        ]
        return [f.result() for f in futures]


def random_sphere_world(
    dim: int,
    count: int,
    seed: int,
    radius: float = 10.0,
    obstacle_radii: tuple[float, float] = (0.5, 1.5),
    clearance: float = 1.0,
) -> SphereWorld:
    """Draw *count* obstacles that are separated by *clearance* and sit inside the workspace."""
    if dim < 2 or count < 0:
        raise InputError("need dim >= 2 and a non-negative obstacle count")
    rng = np.random.default_rng(seed)
    balls: list[Ball] = []
    attempts = 0
    while len(balls) < count:
        attempts += 1
        if attempts > 10_000:
            raise InputError(f"could not place {count} obstacles in a radius-{radius} workspace")
        r = rng.uniform(*obstacle_radii)
        c = rng.uniform(-radius, radius, size=dim)
        if np.linalg.norm(c) + r + clearance >= radius:
            continue
        if any(np.linalg.norm(c - b.center) <= r + b.radius + clearance for b in balls):
            continue
        balls.append(Ball(c, r))
    return SphereWorld(radius=radius, obstacles=tuple(balls))
