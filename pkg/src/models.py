from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np

from src.errors import InputError

# Level functions take points of shape (..., n) and return values of shape (...).
LevelFunction = Callable[[np.ndarray], np.ndarray]


def as_point(coords, *, name: str = "point", min_dim: int = 2) -> np.ndarray:
    """Return a read-only float copy of *coords*, rejecting non-finite or short vectors."""
    arr = np.array(coords, dtype=float).reshape(-1)
    if arr.size < min_dim:
        raise InputError(f"{name} must have at least {min_dim} coordinates, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} has non-finite coordinates: {arr.tolist()}")
    arr.setflags(write=False)
    return arr


def as_unit(vector, *, name: str = "direction", tol: float = 1e-9) -> np.ndarray:
    """Like :func:`as_point` but also require a unit norm within *tol*."""
    arr = as_point(vector, name=name, min_dim=1)
    norm = float(np.linalg.norm(arr))
    if abs(norm - 1.0) > tol:
        raise InputError(f"{name} must be a unit vector (norm {norm!r})")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Environment
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", as_point(self.center, name="ball center"))
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise InputError(f"ball radius must be positive, got {self.radius!r}")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.size


@dataclass(frozen=True, eq=False)
class HalfSpace:
    """Obstacle {y : normal·y > offset}; the normal is normalised on construction."""

    normal: np.ndarray
    offset: float

    def __post_init__(self) -> None:
        normal = as_point(self.normal, name="half-space normal")
        norm = float(np.linalg.norm(normal))
        if norm == 0.0:
            raise InputError("half-space normal must be non-zero")
        object.__setattr__(self, "normal", _frozen(normal / norm))
        object.__setattr__(self, "offset", float(self.offset) / norm)

    @property
    def dim(self) -> int:
        return self.normal.size


@dataclass(frozen=True, eq=False)
class ImplicitRegion:
    """Obstacle {y : level(y) > 0} for a C² level function.

    ``gradient`` is optional (central differences otherwise). ``lipschitz`` is
    a global Lipschitz constant of ``level``; when known, regions that cannot
    be reached within a query range are skipped. ``closest`` maps a free point
    to its nearest boundary point; when given it replaces the ray sweep in
    distance queries and starts every ray at the exact distance.
    """

    level: LevelFunction
    dim: int
    gradient: Optional[LevelFunction] = None
    lipschitz: Optional[float] = None
    name: str = "implicit"
    closest: Optional[LevelFunction] = None

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise InputError(f"implicit region dimension must be >= 2, got {self.dim}")
        if self.lipschitz is not None and not self.lipschitz > 0:
            raise InputError("lipschitz constant must be positive")


ObstaclePrimitive = Union[Ball, HalfSpace, ImplicitRegion]


@dataclass(frozen=True)
class RayOptions:
    step: float = 1e-2  # bracketing step along a ray
    tolerance: float = 1e-9  # root bracket width
    sweep_beams: int = 720  # directions in the coarse distance sweep
    sweep_range: float = 10.0  # farthest boundary the sweep looks for

    def __post_init__(self) -> None:
        if not (self.step > 0 and self.tolerance > 0 and self.sweep_range > 0):
            raise InputError("ray options must be positive")
        if self.sweep_beams < 8:
            raise InputError("sweep_beams must be at least 8")


@dataclass(frozen=True, eq=False)
class Environment:
    obstacles: tuple[ObstaclePrimitive, ...] = ()
    workspace: Optional[Ball] = None
    reach: Optional[float] = None
    ray: RayOptions = field(default_factory=RayOptions)
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        dims = {p.dim for p in self.obstacles}
        if self.workspace is not None:
            dims.add(self.workspace.dim)
        if len(dims) > 1:
            raise InputError(f"primitives disagree on dimension: {sorted(dims)}")
        if self.reach is not None and not self.reach > 0:
            raise InputError(f"reach must be positive, got {self.reach!r}")

    @property
    def dim(self) -> Optional[int]:
        if self.workspace is not None:
            return self.workspace.dim
        if self.obstacles:
            return self.obstacles[0].dim
        return None


@dataclass(frozen=True, eq=False)
class BoundaryQuery:
    distance: float
    closest_point: Optional[np.ndarray]
    gradient: Optional[np.ndarray]
    unique: bool = True
    primitive: Optional[int] = None  # index into obstacles, -1 for the workspace bound


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    message: str
    pair: Optional[tuple[int, int]] = None  # 0 is the workspace, obstacles are 1..M


# ---------------------------------------------------------------------------
# Control
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ControllerConfig:
    goal: np.ndarray
    k: float = 0.5
    epsilon: float = 0.2
    epsilon_prime: float = 0.4
    sensing_radius: float = 0.5
    reach: Optional[float] = None  # h; defaults to epsilon_prime

    def __post_init__(self) -> None:
        object.__setattr__(self, "goal", as_point(self.goal, name="goal"))
        if not self.k > 0:
            raise InputError(f"gain k must be positive, got {self.k!r}")
        if not 0 < self.epsilon < self.epsilon_prime:
            raise InputError(
                f"margins must satisfy 0 < epsilon < epsilon_prime "
                f"(got {self.epsilon!r}, {self.epsilon_prime!r})"
            )
        if not self.epsilon_prime < self.sensing_radius:
            raise InputError(
                f"epsilon_prime ({self.epsilon_prime!r}) must be below the "
                f"sensing radius ({self.sensing_radius!r})"
            )
        if self.epsilon_prime > self.h:
            raise InputError(f"epsilon_prime exceeds the reach h={self.h!r}")

    @property
    def h(self) -> float:
        return self.epsilon_prime if self.reach is None else float(self.reach)


@dataclass(frozen=True, eq=False)
class SafetyInput:
    """Distance to the obstacle set and its gradient (None when nothing is sensed)."""

    distance: float
    bearing_gradient: Optional[np.ndarray]

    def __post_init__(self) -> None:
        if not self.distance >= 0:
            raise InputError(f"distance must be non-negative, got {self.distance!r}")
        if self.bearing_gradient is not None:
            object.__setattr__(
                self, "bearing_gradient", as_unit(self.bearing_gradient, name="bearing gradient")
            )


# ---------------------------------------------------------------------------
# Sensors
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LidarScan:
    angles: np.ndarray
    ranges: np.ndarray
    max_range: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "angles", _frozen(self.angles))
        object.__setattr__(self, "ranges", _frozen(self.ranges))
        if self.angles.shape != self.ranges.shape:
            raise InputError("angles and ranges must have the same length")
        if np.any(self.ranges > self.max_range) or np.any(self.ranges < 0):
            raise InputError("ranges must lie in [0, max_range]")


@dataclass(frozen=True, eq=False)
class StereoRig:
    focal_length: float  # pixels
    baseline: float  # metres
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        if not (self.focal_length > 0 and self.baseline > 0):
            raise InputError("focal length and baseline must be positive")
        rotation = _frozen(self.rotation)
        if rotation.shape != (3, 3):
            raise InputError("rotation must be 3x3")
        if not np.allclose(rotation @ rotation.T, np.eye(3), atol=1e-9) or not np.isclose(
            np.linalg.det(rotation), 1.0, atol=1e-9
        ):
            raise InputError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", as_point(self.translation, name="translation", min_dim=3))


@dataclass(frozen=True, eq=False)
class DepthMap:
    depths: np.ndarray  # (height, width), metres or inf
    focal_length: float
    principal_point: tuple[float, float]

    def __post_init__(self) -> None:
        depths = _frozen(self.depths)
        if depths.ndim != 2:
            raise InputError("depth map must be two-dimensional")
        finite = depths[np.isfinite(depths)]
        if np.any(finite <= 0) or np.any(np.isnan(depths)):
            raise InputError("finite depths must be positive")
        object.__setattr__(self, "depths", depths)

    @property
    def height(self) -> int:
        return self.depths.shape[0]

    @property
    def width(self) -> int:
        return self.depths.shape[1]


@dataclass(frozen=True, eq=False)
class Pose:
    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", as_point(self.position, name="pose position", min_dim=3))
        object.__setattr__(self, "rotation", _frozen(self.rotation))


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


class ControllerKind(str, Enum):
    DISCONTINUOUS_EXACT = "discontinuous-exact"
    SMOOTH_EXACT = "smooth-exact"
    SMOOTH_LIDAR = "smooth-lidar"


class Mode(str, Enum):
    NOMINAL = "nominal"
    BLENDING = "blending"
    FULL_PROJECTION = "full-projection"


class Outcome(str, Enum):
    CONVERGED = "converged"
    TIMEOUT = "timeout"
    SAFETY_VIOLATION = "safety-violation"
    EQUILIBRIUM_TRAP = "equilibrium-trap"


@dataclass(frozen=True, eq=False)
class SamplingSpec:
    count: int
    lower: np.ndarray
    upper: np.ndarray
    seed: int = 0

    def __post_init__(self) -> None:
        if self.count < 0:
            raise InputError("sample count must be non-negative")
        lower = as_point(self.lower, name="sampling lower corner")
        upper = as_point(self.upper, name="sampling upper corner")
        if lower.shape != upper.shape or np.any(lower > upper):
            raise InputError("sampling box corners are inconsistent")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)


# Largest Euler step accepted for the discontinuous law.
MAX_DISCONTINUOUS_DT = 1e-3


@dataclass(frozen=True, eq=False)
class SimConfig:
    environment: Environment
    controller: ControllerConfig
    kind: ControllerKind = ControllerKind.SMOOTH_EXACT
    initial: Optional[np.ndarray] = None
    sampling: Optional[SamplingSpec] = None
    dt: float = 1e-3
    max_time: float = 200.0
    goal_tolerance: float = 0.05
    lidar_beams: int = 360

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ControllerKind(self.kind))
        if self.initial is not None:
            object.__setattr__(self, "initial", as_point(self.initial, name="initial state"))
        if not self.dt > 0:
            raise InputError(f"dt must be positive, got {self.dt!r}")
        if self.kind is ControllerKind.DISCONTINUOUS_EXACT and self.dt > MAX_DISCONTINUOUS_DT:
            raise InputError(f"the discontinuous law needs dt <= {MAX_DISCONTINUOUS_DT}, got {self.dt!r}")
        if not self.goal_tolerance > 0:
            raise InputError("goal tolerance must be positive")
        if not self.max_time >= 0:
            raise InputError("max_time must be non-negative")
        if self.kind is ControllerKind.SMOOTH_LIDAR and self.environment.dim not in (None, 2):
            raise InputError("the LiDAR controller is planar (n = 2)")
        if self.lidar_beams < 8:
            raise InputError("lidar_beams must be at least 8")


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (T, n)
    distances: np.ndarray  # distance to the obstacle set as seen by the controller
    goal_distances: np.ndarray  # ||x - x_d||
    velocities: np.ndarray  # (T, n) applied velocity at each recorded state
    modes: tuple[Mode, ...]
    outcome: Outcome
    margin_violations: tuple[int, ...] = ()  # steps recorded below the inner margin

    def __post_init__(self) -> None:
        for name in ("times", "states", "distances", "goal_distances", "velocities"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if len(self.times) != len(self.states):
            raise InputError("times and states must have the same length")

    @property
    def lyapunov(self) -> np.ndarray:
        """V(x) = ½‖x − x_d‖² at each recorded state."""
        return 0.5 * self.goal_distances**2

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class AuditReport:
    min_distance: float
    first_violation: Optional[int]
    max_lyapunov_increase: float
    floor: float


@dataclass(frozen=True)
class BatchSummary:
    runs: int
    outcomes: dict[str, int]
    min_distance: float
    max_margin_violation: float
    max_lyapunov_increase: float
    starts: tuple[tuple[float, ...], ...] = ()

    def as_dict(self) -> dict:
        return {
            "format_version": 1,
            "runs": self.runs,
            "outcomes": dict(self.outcomes),
            "min_distance": self.min_distance if math.isfinite(self.min_distance) else None,
            "max_margin_violation": self.max_margin_violation,
            "max_lyapunov_increase": self.max_lyapunov_increase,
        }
