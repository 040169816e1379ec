"""Free-space geometry: membership, distance/closest-point queries and ray casts.

Balls, half-spaces and the workspace bound are handled analytically. Implicit
regions are handled with one numerical kernel, the ray root finder: rays are
bracketed at a uniform step, starting at the Lipschitz bound when one is known,
and refined by Illinois regula falsi. Distances come from sweeping rays over all
directions and refining around the shortest one, unless the region supplies its own
closest-point map.
"""

from __future__ import annotations

import logging
import math
from typing import Optional, Sequence

import numpy as np

from src.errors import InputError, NumericalError, PrimitiveTypeError
from src.models import (
    Ball,
    BoundaryQuery,
    Environment,
    HalfSpace,
    ImplicitRegion,
    RayOptions,
    ValidationReport,
    as_point,
)

logger = logging.getLogger(__name__)

# Relative tolerance under which two candidate closest points count as a tie.
TIE_TOLERANCE = 1e-9
# Closest points closer than this are considered the same point.
SAME_POINT_TOLERANCE = 1e-6
# Central-difference step for implicit regions without an analytic gradient.
GRADIENT_STEP = 1e-6
# Angular resolution at which the closest-direction refinement stops.
ANGLE_TOLERANCE = 1e-10
_REFINE_SAMPLES = 9
# Cap on regula falsi iterations per bracket.
MAX_REFINE_STEPS = 100
WORKSPACE_INDEX = -1


# ---------------------------------------------------------------------------
# Membership
# ---------------------------------------------------------------------------


def contains(env: Environment, x) -> bool:
    """True iff *x* is in the closed free space of *env*."""
    x = _check_point(env, x)
    if env.workspace is not None:
        if np.linalg.norm(x - env.workspace.center) > env.workspace.radius:
            return False
    for obstacle in env.obstacles:
        if _inside_obstacle(obstacle, x):
            return False
    return True


def _inside_obstacle(obstacle, x: np.ndarray) -> bool:
    if isinstance(obstacle, Ball):
        return bool(np.linalg.norm(x - obstacle.center) < obstacle.radius)
    if isinstance(obstacle, HalfSpace):
        return bool(obstacle.normal @ x > obstacle.offset)
    if isinstance(obstacle, ImplicitRegion):
        return bool(float(obstacle.level(x)) > 0.0)
    raise PrimitiveTypeError(f"unsupported obstacle primitive {type(obstacle).__name__}")


def _check_point(env: Environment, x) -> np.ndarray:
    x = as_point(x)
    if env.dim is not None and x.size != env.dim:
        raise InputError(f"point has dimension {x.size}, environment has {env.dim}")
    return x


# ---------------------------------------------------------------------------
# Ray casting
# ---------------------------------------------------------------------------


def ray_cast(env: Environment, x, direction, max_range: float) -> float:
    """Smallest t in [0, max_range] with x + t·direction on the boundary, else max_range."""
    direction = as_point(direction, name="direction")
    if abs(float(np.linalg.norm(direction)) - 1.0) > 1e-12:
        raise InputError("ray direction must be a unit vector")
    return float(ray_cast_many(env, x, direction[None, :], max_range)[0])


def ray_cast_many(env: Environment, x, directions: np.ndarray, max_range: float) -> np.ndarray:
    """Vectorised :func:`ray_cast` over the rows of *directions* (assumed unit).

    Primitives whose boundary is provably at least *max_range* away are skipped.
    """
    x = _check_point(env, x)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    if directions.shape[1] != x.size:
        raise InputError("directions do not match the point dimension")
    if not max_range > 0:
        raise InputError(f"max_range must be positive, got {max_range!r}")

    best = np.full(directions.shape[0], np.inf)
    if env.workspace is not None:
        if env.workspace.radius - float(np.linalg.norm(x - env.workspace.center)) < max_range:
            best = np.minimum(best, _ray_workspace(env.workspace, x, directions))
    for obstacle in env.obstacles:
        if isinstance(obstacle, Ball):
            if float(np.linalg.norm(x - obstacle.center)) - obstacle.radius >= max_range:
                continue
            hits = _ray_ball(obstacle, x, directions)
        elif isinstance(obstacle, HalfSpace):
            if obstacle.offset - float(obstacle.normal @ x) >= max_range:
                continue
            hits = _ray_halfspace(obstacle, x, directions)
        else:
            hits = _ray_implicit(obstacle, x, directions, max_range, env.ray)
        best = np.minimum(best, hits)
    return np.minimum(best, max_range)


def _ray_ball(ball: Ball, x: np.ndarray, directions: np.ndarray) -> np.ndarray:
    w = x - ball.center
    b = directions @ w
    c = float(w @ w) - ball.radius**2
    disc = b * b - c
    with np.errstate(invalid="ignore"):
        t1 = -b - np.sqrt(disc)
    hits = np.where((disc >= 0) & (t1 >= 0), t1, np.inf)
    return np.where(c <= 0, 0.0, hits)


def _ray_workspace(ball: Ball, x: np.ndarray, directions: np.ndarray) -> np.ndarray:
    w = x - ball.center
    b = directions @ w
    c = float(w @ w) - ball.radius**2
    t2 = -b + np.sqrt(np.maximum(b * b - c, 0.0))
    return np.where(c >= 0, 0.0, t2)


def _ray_halfspace(half: HalfSpace, x: np.ndarray, directions: np.ndarray) -> np.ndarray:
    slack = half.offset - float(half.normal @ x)
    if slack <= 0:
        return np.zeros(directions.shape[0])
    rate = directions @ half.normal
    with np.errstate(divide="ignore"):
        return np.where(rate > 0, slack / rate, np.inf)


def _ray_implicit(
    region: ImplicitRegion,
    x: np.ndarray,
    directions: np.ndarray,
    max_range: float,
    options: RayOptions,
) -> np.ndarray:
    """Bracket the first sign change of the level function along each ray, then refine it."""
    m = directions.shape[0]
    g0 = float(region.level(x))
    if g0 >= 0:
        return np.zeros(m)
    start = 0.0
    if region.lipschitz is not None:
        # no boundary point lies closer than −g0/L
        start = -g0 / region.lipschitz
        if start > max_range:
            return np.full(m, np.inf)
    if region.closest is not None:
        start = max(start, _exact_distance(region, x))
        if start > max_range:
            return np.full(m, np.inf)

    count = max(1, math.ceil((max_range - start) / options.step))
    ts = np.linspace(start, max_range, count + 1)
    values = region.level(x + ts[None, :, None] * directions[:, None, :])
    entered = values >= 0
    hit = entered.any(axis=1)
    out = np.full(m, np.inf)
    if not hit.any():
        return out

    first = np.argmax(entered[hit], axis=1)
    # a hit on the first sample lies exactly at the lower bound
    lo = np.maximum(first - 1, 0)
    roots = _refine_roots(
        region,
        x,
        directions[hit],
        ts[lo],
        ts[first],
        values[hit, lo],
        values[hit, first],
        options.tolerance,
    )
    out[hit] = np.where(first == 0, ts[0], roots)
    return out


def _refine_roots(
    region: ImplicitRegion,
    x: np.ndarray,
    rays: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    g_lo: np.ndarray,
    g_hi: np.ndarray,
    tolerance: float,
) -> np.ndarray:
    """Illinois regula falsi on brackets with g(lo) < 0 ≤ g(hi), each ray stopping on its own."""
    side = np.zeros(lo.size, dtype=int)  # +1: hi moved last, −1: lo moved last
    for _ in range(MAX_REFINE_STEPS):
        active = hi - lo > tolerance
        if not active.any():
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (lo * g_hi - hi * g_lo) / (g_hi - g_lo)
        t = np.where(np.isfinite(t) & (t > lo) & (t < hi), t, 0.5 * (lo + hi))
        g = region.level(x + t[:, None] * rays)
        inside = active & (g >= 0)
        outside = active & (g < 0)
        hi = np.where(inside, t, hi)
        lo = np.where(outside, t, lo)
        # an endpoint kept twice in a row has its value halved
        g_lo = np.where(outside, g, np.where(inside & (side == 1), 0.5 * g_lo, g_lo))
        g_hi = np.where(inside, g, np.where(outside & (side == -1), 0.5 * g_hi, g_hi))
        side = np.where(inside, 1, np.where(outside, -1, side))
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Distance / closest point
# ---------------------------------------------------------------------------


def boundary_query(env: Environment, x) -> BoundaryQuery:
    """Distance to the obstacle set, closest boundary point and distance gradient at *x*."""
    x = _check_point(env, x)
    if not contains(env, x):
        raise InputError(f"point {x.tolist()} is not in the free space")

    candidates: list[BoundaryQuery] = []
    if env.workspace is not None:
        candidates.append(_query_workspace(env.workspace, x))
    for index, obstacle in enumerate(env.obstacles):
        if isinstance(obstacle, Ball):
            candidates.append(_query_ball(obstacle, x, index))
        elif isinstance(obstacle, HalfSpace):
            candidates.append(_query_halfspace(obstacle, x, index))

    unresolved: list[int] = []
    for index, obstacle in enumerate(env.obstacles):
        if not isinstance(obstacle, ImplicitRegion):
            continue
        bound = min((c.distance for c in candidates), default=math.inf)
        result = _query_implicit(obstacle, x, index, env.ray, bound)
        if result is None:
            if obstacle.lipschitz is None and math.isinf(bound):
                unresolved.append(index)
            continue
        candidates.append(result)

    if not candidates:
        if unresolved:
            raise NumericalError(
                f"no boundary point found within {env.ray.sweep_range} m of {x.tolist()} "
                f"(implicit regions {unresolved}, {env.ray.sweep_beams} sweep beams)"
            )
        return BoundaryQuery(math.inf, None, None, True, None)

    candidates.sort(key=lambda c: c.distance)
    best = candidates[0]
    unique = best.unique
    for other in candidates[1:]:
        if other.distance - best.distance > TIE_TOLERANCE * max(1.0, best.distance):
            break
        if np.linalg.norm(other.closest_point - best.closest_point) > SAME_POINT_TOLERANCE:
            unique = False
    if not unique:
        logger.warning(
            "Non-unique closest boundary point at %s (distance %.6g); using primitive %s",
            np.round(x, 6).tolist(),
            best.distance,
            best.primitive,
        )
        best = BoundaryQuery(best.distance, best.closest_point, best.gradient, False, best.primitive)
    return best


def _query_ball(ball: Ball, x: np.ndarray, index: int) -> BoundaryQuery:
    offset = x - ball.center
    rho = float(np.linalg.norm(offset))
    normal = offset / rho
    closest = ball.center + ball.radius * normal
    return BoundaryQuery(max(rho - ball.radius, 0.0), closest, normal, True, index)


def _query_workspace(ball: Ball, x: np.ndarray) -> BoundaryQuery:
    offset = x - ball.center
    rho = float(np.linalg.norm(offset))
    unique = rho > 0
    if unique:
        direction = offset / rho
    else:
        direction = np.zeros_like(x)
        direction[0] = 1.0
    closest = ball.center + ball.radius * direction
    return BoundaryQuery(max(ball.radius - rho, 0.0), closest, -direction, unique, WORKSPACE_INDEX)


def _query_halfspace(half: HalfSpace, x: np.ndarray, index: int) -> BoundaryQuery:
    slack = max(half.offset - float(half.normal @ x), 0.0)
    return BoundaryQuery(slack, x + slack * half.normal, -half.normal, True, index)


def level_gradient(region: ImplicitRegion, x: np.ndarray) -> np.ndarray:
    """Gradient of the level function, analytic when provided."""
    if region.gradient is not None:
        return np.asarray(region.gradient(x), dtype=float)
    steps = GRADIENT_STEP * np.eye(x.size)
    plus = region.level(x[None, :] + steps)
    minus = region.level(x[None, :] - steps)
    return (plus - minus) / (2.0 * GRADIENT_STEP)


def _exact_distance(region: ImplicitRegion, x: np.ndarray) -> float:
    return float(np.linalg.norm(x - np.asarray(region.closest(x), dtype=float)))


def clearance_lower_bounds(env: Environment, points) -> np.ndarray:
    """Per-point lower bounds on the distance to the obstacle set, −inf outside the free space.

    Exact for balls, half-spaces and the workspace; −level/L for implicit
    regions with a Lipschitz constant and 0 for the others.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if env.dim is not None and points.shape[1] != env.dim:
        raise InputError(f"points have dimension {points.shape[1]}, environment has {env.dim}")
    lower = np.full(points.shape[0], np.inf)
    outside = np.zeros(points.shape[0], dtype=bool)
    if env.workspace is not None:
        slack = env.workspace.radius - np.linalg.norm(points - env.workspace.center, axis=1)
        outside |= slack < 0
        lower = np.minimum(lower, slack)
    for obstacle in env.obstacles:
        if isinstance(obstacle, Ball):
            gap = np.linalg.norm(points - obstacle.center, axis=1) - obstacle.radius
            outside |= gap < 0
        elif isinstance(obstacle, HalfSpace):
            gap = obstacle.offset - points @ obstacle.normal
            outside |= gap < 0
        elif isinstance(obstacle, ImplicitRegion):
            g = np.asarray(obstacle.level(points), dtype=float)
            outside |= g > 0
            gap = -g / obstacle.lipschitz if obstacle.lipschitz is not None else np.zeros_like(g)
        else:
            raise PrimitiveTypeError(f"unsupported obstacle primitive {type(obstacle).__name__}")
        lower = np.minimum(lower, gap)
    return np.where(outside, -np.inf, np.maximum(lower, 0.0))


def _query_implicit(
    region: ImplicitRegion,
    x: np.ndarray,
    index: int,
    options: RayOptions,
    bound: float,
) -> Optional[BoundaryQuery]:
    g0 = float(region.level(x))
    if g0 >= 0:
        grad = level_gradient(region, x)
        return BoundaryQuery(0.0, x.copy(), -grad / np.linalg.norm(grad), True, index)
    if region.lipschitz is not None and -g0 / region.lipschitz >= bound:
        return None
    if region.closest is not None:
        closest = np.asarray(region.closest(x), dtype=float)
        distance = float(np.linalg.norm(x - closest))
        if distance >= bound:
            return None
        return BoundaryQuery(distance, closest, (x - closest) / distance, True, index)

    search = min(bound, options.sweep_range)
    directions = sphere_directions(x.size, options.sweep_beams)
    hits = _ray_implicit(region, x, directions, search, options)
    if not np.isfinite(hits).any():
        return None

    j = int(np.argmin(hits))
    t_best, d_best = float(hits[j]), directions[j]
    unique = _sweep_is_unique(hits, directions, j)

    spread = _beam_spacing(x.size, options.sweep_beams)
    offsets = np.linspace(-1.0, 1.0, _REFINE_SAMPLES)
    while spread > ANGLE_TOLERANCE:
        basis = _tangent_basis(d_best)
        trial = (d_best[None, None, :] + spread * offsets[None, :, None] * basis[:, None, :]).reshape(
            -1, x.size
        )
        trial /= np.linalg.norm(trial, axis=1, keepdims=True)
        trial_hits = _ray_implicit(region, x, trial, min(search, t_best + options.step), options)
        k = int(np.argmin(trial_hits))
        if trial_hits[k] < t_best:
            t_best, d_best = float(trial_hits[k]), trial[k]
        spread *= 0.25

    closest = x + t_best * d_best
    distance = float(np.linalg.norm(x - closest))
    if distance == 0.0:
        grad = level_gradient(region, x)
        return BoundaryQuery(0.0, closest, -grad / np.linalg.norm(grad), unique, index)
    return BoundaryQuery(distance, closest, (x - closest) / distance, unique, index)


def _sweep_is_unique(hits: np.ndarray, directions: np.ndarray, j: int) -> bool:
    """A second, well-separated sweep direction reaching the same distance marks a tie."""
    best = hits[j]
    near = np.flatnonzero(hits <= best * (1.0 + 1e-3) + 1e-12)
    separation = directions[near] @ directions[j]
    return not np.any(separation < math.cos(math.radians(20.0)))


def sphere_directions(n: int, count: int) -> np.ndarray:
    """Deterministic, roughly uniform unit directions in ℝⁿ."""
    if n == 2:
        theta = -math.pi + 2.0 * math.pi * np.arange(count) / count
        return np.column_stack([np.cos(theta), np.sin(theta)])
    if n == 3:
        i = np.arange(count) + 0.5
        z = 1.0 - 2.0 * i / count
        r = np.sqrt(1.0 - z * z)
        phi = math.pi * (1.0 + math.sqrt(5.0)) * i
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    rng = np.random.default_rng(0)
    raw = np.vstack([np.eye(n), -np.eye(n), rng.standard_normal((count, n))])
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def _beam_spacing(n: int, count: int) -> float:
    if n == 2:
        return 2.0 * math.pi / count
    return math.sqrt(4.0 * math.pi / count)


def _tangent_basis(direction: np.ndarray) -> np.ndarray:
    """Orthonormal basis (rows) of the hyperplane orthogonal to *direction*."""
    q, _ = np.linalg.qr(np.column_stack([direction, np.eye(direction.size)]))
    return q[:, 1 : direction.size].T


# ---------------------------------------------------------------------------
# Sphere-world validation
# ---------------------------------------------------------------------------


def validate_sphere_world(env: Environment) -> ValidationReport:
    """Check obstacle separation and strict containment in the workspace ball."""
    if env.workspace is None:
        raise InputError("a sphere world needs a workspace ball")
    for obstacle in env.obstacles:
        if not isinstance(obstacle, Ball):
            raise PrimitiveTypeError(
                f"sphere worlds contain balls only, found {type(obstacle).__name__}"
            )

    balls: list[Ball] = list(env.obstacles)
    work = env.workspace
    for i, ball in enumerate(balls, start=1):
        reach = float(np.linalg.norm(ball.center - work.center)) + ball.radius
        if not work.radius > reach:
            return ValidationReport(
                False,
                f"obstacle {i} is not strictly inside the workspace "
                f"(|c| + r = {reach:.6g} >= r0 = {work.radius:.6g})",
                (0, i),
            )
    separation = check_separation(balls)
    if not separation.passed:
        return separation
    return ValidationReport(True, f"valid sphere world with {len(balls)} obstacles")


def check_separation(balls: Sequence[Ball]) -> ValidationReport:
    """Pairwise ‖c_i − c_j‖ > r_i + r_j; pairs are reported 1-based."""
    for i in range(len(balls)):
        for j in range(i + 1, len(balls)):
            gap = float(np.linalg.norm(balls[i].center - balls[j].center))
            if not gap > balls[i].radius + balls[j].radius:
                return ValidationReport(
                    False,
                    f"obstacles {i + 1} and {j + 1} overlap "
                    f"(|ci - cj| = {gap:.6g} <= ri + rj = {balls[i].radius + balls[j].radius:.6g})",
                    (i + 1, j + 1),
                )
    return ValidationReport(True, f"{len(balls)} separated obstacles")
