"""Artifacts: vector-field grids, CSV tables, JSON summaries and SVG plots."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.errors import UsageError  # noqa: E402
from src.geometry import contains  # noqa: E402
from src.models import (  # noqa: E402
    Ball,
    ControllerConfig,
    ControllerKind,
    Environment,
    LidarScan,
    Trajectory,
    as_point,
)
from src.sim import ClosedLoop  # noqa: E402

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Fixed SVG ids and no timestamp, so the same figure renders to the same bytes.
plt.rcParams["svg.hashsalt"] = "svc-nav"
plt.rcParams["svg.fonttype"] = "none"
_SVG_METADATA = {"Date": None}

MASKED = "masked"


@dataclass(frozen=True, eq=False)
class FieldGrid:
    """Controller output sampled on the nodes of a regular 2-D grid.

    ``velocities`` is (ny, nx, 2) and NaN on masked nodes; ``modes`` holds the
    mode value per node or ``"masked"``.
    """

    xs: np.ndarray
    ys: np.ndarray
    velocities: np.ndarray
    modes: np.ndarray
    distances: np.ndarray
    mask: np.ndarray  # True where the node lies inside an obstacle
    kind: ControllerKind

    def speed(self) -> np.ndarray:
        return np.linalg.norm(self.velocities, axis=-1)


def _spacing(axis: np.ndarray) -> float:
    return float(axis[1] - axis[0]) if axis.size > 1 else math.inf


def export_field(
    env: Environment,
    cfg: ControllerConfig,
    lower: Sequence[float],
    upper: Sequence[float],
    resolution: Sequence[int] = (50, 50),
    kind: ControllerKind = ControllerKind.DISCONTINUOUS_EXACT,
    lidar_beams: int = 360,
) -> FieldGrid:
    """Evaluate the chosen controller on every free node of the box [lower, upper].

    The discontinuous law treats nodes within half a grid spacing of the
    boundary as boundary nodes.
    """
    lower = as_point(lower, name="field lower corner")
    upper = as_point(upper, name="field upper corner")
    if lower.size != 2 or upper.size != 2 or env.dim not in (None, 2) or cfg.goal.size != 2:
        raise UsageError("vector-field export needs a planar (n = 2) scene")
    nx, ny = (int(r) for r in resolution)
    if nx < 2 or ny < 2 or np.any(upper <= lower):
        raise UsageError(f"invalid field grid {list(resolution)} over [{lower.tolist()}, {upper.tolist()}]")

    xs = np.linspace(lower[0], upper[0], nx)
    ys = np.linspace(lower[1], upper[1], ny)
    kind = ControllerKind(kind)
    layer = 0.5 * min(_spacing(xs), _spacing(ys))
    loop = ClosedLoop(env, cfg, kind, lidar_beams=lidar_beams, boundary_layer=layer)

    velocities = np.full((ny, nx, 2), np.nan)
    distances = np.full((ny, nx), np.nan)
    modes = np.full((ny, nx), MASKED, dtype=object)
    mask = np.ones((ny, nx), dtype=bool)
    for row, y in enumerate(ys):
        for col, x in enumerate(xs):
            point = np.array([x, y])
            if not contains(env, point):
                continue
            sample = loop.sample(point)
            velocities[row, col] = sample.velocity
            distances[row, col] = sample.distance
            modes[row, col] = sample.mode.value
            mask[row, col] = False
    logger.info("Field %dx%d (%s): %d masked nodes", nx, ny, kind.value, int(mask.sum()))
    return FieldGrid(xs, ys, velocities, modes, distances, mask, kind)


# ---------------------------------------------------------------------------
# CSV / JSON
# ---------------------------------------------------------------------------


def write_trajectory_csv(traj: Trajectory, path: PathLike) -> Path:
    """Columns t, x_1..x_n, distance, lyapunov, mode."""
    path = Path(path)
    n = traj.states.shape[1]
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", *(f"x_{i}" for i in range(1, n + 1)), "distance", "lyapunov", "mode"])
        for t, x, d, v, mode in zip(traj.times, traj.states, traj.distances, traj.lyapunov, traj.modes):
            writer.writerow([_num(t), *(_num(c) for c in x), _num(d), _num(v), mode.value])
    logger.info("Wrote %s (%d rows)", path, len(traj.times))
    return path


def write_field_csv(grid: FieldGrid, path: PathLike) -> Path:
    path = Path(path)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["x", "y", "vx", "vy", "distance", "mode"])
        for row, y in enumerate(grid.ys):
            for col, x in enumerate(grid.xs):
                if grid.mask[row, col]:
                    writer.writerow([_num(x), _num(y), "", "", "", MASKED])
                    continue
                vx, vy = grid.velocities[row, col]
                writer.writerow(
                    [_num(x), _num(y), _num(vx), _num(vy), _num(grid.distances[row, col]), grid.modes[row, col]]
                )
    logger.info("Wrote %s (%d nodes)", path, grid.mask.size)
    return path


def write_scan_csv(scan: LidarScan, path: PathLike) -> Path:
    path = Path(path)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["theta", "range"])
        writer.writerows([_num(a), _num(r)] for a, r in zip(scan.angles, scan.ranges))
    logger.info("Wrote %s (%d beams)", path, scan.angles.size)
    return path


def write_json(data: dict[str, Any], path: PathLike) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    logger.info("Wrote %s", path)
    return path


def _num(value: float) -> str:
    return repr(float(value))


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------


def _save(fig, path: PathLike) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)
    logger.info("Wrote %s", path)
    return path


def _draw_obstacles(ax, env: Environment, xs: np.ndarray, ys: np.ndarray, mask: np.ndarray) -> None:
    if mask.any():
        ax.contourf(xs, ys, mask.astype(float), levels=[0.5, 1.5], colors=["0.6"])
    for obstacle in env.obstacles:
        if isinstance(obstacle, Ball) and obstacle.dim == 2:
            ax.add_patch(plt.Circle(tuple(obstacle.center), obstacle.radius, fill=False, color="k", lw=0.8))
    if env.workspace is not None and env.workspace.dim == 2:
        ws = env.workspace
        ax.add_patch(plt.Circle(tuple(ws.center), ws.radius, fill=False, color="k", lw=0.8))


def _draw_bands(ax, xs, ys, distances: np.ndarray, cfg: ControllerConfig) -> None:
    finite = np.where(np.isfinite(distances), distances, np.inf)
    if np.nanmin(finite) < cfg.epsilon_prime:
        ax.contourf(
            xs,
            ys,
            np.nan_to_num(finite, nan=np.inf, posinf=1e9),
            levels=[0.0, cfg.epsilon, cfg.epsilon_prime],
            colors=["#f4a582", "#fddbc7"],
        )


def plot_field_svg(grid: FieldGrid, env: Environment, cfg: ControllerConfig, path: PathLike) -> Path:
    """Quiver plot of the field with the ε and ε′ bands shaded and the goal marked."""
    fig, ax = plt.subplots(figsize=(6, 6))
    _draw_bands(ax, grid.xs, grid.ys, grid.distances, cfg)
    _draw_obstacles(ax, env, grid.xs, grid.ys, grid.mask)
    X, Y = np.meshgrid(grid.xs, grid.ys)
    free = ~grid.mask
    ax.quiver(
        X[free],
        Y[free],
        grid.velocities[..., 0][free],
        grid.velocities[..., 1][free],
        angles="xy",
        units="width",
        color="k",
    )
    ax.plot(cfg.goal[0], cfg.goal[1], "b*", markersize=10)
    ax.set_xlim(grid.xs[0], grid.xs[-1])
    ax.set_ylim(grid.ys[0], grid.ys[-1])
    ax.set_aspect("equal")
    ax.set_title(grid.kind.value)
    return _save(fig, path)


def _approximate_distance(mask: np.ndarray, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Node-to-nearest-masked-node distance, accurate to the grid spacing."""
    out = np.full(mask.shape, np.inf)
    if not mask.any():
        return out
    blocked = np.column_stack([X[mask], Y[mask]])
    free = np.column_stack([X[~mask], Y[~mask]])
    nearest = np.full(len(free), np.inf)
    for start in range(0, len(blocked), 2048):
        chunk = blocked[start : start + 2048]
        d = np.linalg.norm(free[:, None, :] - chunk[None, :, :], axis=-1)
        nearest = np.minimum(nearest, d.min(axis=1))
    out[~mask] = nearest
    return out


def plot_trajectory_svg(
    traj: Trajectory,
    env: Environment,
    cfg: ControllerConfig,
    path: PathLike,
    resolution: int = 120,
    padding: float = 1.0,
) -> Path:
    """Planar path over the obstacles and the ε band, with start and goal markers."""
    if traj.states.shape[1] != 2:
        raise UsageError("trajectory plots need a planar (n = 2) run")
    points = np.vstack([traj.states, cfg.goal[None, :]])
    lo = points.min(axis=0) - padding
    hi = points.max(axis=0) + padding
    xs = np.linspace(lo[0], hi[0], resolution)
    ys = np.linspace(lo[1], hi[1], resolution)
    X, Y = np.meshgrid(xs, ys)
    mask = np.array([[not contains(env, np.array([x, y])) for x in xs] for y in ys])

    fig, ax = plt.subplots(figsize=(6, 6 * (hi[1] - lo[1]) / (hi[0] - lo[0])))
    _draw_bands(ax, xs, ys, _approximate_distance(mask, X, Y), cfg)
    _draw_obstacles(ax, env, xs, ys, mask)
    ax.plot(traj.states[:, 0], traj.states[:, 1], "r-", lw=1.5)
    ax.plot(traj.states[0, 0], traj.states[0, 1], "go", markersize=6)
    ax.plot(cfg.goal[0], cfg.goal[1], "b*", markersize=10)
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_aspect("equal")
    ax.set_title(traj.outcome.value)
    return _save(fig, path)


def plot_lidar_svg(scan: LidarScan, path: PathLike, theta_min: Optional[float] = None) -> Path:
    """Polar range curve ρ(θ), saturated at the sensing radius, with the closest beam marked."""
    fig = plt.figure(figsize=(5, 5))
    ax = fig.add_subplot(projection="polar")
    angles = np.append(scan.angles, scan.angles[:1])
    ranges = np.append(scan.ranges, scan.ranges[:1])
    ax.plot(angles, ranges, "k-", lw=1)
    ax.set_ylim(0, scan.max_range)
    if theta_min is not None:
        ax.plot([theta_min, theta_min], [0, float(scan.ranges.min())], "r-", lw=1.5)
    return _save(fig, path)
