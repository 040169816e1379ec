"""Sinusoidal corridor with a periodic row of disc obstacles along its centre line."""

from __future__ import annotations

import logging
import math

import numpy as np

from src.errors import InputError
from src.models import Ball, Environment, ImplicitRegion, RayOptions

logger = logging.getLogger(__name__)

WALL_AMPLITUDE = 4.0
WALL_OFFSET = 5.0
WALL_LIPSCHITZ = math.sqrt(WALL_AMPLITUDE**2 + 1.0)
DISC_RADIUS = 2.0
# Extra x₁ margin on each side of the box when picking which discs to keep.
WINDOW_MARGIN = 2.0
# Sample spacing along x₁ of the nearest-wall-point search.
WALL_SEARCH_STEP = 1e-2
NEWTON_STEPS = 8


def lower_wall(y: np.ndarray) -> np.ndarray:
    """4 sin(x₁) − x₂ − 5; positive below the lower wall."""
    return WALL_AMPLITUDE * np.sin(y[..., 0]) - y[..., 1] - WALL_OFFSET


def lower_wall_gradient(y: np.ndarray) -> np.ndarray:
    return np.stack([WALL_AMPLITUDE * np.cos(y[..., 0]), -np.ones_like(y[..., 1])], axis=-1)


def upper_wall(y: np.ndarray) -> np.ndarray:
    """4 sin(x₁) + x₂ − 5; positive above the upper wall."""
    return WALL_AMPLITUDE * np.sin(y[..., 0]) + y[..., 1] - WALL_OFFSET


def upper_wall_gradient(y: np.ndarray) -> np.ndarray:
    return np.stack([WALL_AMPLITUDE * np.cos(y[..., 0]), np.ones_like(y[..., 1])], axis=-1)


def _wall_height(s, side: float):
    return side * (WALL_OFFSET - WALL_AMPLITUDE * np.sin(s))


def _closest_on_wall(y: np.ndarray, side: float) -> np.ndarray:
    """Nearest point of the curve x₂ = side·(5 − 4 sin x₁) to *y*.

    The vertical gap bounds the distance, so the nearest point lies within one gap
    of y₁ along x₁. The squared distance is sampled there and its best local
    minima are polished with Newton steps.
    """
    a, b = float(y[0]), float(y[1])
    gap = abs(b - _wall_height(a, side))
    if gap == 0.0:
        return np.array([a, b])
    count = max(8, math.ceil(2.0 * gap / WALL_SEARCH_STEP))
    s = np.linspace(a - gap, a + gap, count + 1)
    f = (s - a) ** 2 + (_wall_height(s, side) - b) ** 2
    minima = np.flatnonzero((f[1:-1] <= f[:-2]) & (f[1:-1] <= f[2:])) + 1
    candidates = np.concatenate([minima, [0, count]])
    candidates = candidates[np.argsort(f[candidates], kind="stable")[:3]]
    spacing = s[1] - s[0]
    lo, hi = s[candidates] - spacing, s[candidates] + spacing
    t = s[candidates]
    for _ in range(NEWTON_STEPS):
        r = _wall_height(t, side) - b
        slope = -side * WALL_AMPLITUDE * np.cos(t)
        bend = side * WALL_AMPLITUDE * np.sin(t)
        d1 = (t - a) + r * slope
        d2 = 1.0 + slope**2 + r * bend
        t = np.clip(t - np.divide(d1, d2, out=np.zeros_like(d1), where=d2 > 0), lo, hi)
    t = np.concatenate([t, s[candidates]])
    best = float(t[np.argmin((t - a) ** 2 + (_wall_height(t, side) - b) ** 2)])
    return np.array([best, _wall_height(best, side)])


def lower_wall_closest(y: np.ndarray) -> np.ndarray:
    return _closest_on_wall(y, -1.0)


def upper_wall_closest(y: np.ndarray) -> np.ndarray:
    return _closest_on_wall(y, 1.0)


def disc_window(xmin: float, xmax: float, sensing_radius: float) -> range:
    """Indices q whose disc centre (4q+3)π/2 lies in [xmin − R − 2, xmax + R + 2]."""
    lo = xmin - sensing_radius - WINDOW_MARGIN
    hi = xmax + sensing_radius + WINDOW_MARGIN
    q_lo = math.ceil((2.0 * lo / math.pi - 3.0) / 4.0)
    q_hi = math.floor((2.0 * hi / math.pi - 3.0) / 4.0)
    return range(q_lo, q_hi + 1)


def disc_center(q: int) -> np.ndarray:
    return np.array([(4 * q + 3) * math.pi / 2.0, 0.0])


def paper_corridor(
    xmin: float = -9.0,
    xmax: float = 12.0,
    sensing_radius: float = 0.5,
    ray: RayOptions = RayOptions(),
) -> Environment:
    if not xmin < xmax:
        raise InputError(f"corridor box needs xmin < xmax, got [{xmin}, {xmax}]")
    walls = (
        ImplicitRegion(
            lower_wall, 2, lower_wall_gradient, WALL_LIPSCHITZ, "lower-wall", lower_wall_closest
        ),
        ImplicitRegion(
            upper_wall, 2, upper_wall_gradient, WALL_LIPSCHITZ, "upper-wall", upper_wall_closest
        ),
    )
    window = disc_window(xmin, xmax, sensing_radius)
    discs = tuple(Ball(disc_center(q), DISC_RADIUS) for q in window)
    logger.debug("Corridor over x1 in [%g, %g]: discs q=%d..%d", xmin, xmax, window.start, window.stop - 1)
    return Environment(obstacles=walls + discs, ray=ray, name="paper-corridor")
