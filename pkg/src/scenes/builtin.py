from __future__ import annotations

import numpy as np

from src.models import Ball, Environment, RayOptions
from src.sphere_world import random_sphere_world


def fig2(ray: RayOptions = RayOptions()) -> Environment:
    """Single disc ℬ((2, 2), 0.5) with no workspace bound."""
    return Environment(obstacles=(Ball(np.array([2.0, 2.0]), 0.5),), ray=ray, name="fig2")


def empty(ray: RayOptions = RayOptions()) -> Environment:
    return Environment(ray=ray, name="empty")


def sphere_world(
    M: int = 3,
    seed: int = 0,
    dim: int = 2,
    radius: float = 10.0,
    ray: RayOptions = RayOptions(),
) -> Environment:
    """Random validated sphere world with *M* obstacles."""
    world = random_sphere_world(dim, M, seed, radius=radius)
    return world.environment(ray=ray, name="sphere-world")
