import numpy as np
import pytest

from src.models import Ball, ControllerConfig, Environment, HalfSpace, ImplicitRegion
from src.scenes import build_scene


@pytest.fixture
def fig2_env() -> Environment:
    return build_scene("fig2")


@pytest.fixture
def corridor_env() -> Environment:
    return build_scene("paper-corridor")


@pytest.fixture
def sphere_env() -> Environment:
    """Workspace of radius 5 with three separated discs."""
    return Environment(
        obstacles=(
            Ball([2.0, 2.0], 0.5),
            Ball([-2.0, 1.0], 0.8),
            Ball([0.5, -2.5], 0.6),
        ),
        workspace=Ball([0.0, 0.0], 5.0),
    )


@pytest.fixture
def origin_cfg() -> ControllerConfig:
    return ControllerConfig(goal=[0.0, 0.0], k=0.5, epsilon=0.2, epsilon_prime=0.4, sensing_radius=0.5)


def implicit_disc(center, radius: float) -> ImplicitRegion:
    """A disc written as an implicit region r² − ‖y − c‖² > 0, for comparison with Ball."""
    c = np.asarray(center, dtype=float)

    def level(y):
        return radius**2 - np.sum((y - c) ** 2, axis=-1)

    def gradient(y):
        return -2.0 * (y - c)

    return ImplicitRegion(level, c.size, gradient, name="disc")


def floor_plane(height: float) -> HalfSpace:
    """Obstacle below y = height in the plane."""
    return HalfSpace([0.0, -1.0], -height)
