import inspect
import logging
from typing import Any, Callable, Optional

from src.errors import UsageError
from src.models import Environment, RayOptions
from src.scenes.builtin import empty, fig2, sphere_world
from src.scenes.corridor import paper_corridor

logger = logging.getLogger(__name__)

SceneBuilder = Callable[..., Environment]

SCENE_REGISTRY: dict[str, SceneBuilder] = {
    "paper-corridor": paper_corridor,
    "fig2": fig2,
    "sphere-world": sphere_world,
    "empty": empty,
}

SCENE_DESCRIPTIONS = {
    "paper-corridor": "sinusoidal corridor walls with radius-2 discs on the centre line (xmin, xmax, sensing_radius)",
    "fig2": "one disc of radius 0.5 at (2, 2), unbounded workspace",
    "sphere-world": "random validated sphere world (M, seed, dim, radius)",
    "empty": "no obstacles, unbounded workspace",
}


def scene_parameters(name: str) -> list[str]:
    builder = _lookup(name)
    return [p for p in inspect.signature(builder).parameters if p != "ray"]


def build_scene(
    name: str,
    params: Optional[dict[str, Any]] = None,
    ray: RayOptions = RayOptions(),
) -> Environment:
    """Build the builtin scene *name*; unknown names and parameters are usage errors."""
    builder = _lookup(name)
    params = dict(params or {})
    unknown = set(params) - set(scene_parameters(name))
    if unknown:
        raise UsageError(
            f"scene {name!r} does not take {sorted(unknown)}; "
            f"accepted parameters: {scene_parameters(name)}"
        )
    env = builder(ray=ray, **params)
    logger.info("Built scene %s with %d primitives", name, len(env.obstacles))
    return env


def _lookup(name: str) -> SceneBuilder:
    builder = SCENE_REGISTRY.get(name)
    if builder is None:
        known = "; ".join(f"{n} ({SCENE_DESCRIPTIONS[n]})" for n in sorted(SCENE_REGISTRY))
        raise UsageError(f"unknown scene {name!r}; known scenes: {known}")
    return builder
