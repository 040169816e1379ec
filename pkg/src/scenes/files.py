"""JSON environment files: a workspace ball, balls and half-spaces, optionally on top of a builtin."""

import json
import logging
from pathlib import Path
from typing import Any, Union

from src.errors import InputError, UsageError
from src.models import Ball, Environment, HalfSpace, RayOptions
from src.scenes.registry import build_scene

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def load_environment(path: Union[str, Path], ray: RayOptions = RayOptions()) -> Environment:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"environment file {str(path)!r} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}: not valid JSON ({e})") from e
    env = parse_environment(data, ray=ray, name=path.stem)
    logger.info("Loaded %s: %d primitives", path, len(env.obstacles))
    return env


def parse_environment(data: dict[str, Any], ray: RayOptions = RayOptions(), name: str = "") -> Environment:
    if not isinstance(data, dict):
        raise InputError("environment file must contain a JSON object")
    version = data.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise InputError(f"unsupported environment format_version {version!r}")

    obstacles: list = []
    workspace = None
    builtin = data.get("builtin")
    if builtin:
        if isinstance(builtin, str):
            base = build_scene(builtin, ray=ray)
        else:
            base = build_scene(builtin.get("name", ""), builtin.get("params"), ray=ray)
        obstacles.extend(base.obstacles)
        workspace = base.workspace

    try:
        if data.get("workspace") is not None:
            ws = data["workspace"]
            workspace = Ball(ws["center"], ws["radius"])
        obstacles.extend(Ball(b["center"], b["radius"]) for b in data.get("balls", []))
        obstacles.extend(HalfSpace(h["normal"], h["offset"]) for h in data.get("halfspaces", []))
    except KeyError as e:
        raise InputError(f"environment entry is missing the field {e.args[0]!r}") from e

    return Environment(
        obstacles=tuple(obstacles),
        workspace=workspace,
        reach=data.get("reach"),
        ray=ray,
        name=name or (builtin if isinstance(builtin, str) else ""),
    )
