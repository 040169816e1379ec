from src.scenes.files import load_environment, parse_environment
from src.scenes.registry import SCENE_DESCRIPTIONS, SCENE_REGISTRY, build_scene

__all__ = [
    "SCENE_REGISTRY",
    "SCENE_DESCRIPTIONS",
    "build_scene",
    "load_environment",
    "parse_environment",
]
