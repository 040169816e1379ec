"""Run manifests: the JSON document every CLI subcommand reads.

Sections are kept as plain data so that parse → serialize → parse is the
identity; ``controller_config`` / ``sim_config`` turn them into the
validated library types.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from dataclasses import field as dc_field
from pathlib import Path
from typing import Any, Optional, Union

from src.errors import InputError, UsageError
from src.models import (
    ControllerConfig,
    ControllerKind,
    Environment,
    RayOptions,
    SamplingSpec,
    SimConfig,
)
from src.scenes import build_scene, load_environment

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
OUTPUT_FORMATS = ("csv", "svg", "json")


@dataclass
class SceneRef:
    name: Optional[str] = None
    params: dict[str, Any] = field(default_factory=dict)
    file: Optional[str] = None

    def to_dict(self) -> dict[str, Any]:
        if self.file is not None:
            return {"file": self.file}
        return {"name": self.name, "params": dict(self.params)}


@dataclass
class ControllerSection:
    goal: list[float]
    k: float = 0.5
    epsilon: float = 0.2
    epsilon_prime: float = 0.4
    sensing_radius: float = 0.5
    reach: Optional[float] = None


@dataclass
class SamplingSection:
    count: int
    lower: list[float]
    upper: list[float]
    seed: int = 0


@dataclass
class SimSection:
    kind: str = ControllerKind.SMOOTH_EXACT.value
    initial: Optional[list[float]] = None
    sampling: Optional[SamplingSection] = None
    dt: float = 1e-3
    max_time: float = 200.0
    goal_tolerance: float = 0.05
    lidar_beams: int = 360


@dataclass
class FieldSection:
    lower: list[float]
    upper: list[float]
    resolution: list[int] = field(default_factory=lambda: [50, 50])
    kind: str = ControllerKind.DISCONTINUOUS_EXACT.value


@dataclass
class OutputsSection:
    directory: Optional[str] = None  # falls back to OUTPUT_DIR
    formats: list[str] = field(default_factory=lambda: list(OUTPUT_FORMATS))


@dataclass
class RunManifest:
    scene: SceneRef
    controller: ControllerSection
    sim: SimSection = field(default_factory=SimSection)
    field: Optional[FieldSection] = None
    outputs: OutputsSection = dc_field(default_factory=OutputsSection)
    base_dir: Path = dc_field(default=Path("."), compare=False)

    def to_dict(self) -> dict[str, Any]:
        c, s = self.controller, self.sim
        data: dict[str, Any] = {
            "format_version": FORMAT_VERSION,
            "scene": self.scene.to_dict(),
            "controller": {
                "goal": list(c.goal),
                "k": c.k,
                "epsilon": c.epsilon,
                "epsilon_prime": c.epsilon_prime,
                "sensing_radius": c.sensing_radius,
                "reach": c.reach,
            },
            "sim": {
                "kind": s.kind,
                "dt": s.dt,
                "max_time": s.max_time,
                "goal_tolerance": s.goal_tolerance,
                "lidar_beams": s.lidar_beams,
            },
            "outputs": {"directory": self.outputs.directory, "formats": list(self.outputs.formats)},
        }
        if s.initial is not None:
            data["sim"]["initial"] = list(s.initial)
        if s.sampling is not None:
            data["sim"]["sampling"] = {
                "count": s.sampling.count,
                "lower": list(s.sampling.lower),
                "upper": list(s.sampling.upper),
                "seed": s.sampling.seed,
            }
        if self.field is not None:
            data["field"] = {
                "lower": list(self.field.lower),
                "upper": list(self.field.upper),
                "resolution": list(self.field.resolution),
                "kind": self.field.kind,
            }
        return data

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    # -- conversion to library types -----------------------------------------

    def environment(self, ray: RayOptions = RayOptions()) -> Environment:
        if self.scene.file is not None:
            return load_environment(self.scene_path(), ray=ray)
        return build_scene(self.scene.name, self.scene.params, ray=ray)

    def scene_path(self) -> Path:
        path = Path(self.scene.file)
        return path if path.is_absolute() else self.base_dir / path

    def output_dir(self, default: Union[str, Path] = "out") -> Path:
        path = Path(self.outputs.directory or default)
        return path if path.is_absolute() else self.base_dir / path

    def controller_config(self) -> ControllerConfig:
        c = self.controller
        return ControllerConfig(
            goal=c.goal,
            k=c.k,
            epsilon=c.epsilon,
            epsilon_prime=c.epsilon_prime,
            sensing_radius=c.sensing_radius,
            reach=c.reach,
        )

    def sim_config(self, env: Environment) -> SimConfig:
        s = self.sim
        sampling = None
        if s.sampling is not None:
            sampling = SamplingSpec(
                count=s.sampling.count,
                lower=s.sampling.lower,
                upper=s.sampling.upper,
                seed=s.sampling.seed,
            )
        return SimConfig(
            environment=env,
            controller=self.controller_config(),
            kind=ControllerKind(s.kind),
            initial=s.initial,
            sampling=sampling,
            dt=s.dt,
            max_time=s.max_time,
            goal_tolerance=s.goal_tolerance,
            lidar_beams=s.lidar_beams,
        )


def parse_manifest(raw: dict[str, Any], base_dir: Union[str, Path] = ".") -> RunManifest:
    """Parse a manifest dict, filling every omitted optional field with its default."""
    if not isinstance(raw, dict):
        raise InputError("manifest must be a JSON object")
    version = raw.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise InputError(f"unsupported manifest format_version {version!r}")

    raw_scene = raw.get("scene")
    if isinstance(raw_scene, str):
        scene = SceneRef(name=raw_scene)
    elif isinstance(raw_scene, dict) and (raw_scene.get("name") or raw_scene.get("file")):
        scene = SceneRef(
            name=raw_scene.get("name"),
            params=dict(raw_scene.get("params") or {}),
            file=raw_scene.get("file"),
        )
    else:
        raise InputError("manifest needs a scene (builtin name or {'file': path})")

    raw_ctrl = raw.get("controller") or {}
    if "goal" not in raw_ctrl:
        raise InputError("manifest controller section needs a goal")
    controller = ControllerSection(
        goal=[float(v) for v in raw_ctrl["goal"]],
        k=float(raw_ctrl.get("k", 0.5)),
        epsilon=float(raw_ctrl.get("epsilon", 0.2)),
        epsilon_prime=float(raw_ctrl.get("epsilon_prime", 0.4)),
        sensing_radius=float(raw_ctrl.get("sensing_radius", 0.5)),
        reach=None if raw_ctrl.get("reach") is None else float(raw_ctrl["reach"]),
    )

    raw_sim = raw.get("sim") or {}
    sampling = None
    raw_sampling = raw_sim.get("sampling")
    if raw_sampling:
        sampling = SamplingSection(
            count=int(raw_sampling.get("count", 0)),
            lower=[float(v) for v in raw_sampling.get("lower", [])],
            upper=[float(v) for v in raw_sampling.get("upper", [])],
            seed=int(raw_sampling.get("seed", 0)),
        )
    kind = raw_sim.get("kind", ControllerKind.SMOOTH_EXACT.value)
    _check_kind(kind)
    initial = raw_sim.get("initial")
    sim = SimSection(
        kind=kind,
        initial=None if initial is None else [float(v) for v in initial],
        sampling=sampling,
        dt=float(raw_sim.get("dt", 1e-3)),
        max_time=float(raw_sim.get("max_time", 200.0)),
        goal_tolerance=float(raw_sim.get("goal_tolerance", 0.05)),
        lidar_beams=int(raw_sim.get("lidar_beams", 360)),
    )

    grid = None
    raw_field = raw.get("field")
    if raw_field:
        field_kind = raw_field.get("kind", ControllerKind.DISCONTINUOUS_EXACT.value)
        _check_kind(field_kind)
        grid = FieldSection(
            lower=[float(v) for v in raw_field.get("lower", [])],
            upper=[float(v) for v in raw_field.get("upper", [])],
            resolution=[int(v) for v in raw_field.get("resolution", [50, 50])],
            kind=field_kind,
        )

    raw_out = raw.get("outputs") or {}
    formats = list(raw_out.get("formats", OUTPUT_FORMATS))
    bad = [f for f in formats if f not in OUTPUT_FORMATS]
    if bad:
        raise InputError(f"unknown output formats {bad}; choose from {list(OUTPUT_FORMATS)}")
    outputs = OutputsSection(directory=raw_out.get("directory"), formats=formats)

    return RunManifest(
        scene=scene,
        controller=controller,
        sim=sim,
        field=grid,
        outputs=outputs,
        base_dir=Path(base_dir),
    )


def _check_kind(kind: str) -> None:
    try:
        ControllerKind(kind)
    except ValueError:
        choices = ", ".join(k.value for k in ControllerKind)
        raise InputError(f"unknown controller kind {kind!r}; choose from {choices}") from None


def load_manifest(path: Union[str, Path]) -> RunManifest:
    """Read and parse a manifest file; referenced environment files must exist."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"manifest {str(path)!r} does not exist")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}: not valid JSON ({e})") from e
    manifest = parse_manifest(raw, base_dir=path.parent)
    if manifest.scene.file is not None and not manifest.scene_path().is_file():
        raise UsageError(f"scene file {str(manifest.scene_path())!r} referenced by {path} does not exist")
    logger.debug("Loaded manifest %s (scene=%s)", path, manifest.scene.name or manifest.scene.file)
    return manifest
