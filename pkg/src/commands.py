import json
import logging
import sys
from pathlib import Path
from typing import Callable, Optional, TextIO

import numpy as np

from src import export
from src.config import Settings
from src.errors import InputError, SafetyFailure, SceneValidationError, UsageError
from src.geometry import boundary_query, check_separation, contains, validate_sphere_world
from src.manifest import RunManifest, load_manifest
from src.models import Ball, ControllerKind, Environment, Outcome, ValidationReport
from src.scenes import build_scene, load_environment
from src.sensors.lidar import scan_to_safety_input, simulate_lidar
from src.sim import batch_run, check_goal, exponential_envelope, run, safety_audit, safety_floor
from src.sphere_world import SphereWorld, instability_probes, undesired_equilibria

logger = logging.getLogger(__name__)


def parse_point(text: str) -> np.ndarray:
    """'x,y[,z…]' → array; used by ``lidar-debug --at``."""
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers like '1.5,-2', got {text!r}") from None
    if len(values) < 2:
        raise UsageError(f"expected at least two coordinates, got {text!r}")
    return np.array(values)


def parse_params(pairs: list[str]) -> dict:
    """'key=value' pairs; values are read as JSON when possible (numbers, lists), else kept as text."""
    params = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise UsageError(f"scene parameters look like key=value, got {pair!r}")
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            params[key] = value
    return params


def validate_scene(env: Environment) -> ValidationReport:
    """Sphere-world checks with a workspace ball, separation checks for bare ball sets."""
    balls_only = all(isinstance(o, Ball) for o in env.obstacles)
    if env.workspace is not None and balls_only:
        return validate_sphere_world(env)
    if balls_only:
        return check_separation(env.obstacles)
    return ValidationReport(True, f"{len(env.obstacles)} primitives, nothing to check beyond construction")


class Runner:
    """Executes one CLI subcommand; every handler returns the process exit code."""

    def __init__(self, settings: Settings, out: Optional[TextIO] = None):
        self._settings = settings
        self._out = out if out is not None else sys.stdout
        self._handlers: dict[str, Callable[..., int]] = {
            "simulate": self.simulate,
            "batch": self.batch,
            "field": self.field,
            "equilibria": self.equilibria,
            "lidar-debug": self.lidar_debug,
            "validate": self.validate,
        }

    def dispatch(self, command: str, **kwargs) -> int:
        handler = self._handlers.get(command)
        if handler is None:
            raise UsageError(f"unknown subcommand {command!r}; choose from {', '.join(self._handlers)}")
        return handler(**kwargs)

    # -- helpers -------------------------------------------------------------

    def _load(self, manifest_path: str) -> tuple[RunManifest, Environment]:
        manifest = load_manifest(manifest_path)
        env = manifest.environment(ray=self._settings.ray_options())
        return manifest, env

    def _output_dir(self, manifest: RunManifest, override: Optional[str]) -> Path:
        directory = Path(override) if override else manifest.output_dir(self._settings.output_dir)
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise UsageError(f"cannot create output directory {str(directory)!r}: {e}") from e
        return directory

    def _emit(self, summary: dict) -> None:
        self._out.write(json.dumps(summary, sort_keys=True) + "\n")

    # -- subcommands ---------------------------------------------------------

    def simulate(self, manifest: str, output_dir: Optional[str] = None) -> int:
        spec, env = self._load(manifest)
        if spec.sim.initial is None:
            raise UsageError("simulate needs sim.initial; use `batch` for sampling specs")
        cfg = spec.sim_config(env)
        check_goal(env, cfg.controller)
        logger.info("Simulating %s (%s) from %s", env.name or "scene", cfg.kind.value, list(spec.sim.initial))

        traj = run(cfg)
        floor = safety_floor(cfg)
        audit = safety_audit(traj, env, cfg.controller, floor)
        summary = {
            "format_version": 1,
            "outcome": traj.outcome.value,
            "steps": len(traj.times) - 1,
            "final_time": float(traj.times[-1]),
            "final_state": traj.final_state.tolist(),
            "goal_distance": float(traj.goal_distances[-1]),
            "min_distance": audit.min_distance if np.isfinite(audit.min_distance) else None,
            "first_violation": audit.first_violation,
            "margin_violations": len(traj.margin_violations),
            "max_lyapunov_increase": audit.max_lyapunov_increase,
            "envelope_ratio": exponential_envelope(traj, cfg.controller),
        }

        directory = self._output_dir(spec, output_dir)
        formats = spec.outputs.formats
        if "csv" in formats:
            export.write_trajectory_csv(traj, directory / "trajectory.csv")
        if "svg" in formats and traj.states.shape[1] == 2:
            export.plot_trajectory_svg(traj, env, cfg.controller, directory / "trajectory.svg")
        if "json" in formats:
            export.write_json(summary, directory / "summary.json")
        self._emit(summary)

        if traj.outcome is Outcome.SAFETY_VIOLATION or audit.first_violation is not None:
            raise SafetyFailure(f"run left the safe set (min distance {audit.min_distance:.6g})")
        return 0

    def batch(self, manifest: str, output_dir: Optional[str] = None, strict: bool = False) -> int:
        spec, env = self._load(manifest)
        if spec.sim.sampling is None:
            raise UsageError("batch needs sim.sampling {count, lower, upper, seed}")
        cfg = spec.sim_config(env)
        summary = batch_run(cfg, workers=self._settings.batch_workers)
        data = summary.as_dict()

        directory = self._output_dir(spec, output_dir)
        if "json" in spec.outputs.formats:
            export.write_json(data, directory / "batch.json")
        self._emit(data)

        if summary.outcomes.get(Outcome.SAFETY_VIOLATION.value):
            raise SafetyFailure(f"{summary.outcomes[Outcome.SAFETY_VIOLATION.value]} runs violated safety")
        if strict and summary.outcomes.get(Outcome.CONVERGED.value, 0) != summary.runs:
            raise SafetyFailure(f"not every run converged: {summary.outcomes}")
        return 0

    def field(self, manifest: str, output_dir: Optional[str] = None) -> int:
        spec, env = self._load(manifest)
        if spec.field is None:
            raise UsageError("field needs a field section {lower, upper, resolution, kind}")
        controller = spec.controller_config()
        grid = export.export_field(
            env,
            controller,
            spec.field.lower,
            spec.field.upper,
            spec.field.resolution,
            ControllerKind(spec.field.kind),
            lidar_beams=spec.sim.lidar_beams,
        )
        modes, counts = np.unique(grid.modes.astype(str), return_counts=True)
        summary = {
            "format_version": 1,
            "kind": grid.kind.value,
            "resolution": [len(grid.xs), len(grid.ys)],
            "modes": {m: int(c) for m, c in zip(modes, counts)},
            "max_speed": float(np.nanmax(grid.speed())) if (~grid.mask).any() else 0.0,
        }

        directory = self._output_dir(spec, output_dir)
        formats = spec.outputs.formats
        if "csv" in formats:
            export.write_field_csv(grid, directory / "field.csv")
        if "svg" in formats:
            export.plot_field_svg(grid, env, controller, directory / "field.svg")
        if "json" in formats:
            export.write_json(summary, directory / "field.json")
        self._emit(summary)
        return 0

    def equilibria(
        self,
        manifest: str,
        output_dir: Optional[str] = None,
        probe: bool = False,
        perturbation: float = 1e-3,
        horizon: float = 100.0,
    ) -> int:
        spec, env = self._load(manifest)
        world = SphereWorld.from_environment(env)
        controller = spec.controller_config()
        report = undesired_equilibria(world, controller)
        data = report.as_dict()

        failed = []
        if probe:
            probes = instability_probes(
                world, controller, perturbation, horizon, workers=self._settings.batch_workers
            )
            data["probes"] = [
                {
                    "index": p.index,
                    "escaped": p.escaped,
                    "escape_time": p.escape_time,
                    "terminal_distance": p.terminal_distance,
                    "outcome": p.trajectory.outcome.value,
                }
                for p in probes
            ]
            failed = [p.index for p in probes if not p.escaped]

        directory = self._output_dir(spec, output_dir)
        if "json" in spec.outputs.formats:
            export.write_json(data, directory / "equilibria.json")
        self._emit(data)
        if failed:
            raise SafetyFailure(f"probes did not escape the equilibria of obstacles {failed}")
        return 0

    def lidar_debug(self, manifest: str, at: str, output_dir: Optional[str] = None) -> int:
        spec, env = self._load(manifest)
        x = parse_point(at)
        if x.size != 2:
            raise UsageError("lidar-debug works on planar scenes; pass --at x,y")
        if not contains(env, x):
            raise InputError(f"{x.tolist()} is not in the free space")
        controller = spec.controller_config()
        scan = simulate_lidar(env, x, spec.sim.lidar_beams, controller.sensing_radius)
        safety, theta = scan_to_safety_input(scan)
        exact = boundary_query(env, x)
        summary = {
            "format_version": 1,
            "at": x.tolist(),
            "beams": int(scan.angles.size),
            "lidar_distance": safety.distance,
            "theta_min": theta,
            "gradient": None if safety.bearing_gradient is None else safety.bearing_gradient.tolist(),
            "exact_distance": exact.distance,
        }

        directory = self._output_dir(spec, output_dir)
        formats = spec.outputs.formats
        if "csv" in formats:
            export.write_scan_csv(scan, directory / "lidar.csv")
        if "svg" in formats:
            export.plot_lidar_svg(scan, directory / "lidar.svg", theta_min=theta)
        if "json" in formats:
            export.write_json(summary, directory / "lidar.json")
        self._emit(summary)
        return 0

    def validate(self, scene: str, params: Optional[list[str]] = None) -> int:
        ray = self._settings.ray_options()
        if scene.endswith(".json") or Path(scene).is_file():
            env = load_environment(scene, ray=ray)
        else:
            env = build_scene(scene, parse_params(params or []), ray=ray)
        report = validate_scene(env)
        self._emit({"passed": report.passed, "message": report.message, "pair": report.pair})
        if not report.passed:
            raise SceneValidationError(report.message, report)
        return 0
