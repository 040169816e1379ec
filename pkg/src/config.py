import os
from dataclasses import dataclass
from dotenv import load_dotenv

from src.models import RayOptions

load_dotenv()


@dataclass
class Settings:
    log_level: str
    output_dir: str
    batch_workers: int
    ray_step: float
    ray_tolerance: float
    sweep_beams: int
    sweep_range: float
    lidar_beams: int

    @classmethod
    def from_env(cls) -> "Settings":
        return cls(
            log_level=os.getenv("LOG_LEVEL", "INFO").upper(),
            output_dir=os.getenv("OUTPUT_DIR", "out"),
            batch_workers=max(1, int(os.getenv("BATCH_WORKERS", "4"))),
            ray_step=float(os.getenv("RAY_STEP", "1e-2")),
            ray_tolerance=float(os.getenv("RAY_TOLERANCE", "1e-9")),
            sweep_beams=int(os.getenv("SWEEP_BEAMS", "720")),
            sweep_range=float(os.getenv("SWEEP_RANGE", "10.0")),
            lidar_beams=int(os.getenv("LIDAR_BEAMS", "360")),
        )

    def ray_options(self) -> RayOptions:
        return RayOptions(
            step=self.ray_step,
            tolerance=self.ray_tolerance,
            sweep_beams=self.sweep_beams,
            sweep_range=self.sweep_range,
        )
