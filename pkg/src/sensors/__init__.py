from src.sensors.lidar import scan_to_safety_input, simulate_lidar
from src.sensors.stereo import (
    depth_map_to_safety_input,
    disparity_to_depth,
    pixel_to_point,
    simulate_depth_map,
)

__all__ = [
    "simulate_lidar",
    "scan_to_safety_input",
    "disparity_to_depth",
    "pixel_to_point",
    "depth_map_to_safety_input",
    "simulate_depth_map",
]
