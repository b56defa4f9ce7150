"""Deterministic canyon flight environment."""

from .dynamics import AircraftState, SimConfig, dynamics_step, turn_rate
from .env import WAYPOINT_SCENARIOS, Episode, reset
from .raycast import body_to_world, ray_grid_body, raycast
from .scene import (MIN_HALF_WIDTH, OBSTACLE_GAP, SCENARIOS, Obstacle, Scene,
                    make_scene)

__all__ = [
    "AircraftState", "Episode", "MIN_HALF_WIDTH", "OBSTACLE_GAP", "Obstacle",
    "SCENARIOS", "Scene", "SimConfig", "WAYPOINT_SCENARIOS", "body_to_world",
    "dynamics_step", "make_scene", "ray_grid_body", "raycast", "reset",
    "turn_rate",
]
