"""Episode driver: rewards, termination, observation sequencing.

Reward scheme per scenario:
  full               waypoint +1, collision -1
  no_obstacles       waypoint +1, collision -1 (scene has no obstacle spheres)
  obstacles_only_reward  collision -1 only; captures deactivate but pay 0
  survival           +0.01 per surviving step, collision -1, captures pay 0

Collisions are clearance <= margin against ground, interpolated walls, or any
obstacle sphere. Leaving the canyon (above the walls or back past the start)
ends the episode like a collision; passing the final vertex ends it cleanly.
"""

from __future__ import annotations

import numpy as np

from ..errors import StateError
from .dynamics import AircraftState, SimConfig, dynamics_step
from .raycast import raycast
from .scene import SCENARIOS, Scene, make_scene

WAYPOINT_SCENARIOS = ("full", "no_obstacles")


class Episode:
    """One mutable episode over an immutable scene."""

    def __init__(self, scene: Scene, cfg: SimConfig = SimConfig()):
        self.scene = scene
        self.cfg = cfg
        self.t = 0.0
        self.steps = 0
        self.done = False
        self.active = np.ones(len(scene.waypoints), dtype=bool)
        start_dir = scene.seg_dirs[0]
        pos = scene.centerline[0] + start_dir * 10.0
        self.state = AircraftState(
            x=float(pos[0]), y=float(pos[1]), z=cfg.start_altitude,
            psi=float(np.arctan2(start_dir[1], start_dir[0])),
            phi=0.0, theta=0.0, v=cfg.v_trim)
        self.frame = self.observe()
        self.total_reward = 0.0

    def observe(self) -> np.ndarray:
        return raycast(self.state, self.scene, self.t, self.active, self.cfg)

    def waypoint_pixel(self) -> tuple[int, int] | None:
        """Grid position of the brightest splat, or None when the channel is dark."""
        ch = self.frame[1]
        peak = ch.max()
        if peak <= 0:
            return None
        r, c = np.unravel_index(int(np.argmax(ch)), ch.shape)
        return int(r), int(c)

    def _collision_event(self, state: AircraftState) -> str | None:
        cfg, scene = self.cfg, self.scene
        if state.z <= cfg.collision_margin:
            return "collision:ground"
        station, lateral, seg, frac = scene.station_frame(state.x, state.y)
        width = scene.width_at(seg, frac)
        height = scene.height_at(seg, frac)
        if state.z <= height and width - abs(lateral) <= cfg.collision_margin:
            return "collision:wall"
        if state.z > height or abs(lateral) > width:
            return "out_of_bounds"
        if station <= 0.5 and np.cos(state.psi - np.arctan2(
                scene.seg_dirs[0][1], scene.seg_dirs[0][0])) < 0:
            return "out_of_bounds"
        if scene.obstacles:
            centers = scene.obstacle_centers(self.t)
            dists = np.linalg.norm(centers - state.position(), axis=1)
            if np.any(dists <= scene.obstacle_radii() + cfg.collision_margin):
                return "collision:obstacle"
        return None

    def step(self, u: np.ndarray) -> tuple[AircraftState, np.ndarray, float, bool, list[str]]:
        if self.done:
            raise StateError("episode already finished")
        cfg, scene = self.cfg, self.scene
        self.t += cfg.dt
        self.steps += 1
        self.state = dynamics_step(self.state, u, cfg)

        reward = 0.0
        events: list[str] = []
        pays_waypoints = scene.scenario in WAYPOINT_SCENARIOS
        dists = np.linalg.norm(scene.waypoints - self.state.position(), axis=1)
        hits = np.where(self.active & (dists <= scene.waypoint_radius))[0]
        for i in hits:
            self.active[i] = False
            events.append(f"waypoint:{i}")
            if pays_waypoints:
                reward += cfg.waypoint_reward

        crash = self._collision_event(self.state)
        if crash is not None:
            events.append(crash)
            reward += cfg.collision_reward
            self.done = True
        else:
            if scene.scenario == "survival":
                reward += cfg.survival_reward
            station, _, _, _ = scene.station_frame(self.state.x, self.state.y)
            if station >= scene.total_length - 1.0:
                events.append("course_end")
                self.done = True
            elif self.steps >= cfg.max_steps:
                events.append("step_cap")
                self.done = True

        self.frame = self.observe()
        self.total_reward += reward
        return self.state, self.frame, reward, self.done, events


def reset(seed: int, scenario: str, cfg: SimConfig = SimConfig()) -> Episode:
    """Build the scene for (seed, scenario) and start an episode."""
    if scenario not in SCENARIOS:
        raise StateError(f"unknown scenario {scenario!r}")
    return Episode(make_scene(seed, scenario), cfg)
