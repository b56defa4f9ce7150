"""Procedural canyon scenes: centerline, walls, waypoints, moving obstacles.

A scene is a piecewise-linear canyon centerline with per-vertex half-width and
wall height. Walls are extruded to triangles (two per side per segment) with
mitered joints so the raycaster sees a watertight corridor. Obstacle spheres
oscillate sinusoidally along a lateral axis; the generator always leaves a
6 m free gap beside every obstacle over its whole swing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from ..numcore import Rng

SCENARIOS = ("full", "no_obstacles", "obstacles_only_reward", "survival")

MIN_HALF_WIDTH = 8.0
OBSTACLE_GAP = 6.0


@dataclass(frozen=True)
class Obstacle:
    base: np.ndarray        # [3]
    radius: float
    axis: np.ndarray        # [3] unit lateral direction of oscillation
    amplitude: float
    omega: float            # rad/s
    phase: float

    def center_at(self, t: float) -> np.ndarray:
        return self.base + self.axis * (self.amplitude * np.sin(self.omega * t + self.phase))

    def velocity_at(self, t: float) -> np.ndarray:
        return self.axis * (self.amplitude * self.omega * np.cos(self.omega * t + self.phase))


@dataclass(frozen=True)
class Scene:
    seed: int
    scenario: str
    centerline: np.ndarray      # [V, 2]
    half_widths: np.ndarray     # [V]
    wall_heights: np.ndarray    # [V]
    waypoints: np.ndarray       # [N, 3]
    waypoint_radius: float
    obstacles: tuple[Obstacle, ...]
    # derived geometry
    stations: np.ndarray = field(repr=False, default=None)       # [V]
    seg_dirs: np.ndarray = field(repr=False, default=None)       # [V-1, 2] unit
    seg_lens: np.ndarray = field(repr=False, default=None)       # [V-1]
    normals: np.ndarray = field(repr=False, default=None)        # [V, 2] mitered left normals
    wall_tris: np.ndarray = field(repr=False, default=None)      # [T, 3, 3]
    tri_centers: np.ndarray = field(repr=False, default=None)    # [T, 2] xy centroids
    tri_radius: float = field(repr=False, default=0.0)           # max centroid->vertex reach
    # intersection precomputation: plane normal, v0.n, and the dual basis of
    # (e1, e2) for barycentric coordinates
    tri_v0: np.ndarray = field(repr=False, default=None)         # [T, 3]
    tri_n: np.ndarray = field(repr=False, default=None)          # [T, 3]
    tri_v0n: np.ndarray = field(repr=False, default=None)        # [T] v0 . n
    tri_a1: np.ndarray = field(repr=False, default=None)         # [T, 3]
    tri_a2: np.ndarray = field(repr=False, default=None)         # [T, 3]
    # obstacle motion as arrays for vectorized evaluation
    obs_base: np.ndarray = field(repr=False, default=None)       # [M, 3]
    obs_axis: np.ndarray = field(repr=False, default=None)       # [M, 3]
    obs_amp: np.ndarray = field(repr=False, default=None)        # [M]
    obs_omega: np.ndarray = field(repr=False, default=None)      # [M]
    obs_phase: np.ndarray = field(repr=False, default=None)      # [M]
    obs_radius: np.ndarray = field(repr=False, default=None)     # [M]

    @property
    def total_length(self) -> float:
        return float(self.stations[-1])

    def obstacle_centers(self, t: float) -> np.ndarray:
        if not self.obstacles:
            return np.zeros((0, 3))
        swing = self.obs_amp * np.sin(self.obs_omega * t + self.obs_phase)
        return self.obs_base + self.obs_axis * swing[:, None]

    def obstacle_radii(self) -> np.ndarray:
        if not self.obstacles:
            return np.zeros(0)
        return self.obs_radius

    def station_frame(self, x: float, y: float) -> tuple[float, float, int, float]:
        """Project a ground-plane point onto the centerline.

        Returns (station, signed lateral offset [left positive], segment, frac).
        """
        p = np.array([x, y])
        rel = p - self.centerline[:-1]
        t = np.einsum("ij,ij->i", rel, self.seg_dirs) / self.seg_lens
        t = np.clip(t, 0.0, 1.0)
        closest = self.centerline[:-1] + self.seg_dirs * (t * self.seg_lens)[:, None]
        d2 = np.sum((p - closest) ** 2, axis=1)
        i = int(np.argmin(d2))
        dx, dy = p - closest[i]
        lateral = self.seg_dirs[i, 0] * dy - self.seg_dirs[i, 1] * dx
        return float(self.stations[i] + t[i] * self.seg_lens[i]), float(lateral), i, float(t[i])

    def width_at(self, seg: int, frac: float) -> float:
        return float((1 - frac) * self.half_widths[seg] + frac * self.half_widths[seg + 1])

    def height_at(self, seg: int, frac: float) -> float:
        return float((1 - frac) * self.wall_heights[seg] + frac * self.wall_heights[seg + 1])

    def wall_clearance(self, x: float, y: float) -> float:
        """Lateral distance to the nearer wall (negative once inside a wall)."""
        _, lateral, seg, frac = self.station_frame(x, y)
        return self.width_at(seg, frac) - abs(lateral)


def _build_geometry(centerline, half_widths, wall_heights):
    diffs = np.diff(centerline, axis=0)
    seg_lens = np.linalg.norm(diffs, axis=1)
    if np.any(seg_lens <= 0):
        raise ConfigurationError("degenerate centerline segment")
    seg_dirs = diffs / seg_lens[:, None]
    stations = np.concatenate([[0.0], np.cumsum(seg_lens)])
    # left normal of each segment, mitered at interior vertices
    seg_norms = np.stack([-seg_dirs[:, 1], seg_dirs[:, 0]], axis=1)
    v_norms = np.empty((len(centerline), 2))
    v_norms[0] = seg_norms[0]
    v_norms[-1] = seg_norms[-1]
    for i in range(1, len(centerline) - 1):
        avg = seg_norms[i - 1] + seg_norms[i]
        n = np.linalg.norm(avg)
        v_norms[i] = avg / n if n > 1e-9 else seg_norms[i]

    left = centerline + v_norms * half_widths[:, None]
    right = centerline - v_norms * half_widths[:, None]
    tris = []
    for i in range(len(centerline) - 1):
        for edge in (left, right):
            a0 = np.array([edge[i, 0], edge[i, 1], 0.0])
            a1 = np.array([edge[i + 1, 0], edge[i + 1, 1], 0.0])
            b0 = np.array([edge[i, 0], edge[i, 1], wall_heights[i]])
            b1 = np.array([edge[i + 1, 0], edge[i + 1, 1], wall_heights[i + 1]])
            tris.append([a0, a1, b1])
            tris.append([a0, b1, b0])
    tris = np.array(tris)
    centers = tris[:, :, :2].mean(axis=1)
    reach = float(np.sqrt(((tris[:, :, :2] - centers[:, None, :]) ** 2)
                          .sum(axis=2).max()) + 1e-6) if len(tris) else 0.0
    return stations, seg_dirs, seg_lens, v_norms, tris, centers, reach


def triangle_precompute(tris: np.ndarray):
    """Plane normals and barycentric dual basis for fast batched intersection."""
    if len(tris) == 0:
        z = np.zeros((0, 3))
        return z, np.zeros(0), z, z
    v0 = tris[:, 0]
    e1 = tris[:, 1] - v0
    e2 = tris[:, 2] - v0
    n = np.cross(e1, e2)
    a1 = np.cross(e2, n)
    a1 = a1 / np.einsum("ij,ij->i", e1, a1)[:, None]
    a2 = np.cross(n, e1)
    a2 = a2 / np.einsum("ij,ij->i", e2, a2)[:, None]
    return n, np.einsum("ij,ij->i", v0, n), a1, a2


def scene_with_geometry(**kw) -> Scene:
    """Fill the derived intersection/obstacle arrays and build the Scene."""
    tris = kw["wall_tris"]
    n, v0n, a1, a2 = triangle_precompute(tris)
    obstacles = kw.get("obstacles", ())
    if obstacles:
        kw.update(
            obs_base=np.stack([o.base for o in obstacles]),
            obs_axis=np.stack([o.axis for o in obstacles]),
            obs_amp=np.array([o.amplitude for o in obstacles]),
            obs_omega=np.array([o.omega for o in obstacles]),
            obs_phase=np.array([o.phase for o in obstacles]),
            obs_radius=np.array([o.radius for o in obstacles]),
        )
    return Scene(tri_v0=tris[:, 0] if len(tris) else np.zeros((0, 3)),
                 tri_n=n, tri_v0n=v0n, tri_a1=a1, tri_a2=a2, **kw)


def make_scene(seed: int, scenario: str,
               n_segments: int = 10) -> Scene:
    """Generate a deterministic scene for (seed, scenario)."""
    if scenario not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario {scenario!r}")
    rng = Rng.from_seed(seed).fork(0xC0FFEE)

    heading = 0.0
    pts = [np.zeros(2)]
    half_widths = []
    heights = []
    u, rng = rng.uniform(3 * n_segments + 3)
    idx = 0
    half_widths.append(10.0 + 12.0 * u[idx]); idx += 1
    heights.append(28.0 + 8.0 * u[idx]); idx += 1
    for i in range(n_segments):
        length = 70.0 + 40.0 * u[idx]; idx += 1
        if i > 0:
            turn, rng = rng.uniform()
            heading += np.deg2rad((turn - 0.5) * 2 * 22.0)
        pts.append(pts[-1] + length * np.array([np.cos(heading), np.sin(heading)]))
        half_widths.append(10.0 + 12.0 * u[idx]); idx += 1
        heights.append(28.0 + 8.0 * u[idx]); idx += 1

    centerline = np.stack(pts)
    half_widths = np.array(half_widths)
    heights = np.array(heights)
    stations, seg_dirs, seg_lens, v_norms, tris, tri_centers, tri_radius = \
        _build_geometry(centerline, half_widths, heights)

    # lateral placement uses the segment-perpendicular so station_frame
    # measures the same offsets back
    seg_norms = np.stack([-seg_dirs[:, 1], seg_dirs[:, 0]], axis=1)

    # one waypoint per segment, near the centerline in the back half
    waypoints = []
    for i in range(n_segments):
        fu, rng = rng.uniform(3)
        frac = 0.55 + 0.3 * fu[0]
        w = (1 - frac) * half_widths[i] + frac * half_widths[i + 1]
        lat = (fu[1] - 0.5) * 2 * min(5.0, w - 6.0)
        pos2 = centerline[i] + seg_dirs[i] * frac * seg_lens[i] + seg_norms[i] * lat
        z = 9.0 + 7.0 * fu[2]
        waypoints.append([pos2[0], pos2[1], z])
    waypoints = np.array(waypoints)

    obstacles: list[Obstacle] = []
    if scenario != "no_obstacles":
        for i in range(1, n_segments):
            ou, rng = rng.uniform(8)
            frac = 0.15 + 0.3 * ou[0]
            radius = 1.5 + 1.0 * ou[1]
            w = (1 - frac) * half_widths[i] + frac * half_widths[i + 1]
            amp = 1.5 + 2.5 * ou[2]
            amp = min(amp, (2 * w - OBSTACLE_GAP - 1.0) / 2 - radius - 0.1)
            amp = max(amp, 0.5)
            lo = -w + 1.0 + amp + radius
            hi = w - OBSTACLE_GAP - amp - radius
            if hi <= lo:
                continue
            base_lat = lo + (hi - lo) * ou[3]
            if ou[4] < 0.5:
                base_lat = -base_lat  # mirror: free gap on the left instead
            pos2 = centerline[i] + seg_dirs[i] * frac * seg_lens[i] + seg_norms[i] * base_lat
            z = 9.0 + 7.0 * ou[5]
            axis = np.array([seg_norms[i][0], seg_norms[i][1], 0.0])
            obstacles.append(Obstacle(
                base=np.array([pos2[0], pos2[1], z]),
                radius=float(radius),
                axis=axis,
                amplitude=float(amp),
                omega=float(0.3 + 0.7 * ou[6]),
                phase=float(2 * np.pi * ou[7]),
            ))

    return scene_with_geometry(
        seed=seed, scenario=scenario,
        centerline=centerline, half_widths=half_widths, wall_heights=heights,
        waypoints=waypoints, waypoint_radius=3.0,
        obstacles=tuple(obstacles),
        stations=stations, seg_dirs=seg_dirs, seg_lens=seg_lens,
        normals=v_norms, wall_tris=tris, tri_centers=tri_centers,
        tri_radius=tri_radius,
    )
