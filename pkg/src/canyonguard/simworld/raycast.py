"""Body-fixed raycast rendering of the canyon.

Channel 0: inverse depth 1 - d/clip to the nearest wall triangle, ground
plane, or obstacle sphere per ray (0 when nothing lies within the clip range,
1 at contact). Channel 1: Gaussian splats of the active waypoints projected
through the same azimuth/elevation grid, max-normalized per frame. Rows run
top (+elevation) to bottom, columns left (+azimuth, toward +y body) to right.
"""

from __future__ import annotations

import numpy as np

from .dynamics import AircraftState, SimConfig
from .scene import Scene

_GRID_CACHE: dict[tuple, np.ndarray] = {}


def ray_grid_body(cfg: SimConfig) -> np.ndarray:
    """Unit ray directions in body frame, [H*W, 3], row-major over the image."""
    key = (cfg.ray_h, cfg.ray_w, cfg.az_half, cfg.el_half)
    if key not in _GRID_CACHE:
        az = np.linspace(cfg.az_half, -cfg.az_half, cfg.ray_w)  # left to right
        el = np.linspace(cfg.el_half, -cfg.el_half, cfg.ray_h)  # top to bottom
        elg, azg = np.meshgrid(el, az, indexing="ij")
        dirs = np.stack([
            np.cos(elg) * np.cos(azg),
            np.cos(elg) * np.sin(azg),
            np.sin(elg),
        ], axis=-1).reshape(-1, 3)
        _GRID_CACHE[key] = dirs
    return _GRID_CACHE[key]


def body_to_world(state: AircraftState) -> np.ndarray:
    """Rotation matrix mapping body directions to world (x fwd, y left, z up)."""
    cps, sps = np.cos(state.psi), np.sin(state.psi)
    cth, sth = np.cos(state.theta), np.sin(state.theta)
    cph, sph = np.cos(state.phi), np.sin(state.phi)
    rz = np.array([[cps, -sps, 0], [sps, cps, 0], [0, 0, 1]])
    ry = np.array([[cth, 0, sth], [0, 1, 0], [-sth, 0, cth]])  # Ry(-theta)
    rx = np.array([[1, 0, 0], [0, cph, -sph], [0, sph, cph]])
    return rz @ ry @ rx


def _ray_triangles(origin: np.ndarray, dirs: np.ndarray, v0: np.ndarray,
                   n: np.ndarray, v0n: np.ndarray, a1: np.ndarray,
                   a2: np.ndarray) -> np.ndarray:
    """Nearest positive hit distance per ray against a triangle soup (inf if none).

    Plane hit via t = (v0.n - o.n) / (d.n), then barycentric containment using
    the precomputed dual basis (p - v0 = u e1 + v e2 with u = (p - v0).a1).
    """
    if len(v0) == 0:
        return np.full(len(dirs), np.inf)
    den = dirs @ n.T                                       # [R,T]
    safe = np.where(np.abs(den) < 1e-12, 1.0, den)
    t = (v0n - origin @ n.T)[None, :] / safe
    rel0 = origin[None, :] - v0                            # [T,3]
    u = np.einsum("tk,tk->t", rel0, a1)[None, :] + t * (dirs @ a1.T)
    v = np.einsum("tk,tk->t", rel0, a2)[None, :] + t * (dirs @ a2.T)
    ok = (np.abs(den) >= 1e-12) & (u >= -1e-12) & (v >= -1e-12) \
        & (u + v <= 1 + 1e-12) & (t > 1e-9)
    return np.where(ok, t, np.inf).min(axis=1)


def _ray_ground(origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    dz = dirs[:, 2]
    t = np.where(dz < -1e-12, -origin[2] / np.where(dz < -1e-12, dz, 1.0), np.inf)
    return np.where(t > 0, t, np.inf)


def _ray_spheres(origin: np.ndarray, dirs: np.ndarray, centers: np.ndarray,
                 radii: np.ndarray) -> np.ndarray:
    """Nearest positive sphere-hit distance per ray (inf if none)."""
    if len(centers) == 0:
        return np.full(len(dirs), np.inf)
    oc = origin[None, :] - centers                            # [S,3]
    b = np.einsum("rk,sk->rs", dirs, oc)                      # [R,S]
    c = np.einsum("sk,sk->s", oc, oc)[None, :] - radii[None, :] ** 2
    disc = b * b - c
    hit = disc >= 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t0 = -b - sq
    t1 = -b + sq
    t = np.where(t0 > 1e-9, t0, np.where(t1 > 1e-9, t1, np.inf))
    return np.where(hit, t, np.inf).min(axis=1)


def raycast(state: AircraftState, scene: Scene, t_now: float = 0.0,
            active: np.ndarray | None = None,
            cfg: SimConfig = SimConfig()) -> np.ndarray:
    """Render one [2, H, W] float32 observation frame."""
    dirs_body = ray_grid_body(cfg)
    rot = body_to_world(state)
    dirs = dirs_body @ rot.T
    origin = state.position()

    # cull geometry beyond the clip range: only nearby triangles can register
    if len(scene.wall_tris):
        d2 = ((scene.tri_centers - origin[:2]) ** 2).sum(axis=1)
        keep = d2 <= (cfg.clip_range + scene.tri_radius) ** 2
        d_wall = _ray_triangles(origin, dirs, scene.tri_v0[keep],
                                scene.tri_n[keep], scene.tri_v0n[keep],
                                scene.tri_a1[keep], scene.tri_a2[keep])
    else:
        d_wall = np.full(len(dirs), np.inf)
    centers = scene.obstacle_centers(t_now)
    radii = scene.obstacle_radii()
    if len(centers):
        near = np.linalg.norm(centers - origin, axis=1) <= cfg.clip_range + radii
        centers, radii = centers[near], radii[near]

    d_ground = _ray_ground(origin, dirs)
    d_obs = _ray_spheres(origin, dirs, centers, radii)
    d = np.minimum(np.minimum(d_wall, d_ground), d_obs)
    depth = np.where(d <= cfg.clip_range, 1.0 - d / cfg.clip_range, 0.0)
    depth = depth.reshape(cfg.ray_h, cfg.ray_w)

    splat = np.zeros((cfg.ray_h, cfg.ray_w))
    if active is None:
        active = np.ones(len(scene.waypoints), dtype=bool)
    rows = np.arange(cfg.ray_h)[:, None]
    cols = np.arange(cfg.ray_w)[None, :]
    for wp, alive in zip(scene.waypoints, active):
        if not alive:
            continue
        rel = rot.T @ (wp - origin)
        dist = float(np.linalg.norm(rel))
        if dist < 1e-9 or dist > cfg.clip_range:
            continue
        az = np.arctan2(rel[1], rel[0])
        el = np.arctan2(rel[2], np.hypot(rel[0], rel[1]))
        if abs(az) > cfg.az_half or abs(el) > cfg.el_half:
            continue
        col = (cfg.az_half - az) / (2 * cfg.az_half) * (cfg.ray_w - 1)
        row = (cfg.el_half - el) / (2 * cfg.el_half) * (cfg.ray_h - 1)
        weight = 1.0 - dist / cfg.clip_range
        splat += weight * np.exp(-((rows - row) ** 2 + (cols - col) ** 2)
                                 / (2 * cfg.splat_sigma ** 2))
    peak = splat.max()
    if peak > 0:
        splat = splat / peak

    return np.stack([depth, splat]).astype(np.float32)
