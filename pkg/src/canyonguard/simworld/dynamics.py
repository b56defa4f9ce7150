"""Rate-command fixed-wing kinematics.

Controls are normalized [-1,1] (roll, pitch, yaw, throttle). Roll and pitch
are rate commands integrated and clamped; heading follows the coordinated-turn
relation psi_dot = (g/v) tan(phi) plus a direct yaw-rate command; speed is a
first-order lag toward trim plus thrust. Position integrates the velocity
vector with explicit Euler at the sim step. No stall, wind, or turbulence.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class SimConfig:
    """All simulator constants in one place."""

    dt: float = 0.05
    max_steps: int = 1200
    omega_roll: float = np.pi / 2     # rad/s at full roll command
    omega_pitch: float = np.pi / 6
    omega_yaw: float = np.pi / 18     # 10 deg/s direct yaw authority
    gravity: float = 9.81
    thrust: float = 5.0               # m/s^2 at full throttle
    drag: float = 0.2                 # 1/s speed lag toward trim
    v_trim: float = 20.0
    v_min: float = 10.0
    v_max: float = 40.0
    roll_limit: float = np.pi / 3
    pitch_limit: float = np.pi / 6
    ray_h: int = 16
    ray_w: int = 32
    az_half: float = np.pi / 3        # +-60 deg azimuth fan
    el_half: float = np.pi / 9        # +-20 deg elevation fan
    clip_range: float = 200.0
    collision_margin: float = 1.0
    waypoint_reward: float = 1.0
    collision_reward: float = -1.0
    survival_reward: float = 0.01
    splat_sigma: float = 1.0
    start_altitude: float = 12.0


@dataclass(frozen=True)
class AircraftState:
    x: float
    y: float
    z: float
    psi: float    # heading, rad
    phi: float    # roll, rad
    theta: float  # pitch, rad
    v: float      # speed, m/s

    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def turn_rate(state: AircraftState, u_yaw: float, cfg: SimConfig) -> float:
    """Heading rate from bank angle plus commanded yaw."""
    return (cfg.gravity / state.v) * np.tan(state.phi) + u_yaw * cfg.omega_yaw


def dynamics_step(state: AircraftState, u: np.ndarray,
                  cfg: SimConfig = SimConfig()) -> AircraftState:
    """Advance the aircraft one step. Controls are clamped to [-1,1]."""
    u = np.clip(np.asarray(u, dtype=np.float64), -1.0, 1.0)
    dt = cfg.dt

    phi = float(np.clip(state.phi + u[0] * cfg.omega_roll * dt,
                        -cfg.roll_limit, cfg.roll_limit))
    theta = float(np.clip(state.theta + u[1] * cfg.omega_pitch * dt,
                          -cfg.pitch_limit, cfg.pitch_limit))
    psi_dot = (cfg.gravity / state.v) * np.tan(phi) + u[2] * cfg.omega_yaw
    psi = float(np.remainder(state.psi + psi_dot * dt + np.pi, 2 * np.pi) - np.pi)
    v_dot = cfg.thrust * u[3] - cfg.drag * (state.v - cfg.v_trim)
    v = float(np.clip(state.v + v_dot * dt, cfg.v_min, cfg.v_max))

    cos_t = np.cos(theta)
    x = state.x + v * cos_t * np.cos(psi) * dt
    y = state.y + v * cos_t * np.sin(psi) * dt
    z = state.z + v * np.sin(theta) * dt
    return AircraftState(float(x), float(y), float(z), psi, phi, theta, v)


def replace_state(state: AircraftState, **kw) -> AircraftState:
    return replace(state, **kw)
