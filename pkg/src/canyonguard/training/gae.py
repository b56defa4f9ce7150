"""Generalized advantage estimation."""

from __future__ import annotations

import numpy as np

from ..errors import PreconditionError


def compute_gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Advantages and returns for one time-ordered stream.

    values must carry one bootstrap entry beyond rewards; dones mask cuts
    the recursion at episode boundaries.

        delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t
        A_t     = delta_t + gamma * lam * (1 - done_t) * A_{t+1}
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    n = len(rewards)
    if len(values) != n + 1:
        raise PreconditionError(
            f"need {n + 1} values (bootstrap appended) for {n} rewards, got {len(values)}")
    if len(dones) != n:
        raise PreconditionError("rewards and dones must have equal length")
    adv = np.zeros(n)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * live - values[t]
        acc = delta + gamma * lam * live * acc
        adv[t] = acc
    return adv, adv + values[:-1]
