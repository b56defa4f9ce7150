"""Clipped-surrogate policy optimization with recurrent truncated backprop.

Rollouts come from K in-process environments stepped in lockstep so every
tick is one batched network forward; this keeps the whole pipeline
deterministic for a fixed seed (fixed reduction order, one RNG stream).
Updates slice each worker stream into fixed truncation windows, replay them
forward from the stored cell-state snapshots, and run backprop through time
per minibatch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericalFault, PreconditionError
from ..numcore import Rng
from ..policy import (ACTION_DIM, LOG_STD_MAX, LOG_STD_MIN, PolicyNet,
                      bptt_window, forward_batch, gaussian_log_prob)
from ..simworld import Episode, SimConfig, make_scene
from .gae import compute_gae
from .optim import Adam


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 4
    minibatches: int = 8
    lr: float = 3e-4
    entropy_coef: float = 0.005
    value_coef: float = 0.5
    workers: int = 8
    horizon: int = 256
    truncation: int = 16
    total_steps: int = 400_000
    checkpoint_every: int = 20
    eval_episodes: int = 8

    def __post_init__(self):
        if not (0 < self.clip_eps < 1):
            raise PreconditionError("clip epsilon must be in (0, 1)")
        if self.horizon % self.truncation:
            raise PreconditionError("horizon must be a multiple of the truncation window")


@dataclass
class RolloutBatch:
    obs: np.ndarray        # [K, T, C, H, W]
    actions: np.ndarray    # [K, T, 4]
    log_probs: np.ndarray  # [K, T]
    values: np.ndarray     # [K, T]
    rewards: np.ndarray    # [K, T]
    dones: np.ndarray      # [K, T]
    cell_x: np.ndarray     # [K, T, hidden] state before each step
    cell_c: np.ndarray | None
    bootstrap: np.ndarray  # [K] value of the state after the last step
    dt: float = 0.05
    episode_rewards: list[float] = field(default_factory=list)
    episode_events: list[str] = field(default_factory=list)


def _env_seed(base_seed: int, worker: int, episode: int) -> int:
    return (base_seed + worker * 1_000_003 + episode * 7_919) & 0x7FFFFFFF


class RolloutWorkers:
    """K lockstep environments sharing one policy forward per tick."""

    def __init__(self, k: int, scenario: str, base_seed: int,
                 sim: SimConfig = SimConfig()):
        self.k = k
        self.scenario = scenario
        self.base_seed = base_seed
        self.sim = sim
        self.episode_counts = [0] * k
        self.envs = [Episode(make_scene(_env_seed(base_seed, w, 0), scenario), sim)
                     for w in range(k)]
        self.running_rewards = [0.0] * k
        self._x: np.ndarray | None = None
        self._c: np.ndarray | None = None

    def _reset_env(self, w: int):
        self.episode_counts[w] += 1
        seed = _env_seed(self.base_seed, w, self.episode_counts[w])
        self.envs[w] = Episode(make_scene(seed, self.scenario), self.sim)
        self.running_rewards[w] = 0.0

    def collect(self, net: PolicyNet, horizon: int, rng: Rng
                ) -> tuple[RolloutBatch, Rng]:
        k = self.k
        cfg = net.config
        hidden = cfg.hidden
        lstm = net.cell_kind == "lstm"
        x = np.zeros((k, hidden), dtype=np.float32)
        c = np.zeros((k, hidden), dtype=np.float32) if lstm else None
        if not hasattr(self, "_x"):
            self._x, self._c = x, c
        x, c = self._x, self._c

        obs = np.empty((k, horizon, cfg.obs_channels, cfg.obs_h, cfg.obs_w),
                       dtype=np.float32)
        actions = np.empty((k, horizon, ACTION_DIM), dtype=np.float32)
        log_probs = np.empty((k, horizon))
        values = np.empty((k, horizon))
        rewards = np.zeros((k, horizon))
        dones = np.zeros((k, horizon))
        cell_x = np.empty((k, horizon, hidden), dtype=np.float32)
        cell_c = np.empty((k, horizon, hidden), dtype=np.float32) if lstm else None
        ep_rewards: list[float] = []
        ep_events: list[str] = []

        log_std = net.log_std()
        std = np.exp(log_std)
        for t in range(horizon):
            frame = np.stack([env.frame for env in self.envs])
            obs[:, t] = frame
            cell_x[:, t] = x
            if lstm:
                cell_c[:, t] = c
            cache = forward_batch(net, frame, x, c, self.sim.dt)
            mean = cache["mean"]
            z, rng = rng.normal(k * ACTION_DIM)
            raw = mean + std[None, :] * z.reshape(k, ACTION_DIM)
            act = np.clip(raw, -1.0, 1.0).astype(np.float32)
            log_probs[:, t] = gaussian_log_prob(raw, mean, log_std)
            values[:, t] = cache["value"]
            actions[:, t] = act
            x = cache["z"].astype(np.float32)
            if lstm:
                c = cache["c_new"].astype(np.float32)
            for w, env in enumerate(self.envs):
                _, _, r, done, events = env.step(act[w])
                rewards[w, t] = r
                self.running_rewards[w] += r
                if done:
                    dones[w, t] = 1.0
                    ep_rewards.append(self.running_rewards[w])
                    ep_events.append(events[-1] if events else "")
                    self._reset_env(w)
                    x[w] = 0.0
                    if lstm:
                        c[w] = 0.0

        frame = np.stack([env.frame for env in self.envs])
        cache = forward_batch(net, frame, x, c, self.sim.dt)
        self._x, self._c = x, c
        return RolloutBatch(obs, actions, log_probs, values, rewards, dones,
                            cell_x, cell_c, cache["value"].copy(),
                            ep_rewards, ep_events), rng


def ppo_update(net: PolicyNet, batch: RolloutBatch, config: TrainConfig,
               optimizer: Adam | None = None, rng: Rng | None = None
               ) -> tuple[PolicyNet, dict, Rng]:
    """One PPO update over a rollout batch; returns the updated net and stats."""
    if optimizer is None:
        optimizer = Adam(lr=config.lr)
    if rng is None:
        rng = Rng.from_seed(0)
    net = PolicyNet(net.config, net.conv_specs, dict(net.params))

    k, t_len = batch.rewards.shape
    window = config.truncation
    n_windows = k * (t_len // window)
    lstm = net.cell_kind == "lstm"

    adv = np.empty((k, t_len))
    ret = np.empty((k, t_len))
    for w in range(k):
        vals = np.concatenate([batch.values[w], [batch.bootstrap[w]]])
        adv[w], ret[w] = compute_gae(batch.rewards[w], vals, batch.dones[w],
                                     config.gamma, config.gae_lambda)
    adv_mean, adv_std = adv.mean(), adv.std()
    norm_adv = (adv - adv_mean) / (adv_std + 1e-8)

    def win(arr):
        # [K, T, ...] -> [n_windows, window, ...]
        return arr.reshape(k, t_len // window, window, *arr.shape[2:]) \
                  .reshape(n_windows, window, *arr.shape[2:])

    w_obs = win(batch.obs)
    w_act = win(batch.actions)
    w_logp = win(batch.log_probs)
    w_adv = win(norm_adv)
    w_ret = win(ret)
    w_x0 = batch.cell_x.reshape(k, t_len // window, window, -1)[:, :, 0] \
        .reshape(n_windows, -1)
    w_c0 = None
    if lstm:
        w_c0 = batch.cell_c.reshape(k, t_len // window, window, -1)[:, :, 0] \
            .reshape(n_windows, -1)

    stats = dict(policy_loss=0.0, value_loss=0.0, entropy=0.0,
                 clip_fraction=0.0, approx_kl=0.0,
                 adv_mean=float(adv_mean), adv_std=float(adv_std))
    n_mb = 0
    mb_size = max(1, n_windows // config.minibatches)

    for _ in range(config.epochs):
        order, rng = rng.shuffled_indices(n_windows)
        for start in range(0, n_windows, mb_size):
            sel = order[start:start + mb_size]
            if len(sel) == 0:
                continue
            b = len(sel)
            x = w_x0[sel].copy()
            c = w_c0[sel].copy() if lstm else None
            log_std = net.log_std()
            std = np.exp(log_std)
            caches = []
            means = np.empty((window, b, ACTION_DIM))
            values = np.empty((window, b))
            for step in range(window):
                cache = forward_batch(net, w_obs[sel][:, step], x, c, 0.05)
                caches.append(cache)
                means[step] = cache["mean"]
                values[step] = cache["value"]
                x = cache["z"]
                if lstm:
                    c = cache["c_new"]

            acts = np.transpose(w_act[sel], (1, 0, 2))
            old_logp = w_logp[sel].T
            advs = w_adv[sel].T
            rets = w_ret[sel].T
            n = window * b

            new_logp = gaussian_log_prob(acts, means, log_std)
            ratio = np.exp(new_logp - old_logp)
            clipped = np.clip(ratio, 1 - config.clip_eps, 1 + config.clip_eps)
            surr1 = ratio * advs
            surr2 = clipped * advs
            policy_loss = -np.minimum(surr1, surr2).mean()
            take_unclipped = surr1 <= surr2

            v_err = values - rets
            value_loss = 0.5 * np.mean(v_err ** 2)
            entropy = float(np.sum(log_std) + 0.5 * ACTION_DIM * (1 + np.log(2 * np.pi)))
            loss = policy_loss + config.value_coef * value_loss \
                - config.entropy_coef * entropy
            if not np.isfinite(loss):
                raise NumericalFault("non-finite PPO loss; update aborted")

            # gradients of the scalar loss w.r.t. per-step means and values
            d_logp = np.where(take_unclipped, -advs * ratio / n, 0.0)
            sigma2 = std ** 2
            diff = acts - means
            d_mean = d_logp[..., None] * diff / sigma2
            d_value = config.value_coef * v_err / n

            grads = bptt_window(net, caches, d_mean, d_value)

            # log-std gradient: surrogate term + entropy bonus, through the clamp
            d_ls_policy = (d_logp[..., None] * (diff ** 2 / sigma2 - 1.0)).sum(axis=(0, 1))
            raw_ls = net.params["policy.actor.log_std"]
            clamp_mask = (raw_ls > LOG_STD_MIN) & (raw_ls < LOG_STD_MAX)
            grads["policy.actor.log_std"] = \
                (d_ls_policy - config.entropy_coef) * clamp_mask

            optimizer.step(net.params, grads)

            stats["policy_loss"] += float(policy_loss)
            stats["value_loss"] += float(value_loss)
            stats["entropy"] += entropy
            stats["clip_fraction"] += float(np.mean(np.abs(ratio - 1) > config.clip_eps))
            stats["approx_kl"] += float(np.mean(old_logp - new_logp))
            n_mb += 1

    for key in ("policy_loss", "value_loss", "entropy", "clip_fraction", "approx_kl"):
        stats[key] /= max(n_mb, 1)
    return net, stats, rng
