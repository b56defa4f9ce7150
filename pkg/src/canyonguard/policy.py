"""Perception-to-action stack for guardian and pilot agents.

Pipeline: conv stack -> flatten -> dense trunk -> recurrent cell (continuous
gated cell or LSTM) -> actor head (4 tanh-squashed action means + one global
log-std vector) and critic head (scalar value). Forward passes can retain a
trace holding the post-activation conv maps (consumed by the saliency module)
and the intermediate values needed for backprop through time.

All parameters live in one flat name->float32-array dict so checkpointing,
gradient accumulation, and the optimizer can treat the network uniformly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, StateError
from .numcore import (LayerSpec, Rng, conv2d_backward_batch, conv2d_forward_batch)
from .recurrent import (CfcParams, CfcState, LstmParams, LstmState,
                        cfc_backward_batch, cfc_init, cfc_step_batch,
                        lstm_backward_batch, lstm_init, lstm_step_batch)

ACTION_DIM = 4  # roll, pitch, yaw, throttle
LOG_STD_MIN, LOG_STD_MAX = -5.0, 1.0
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class PolicyConfig:
    obs_channels: int = 2
    obs_h: int = 16
    obs_w: int = 32
    conv_channels: tuple[int, ...] = (8, 16)
    kernel: int = 3
    stride: int = 2
    padding: int = 1
    trunk_width: int = 32
    cell: str = "cfc"       # cfc | lstm
    hidden: int = 16
    backbone_widths: tuple[int, ...] = (32,)
    init_log_std: float = -0.5

    def to_json(self) -> str:
        d = self.__dict__.copy()
        d["conv_channels"] = list(self.conv_channels)
        d["backbone_widths"] = list(self.backbone_widths)
        return json.dumps(d, sort_keys=True)

    @staticmethod
    def from_json(s: str) -> "PolicyConfig":
        d = json.loads(s)
        d["conv_channels"] = tuple(d["conv_channels"])
        d["backbone_widths"] = tuple(d["backbone_widths"])
        return PolicyConfig(**d)


@dataclass(frozen=True)
class PolicyNet:
    config: PolicyConfig
    conv_specs: tuple[LayerSpec, ...]   # conv2d interleaved with relu specs
    params: dict[str, np.ndarray] = field(repr=False)

    @property
    def cell_kind(self) -> str:
        return self.config.cell

    def cell_params(self):
        cfg = self.config
        if cfg.cell == "cfc":
            return CfcParams(cfg.hidden, cfg.trunk_width, cfg.backbone_widths, self.params)
        return LstmParams(cfg.hidden, cfg.trunk_width, self.params)

    def initial_state(self):
        if self.config.cell == "cfc":
            return CfcState.zeros(self.config.hidden)
        return LstmState.zeros(self.config.hidden)

    def log_std(self) -> np.ndarray:
        return np.clip(self.params["policy.actor.log_std"], LOG_STD_MIN, LOG_STD_MAX)

    def copy(self) -> "PolicyNet":
        return PolicyNet(self.config, self.conv_specs,
                         {k: v.copy() for k, v in self.params.items()})


@dataclass(frozen=True)
class ForwardTrace:
    """Intermediate values from one forward pass.

    conv_activations are the post-activation maps, one per conv layer in
    network order; cache carries everything backprop needs.
    """

    conv_activations: list[np.ndarray]
    features: np.ndarray
    state_before: object
    state_after: object
    action_mean: np.ndarray
    value: float
    obs: np.ndarray = field(repr=False, default=None)
    cache: dict = field(repr=False, default=None)


def _conv_stack_specs(cfg: PolicyConfig) -> tuple[LayerSpec, ...]:
    specs = []
    in_ch = cfg.obs_channels
    for out_ch in cfg.conv_channels:
        specs.append(LayerSpec.conv2d(in_ch, out_ch, cfg.kernel, cfg.stride, cfg.padding))
        specs.append(LayerSpec.act("relu"))
        in_ch = out_ch
    return tuple(specs)


def _flat_dim(cfg: PolicyConfig) -> int:
    h, w = cfg.obs_h, cfg.obs_w
    ch = cfg.obs_channels
    for spec in _conv_stack_specs(cfg):
        if spec.kind == "conv2d":
            h, w = spec.conv_output_hw(h, w)
            ch = spec.out_channels
    return ch * h * w


def policy_init(rng: Rng, config: PolicyConfig | None = None) -> tuple[PolicyNet, Rng]:
    cfg = config or PolicyConfig()
    params: dict[str, np.ndarray] = {}

    def dense_init(rng, out_dim, in_dim):
        scale = np.sqrt(2.0 / (in_dim + out_dim))
        vals, rng = rng.normal(out_dim * in_dim)
        return (vals.reshape(out_dim, in_dim) * scale).astype(np.float32), rng

    conv_idx = 0
    for spec in _conv_stack_specs(cfg):
        if spec.kind != "conv2d":
            continue
        fan_in = spec.in_channels * spec.kernel_size ** 2
        fan_out = spec.out_channels * spec.kernel_size ** 2
        scale = np.sqrt(2.0 / (fan_in + fan_out))
        vals, rng = rng.normal(spec.out_channels * spec.in_channels * spec.kernel_size ** 2)
        params[f"policy.conv{conv_idx}.w"] = (vals.reshape(
            spec.out_channels, spec.in_channels, spec.kernel_size, spec.kernel_size) * scale
        ).astype(np.float32)
        params[f"policy.conv{conv_idx}.b"] = np.zeros(spec.out_channels, dtype=np.float32)
        conv_idx += 1

    w, rng = dense_init(rng, cfg.trunk_width, _flat_dim(cfg))
    params["policy.trunk.w"] = w
    params["policy.trunk.b"] = np.zeros(cfg.trunk_width, dtype=np.float32)

    if cfg.cell == "cfc":
        cell, rng = cfc_init(rng, cfg.hidden, cfg.trunk_width, cfg.backbone_widths)
        params.update(cell.params)
    elif cfg.cell == "lstm":
        cell, rng = lstm_init(rng, cfg.hidden, cfg.trunk_width)
        params.update(cell.params)
    else:
        raise ConfigurationError(f"unknown cell kind {cfg.cell!r}")

    w, rng = dense_init(rng, ACTION_DIM, cfg.hidden)
    params["policy.actor.w"] = w * 0.1  # small initial action means
    params["policy.actor.b"] = np.zeros(ACTION_DIM, dtype=np.float32)
    params["policy.actor.log_std"] = np.full(ACTION_DIM, cfg.init_log_std, dtype=np.float32)
    w, rng = dense_init(rng, 1, cfg.hidden)
    params["policy.critic.w"] = w
    params["policy.critic.b"] = np.zeros(1, dtype=np.float32)

    return PolicyNet(cfg, _conv_stack_specs(cfg), params), rng


# ---------------------------------------------------------------------------
# forward

def _cell_arrays(state) -> tuple[np.ndarray, np.ndarray | None]:
    if isinstance(state, LstmState):
        return state.h, state.c
    return state.x, None


def forward_batch(net: PolicyNet, obs: np.ndarray, x: np.ndarray,
                  c: np.ndarray | None, dt: float) -> dict:
    """Batched forward over [B,C,H,W] observations; returns the full cache."""
    p = net.params
    cur = obs
    conv_pre, conv_post, conv_in = [], [], []
    conv_idx = 0
    for spec in net.conv_specs:
        if spec.kind == "conv2d":
            conv_in.append(cur)
            cur = conv2d_forward_batch(cur, spec,
                                       p[f"policy.conv{conv_idx}.w"],
                                       p[f"policy.conv{conv_idx}.b"])
            conv_pre.append(cur)
            conv_idx += 1
        else:
            cur = np.maximum(cur, 0)
            conv_post.append(cur)
    flat = cur.reshape(cur.shape[0], -1)
    trunk_pre = flat @ p["policy.trunk.w"].T + p["policy.trunk.b"]
    feats = np.tanh(trunk_pre)

    if net.cell_kind == "cfc":
        z, cell_cache = cfc_step_batch(x, feats, dt, net.cell_params())
        c_new = None
    else:
        z, c_new, cell_cache = lstm_step_batch(x, c, feats, net.cell_params())

    actor_pre = z @ p["policy.actor.w"].T + p["policy.actor.b"]
    mean = np.tanh(actor_pre)
    value = (z @ p["policy.critic.w"].T + p["policy.critic.b"])[:, 0]
    return dict(obs=obs, conv_in=conv_in, conv_pre=conv_pre, conv_post=conv_post,
                flat=flat, trunk_pre=trunk_pre, feats=feats, x_in=x, c_in=c,
                cell_cache=cell_cache, z=z, c_new=c_new,
                actor_pre=actor_pre, mean=mean, value=value)


def forward(net: PolicyNet, obs: np.ndarray, state, dt: float
            ) -> tuple[np.ndarray, float, object, ForwardTrace]:
    """Single-observation forward pass with trace."""
    cfg = net.config
    expect = (cfg.obs_channels, cfg.obs_h, cfg.obs_w)
    if obs.shape != expect:
        raise ConfigurationError(f"observation shape {obs.shape} != {expect}")
    x, c = _cell_arrays(state)
    cache = forward_batch(net, np.asarray(obs)[None],
                          x[None], None if c is None else c[None], dt)
    if net.cell_kind == "cfc":
        new_state = CfcState(cache["z"][0], state.last_time + dt)
    else:
        new_state = LstmState(cache["z"][0], cache["c_new"][0], state.last_time + dt)
    trace = ForwardTrace(
        conv_activations=[a[0] for a in cache["conv_post"]],
        features=cache["feats"][0],
        state_before=state,
        state_after=new_state,
        action_mean=cache["mean"][0],
        value=float(cache["value"][0]),
        obs=np.asarray(obs),
        cache=cache,
    )
    return cache["mean"][0], float(cache["value"][0]), new_state, trace


# ---------------------------------------------------------------------------
# sampling

def sample_action(mean: np.ndarray, log_std: np.ndarray, rng: Rng
                  ) -> tuple[np.ndarray, float, Rng]:
    """Diagonal-Gaussian sample clamped to [-1,1]; log-prob is pre-clamp."""
    z, rng = rng.normal(mean.shape[0])
    std = np.exp(log_std)
    raw = mean + std * z
    log_prob = float(np.sum(-0.5 * ((raw - mean) / std) ** 2 - log_std - 0.5 * LOG_2PI))
    return np.clip(raw, -1.0, 1.0), log_prob, rng


def gaussian_log_prob(action: np.ndarray, mean: np.ndarray, log_std: np.ndarray):
    """Elementwise-summed diagonal Gaussian log density (batched on leading axes)."""
    std = np.exp(log_std)
    q = ((action - mean) / std) ** 2
    return np.sum(-0.5 * q - log_std - 0.5 * LOG_2PI, axis=-1)


# ---------------------------------------------------------------------------
# backward through time

def backward_batch(net: PolicyNet, cache: dict, d_mean: np.ndarray,
                   d_value: np.ndarray, d_x_next: np.ndarray,
                   d_c_next: np.ndarray | None
                   ) -> tuple[dict, np.ndarray, np.ndarray | None]:
    """One-step reverse pass; d_x_next/d_c_next flow in from the next step."""
    p = net.params
    grads: dict[str, np.ndarray] = {}

    mean = cache["mean"]
    d_actor_pre = d_mean * (1.0 - mean * mean)
    z = cache["z"]
    grads["policy.actor.w"] = d_actor_pre.T @ z
    grads["policy.actor.b"] = d_actor_pre.sum(axis=0)
    grads["policy.critic.w"] = (d_value[:, None] * z).sum(axis=0, keepdims=True)
    grads["policy.critic.b"] = np.array([d_value.sum()], dtype=z.dtype)

    d_z = d_actor_pre @ p["policy.actor.w"] + d_value[:, None] * p["policy.critic.w"][0][None, :]
    d_z = d_z + d_x_next

    if net.cell_kind == "cfc":
        d_x_prev, d_feats, cell_grads = cfc_backward_batch(cache["cell_cache"], d_z,
                                                           net.cell_params())
        d_c_prev = None
    else:
        dc = d_c_next if d_c_next is not None else np.zeros_like(z)
        d_x_prev, d_c_prev, d_feats, cell_grads = lstm_backward_batch(
            cache["cell_cache"], d_z, dc, net.cell_params())
    grads.update(cell_grads)

    feats = cache["feats"]
    d_trunk_pre = d_feats * (1.0 - feats * feats)
    grads["policy.trunk.w"] = d_trunk_pre.T @ cache["flat"]
    grads["policy.trunk.b"] = d_trunk_pre.sum(axis=0)
    d_flat = d_trunk_pre @ p["policy.trunk.w"]

    d_cur = d_flat.reshape(cache["conv_post"][-1].shape)
    conv_idx = len(cache["conv_pre"]) - 1
    for spec in reversed(net.conv_specs):
        if spec.kind == "conv2d":
            gx, gw, gb = conv2d_backward_batch(cache["conv_in"][conv_idx], spec,
                                               p[f"policy.conv{conv_idx}.w"], d_cur)
            grads[f"policy.conv{conv_idx}.w"] = gw
            grads[f"policy.conv{conv_idx}.b"] = gb
            d_cur = gx
            conv_idx -= 1
        else:
            d_cur = d_cur * (cache["conv_pre"][conv_idx] > 0)
    return grads, d_x_prev, d_c_prev


def bptt_window(net: PolicyNet, caches: list[dict], d_means: np.ndarray,
                d_values: np.ndarray) -> dict:
    """Accumulate gradients over a window of cached forward steps (newest last)."""
    total: dict[str, np.ndarray] = {}
    d_x = np.zeros_like(caches[-1]["z"])
    d_c = np.zeros_like(caches[-1]["z"]) if net.cell_kind == "lstm" else None
    for t in reversed(range(len(caches))):
        grads, d_x, d_c = backward_batch(net, caches[t], d_means[t], d_values[t], d_x, d_c)
        for k, v in grads.items():
            if k in total:
                total[k] += v
            else:
                total[k] = v.copy()
    return total


def backward_through_time(net: PolicyNet, traces: list[ForwardTrace],
                          loss_grads: list[tuple[np.ndarray, float]]) -> dict:
    """Gradients for a single-episode slice of stored traces.

    loss_grads pairs (d action_mean, d value) per step, aligned with traces.
    """
    if len(traces) != len(loss_grads):
        raise ConfigurationError("one loss gradient pair per trace required")
    for tr in traces:
        if tr.cache is None:
            raise StateError("trace does not carry a backprop cache")
    caches = [tr.cache for tr in traces]
    d_means = np.stack([np.asarray(g[0])[None] for g in loss_grads])
    d_values = np.stack([np.atleast_1d(np.asarray(g[1])) for g in loss_grads])
    return bptt_window(net, caches, d_means, d_values)
