"""Continuous-time gated recurrent cell and an LSTM used for comparison runs.

The continuous cell keeps a hidden state that is a time-gated convex blend of
two learned trajectories: a shared tanh backbone reads concat(hidden, input
features) and branches into three dense heads f, g, h. The f head output is
passed through softplus so the decay rate is strictly positive, which makes
the gate sigmoid(-f_pos * dt) land in (0,1) and the new state

    z = gate * g + (1 - gate) * h

move monotonically from g (dt -> 0) toward h (dt -> inf). The g/h heads are
tanh-activated so the hidden state stays bounded without normalization.
The gate is evaluated once per step from (hidden, features) and reused for
both blend terms so the two gate factors always sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalFault
from .numcore import Rng, sigmoid, softplus


@dataclass(frozen=True)
class CfcState:
    x: np.ndarray          # hidden vector
    last_time: float = 0.0  # elapsed episode time in seconds

    @staticmethod
    def zeros(hidden: int, dtype=np.float32) -> "CfcState":
        return CfcState(np.zeros(hidden, dtype=dtype), 0.0)


@dataclass(frozen=True)
class CfcParams:
    """Backbone + f/g/h head parameters, stored in a flat name->array mapping."""

    hidden: int
    features: int
    backbone_widths: tuple[int, ...]
    params: dict[str, np.ndarray] = field(repr=False)

    def key(self, name: str) -> str:
        return f"cfc.{name}"


def _head_keys():
    return ("f", "g", "h")


def cfc_init(rng: Rng, hidden: int, features: int,
             backbone_widths: tuple[int, ...] = (32,),
             prefix: str = "cfc.") -> tuple[CfcParams, Rng]:
    """Xavier-style init, deterministic from the rng stream."""
    params: dict[str, np.ndarray] = {}
    in_dim = hidden + features
    for i, width in enumerate(backbone_widths):
        scale = np.sqrt(2.0 / (in_dim + width))
        vals, rng = rng.normal(width * in_dim)
        params[f"{prefix}backbone.{i}.w"] = (vals.reshape(width, in_dim) * scale).astype(np.float32)
        params[f"{prefix}backbone.{i}.b"] = np.zeros(width, dtype=np.float32)
        in_dim = width
    for head in _head_keys():
        scale = np.sqrt(2.0 / (in_dim + hidden))
        vals, rng = rng.normal(hidden * in_dim)
        params[f"{prefix}{head}.w"] = (vals.reshape(hidden, in_dim) * scale).astype(np.float32)
        params[f"{prefix}{head}.b"] = np.zeros(hidden, dtype=np.float32)
    return CfcParams(hidden, features, tuple(backbone_widths), params), rng


def _cfc_p(params: CfcParams, name: str) -> np.ndarray:
    return params.params[f"cfc.{name}"]


def gate_combine(f_pos, g, h, dt: float):
    """sigma(-f_pos*dt) * g + (1 - sigma(-f_pos*dt)) * h, the core blend."""
    gate = sigmoid(-np.asarray(f_pos) * dt)
    return gate * g + (1.0 - gate) * h


def cfc_step_batch(x: np.ndarray, feats: np.ndarray, dt: float,
                   params: CfcParams) -> tuple[np.ndarray, dict]:
    """One cell step over a batch [B, hidden] x [B, features].

    Returns the new hidden batch plus the cache needed for the backward pass.
    """
    inp = np.concatenate([x, feats], axis=1)
    cache: dict = {"inputs": [], "pre": [], "post": [], "dt": dt}
    cur = inp
    for i in range(len(params.backbone_widths)):
        w, b = _cfc_p(params, f"backbone.{i}.w"), _cfc_p(params, f"backbone.{i}.b")
        pre = cur @ w.T + b
        cache["inputs"].append(cur)
        cache["pre"].append(pre)
        cur = np.tanh(pre)
        cache["post"].append(cur)
    f_raw = cur @ _cfc_p(params, "f.w").T + _cfc_p(params, "f.b")
    g_raw = cur @ _cfc_p(params, "g.w").T + _cfc_p(params, "g.b")
    h_raw = cur @ _cfc_p(params, "h.w").T + _cfc_p(params, "h.b")
    f_pos = softplus(f_raw)
    g = np.tanh(g_raw)
    h = np.tanh(h_raw)
    gate = sigmoid(-f_pos * dt)
    z = gate * g + (1.0 - gate) * h
    cache.update(trunk=cur, f_raw=f_raw, f_pos=f_pos, g=g, h=h, gate=gate)
    return z, cache


def cfc_step(state: CfcState, features: np.ndarray, dt: float,
             params: CfcParams) -> CfcState:
    """Advance the cell by dt seconds. dt must be positive."""
    if dt <= 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    if features.shape != (params.features,):
        raise ConfigurationError(
            f"features shape {features.shape} != ({params.features},)")
    if state.x.shape != (params.hidden,):
        raise ConfigurationError(
            f"hidden state shape {state.x.shape} != ({params.hidden},)")
    z, cache = cfc_step_batch(state.x[None], features[None], dt, params)
    for head in _head_keys():
        v = cache[{"f": "f_pos"}.get(head, head)]
        if not np.all(np.isfinite(v)):
            raise NumericalFault(f"non-finite output from cfc head {head!r}")
    if not np.all(np.isfinite(z)):
        raise NumericalFault("non-finite cfc state")
    return CfcState(z[0], state.last_time + dt)


def cfc_backward_batch(cache: dict, dz: np.ndarray,
                       params: CfcParams) -> tuple[np.ndarray, np.ndarray, dict]:
    """Reverse-mode gradients of cfc_step_batch.

    Returns (grad_x, grad_features, grad_params) where grad_params maps the
    same keys as params.params.
    """
    dt = cache["dt"]
    gate, g, h = cache["gate"], cache["g"], cache["h"]
    f_pos, f_raw, trunk = cache["f_pos"], cache["f_raw"], cache["trunk"]

    d_gate = dz * (g - h)
    d_g_raw = dz * gate * (1.0 - g * g)
    d_h_raw = dz * (1.0 - gate) * (1.0 - h * h)
    # gate = sigmoid(-f_pos*dt): d gate/d f_pos = -dt * gate * (1-gate)
    d_f_pos = d_gate * gate * (1.0 - gate) * (-dt)
    d_f_raw = d_f_pos * sigmoid(f_raw)  # softplus'

    grads: dict[str, np.ndarray] = {}
    d_trunk = np.zeros_like(trunk)
    for head, dh_raw in (("f", d_f_raw), ("g", d_g_raw), ("h", d_h_raw)):
        w = _cfc_p(params, f"{head}.w")
        grads[f"cfc.{head}.w"] = dh_raw.T @ trunk
        grads[f"cfc.{head}.b"] = dh_raw.sum(axis=0)
        d_trunk += dh_raw @ w

    d_cur = d_trunk
    for i in reversed(range(len(params.backbone_widths))):
        w = _cfc_p(params, f"backbone.{i}.w")
        post = cache["post"][i]
        d_pre = d_cur * (1.0 - post * post)
        grads[f"cfc.backbone.{i}.w"] = d_pre.T @ cache["inputs"][i]
        grads[f"cfc.backbone.{i}.b"] = d_pre.sum(axis=0)
        d_cur = d_pre @ w

    # split gradient of concat(hidden, features)
    n_hidden = dz.shape[1]
    return d_cur[:, :n_hidden], d_cur[:, n_hidden:], grads


def cfc_backward(state: CfcState, features: np.ndarray, dt: float,
                 params: CfcParams, upstream: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray, dict]:
    """Gradients of cfc_step w.r.t. previous hidden state, features, and params."""
    _, cache = cfc_step_batch(state.x[None], features[None], dt, params)
    gx, gf, grads = cfc_backward_batch(cache, upstream[None], params)
    return gx[0], gf[0], grads


def gate_dt_derivative(state: CfcState, features: np.ndarray, dt: float,
                       params: CfcParams) -> np.ndarray:
    """Analytic d z / d dt, used to sanity-check the gate's time behavior."""
    _, cache = cfc_step_batch(state.x[None], features[None], dt, params)
    gate, g, h, f_pos = cache["gate"], cache["g"], cache["h"], cache["f_pos"]
    return (gate * (1.0 - gate) * (-f_pos) * (g - h))[0]


# ---------------------------------------------------------------------------
# LSTM cell (comparison runs only)

@dataclass(frozen=True)
class LstmState:
    h: np.ndarray
    c: np.ndarray
    last_time: float = 0.0

    @property
    def x(self) -> np.ndarray:
        """Exposed hidden output, mirroring CfcState.x."""
        return self.h

    @staticmethod
    def zeros(hidden: int, dtype=np.float32) -> "LstmState":
        return LstmState(np.zeros(hidden, dtype=dtype), np.zeros(hidden, dtype=dtype), 0.0)


_LSTM_GATES = ("i", "f", "o", "c")


@dataclass(frozen=True)
class LstmParams:
    hidden: int
    features: int
    params: dict[str, np.ndarray] = field(repr=False)


def lstm_init(rng: Rng, hidden: int, features: int,
              prefix: str = "lstm.") -> tuple[LstmParams, Rng]:
    params: dict[str, np.ndarray] = {}
    in_dim = hidden + features
    for gate in _LSTM_GATES:
        scale = np.sqrt(2.0 / (in_dim + hidden))
        vals, rng = rng.normal(hidden * in_dim)
        params[f"{prefix}{gate}.w"] = (vals.reshape(hidden, in_dim) * scale).astype(np.float32)
        bias = np.zeros(hidden, dtype=np.float32)
        if gate == "f":
            bias += 1.0  # open forget gate at init
        params[f"{prefix}{gate}.b"] = bias
    return LstmParams(hidden, features, params), rng


def _lstm_p(params: LstmParams, name: str) -> np.ndarray:
    return params.params[f"lstm.{name}"]


def lstm_step_batch(h: np.ndarray, c: np.ndarray, feats: np.ndarray,
                    params: LstmParams) -> tuple[np.ndarray, np.ndarray, dict]:
    inp = np.concatenate([h, feats], axis=1)
    pre = {g: inp @ _lstm_p(params, f"{g}.w").T + _lstm_p(params, f"{g}.b")
           for g in _LSTM_GATES}
    i = sigmoid(pre["i"])
    f = sigmoid(pre["f"])
    o = sigmoid(pre["o"])
    cand = np.tanh(pre["c"])
    c_new = f * c + i * cand
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    cache = dict(inp=inp, i=i, f=f, o=o, cand=cand, c_prev=c, c_new=c_new, tanh_c=tanh_c)
    return h_new, c_new, cache


def lstm_step(state: LstmState, features: np.ndarray, params: LstmParams) -> LstmState:
    """Standard gated memory cell update."""
    if features.shape != (params.features,):
        raise ConfigurationError(
            f"features shape {features.shape} != ({params.features},)")
    if state.h.shape != (params.hidden,):
        raise ConfigurationError(
            f"hidden state shape {state.h.shape} != ({params.hidden},)")
    h, c, _ = lstm_step_batch(state.h[None], state.c[None], features[None], params)
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(c))):
        raise NumericalFault("non-finite lstm state")
    return LstmState(h[0], c[0], state.last_time)


def lstm_backward_batch(cache: dict, dh: np.ndarray, dc: np.ndarray,
                        params: LstmParams
                        ) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
    """Gradients w.r.t. (h_prev, c_prev, features, params) given upstream dh, dc."""
    i, f, o, cand = cache["i"], cache["f"], cache["o"], cache["cand"]
    tanh_c, c_prev = cache["tanh_c"], cache["c_prev"]
    inp = cache["inp"]

    d_o = dh * tanh_c
    d_c = dc + dh * o * (1.0 - tanh_c * tanh_c)
    d_f = d_c * c_prev
    d_i = d_c * cand
    d_cand = d_c * i
    d_c_prev = d_c * f

    d_pre = {
        "i": d_i * i * (1.0 - i),
        "f": d_f * f * (1.0 - f),
        "o": d_o * o * (1.0 - o),
        "c": d_cand * (1.0 - cand * cand),
    }
    grads: dict[str, np.ndarray] = {}
    d_inp = np.zeros_like(inp)
    for g in _LSTM_GATES:
        w = _lstm_p(params, f"{g}.w")
        grads[f"lstm.{g}.w"] = d_pre[g].T @ inp
        grads[f"lstm.{g}.b"] = d_pre[g].sum(axis=0)
        d_inp += d_pre[g] @ w
    n_hidden = dh.shape[1]
    return d_inp[:, :n_hidden], d_c_prev, d_inp[:, n_hidden:], grads
