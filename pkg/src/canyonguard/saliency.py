"""Visual-attention maps extracted from conv activations.

The map for a forward trace is built by the VisualBackProp recursion: average
each conv layer's post-activation maps over channels, then walk from the
deepest layer back to the input, upsampling with a unit-weight transposed
convolution that mirrors the conv geometry and multiplying elementwise with
the next shallower layer's averaged map. The result is scaled by the
channel-mean of the input frame and returned unnormalized; normalization,
weighted centers, and the two between-agent distance metrics live here too.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, PreconditionError
from .numcore import LayerSpec
from .policy import ForwardTrace

NORMALIZATIONS = ("raw", "unit-sum", "unit-max")


@dataclass(frozen=True)
class AttentionMap:
    values: np.ndarray          # [H, W] non-negative float
    normalization: str = "raw"

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise ConfigurationError(f"unknown normalization {self.normalization!r}")

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class MapCenter:
    row: float
    col: float

    def distance_to(self, other: "MapCenter") -> float:
        return float(np.hypot(self.row - other.row, self.col - other.col))


def upsample_unit_deconv(m: np.ndarray, spec: LayerSpec,
                         target_hw: tuple[int, int]) -> np.ndarray:
    """Transposed convolution with an all-ones kernel matching spec's geometry.

    The exact transpose can land a few pixels short of the conv input size
    when the stride did not divide evenly; the result is zero-padded (or
    cropped) at the bottom/right to target_hw.
    """
    k, s, p = spec.kernel_size, spec.stride, spec.padding
    h, w = m.shape
    full = np.zeros(((h - 1) * s + k, (w - 1) * s + k), dtype=m.dtype)
    for i in range(k):
        for j in range(k):
            full[i:i + h * s:s, j:j + w * s:s] += m
    cropped = full[p:p + target_hw[0], p:p + target_hw[1]]
    if cropped.shape != tuple(target_hw):
        out = np.zeros(target_hw, dtype=m.dtype)
        out[:cropped.shape[0], :cropped.shape[1]] = cropped
        return out
    return cropped


def visual_backprop(trace: ForwardTrace, conv_specs) -> AttentionMap:
    """Raw attention map at observation resolution from a forward trace."""
    acts = trace.conv_activations
    if not acts:
        raise PreconditionError("trace has no conv activations")
    specs = [s for s in conv_specs if s.kind == "conv2d"]
    if len(specs) != len(acts):
        raise ConfigurationError(
            f"{len(specs)} conv specs vs {len(acts)} activation maps")
    means = [a.mean(axis=0) for a in acts]
    m = means[-1]
    for layer in range(len(means) - 2, -1, -1):
        m = upsample_unit_deconv(m, specs[layer + 1], means[layer].shape)
        m = m * means[layer]
    if trace.obs is None:
        raise PreconditionError("trace does not carry the input frame")
    input_mean = trace.obs.mean(axis=0)
    m = upsample_unit_deconv(m, specs[0], input_mean.shape)
    return AttentionMap(np.asarray(m * input_mean, dtype=np.float64), "raw")


def normalize(amap: AttentionMap, mode: str) -> AttentionMap:
    """Rescale to unit sum or unit max; all-zero maps pass through unchanged."""
    if mode == "raw":
        return AttentionMap(amap.values, "raw")
    v = amap.values
    if mode == "unit-sum":
        total = v.sum()
        return AttentionMap(v / total if total > 0 else v, "unit-sum")
    if mode == "unit-max":
        peak = v.max() if v.size else 0.0
        return AttentionMap(v / peak if peak > 0 else v, "unit-max")
    raise ConfigurationError(f"unknown normalization {mode!r}")


def weighted_center(amap: AttentionMap) -> MapCenter:
    """Attention-mass centroid; an all-zero map maps to the geometric center."""
    v = amap.values
    h, w = v.shape
    total = v.sum()
    if total <= 0:
        return MapCenter((h - 1) / 2.0, (w - 1) / 2.0)
    rows = np.arange(h, dtype=np.float64)
    cols = np.arange(w, dtype=np.float64)
    return MapCenter(float((v.sum(axis=1) @ rows) / total),
                     float((v.sum(axis=0) @ cols) / total))


def _check_same_resolution(a: AttentionMap, b: AttentionMap):
    if a.shape != b.shape:
        raise PreconditionError(f"map resolutions differ: {a.shape} vs {b.shape}")


def amplitude_distance(a: AttentionMap, b: AttentionMap) -> float:
    """L1 distance between unit-sum maps; range [0, 2]."""
    _check_same_resolution(a, b)
    av = a.values if a.normalization == "unit-sum" else normalize(a, "unit-sum").values
    bv = b.values if b.normalization == "unit-sum" else normalize(b, "unit-sum").values
    return float(np.abs(av - bv).sum())


def center_distance(a: AttentionMap, b: AttentionMap) -> float:
    """Euclidean distance in pixels between weighted centers."""
    _check_same_resolution(a, b)
    return weighted_center(a).distance_to(weighted_center(b))


# ---------------------------------------------------------------------------
# sidecar serialization: per map, u32 H, u32 W, then H*W little-endian f32

def map_to_bytes(amap: AttentionMap) -> bytes:
    h, w = amap.values.shape
    return struct.pack("<II", h, w) + amap.values.astype("<f4").tobytes()


def map_from_bytes(data: bytes, offset: int = 0) -> tuple[AttentionMap, int]:
    """Decode one map record; returns (map, next offset)."""
    if offset + 8 > len(data):
        raise PreconditionError("sidecar record header truncated")
    h, w = struct.unpack_from("<II", data, offset)
    need = offset + 8 + 4 * h * w
    if need > len(data):
        raise PreconditionError("sidecar record payload truncated")
    vals = np.frombuffer(data, dtype="<f4", count=h * w, offset=offset + 8)
    return AttentionMap(vals.reshape(h, w).astype(np.float64), "raw"), need


def read_sidecar(data: bytes) -> list[AttentionMap]:
    maps, off = [], 0
    while off < len(data):
        m, off = map_from_bytes(data, off)
        maps.append(m)
    return maps
