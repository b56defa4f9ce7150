"""Minimal deterministic numeric substrate: layers, RNG, checkpoints."""

from .checkpoint import (MAGIC, VERSION, load_checkpoint, load_checkpoint_file,
                         save_checkpoint, save_checkpoint_file)
from .layers import (ACTIVATION_KINDS, LayerSpec, act_backward, act_forward,
                     conv2d_backward, conv2d_backward_batch, conv2d_forward,
                     conv2d_forward_batch, dense_backward, dense_backward_batch,
                     dense_forward, dense_forward_batch, ensure_finite, sigmoid,
                     softplus)
from .rng import Rng

__all__ = [
    "ACTIVATION_KINDS", "LayerSpec", "MAGIC", "Rng", "VERSION",
    "act_backward", "act_forward",
    "conv2d_backward", "conv2d_backward_batch", "conv2d_forward", "conv2d_forward_batch",
    "dense_backward", "dense_backward_batch", "dense_forward", "dense_forward_batch",
    "ensure_finite", "load_checkpoint", "load_checkpoint_file",
    "save_checkpoint", "save_checkpoint_file", "sigmoid", "softplus",
]
