"""Visualization losses and their gradients.

VL2(I) = sum((I conv K)**2) and VL1(I) = sum(|I conv K|), where conv is the
same-size convolution from :mod:`visreg.conv_core`. Gradients are computed by a
second convolution with the flipped kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conv_core
from .conv_core import RelKernel, as_matrix


class NoVRLayerError(ValueError):
    """Raised when a model-level loss is requested over zero weight slabs."""


def vl2(img, ker: RelKernel) -> float:
    return float(slab_losses(_single(img), ker, 2))


def vl1(img, ker: RelKernel) -> float:
    return float(slab_losses(_single(img), ker, 1))


def _single(img) -> np.ndarray:
    img = as_matrix(img)
    if img.ndim != 2:
        raise ValueError(f"expected a single 2D image, got shape {img.shape}")
    return img


def grad_vl2(img, ker: RelKernel) -> np.ndarray:
    resp = conv_core.conv_same(img, ker)
    return 2.0 * conv_core.conv_same(resp, conv_core.flip(ker))


def grad_vl1(img, ker: RelKernel) -> np.ndarray:
    # np.sign(0) == 0: the zero subgradient at kinks
    resp = conv_core.conv_same(img, ker)
    return conv_core.conv_same(np.sign(resp), conv_core.flip(ker))


def slab_losses(slabs, ker: RelKernel, norm: int = 2) -> np.ndarray:
    """Per-image loss for a stack shaped ``(..., H, W)``; returns shape ``(...)``."""
    resp = conv_core.conv_same(slabs, ker)
    if norm == 2:
        return np.sum(resp * resp, axis=(-2, -1))
    if norm == 1:
        return np.sum(np.abs(resp), axis=(-2, -1))
    raise ValueError(f"norm must be 1 or 2, got {norm!r}")


@dataclass
class VRWeights:
    """Weight slabs of the regularized layer, node-major then channel.

    ``slabs[s]`` belongs to node ``s // n_channels`` and input channel
    ``s % n_channels``.
    """

    slabs: np.ndarray
    n_channels: int = 1

    def __post_init__(self):
        self.slabs = np.asarray(self.slabs, dtype=np.float64)
        if self.slabs.ndim == 2:
            self.slabs = self.slabs[None]
        if self.slabs.ndim != 3:
            raise ValueError(f"slabs must be (count, H, W), got {self.slabs.shape}")
        if self.slabs.shape[0] % self.n_channels:
            raise ValueError(
                f"{self.slabs.shape[0]} slabs do not divide into {self.n_channels} channels"
            )

    @classmethod
    def from_dense(cls, W, geometry) -> "VRWeights":
        """Reshape dense weights ``(n_out, C*H*W)`` into per-channel slabs."""
        c, h, w = geometry
        W = np.asarray(W, dtype=np.float64)
        if W.ndim != 2 or W.shape[1] != c * h * w:
            raise ValueError(f"weights {W.shape} do not reshape into geometry {geometry}")
        return cls(W.reshape(W.shape[0] * c, h, w), n_channels=c)

    def to_dense(self) -> np.ndarray:
        n = len(self) // self.n_channels
        return self.slabs.reshape(n, -1)

    def __len__(self):
        return self.slabs.shape[0]

    @property
    def shape(self):
        return self.slabs.shape[1:]

    @property
    def node_index(self) -> np.ndarray:
        return np.arange(len(self)) // self.n_channels

    @property
    def channel_index(self) -> np.ndarray:
        return np.arange(len(self)) % self.n_channels


def _slabs_of(w) -> np.ndarray:
    slabs = w.slabs if isinstance(w, VRWeights) else np.asarray(w, dtype=np.float64)
    if slabs.ndim == 2:
        slabs = slabs[None]
    if slabs.shape[0] == 0:
        raise NoVRLayerError("no weight slabs: the model has no VR-regularized layer")
    return as_matrix(slabs)


def vl_model(w, ker: RelKernel, norm: int = 2) -> float:
    # sequential sum keeps the reduction order fixed for any slab count
    total = 0.0
    for v in slab_losses(_slabs_of(w), ker, norm):
        total += float(v)
    return total


def grad_vl_model(w, ker: RelKernel, norm: int = 2) -> np.ndarray:
    """Gradient w.r.t. every slab, shaped like the slab stack ``(count, H, W)``."""
    slabs = _slabs_of(w)
    if norm == 2:
        return grad_vl2(slabs, ker)
    if norm == 1:
        return grad_vl1(slabs, ker)
    raise ValueError(f"norm must be 1 or 2, got {norm!r}")
