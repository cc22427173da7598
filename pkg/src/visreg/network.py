"""Feed-forward networks with hand-written backpropagation.

Samples are ``(C, H, W)`` arrays; batches stack them as ``(N, C, H, W)``.
Dense layers flatten their input channel-major, so the incoming weights of a
dense node reshape back into one ``H x W`` slab per input channel.

The training objective is::

    L = class_loss + mu1 * VL1(M) + mu2 * VL2(M) + lam * L2'(M)

where the VL terms cover the incoming weights of ``model.vr_layer`` only and
L2' is the sum of squared weights (no biases) of every other layer.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import visloss
from .conv_core import RelKernel
from .visloss import VRWeights

KINDS = ("dense", "conv", "maxpool", "dropout", "output")
ACTIVATIONS = ("relu", "sigmoid", "tanh", "none")
PROB_FLOOR = 1e-12
CHECKPOINT_FORMAT = "visreg-checkpoint"
CHECKPOINT_VERSION = 1


class ShapeError(ValueError):
    pass


class StaleCacheError(RuntimeError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    size: int = 0
    window: int = 0
    p: float = 0.0
    activation: str = "relu"
    padding: str = "valid"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind in ("dense", "output", "conv") and self.size < 1:
            raise ValueError(f"{self.kind} layer needs a positive size, got {self.size}")
        if self.kind in ("conv", "maxpool") and self.window < 1:
            raise ValueError(f"{self.kind} layer needs a positive window, got {self.window}")
        if self.kind == "dropout" and not 0.0 <= self.p < 1.0:
            raise ValueError(f"dropout probability must be in [0, 1), got {self.p}")
        if self.padding not in ("valid", "same"):
            raise ValueError(f"padding must be 'valid' or 'same', got {self.padding!r}")
        if self.kind == "conv" and self.padding == "same" and self.window % 2 == 0:
            raise ValueError("'same' padding needs an odd conv window")

    @property
    def has_params(self) -> bool:
        return self.kind in ("dense", "conv", "output")

    def token(self) -> str:
        """Architecture-string form, e.g. ``fc(1000)`` or ``conv(3x3, 64)``."""
        if self.kind == "dense":
            tok = f"fc({self.size})"
        elif self.kind == "output":
            return f"output({self.size})"
        elif self.kind == "conv":
            tok = f"conv({self.window}x{self.window}, {self.size})"
        elif self.kind == "maxpool":
            return f"maxpool({self.window}x{self.window})"
        else:
            return f"dropout({self.p:g})"
        return tok if self.activation == "relu" else f"{tok}:{self.activation}"


def dense(n, activation="relu"):
    return LayerSpec("dense", size=n, activation=activation)


def conv(s, c, activation="relu", padding="valid"):
    return LayerSpec("conv", size=c, window=s, activation=activation, padding=padding)


def maxpool(s):
    return LayerSpec("maxpool", window=s, activation="none")


def dropout(p):
    return LayerSpec("dropout", p=p, activation="none")


def output(n):
    return LayerSpec("output", size=n, activation="none")


_TOKEN = re.compile(r"^(\w+)\(([^)]*)\)(?::(\w+))?$")
_SIDE = re.compile(r"^(\d+)\s*(?:x\s*(\d+))?$")


def _square(text: str, token: str) -> int:
    m = _SIDE.match(text.strip())
    if not m or (m.group(2) and m.group(2) != m.group(1)):
        raise ValueError(f"expected a square size like 3x3 in {token!r}")
    return int(m.group(1))


def parse_token(token: str, conv_padding: str = "valid") -> LayerSpec | tuple:
    """Parse one architecture token; ``input(...)`` returns ``("input", dims)``."""
    tok = token.strip().replace("×", "x")
    m = _TOKEN.match(tok.replace(" ", "")) if tok else None
    if not m:
        raise ValueError(f"cannot parse layer token {token!r}")
    name, args, act = m.group(1), m.group(2), m.group(3)
    parts = [a for a in args.split(",") if a]
    if not parts:
        raise ValueError(f"layer token {token!r} has no arguments")
    if name == "input":
        dims = tuple(int(d) for d in re.split(r"[x,]", args) if d)
        return ("input", dims)
    if name == "fc":
        return dense(int(parts[0]), act or "relu")
    if name in ("output", "out"):
        return output(int(parts[0]))
    if name == "conv":
        if len(parts) != 2:
            raise ValueError(f"conv takes (s x s, channels): {token!r}")
        return conv(_square(parts[0], token), int(parts[1]), act or "relu", conv_padding)
    if name == "maxpool":
        # accept "maxpool(3,3)" as well as "maxpool(3x3)"
        return maxpool(_square(args.replace(",", "x"), token))
    if name == "dropout":
        return dropout(float(parts[0]))
    raise ValueError(f"unknown layer {name!r} in {token!r}")


def parse_architecture(text: str, conv_padding: str = "valid"):
    """Split ``a -- b -- c`` into ``(declared_input_dims, [LayerSpec, ...])``."""
    tokens = [t for t in re.split(r"\s*--\s*|\s*;\s*", text.strip()) if t]
    declared = None
    layers = []
    for tok in tokens:
        item = parse_token(tok, conv_padding)
        if isinstance(item, tuple):
            if layers or declared is not None:
                raise ValueError("input(...) must be the first token")
            declared = item[1]
        else:
            layers.append(item)
    return declared, layers


def format_architecture(layers, input_dims=None) -> str:
    toks = [f"input({'x'.join(str(d) for d in input_dims)})"] if input_dims else []
    return " -- ".join(toks + [l.token() for l in layers])


def infer_shapes(layers, input_shape) -> list[tuple]:
    """Output shape of every layer (per sample)."""
    shapes = []
    shape = tuple(input_shape)
    for i, spec in enumerate(layers):
        if spec.kind in ("dense", "output"):
            shape = (spec.size,)
        elif spec.kind in ("conv", "maxpool"):
            if len(shape) != 3:
                raise ShapeError(f"layer {i} ({spec.token()}) needs a (C, H, W) input, got {shape}")
            c, h, w = shape
            s = spec.window
            if spec.kind == "maxpool":
                shape = (c, -(-h // s), -(-w // s))
            elif spec.padding == "same":
                shape = (spec.size, h, w)
            else:
                if h < s or w < s:
                    raise ShapeError(f"layer {i} ({spec.token()}): {h}x{w} input smaller than window")
                shape = (spec.size, h - s + 1, w - s + 1)
        shapes.append(shape)
    return shapes


def _check_stack(layers):
    if not layers or layers[-1].kind != "output":
        raise ValueError("the last layer must be output(n)")
    if any(l.kind == "output" for l in layers[:-1]):
        raise ValueError("output(n) may only appear last")


@dataclass(eq=False)
class NetworkModel:
    layers: list
    input_shape: tuple
    params: list
    vr_layer: int
    version: int = 0

    def __post_init__(self):
        self.layers = list(self.layers)
        self.input_shape = tuple(int(d) for d in self.input_shape)
        _check_stack(self.layers)
        self.shapes = infer_shapes(self.layers, self.input_shape)
        if len(self.params) != len(self.layers):
            raise ValueError("one params entry per layer required")
        for i, (spec, p) in enumerate(zip(self.layers, self.params)):
            want = _param_shapes(spec, self.in_shape(i))
            got = None if p is None else {k: v.shape for k, v in p.items()}
            if want != got:
                raise ShapeError(f"layer {i} ({spec.token()}): params {got}, expected {want}")
        spec = self.layers[self.vr_layer]
        if spec.kind != "dense":
            raise ValueError(f"vr_layer {self.vr_layer} is {spec.token()}, not a dense layer")
        if len(self.in_shape(self.vr_layer)) != 3:
            raise ValueError(f"vr_layer {self.vr_layer} input {self.in_shape(self.vr_layer)} "
                             "has no spatial geometry")

    def in_shape(self, i: int) -> tuple:
        return self.input_shape if i == 0 else self.shapes[i - 1]

    @property
    def n_classes(self) -> int:
        return self.layers[-1].size

    @property
    def vr_geometry(self) -> tuple:
        """``(channels, H, W)`` of the slabs entering the VR layer."""
        return self.in_shape(self.vr_layer)

    def vr_weights(self) -> VRWeights:
        return VRWeights.from_dense(self.params[self.vr_layer]["W"], self.vr_geometry)

    def n_params(self) -> int:
        return sum(v.size for p in self.params if p for v in p.values())

    def copy(self) -> "NetworkModel":
        params = [None if p is None else {k: v.copy() for k, v in p.items()} for p in self.params]
        return NetworkModel(self.layers, self.input_shape, params, self.vr_layer, self.version)

    def __eq__(self, other):
        if not isinstance(other, NetworkModel):
            return NotImplemented
        if (self.layers, self.input_shape, self.vr_layer) != (other.layers, other.input_shape,
                                                              other.vr_layer):
            return False
        for a, b in zip(self.params, other.params):
            if (a is None) != (b is None):
                return False
            if a is not None and (a.keys() != b.keys()
                                  or not all(np.array_equal(a[k], b[k]) for k in a)):
                return False
        return True

    def describe(self) -> str:
        return format_architecture(self.layers, self.input_shape)


def _param_shapes(spec: LayerSpec, in_shape):
    if spec.kind in ("dense", "output"):
        return {"W": (spec.size, int(np.prod(in_shape))), "b": (spec.size,)}
    if spec.kind == "conv":
        return {"W": (spec.size, in_shape[0], spec.window, spec.window), "b": (spec.size,)}
    return None


def validate_stack(layers, input_shape, vr_layer: int | None = None):
    """Check a layer stack without allocating parameters.

    Returns ``(shapes, vr_layer)`` with ``vr_layer`` defaulted to the first dense layer.
    """
    _check_stack(layers)
    shapes = infer_shapes(layers, input_shape)
    if vr_layer is None:
        dense_idx = [i for i, l in enumerate(layers) if l.kind == "dense"]
        if not dense_idx:
            raise ValueError("no dense layer to carry the visualization regularizer")
        vr_layer = dense_idx[0]
    if not 0 <= vr_layer < len(layers) or layers[vr_layer].kind != "dense":
        raise ValueError(f"vr_layer {vr_layer} is not a dense layer")
    vr_in = tuple(input_shape) if vr_layer == 0 else shapes[vr_layer - 1]
    if len(vr_in) != 3:
        raise ValueError(f"vr_layer {vr_layer} input {vr_in} has no spatial geometry")
    return shapes, vr_layer


def build_model(layers, input_shape, seed: int = 0, vr_layer: int | None = None) -> NetworkModel:
    """Glorot-uniform weights, zero biases. ``vr_layer`` defaults to the first dense layer."""
    layers = list(layers)
    input_shape = tuple(input_shape)
    shapes, vr_layer = validate_stack(layers, input_shape, vr_layer)
    rng = np.random.default_rng(seed)
    params = []
    for i, spec in enumerate(layers):
        shp = _param_shapes(spec, input_shape if i == 0 else shapes[i - 1])
        if shp is None:
            params.append(None)
            continue
        W_shape = shp["W"]
        if spec.kind == "conv":
            fan_in = W_shape[1] * W_shape[2] * W_shape[3]
            fan_out = W_shape[0] * W_shape[2] * W_shape[3]
        else:
            fan_out, fan_in = W_shape
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        params.append({"W": rng.uniform(-limit, limit, size=W_shape), "b": np.zeros(shp["b"])})
    return NetworkModel(layers, input_shape, params, vr_layer)


@dataclass
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError(f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels")

    def __len__(self):
        return self.labels.shape[0]


# --- activations -------------------------------------------------------------

def _act(name, u):
    if name == "relu":
        return np.maximum(u, 0.0)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * u))
    if name == "tanh":
        return np.tanh(u)
    return u


def _act_grad(name, u, h):
    if name == "relu":
        return (u > 0).astype(np.float64)
    if name == "sigmoid":
        return h * (1.0 - h)
    if name == "tanh":
        return 1.0 - h * h
    return np.ones_like(u)


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# --- conv / pool helpers -----------------------------------------------------

def _pad_for(spec, x):
    if spec.padding == "same" and spec.window > 1:
        r = (spec.window - 1) // 2
        return np.pad(x, ((0, 0), (0, 0), (r, r), (r, r)))
    return x


def _im2col(xp, s):
    n, c = xp.shape[:2]
    win = sliding_window_view(xp, (s, s), axis=(2, 3))  # (N, C, Ho, Wo, s, s)
    ho, wo = win.shape[2:4]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * s * s), ho, wo


def _pool_windows(x, s):
    n, c, h, w = x.shape
    ho, wo = -(-h // s), -(-w // s)
    if (ho * s, wo * s) != (h, w):
        x = np.pad(x, ((0, 0), (0, 0), (0, ho * s - h), (0, wo * s - w)),
                   constant_values=-np.inf)
    return x.reshape(n, c, ho, s, wo, s).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, s * s)


# --- forward / backward ------------------------------------------------------

@dataclass
class ForwardCache:
    mode: str
    version: int
    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)
    aux: list = field(default_factory=list)
    outputs: np.ndarray | None = None


def forward(model: NetworkModel, x, mode: str = "eval", rng=None, upto: int | None = None):
    """Run the network on ``x`` of shape ``(N, C, H, W)``; returns a :class:`ForwardCache`.

    ``cache.outputs`` holds softmax probabilities. Train mode samples dropout
    masks from ``rng``; eval mode scales by ``1 - p`` instead.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != model.input_shape:
        raise ShapeError(f"layer 0 ({model.layers[0].token()}): input shape {x.shape[1:]}, "
                         f"expected {model.input_shape}")
    if mode == "train" and rng is None and any(l.kind == "dropout" and l.p > 0 for l in model.layers):
        raise ValueError("train mode with dropout needs an rng")
    cache = ForwardCache(mode=mode, version=model.version)
    last = len(model.layers) - 1 if upto is None else upto
    h = x
    for i, spec in enumerate(model.layers[: last + 1]):
        p = model.params[i]
        cache.inputs.append(h)
        u = aux = None
        if spec.kind in ("dense", "output"):
            x2 = h.reshape(h.shape[0], -1)
            u = x2 @ p["W"].T + p["b"]
            out = softmax(u) if spec.kind == "output" else _act(spec.activation, u)
        elif spec.kind == "conv":
            cols, ho, wo = _im2col(_pad_for(spec, h), spec.window)
            u = (cols @ p["W"].reshape(spec.size, -1).T + p["b"])
            u = u.reshape(h.shape[0], ho, wo, spec.size).transpose(0, 3, 1, 2)
            out = _act(spec.activation, u)
        elif spec.kind == "maxpool":
            win = _pool_windows(h, spec.window)
            aux = np.argmax(win, axis=-1)
            out = np.take_along_axis(win, aux[..., None], axis=-1)[..., 0]
        else:
            if mode == "eval":
                out = h * (1.0 - spec.p)
            elif spec.p == 0.0:
                out = h
            else:
                aux = (rng.random(h.shape) >= spec.p).astype(np.float64)
                out = h * aux
        cache.pre.append(u)
        cache.aux.append(aux)
        cache.post.append(out)
        h = out
    if last == len(model.layers) - 1:
        cache.outputs = h
    return cache


def _backprop(model, cache, top: int, g, want_input_grad=False):
    """Push ``g`` (gradient w.r.t. layer ``top``'s output; logits for the output
    layer) down to the input. Returns ``(param_grads, input_grad)``."""
    grads = [None] * len(model.layers)
    for i in range(top, -1, -1):
        spec = model.layers[i]
        p = model.params[i]
        x = cache.inputs[i]
        need_dx = i > 0 or want_input_grad
        if spec.kind in ("dense", "output"):
            gu = g.reshape(x.shape[0], -1)
            if spec.kind == "dense":
                gu = gu * _act_grad(spec.activation, cache.pre[i], cache.post[i])
            x2 = x.reshape(x.shape[0], -1)
            grads[i] = {"W": gu.T @ x2, "b": gu.sum(axis=0)}
            g = (gu @ p["W"]).reshape(x.shape) if need_dx else None
        elif spec.kind == "conv":
            gu = g * _act_grad(spec.activation, cache.pre[i], cache.post[i])
            s, c = spec.window, spec.size
            xp = _pad_for(spec, x)
            cols, ho, wo = _im2col(xp, s)
            gflat = gu.transpose(0, 2, 3, 1).reshape(-1, c)
            grads[i] = {"W": (gflat.T @ cols).reshape(p["W"].shape), "b": gu.sum(axis=(0, 2, 3))}
            if need_dx:
                dcols = (gflat @ p["W"].reshape(c, -1)).reshape(x.shape[0], ho, wo, x.shape[1], s, s)
                dxp = np.zeros(xp.shape)
                for a in range(s):
                    for b in range(s):
                        dxp[:, :, a:a + ho, b:b + wo] += dcols[..., a, b].transpose(0, 3, 1, 2)
                if xp.shape != x.shape:
                    r = (s - 1) // 2
                    dxp = dxp[:, :, r:r + x.shape[2], r:r + x.shape[3]]
                g = dxp
        elif spec.kind == "maxpool":
            s = spec.window
            n, ch, h, w = x.shape
            idx = cache.aux[i]
            ho, wo = idx.shape[2:]
            gwin = np.zeros(idx.shape + (s * s,))
            np.put_along_axis(gwin, idx[..., None], g[..., None], axis=-1)
            g = gwin.reshape(n, ch, ho, wo, s, s).transpose(0, 1, 2, 4, 3, 5)
            g = g.reshape(n, ch, ho * s, wo * s)[:, :, :h, :w]
        else:
            if cache.mode == "eval":
                g = g * (1.0 - spec.p)
            elif cache.aux[i] is not None:
                g = g * cache.aux[i]
    return grads, g


def class_loss(outputs, labels) -> float:
    """Mean cross-entropy with probabilities clamped to ``[1e-12, 1]``."""
    outputs = np.asarray(outputs)
    labels = np.asarray(labels)
    p = np.clip(outputs[np.arange(len(labels)), labels], PROB_FLOOR, 1.0)
    return float(np.mean(-np.log(p)))


def _class_logit_grad(outputs, labels):
    n = len(labels)
    g = outputs.copy()
    g[np.arange(n), labels] -= 1.0
    # below the floor the clamped loss is flat in p_true
    g[outputs[np.arange(n), labels] < PROB_FLOOR] = 0.0
    return g / n


def l2_prime(model: NetworkModel) -> float:
    total = 0.0
    for i, p in enumerate(model.params):
        if p is not None and i != model.vr_layer:
            total += float(np.sum(p["W"] * p["W"]))
    return total


def vr_loss(model: NetworkModel, ker: RelKernel, norm: int) -> float:
    return visloss.vl_model(model.vr_weights(), ker, norm)


def total_loss(model, batch: Batch, ker: RelKernel, mu1=0.0, mu2=0.0, lam=0.0,
               mode="eval", rng=None, cache: ForwardCache | None = None) -> float:
    if cache is None:
        cache = forward(model, batch.inputs, mode, rng)
    loss = class_loss(cache.outputs, batch.labels)
    if mu1:
        loss += mu1 * vr_loss(model, ker, 1)
    if mu2:
        loss += mu2 * vr_loss(model, ker, 2)
    if lam:
        loss += lam * l2_prime(model)
    return loss


@dataclass
class GradientTerms:
    """Per-term gradients: classification, L2', and the VR layer's VL1 / VL2."""

    classification: list
    l2: list
    vr1: np.ndarray | None
    vr2: np.ndarray | None


def _check_cache(model, batch, cache):
    if cache is None or cache.outputs is None:
        raise StaleCacheError("no complete forward pass recorded")
    if cache.version != model.version:
        raise StaleCacheError(f"activations recorded at model version {cache.version}, "
                              f"model is at {model.version}")
    if cache.inputs[0].shape != batch.inputs.shape or not np.array_equal(cache.inputs[0],
                                                                         batch.inputs):
        raise StaleCacheError("activations were recorded for a different batch")


def classification_grad(model, batch: Batch, cache: ForwardCache) -> list:
    _check_cache(model, batch, cache)
    if batch.labels.size and batch.labels.max() >= model.n_classes:
        raise ValueError(f"label {batch.labels.max()} >= class count {model.n_classes}")
    g = _class_logit_grad(cache.outputs, batch.labels)
    grads, _ = _backprop(model, cache, len(model.layers) - 1, g)
    return grads


def l2_grad(model) -> list:
    return [None if p is None or i == model.vr_layer else {"W": 2.0 * p["W"]}
            for i, p in enumerate(model.params)]


def vr_grad(model, ker: RelKernel, norm: int) -> np.ndarray:
    """VL gradient w.r.t. the VR layer's weight matrix (same shape as ``W``)."""
    w = model.vr_weights()
    return visloss.grad_vl_model(w, ker, norm).reshape(model.params[model.vr_layer]["W"].shape)


def gradient_terms(model, batch, cache, ker, mu1=0.0, mu2=0.0, lam=0.0) -> GradientTerms:
    """Compute only the terms whose weight is nonzero."""
    return GradientTerms(
        classification=classification_grad(model, batch, cache),
        l2=l2_grad(model) if lam else [None] * len(model.layers),
        vr1=vr_grad(model, ker, 1) if mu1 else None,
        vr2=vr_grad(model, ker, 2) if mu2 else None,
    )


def combine(model, terms: GradientTerms, mu1=0.0, mu2=0.0, lam=0.0) -> list:
    """``g = u + lam * v + mu1 * z1 + mu2 * z2``, summed in that order."""
    out = []
    for i, u in enumerate(terms.classification):
        if u is None:
            out.append(None)
            continue
        gW = u["W"]
        if lam and terms.l2[i] is not None:
            gW = gW + lam * terms.l2[i]["W"]
        if i == model.vr_layer:
            if mu1:
                gW = gW + mu1 * terms.vr1
            if mu2:
                gW = gW + mu2 * terms.vr2
        out.append({"W": gW, "b": u["b"]})
    return out


def backward(model, batch: Batch, ker: RelKernel, mu1=0.0, mu2=0.0, lam=0.0,
             cache: ForwardCache | None = None) -> list:
    """Gradient of :func:`total_loss` for every parameter, given the forward pass ``cache``."""
    terms = gradient_terms(model, batch, cache, ker, mu1, mu2, lam)
    return combine(model, terms, mu1, mu2, lam)


def predict(model, x, chunk: int = 1000) -> np.ndarray:
    """Eval-mode class probabilities, computed in chunks."""
    x = np.asarray(x, dtype=np.float64)
    out = [forward(model, x[i:i + chunk], "eval").outputs for i in range(0, len(x), chunk)]
    return np.concatenate(out) if out else np.zeros((0, model.n_classes))


def node_activation(model, x, layer: int, node: int):
    """Eval-mode activation of ``node`` in ``layer`` for one input, and its input gradient.

    Dense nodes report post-activation values; output nodes report the logit.
    """
    spec = model.layers[layer]
    if spec.kind not in ("dense", "output"):
        raise ValueError(f"layer {layer} ({spec.token()}) has no scalar nodes")
    if not 0 <= node < spec.size:
        raise IndexError(f"node {node} outside layer {layer} of width {spec.size}")
    x = np.asarray(x, dtype=np.float64).reshape((1,) + model.input_shape)
    cache = forward(model, x, "eval", upto=layer)
    value = cache.pre[layer] if spec.kind == "output" else cache.post[layer]
    seed = np.zeros((1, spec.size))
    seed[0, node] = 1.0
    _, gx = _backprop(model, cache, layer, seed, want_input_grad=True)
    return float(value[0, node]), gx[0]


# --- checkpoints -------------------------------------------------------------

def save_model(model: NetworkModel, path) -> None:
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "input_shape": list(model.input_shape),
        "vr_layer": model.vr_layer,
        "layers": [{"kind": l.kind, "size": l.size, "window": l.window, "p": l.p,
                    "activation": l.activation, "padding": l.padding} for l in model.layers],
    }
    arrays = {"header": np.array(json.dumps(header, sort_keys=True))}
    for i, p in enumerate(model.params):
        if p is not None:
            arrays[f"layer{i}_W"] = p["W"]
            arrays[f"layer{i}_b"] = p["b"]
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_model(path) -> NetworkModel:
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
        layers = [LayerSpec(**d) for d in header["layers"]]
        params = []
        for i, spec in enumerate(layers):
            params.append({"W": z[f"layer{i}_W"], "b": z[f"layer{i}_b"]}
                          if spec.has_params else None)
    return NetworkModel(layers, tuple(header["input_shape"]), params, header["vr_layer"])
