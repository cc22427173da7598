"""Node visualizations, grayscale image export and visualization-loss tables."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import conv_core, network, visloss
from .conv_core import RelKernel
from .network import NetworkModel


class VisualizationError(ValueError):
    pass


def first_param_layer(model: NetworkModel) -> int:
    return next(i for i, l in enumerate(model.layers) if l.has_params)


def vis_first_layer(model: NetworkModel, node: int) -> np.ndarray:
    """Closed-form visualization ``w / ||w||`` of a first-hidden-layer node.

    Returned in the input geometry ``(C, H, W)``.
    """
    layer = first_param_layer(model)
    spec = model.layers[layer]
    if spec.kind != "dense":
        raise VisualizationError(f"first layer is {spec.token()}; closed form needs a dense layer")
    if not 0 <= node < spec.size:
        raise IndexError(f"node {node} outside first layer of width {spec.size}")
    w = model.params[layer]["W"][node]
    norm = np.linalg.norm(w)
    if norm == 0.0:
        raise VisualizationError(f"node {node} has all-zero weights; visualization undefined")
    return (w / norm).reshape(model.input_shape)


def normalized_vr_slabs(model: NetworkModel, node: int) -> np.ndarray:
    """Unit-norm incoming weights of a VR-layer node, shaped ``(C, H, W)``."""
    w = model.params[model.vr_layer]["W"][node]
    norm = np.linalg.norm(w)
    if norm == 0.0:
        raise VisualizationError(f"node {node} has all-zero weights; visualization undefined")
    return (w / norm).reshape(model.vr_geometry)


@dataclass
class AscentResult:
    x: np.ndarray
    activation: float
    steps: int
    history: list = field(default_factory=list)
    seed: int = 0


def _unit(v):
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def activation_maximize(model: NetworkModel, layer: int, node: int, steps: int = 500,
                        step_size: float = 0.1, seed: int = 0, tol: float = 1e-9,
                        patience: int = 10) -> AscentResult:
    """Projected gradient ascent on the unit sphere: ``x <- normalize(x + step * dn/dx)``.

    Stops early once the activation gains less than ``tol`` over ``patience`` steps.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    rng = np.random.default_rng(seed)
    x = _unit(rng.standard_normal(model.input_shape))
    value, grad = network.node_activation(model, x, layer, node)
    history = [value]
    taken = 0
    for t in range(1, steps + 1):
        x = _unit(x + step_size * grad)
        value, grad = network.node_activation(model, x, layer, node)
        if not math.isfinite(value):
            raise FloatingPointError(f"non-finite activation at ascent step {t}")
        history.append(value)
        taken = t
        if len(history) > patience and history[-1] - history[-1 - patience] < tol:
            break
    return AscentResult(x=x, activation=value, steps=taken, history=history, seed=seed)


def cosine(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


# --- image export ------------------------------------------------------------

def quantize(img) -> np.ndarray:
    """Min-max scale to 0..255; constant images become mid-gray 128."""
    img = conv_core.as_matrix(img)
    if img.ndim != 2:
        raise ValueError(f"export one 2D panel at a time, got shape {img.shape}")
    lo, hi = float(img.min()), float(img.max())
    if hi == lo:
        return np.full(img.shape, 128, dtype=np.uint8)
    return np.rint((img - lo) / (hi - lo) * 255.0).astype(np.uint8)


def export_image(img, path, fmt: str | None = None) -> Path:
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".") or "pgm").lower()
    pix = quantize(img)
    if fmt == "pgm":
        h, w = pix.shape
        path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + pix.tobytes())
    elif fmt == "png":
        from PIL import Image

        Image.fromarray(pix, mode="L").save(path)
    else:
        raise ValueError(f"unsupported image format {fmt!r}")
    return path


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PGM not supported")
    body = raw[pos + 1:pos + 1 + w * h]
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w)


# --- loss tables -------------------------------------------------------------

@dataclass
class LossRow:
    image_id: str
    vl1: float
    vl2: float


def loss_table(images, ker: RelKernel, out_dir=None, names=None) -> list[LossRow]:
    """VL1 / VL2 per image; with ``out_dir``, also writes image and response panels
    plus ``loss_table.csv`` and ``loss_table.txt``."""
    images = list(images)
    if not images:
        raise ValueError("loss_table needs at least one image")
    names = list(names) if names is not None else [f"img{i:03d}" for i in range(len(images))]
    rows = [LossRow(n, visloss.vl1(im, ker), visloss.vl2(im, ker)) for n, im in zip(names, images)]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for n, im in zip(names, images):
            export_image(im, out / f"{n}.pgm")
            export_image(conv_core.conv_same(im, ker), out / f"{n}_response.pgm")
        write_loss_table(rows, out / "loss_table.csv", out / "loss_table.txt")
    return rows


def write_loss_table(rows, csv_path, txt_path=None) -> None:
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["image_id", "vl1", "vl2"])
        for r in rows:
            w.writerow([r.image_id, repr(r.vl1), repr(r.vl2)])
    if txt_path is not None:
        width = max(8, max(len(r.image_id) for r in rows))
        lines = [f"{'image':<{width}}  {'VL1':>14}  {'VL2':>14}"]
        lines += [f"{r.image_id:<{width}}  {r.vl1:>14.4f}  {r.vl2:>14.4f}" for r in rows]
        Path(txt_path).write_text("\n".join(lines) + "\n")


def white_noise(shape, rng) -> np.ndarray:
    return rng.uniform(0.0, 1.0, size=shape)


def gaussian_blob(shape, rng, sigma: float | None = None) -> np.ndarray:
    """Smooth blob with a random center, peak 1."""
    h, w = shape
    sigma = sigma or min(h, w) / 5.0
    cy, cx = rng.uniform(h * 0.3, h * 0.7), rng.uniform(w * 0.3, w * 0.7)
    yy, xx = np.mgrid[0:h, 0:w]
    return np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma ** 2))
