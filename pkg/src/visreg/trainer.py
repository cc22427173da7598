"""Regularized minibatch SGD with momentum, learning-rate schedules and metrics."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import network
from .conv_core import RelKernel, get_kernel
from .data import Dataset, minibatches
from .network import Batch, NetworkModel

log = logging.getLogger(__name__)

SCHEDULES = ("mnist", "cifar", "constant", "steps")
METRICS_COLUMNS = ("epoch", "learning_rate", "train_loss", "train_acc", "test_acc",
                   "vl1", "vl2", "l2prime")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, lr: float, loss: float):
        super().__init__(f"non-finite loss ({loss}) in epoch {epoch} at learning rate {lr:g}")
        self.epoch = epoch
        self.lr = lr


@dataclass
class TrainConfig:
    mu1: float = 0.0
    mu2: float = 0.0
    lam: float = 0.0
    learning_rate: float = 0.01
    momentum: float = 0.9
    nesterov: bool = False
    schedule: str = "constant"
    schedule_steps: tuple = ()
    epochs: int = 1
    batch_size: int = 100
    seed: int = 0
    kernel: str = "laplacian"
    checkpoint_every: int = 0

    def __post_init__(self):
        for name in ("mu1", "mu2", "lam"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ConfigError(name, f"must be a finite non-negative number, got {v!r}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate", f"must be positive, got {self.learning_rate!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum", f"must be in [0, 1), got {self.momentum!r}")
        if self.schedule not in SCHEDULES:
            raise ConfigError("schedule", f"must be one of {SCHEDULES}, got {self.schedule!r}")
        self.schedule_steps = tuple(tuple(s) for s in self.schedule_steps)
        if self.schedule == "steps" and not self.schedule_steps:
            raise ConfigError("schedule_steps", "required for the 'steps' schedule")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ConfigError("epochs", f"must be an integer >= 1, got {self.epochs!r}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ConfigError("batch_size", f"must be an integer >= 1, got {self.batch_size!r}")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every", "must be >= 0")
        try:
            get_kernel(self.kernel)
        except ValueError as e:
            raise ConfigError("kernel", str(e)) from None


@dataclass
class MetricsRow:
    epoch: int
    learning_rate: float
    train_loss: float
    train_acc: float
    test_acc: float
    vl1: float
    vl2: float
    l2prime: float
    seconds: float = field(default=0.0, compare=False)


def lr_schedule(schedule: str, epoch: int, alpha0: float, steps=()) -> float:
    """Learning rate for a 0-based ``epoch``.

    ``mnist``: ``alpha0`` for epochs 0-74, then ``alpha0 / 2`` divided by 1.3
    every further 25 epochs. ``cifar``: divided by 1.3 every 500 epochs.
    ``steps``: ``[(epoch, rate), ...]``, the last entry at or before ``epoch`` wins.
    """
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    if schedule == "constant":
        return alpha0
    if schedule == "cifar":
        return alpha0 / 1.3 ** (epoch // 500)
    if schedule == "mnist":
        if epoch < 75:
            return alpha0
        return 0.5 * alpha0 / 1.3 ** ((epoch - 75) // 25)
    if schedule == "steps":
        rate = alpha0
        for start, r in sorted(steps):
            if epoch >= start:
                rate = r
        return rate
    raise ValueError(f"unknown schedule {schedule!r}")


def evaluate(model: NetworkModel, ds: Dataset) -> float:
    if len(ds) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    pred = np.argmax(network.predict(model, ds.images), axis=1)
    return float(np.mean(pred == ds.labels))


class SGD:
    """Classical (or Nesterov) momentum over a params list with ``None`` holes."""

    def __init__(self, momentum=0.9, nesterov=False):
        self.momentum = momentum
        self.nesterov = nesterov
        self.velocity = None

    def step(self, model: NetworkModel, grads: list, lr: float):
        if self.velocity is None:
            self.velocity = [None if g is None else {k: np.zeros_like(v) for k, v in g.items()}
                             for g in grads]
        for p, g, v in zip(model.params, grads, self.velocity):
            if g is None:
                continue
            for k in g:
                v[k] = self.momentum * v[k] + g[k]
                if self.nesterov:
                    p[k] -= lr * (g[k] + self.momentum * v[k])
                else:
                    p[k] -= lr * v[k]
        model.version += 1


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_metrics(rows, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in METRICS_COLUMNS])


def read_metrics(path) -> list[MetricsRow]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [MetricsRow(epoch=int(r["epoch"]),
                       **{c: float(r[c]) for c in METRICS_COLUMNS if c != "epoch"}) for r in rows]


def train(config: TrainConfig, data: Dataset, model: NetworkModel,
          test_data: Dataset | None = None, out_dir=None, callback=None):
    """Train ``model`` in place; returns ``(model, [MetricsRow, ...])``.

    With ``out_dir`` set, writes ``metrics.csv`` (deterministic), ``timing.csv``
    (wall-clock seconds per epoch) and checkpoints every
    ``config.checkpoint_every`` epochs.
    """
    if data.shape != model.input_shape:
        raise ValueError(f"data samples are {data.shape}, model expects {model.input_shape}")
    ker = get_kernel(config.kernel)
    opt = SGD(config.momentum, config.nesterov)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rows = []
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        lr = lr_schedule(config.schedule, epoch, config.learning_rate, config.schedule_steps)
        drop_rng = np.random.default_rng([config.seed, 2, epoch])
        losses = []
        for idx in minibatches(data, config.batch_size, config.seed, epoch):
            batch = Batch(data.images[idx], data.labels[idx])
            loss = train_step(model, batch, ker, config, lr, opt, drop_rng)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, lr, loss)
            losses.append(loss)
        row = epoch_metrics(model, data, test_data, ker, epoch, lr, float(np.mean(losses)))
        row.seconds = time.perf_counter() - t0
        rows.append(row)
        log.info("epoch %d lr=%g loss=%.6f train_acc=%.4f test_acc=%.4f vl2=%.4g",
                 epoch, lr, row.train_loss, row.train_acc, row.test_acc, row.vl2)
        if out is not None:
            write_metrics(rows, out / "metrics.csv")
            with open(out / "timing.csv", "w") as f:
                f.write("epoch,seconds\n")
                f.writelines(f"{r.epoch},{r.seconds:.6f}\n" for r in rows)
            if config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
                network.save_model(model, out / f"checkpoint_epoch{epoch + 1:04d}.npz")
        if callback is not None:
            callback(row)
    if out is not None:
        network.save_model(model, out / "final.npz")
    return model, rows


def train_step(model, batch, ker: RelKernel, config: TrainConfig, lr: float, opt: SGD,
               rng) -> float:
    """One minibatch update; returns the batch's total loss before the step."""
    cache = network.forward(model, batch.inputs, "train", rng)
    loss = network.total_loss(model, batch, ker, config.mu1, config.mu2, config.lam, cache=cache)
    if not math.isfinite(loss):
        return loss
    grads = network.backward(model, batch, ker, config.mu1, config.mu2, config.lam, cache)
    opt.step(model, grads, lr)
    return loss


def epoch_metrics(model, data, test_data, ker, epoch, lr, train_loss) -> MetricsRow:
    return MetricsRow(
        epoch=epoch,
        learning_rate=lr,
        train_loss=train_loss,
        train_acc=evaluate(model, data),
        test_acc=evaluate(model, test_data) if test_data is not None and len(test_data) else 0.0,
        vl1=network.vr_loss(model, ker, 1),
        vl2=network.vr_loss(model, ker, 2),
        l2prime=network.l2_prime(model),
    )


def _median_time(fn, repeats: int) -> float:
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def vr_overhead_bench(model: NetworkModel, batch: Batch, ker: RelKernel, repeats: int = 7,
                      norm: int = 2) -> dict:
    """Median wall times of the VR gradient, the L2' gradient and classification backprop."""
    def backprop():
        cache = network.forward(model, batch.inputs, "eval")
        network.classification_grad(model, batch, cache)

    return {
        "t_vr": _median_time(lambda: network.vr_grad(model, ker, norm), repeats),
        "t_l2": _median_time(lambda: network.l2_grad(model), repeats),
        "t_backprop": _median_time(backprop, repeats),
    }


def vr_scaling(widths, layers_for_width, input_shape, ker: RelKernel, repeats: int = 9,
               seed: int = 0) -> list[dict]:
    """Time the VR gradient for models whose VR layer has each width in ``widths``.

    ``layers_for_width(w)`` returns the layer list for width ``w``. Each result
    row carries the VR weight count, ``t_vr`` and the ratio to the previous row.
    """
    rows = []
    for w in widths:
        model = network.build_model(layers_for_width(w), input_shape, seed=seed)
        n = model.params[model.vr_layer]["W"].size
        t = _median_time(lambda: network.vr_grad(model, ker, 2), repeats)
        ratio = t / rows[-1]["t_vr"] if rows else float("nan")
        rows.append({"width": w, "vr_weights": n, "t_vr": t, "ratio": ratio})
    return rows


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of log(y) against log(x); 1.0 means linear scaling."""
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])

