"""Experiment configuration files and the named architecture presets.

Config files are INI-style (``configparser``)::

    [experiment]
    name = mnist_fc_vr
    seed = 0
    output_dir = runs/mnist_fc_vr

    [data]
    dataset = mnist
    root = /data/mnist          ; or $VISREG_DATA when omitted

    [model]
    architecture = mnist_fc     ; preset name or an inline "fc(200) -- ..." string

    [regularizers]
    mu1 = 0
    mu2 = 0.01
    lambda = 0.01
    kernel = laplacian

    [trainer]
    learning_rate = 0.01
    momentum = 0.9
    schedule = mnist
    epochs = 250
    batch_size = 100
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import network
from .trainer import ConfigError, TrainConfig

PRESETS = {
    "mnist_fc": (
        "input(784) -- fc(1000) -- dropout(0.3) -- fc(1000) -- dropout(0.3) -- fc(1000) "
        "-- output(10)",
        "valid",
    ),
    "mnist_conv": (
        "input(28x28) -- conv(3x3, 64) -- conv(3x3, 64) -- dropout(0.1) -- maxpool(3x3) "
        "-- dropout(0.1) -- fc(1024) -- output(10)",
        "valid",
    ),
    # valid convolutions shrink 32x32 below the third 5x5 kernel, so this one pads
    "cifar_conv": (
        "input(32x32) -- conv(5x5, 64) -- dropout(0.1) -- maxpool(3x3) -- conv(5x5, 64) "
        "-- dropout(0.1) -- maxpool(3x3) -- conv(5x5, 64) -- dropout(0.1) -- maxpool(3x3) "
        "-- dropout(0.1) -- fc(384) -- dropout(0.1) -- fc(192) -- dropout(0.1) -- output(10)",
        "same",
    ),
}

DATASET_SHAPES = {"mnist": (1, 28, 28), "cifar10": (3, 32, 32)}


def expand_architecture(arch: str, conv_padding: str | None = None):
    """Preset name or inline string -> ``(declared_input_dims, layers)``."""
    if arch in PRESETS:
        text, padding = PRESETS[arch]
    else:
        text, padding = arch, "valid"
    return network.parse_architecture(text, conv_padding or padding)


def check_input_dims(declared, shape) -> None:
    if declared is None:
        return
    if len(declared) == 1 and declared[0] == int(np.prod(shape)):
        return
    if len(declared) == 2 and tuple(declared) == tuple(shape[1:]):
        return
    raise ConfigError("model.architecture",
                      f"input{declared} does not match dataset samples of shape {shape}")


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    dataset: str = "mnist"
    data_root: str | None = None
    train_files: tuple = ()
    test_files: tuple = ()
    train_subset: int | None = None
    test_subset: int | None = None
    standardize: bool = False
    architecture: str = "mnist_fc"
    conv_padding: str | None = None
    vr_layer: int | None = None
    output_dir: str = "runs/experiment"
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.dataset not in DATASET_SHAPES:
            raise ConfigError("data.dataset", f"must be one of {sorted(DATASET_SHAPES)}, "
                                              f"got {self.dataset!r}")
        for name in ("train_subset", "test_subset"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"data.{name}", f"must be >= 1, got {v}")
        if self.conv_padding not in (None, "valid", "same"):
            raise ConfigError("model.conv_padding", f"must be valid or same, got {self.conv_padding!r}")
        try:
            declared, layers = expand_architecture(self.architecture, self.conv_padding)
        except ValueError as e:
            raise ConfigError("model.architecture", str(e)) from None
        check_input_dims(declared, self.input_shape)
        try:
            network.validate_stack(layers, self.input_shape, self.vr_layer)
        except ValueError as e:
            raise ConfigError("model.architecture", str(e)) from None

    @property
    def input_shape(self) -> tuple:
        return DATASET_SHAPES[self.dataset]

    def layers(self):
        return expand_architecture(self.architecture, self.conv_padding)[1]

    def build_model(self):
        return network.build_model(self.layers(), self.input_shape, seed=self.train.seed,
                                   vr_layer=self.vr_layer)


def _opt(cp, section, key, conv, default=None):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key).strip()
    if raw == "":
        return default
    try:
        return conv(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"cannot parse {raw!r}") from None


def _bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def _list(raw: str) -> tuple:
    return tuple(p.strip() for p in raw.split(",") if p.strip())


def _steps(raw: str) -> tuple:
    out = []
    for part in _list(raw):
        epoch, rate = part.split(":")
        out.append((int(epoch), float(rate)))
    return tuple(out)


KNOWN = {
    "experiment": {"name", "seed", "output_dir"},
    "data": {"dataset", "root", "train_files", "test_files", "train_subset", "test_subset",
             "standardize"},
    "model": {"architecture", "conv_padding", "vr_layer"},
    "regularizers": {"mu1", "mu2", "lambda", "kernel"},
    "trainer": {"learning_rate", "momentum", "nesterov", "schedule", "schedule_steps", "epochs",
                "batch_size", "checkpoint_every"},
}


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError("file", str(e).splitlines()[0]) from None
    for section in cp.sections():
        if section not in KNOWN:
            raise ConfigError(section, "unknown section")
        for key in cp.options(section):
            if key not in KNOWN[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")
    if not cp.has_option("data", "dataset"):
        raise ConfigError("data.dataset", "required")
    if not cp.has_option("model", "architecture"):
        raise ConfigError("model.architecture", "required")

    d = TrainConfig()
    train = TrainConfig(
        mu1=_opt(cp, "regularizers", "mu1", float, d.mu1),
        mu2=_opt(cp, "regularizers", "mu2", float, d.mu2),
        lam=_opt(cp, "regularizers", "lambda", float, d.lam),
        kernel=_opt(cp, "regularizers", "kernel", str, d.kernel),
        learning_rate=_opt(cp, "trainer", "learning_rate", float, d.learning_rate),
        momentum=_opt(cp, "trainer", "momentum", float, d.momentum),
        nesterov=_opt(cp, "trainer", "nesterov", _bool, d.nesterov),
        schedule=_opt(cp, "trainer", "schedule", str, d.schedule),
        schedule_steps=_opt(cp, "trainer", "schedule_steps", _steps, d.schedule_steps),
        epochs=_opt(cp, "trainer", "epochs", int, d.epochs),
        batch_size=_opt(cp, "trainer", "batch_size", int, d.batch_size),
        checkpoint_every=_opt(cp, "trainer", "checkpoint_every", int, d.checkpoint_every),
        seed=_opt(cp, "experiment", "seed", int, d.seed),
    )
    name = _opt(cp, "experiment", "name", str, "experiment")
    return ExperimentConfig(
        name=name,
        output_dir=_opt(cp, "experiment", "output_dir", str, f"runs/{name}"),
        dataset=_opt(cp, "data", "dataset", str),
        data_root=_opt(cp, "data", "root", str),
        train_files=_opt(cp, "data", "train_files", _list, ()),
        test_files=_opt(cp, "data", "test_files", _list, ()),
        train_subset=_opt(cp, "data", "train_subset", int),
        test_subset=_opt(cp, "data", "test_subset", int),
        standardize=_opt(cp, "data", "standardize", _bool, False),
        architecture=_opt(cp, "model", "architecture", str),
        conv_padding=_opt(cp, "model", "conv_padding", str),
        vr_layer=_opt(cp, "model", "vr_layer", int),
        train=train,
    )


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError("file", f"cannot read {path}: {e.strerror}") from None
    return parse_config(text)


def serialize_config(cfg: ExperimentConfig) -> str:
    t = cfg.train
    cp = configparser.ConfigParser(interpolation=None)
    cp["experiment"] = {"name": cfg.name, "seed": str(t.seed), "output_dir": cfg.output_dir}
    data = {"dataset": cfg.dataset, "standardize": str(cfg.standardize).lower()}
    if cfg.data_root is not None:
        data["root"] = cfg.data_root
    if cfg.train_files:
        data["train_files"] = ", ".join(cfg.train_files)
    if cfg.test_files:
        data["test_files"] = ", ".join(cfg.test_files)
    for key in ("train_subset", "test_subset"):
        if getattr(cfg, key) is not None:
            data[key] = str(getattr(cfg, key))
    cp["data"] = data
    model = {"architecture": cfg.architecture}
    if cfg.conv_padding is not None:
        model["conv_padding"] = cfg.conv_padding
    if cfg.vr_layer is not None:
        model["vr_layer"] = str(cfg.vr_layer)
    cp["model"] = model
    cp["regularizers"] = {"mu1": repr(float(t.mu1)), "mu2": repr(float(t.mu2)),
                          "lambda": repr(float(t.lam)), "kernel": t.kernel}
    trainer = {
        "learning_rate": repr(float(t.learning_rate)),
        "momentum": repr(float(t.momentum)),
        "nesterov": str(t.nesterov).lower(),
        "schedule": t.schedule,
        "epochs": str(t.epochs),
        "batch_size": str(t.batch_size),
        "checkpoint_every": str(t.checkpoint_every),
    }
    if t.schedule_steps:
        trainer["schedule_steps"] = ", ".join(f"{e}:{r!r}" for e, r in t.schedule_steps)
    cp["trainer"] = trainer
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def with_overrides(cfg: ExperimentConfig, **train_fields) -> ExperimentConfig:
    return replace(cfg, train=replace(cfg.train, **train_fields))
