"""``visreg`` command line: train, verify, visualize, bench, loss-table, gamma.

Exit codes: 0 success, 1 failed verification, 2 configuration or usage error,
3 training diverged.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import conv_core, data, network, tikhonov, trainer, verification, visloss, visualize
from .config import ExperimentConfig, load_config
from .trainer import ConfigError, TrainingDiverged

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3

log = logging.getLogger("visreg")


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def load_datasets(cfg: ExperimentConfig, root=None):
    """Train and (optional) test datasets for ``cfg``; raises ConfigError on missing files."""
    def from_files(files, split):
        for f in files:
            if not Path(f).exists():
                raise ConfigError(f"data.{split}_files", f"{f} does not exist")
        if cfg.dataset == "mnist":
            if len(files) != 2:
                raise ConfigError(f"data.{split}_files", "mnist needs 'images, labels'")
            return data.load_mnist(files[0], files[1], split)
        return data.load_cifar10(files, split)

    try:
        if cfg.train_files:
            train = from_files(cfg.train_files, "train")
            test = from_files(cfg.test_files, "test") if cfg.test_files else None
        else:
            where = root or cfg.data_root
            train = data.load_split(cfg.dataset, "train", where)
            try:
                test = data.load_split(cfg.dataset, "test", where)
            except FileNotFoundError:
                test = None
    except FileNotFoundError as e:
        raise ConfigError("data.root", str(e)) from None
    except data.FormatError as e:
        raise ConfigError("data", str(e)) from None
    train = train.subset(cfg.train_subset)
    if test is not None:
        test = test.subset(cfg.test_subset)
    if cfg.standardize:
        stats = data.channel_stats(train)
        train = data.standardize(train, stats)
        test = data.standardize(test, stats) if test is not None else None
    return train, test


def cmd_train(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.output_dir:
            cfg.output_dir = args.output_dir
        train_ds, test_ds = load_datasets(cfg, args.data_root)
    except ConfigError as e:
        _err(f"invalid config: {e}")
        return EXIT_CONFIG
    model = cfg.build_model()
    out = Path(cfg.output_dir)
    print(f"experiment {cfg.name}  seed={cfg.train.seed}")
    print(f"architecture: {model.describe()}  (VR layer {model.vr_layer}, "
          f"slabs {model.vr_geometry})")
    print(f"train samples: {len(train_ds)}  test samples: {len(test_ds) if test_ds else 0}")
    out.mkdir(parents=True, exist_ok=True)
    from .config import serialize_config
    (out / "config.ini").write_text(serialize_config(cfg))
    try:
        _, rows = trainer.train(cfg.train, train_ds, model, test_ds, out_dir=out)
    except TrainingDiverged as e:
        _err(f"training diverged: {e}")
        return EXIT_DIVERGED
    last = rows[-1]
    print(f"final train accuracy: {last.train_acc:.4f}")
    print(f"final test accuracy: {last.test_acc:.4f}")
    print(f"metrics: {out / 'metrics.csv'}  checkpoint: {out / 'final.npz'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    print(f"seed: {args.seed}")
    results = verification.run_all(seed=args.seed)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print("all suites passed" if ok else "verification FAILED")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_visualize(args) -> int:
    try:
        model = network.load_model(args.checkpoint)
        ker = conv_core.get_kernel(args.kernel)
    except (OSError, ValueError, KeyError) as e:
        _err(str(e))
        return EXIT_CONFIG
    first = visualize.first_param_layer(model)
    closed_form = model.layers[first].kind == "dense" and first == model.vr_layer
    layer = first if closed_form else model.vr_layer
    width = model.layers[layer].size
    if args.count > width:
        _err(f"--count {args.count} exceeds layer width {width}")
        return EXIT_CONFIG
    W = model.params[layer]["W"]
    order = np.argsort(-np.linalg.norm(W, axis=1), kind="stable")[: args.count]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for node in order:
        try:
            vis = (visualize.vis_first_layer(model, int(node)) if closed_form
                   else visualize.normalized_vr_slabs(model, int(node)))
        except visualize.VisualizationError as e:
            _err(str(e))
            return EXIT_CONFIG
        for c, panel in enumerate(vis):
            tag = f"node{int(node):04d}" + (f"_c{c}" if len(vis) > 1 else "")
            visualize.export_image(panel, out / f"{tag}.{args.format}", args.format)
            visualize.export_image(conv_core.conv_same(panel, ker),
                                   out / f"{tag}_response.{args.format}", args.format)
        rows.append(visualize.LossRow(f"node{int(node):04d}",
                                      visloss.vl_model(vis, ker, 1), visloss.vl_model(vis, ker, 2)))
    visualize.write_loss_table(rows, out / "loss_table.csv", out / "loss_table.txt")
    print((out / "loss_table.txt").read_text(), end="")
    print(f"mean VL2: {np.mean([r.vl2 for r in rows]):.6g}")
    return EXIT_OK


def _width_variant(layers, vr_layer, width):
    out = list(layers)
    out[vr_layer] = network.dense(width, layers[vr_layer].activation)
    return out


def cmd_bench(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        _err(f"invalid config: {e}")
        return EXIT_CONFIG
    ker = conv_core.get_kernel(cfg.train.kernel)
    rng = np.random.default_rng(cfg.train.seed)
    model = cfg.build_model()
    print(f"seed: {cfg.train.seed}")
    print(f"architecture: {model.describe()}")

    def batch_of(n):
        return network.Batch(rng.random((n,) + model.input_shape),
                             rng.integers(0, model.n_classes, n))

    t = trainer.vr_overhead_bench(model, batch_of(cfg.train.batch_size), ker, args.repeats)
    print(f"{'t_vr':>12} {'t_l2':>12} {'t_backprop':>12}")
    print(f"{t['t_vr']:>12.6f} {t['t_l2']:>12.6f} {t['t_backprop']:>12.6f}")

    layers = cfg.layers()
    vr = model.vr_layer
    rows = trainer.vr_scaling(args.widths, lambda w: _width_variant(layers, vr, w),
                              model.input_shape, ker, args.repeats, cfg.train.seed)
    print(f"\n{'width':>8} {'vr_weights':>12} {'t_vr':>12} {'ratio':>8}")
    for r in rows:
        print(f"{r['width']:>8} {r['vr_weights']:>12} {r['t_vr']:>12.6f} {r['ratio']:>8.3f}")
    slope = trainer.loglog_slope([r["vr_weights"] for r in rows], [r["t_vr"] for r in rows])
    print(f"log-log slope of t_vr vs weight count: {slope:.3f}")

    print(f"\n{'batch':>8} {'t_vr':>12}")
    for n in args.batch_sizes:
        tb = trainer.vr_overhead_bench(model, batch_of(n), ker, args.repeats)
        print(f"{n:>8} {tb['t_vr']:>12.6f}")
    return EXIT_OK


def cmd_loss_table(args) -> int:
    ker = conv_core.get_kernel(args.kernel)
    if args.images:
        try:
            images = [visualize.read_pgm(p).astype(np.float64) / 255.0 for p in args.images]
        except (OSError, ValueError) as e:
            _err(str(e))
            return EXIT_CONFIG
        names = [Path(p).stem for p in args.images]
    else:
        rng = np.random.default_rng(args.seed)
        images, names = [], []
        for i in range(args.synthetic):
            images += [visualize.white_noise((28, 28), rng), visualize.gaussian_blob((28, 28), rng)]
            names += [f"noise{i:02d}", f"blob{i:02d}"]
        print(f"seed: {args.seed}")
    rows = visualize.loss_table(images, ker, args.out_dir, names)
    print(Path(args.out_dir, "loss_table.txt").read_text(), end="")
    print("pixel values scaled to [0, 1], no further normalization")
    return EXIT_OK


def cmd_gamma(args) -> int:
    ker = conv_core.get_kernel(args.kernel)
    gamma = tikhonov.build_gamma((args.rows, args.cols), args.slabs, ker)
    stats = tikhonov.gamma_stats(gamma)
    bound = gamma.n_rows * ker.size ** 2
    print(f"shape {gamma.n_rows}x{gamma.n_cols}  nnz {stats['nnz']} (bound {bound})  "
          f"density {stats['density']:.3e}")
    if args.out:
        tikhonov.write_triplets(gamma, args.out)
        print(f"triplets written to {args.out}")
    return EXIT_OK


def _int_list(text):
    return [int(t) for t in text.split(",") if t]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="visreg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from an experiment config")
    t.add_argument("config")
    t.add_argument("--data-root", help=f"dataset directory (default ${data.DATA_ROOT_ENV})")
    t.add_argument("--output-dir", help="override [experiment] output_dir")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("verify", help="run the oracle suites")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)

    z = sub.add_parser("visualize", help="export first-layer visualizations of a checkpoint")
    z.add_argument("checkpoint")
    z.add_argument("out_dir")
    z.add_argument("--kernel", default="laplacian")
    z.add_argument("--count", type=int, default=16)
    z.add_argument("--format", choices=("pgm", "png"), default="pgm")
    z.set_defaults(func=cmd_visualize)

    b = sub.add_parser("bench", help="time VR, L2 and backprop gradients")
    b.add_argument("config")
    b.add_argument("--repeats", type=int, default=9)
    b.add_argument("--widths", type=_int_list, default=[128, 256, 512, 1024, 2048])
    b.add_argument("--batch-sizes", type=_int_list, default=[25, 50, 100, 200])
    b.set_defaults(func=cmd_bench)

    lt = sub.add_parser("loss-table", help="VL1/VL2 table and response panels for images")
    lt.add_argument("out_dir")
    lt.add_argument("--images", nargs="*", help="binary PGM files; synthetic pairs if omitted")
    lt.add_argument("--synthetic", type=int, default=4, help="noise/blob pairs to generate")
    lt.add_argument("--seed", type=int, default=0)
    lt.add_argument("--kernel", default="laplacian")
    lt.set_defaults(func=cmd_loss_table)

    g = sub.add_parser("gamma", help="build the sparse Tikhonov matrix for a slab geometry")
    g.add_argument("rows", type=int)
    g.add_argument("cols", type=int)
    g.add_argument("--slabs", type=int, default=1)
    g.add_argument("--kernel", default="laplacian")
    g.add_argument("--out", help="write 'row col value' triplets here")
    g.set_defaults(func=cmd_gamma)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
