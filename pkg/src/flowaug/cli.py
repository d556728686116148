"""Command-line entry points for the full pipeline.

Every stochastic command requires --seed; configuration comes from an
optional key=value file plus repeatable --set overrides, and the effective
configuration is echoed into the output directory so any completed run can
be reproduced from its artifacts alone.

Exit codes: 0 success, 2 usage error, 3 malformed configuration,
4 I/O failure, 5 invalid data or arguments, 6 training diverged,
1 unexpected internal error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_VALIDATION = 5
EXIT_DIVERGED = 6

_EPILOG = """\
exit codes:
  0  success
  2  usage error (unknown command or flag)
  3  malformed configuration (bad key, value, or config file)
  4  I/O failure (missing or unreadable file)
  5  invalid data or arguments
  6  training diverged
  1  unexpected internal error
"""


class ConfigError(ValueError):
    pass


def _load_config(args):
    from .io import RunConfig
    from .io.config import parse_assignment

    try:
        if getattr(args, "config", None):
            try:
                config = RunConfig.load(args.config)
            except OSError as exc:
                raise ConfigError(f"cannot read config file: {exc}") from exc
        else:
            config = RunConfig()
        overrides = {}
        for assignment in getattr(args, "set", None) or []:
            key, value = parse_assignment(assignment)
            overrides[key] = value
        if getattr(args, "seed", None) is not None:
            overrides["seed"] = args.seed
        return config.with_overrides(overrides)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _echo_config(config, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    config.save(os.path.join(out_dir, "config.txt"))


def _load_images(path):
    from .io import load_dataset

    try:
        return load_dataset(path)
    except FileNotFoundError as exc:
        raise exc


def _build_model(config, seed: int):
    from .core import derive_seed
    from .flows import MultiScaleFlow

    size = config["data.size"]
    return MultiScaleFlow(config.flow_config(), (size, size, 1), seed=derive_seed(seed, "init"))


def _load_model(config, path, seed: int):
    from .io import load_checkpoint

    model = _build_model(config, seed)
    return load_checkpoint(path, model)


def cmd_gen_data(args) -> int:
    from .harness import generate_synthetic_dataset
    from .io import save_dataset

    config = _load_config(args)
    dataset = generate_synthetic_dataset(config.data_config())
    save_dataset(args.out, dataset)
    _echo_config(config, args.out)
    counts = ",".join(str(c) for c in dataset.counts())
    print(f"wrote {dataset.images.shape[0]} images ({counts}) to {args.out}")
    return EXIT_OK


def cmd_train_flow(args) -> int:
    from dataclasses import replace

    from .core import derive_seed
    from .io import save_checkpoint
    from .training import Dequantizer, fit

    config = _load_config(args)
    dataset = _load_images(args.data)
    images = dataset.images
    if args.label is not None:
        images = images[dataset.labels == args.label]
        if images.shape[0] == 0:
            raise ValueError(f"no images with label {args.label} in {args.data}")
    model = _build_model(config, config["seed"])
    train_config = replace(config.train_config(), seed=derive_seed(config["seed"], "train"))
    history = fit(model, images, train_config, dequantizer=Dequantizer())
    os.makedirs(args.out, exist_ok=True)
    save_checkpoint(os.path.join(args.out, "model.ckpt"), model)
    with open(os.path.join(args.out, "history.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "nll_nats", "bits_per_dim", "lr"])
        for report in history:
            writer.writerow(
                [report.step, f"{report.nll_nats:.6f}", f"{report.bits_per_dim:.6f}",
                 f"{report.lr:.8f}"]
            )
    _echo_config(config, args.out)
    last = history[-1].bits_per_dim if history else float("nan")
    print(f"trained on {images.shape[0]} images, final {last:.3f} bits/dim, "
          f"checkpoint in {args.out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    from .core import make_rng
    from .io import sample_sheet, write_pgm

    config = _load_config(args)
    model = _load_model(config, args.model, config["seed"])
    rng = make_rng(config["seed"], "sample")
    images = model.sample(args.n, rng, args.temperature)
    from .augment import quantize_to_grid

    images = quantize_to_grid(images, 1.0 / 256.0)
    os.makedirs(args.out, exist_ok=True)
    for i in range(images.shape[0]):
        write_pgm(os.path.join(args.out, f"sample_{i:03d}.pgm"), images[i])
    write_pgm(os.path.join(args.out, "sheet.pgm"), sample_sheet(images))
    _echo_config(config, args.out)
    print(f"wrote {args.n} samples at temperature {args.temperature} to {args.out}")
    return EXIT_OK


def cmd_augment(args) -> int:
    from .augment import generate_augmentations, write_provenance
    from .core import make_rng
    from .io import sample_sheet, write_pgm

    config = _load_config(args)
    dataset = _load_images(args.data)
    target = config["crossval.rare_class"]
    sources = np.flatnonzero(dataset.labels == target)
    model = _load_model(config, args.model, config["seed"])
    augmentation = generate_augmentations(
        model,
        dataset.images[sources],
        args.count,
        config.interpolation_spec(),
        make_rng(config["seed"], "augment"),
        source_ids=sources,
    )
    os.makedirs(args.out, exist_ok=True)
    for i in range(augmentation.images.shape[0]):
        write_pgm(os.path.join(args.out, f"aug_{i:04d}.pgm"), augmentation.images[i])
    if augmentation.images.shape[0]:
        write_pgm(os.path.join(args.out, "sheet.pgm"), sample_sheet(augmentation.images[:64]))
    write_provenance(os.path.join(args.out, "provenance.csv"), augmentation)
    _echo_config(config, args.out)
    print(f"wrote {args.count} synthetic class-{target} images to {args.out}")
    return EXIT_OK


def cmd_crossval(args) -> int:
    from dataclasses import replace

    from .harness import audit_leakage, cross_validate, generate_synthetic_dataset
    from .harness import write_metrics_csv, write_summary_csv

    config = _load_config(args)
    dataset = _load_images(args.data) if args.data else generate_synthetic_dataset(
        config.data_config()
    )
    k = args.k if args.k is not None else config["crossval.k"]
    count = args.augment if args.augment is not None else config["augment.count"]
    recipe = replace(config.augment_recipe(), count=count)
    result = cross_validate(
        dataset,
        k,
        recipe,
        config["seed"],
        rare_class=config["crossval.rare_class"],
        classifier_params=config.classifier_params(),
    )
    checks = audit_leakage(result)

    os.makedirs(args.out, exist_ok=True)
    write_metrics_csv(os.path.join(args.out, "metrics.csv"), result, dataset.class_names)
    write_summary_csv(os.path.join(args.out, "summary.csv"), result, dataset.class_names)
    with open(os.path.join(args.out, "provenance.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source_a", "source_b", "t", "fold_id"])
        for record in result.records:
            for p in record.provenance:
                writer.writerow([p.source_a, p.source_b, f"{p.t:.12g}", p.fold_id])
    _echo_config(config, args.out)
    print(
        f"{k}-fold paired run, {checks} leakage checks passed; rare-class F1 delta "
        f"median {result.delta_median:+.4f}, sign test p {result.p_value:.4f}, "
        f"macro F1 {result.baseline.macro_f1_mean:.4f} -> {result.augmented.macro_f1_mean:.4f}"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .harness import augmentation_size_sweep, generate_synthetic_dataset
    from .harness.sweep import write_sweep_csv, write_sweep_plot

    config = _load_config(args)
    dataset = _load_images(args.data) if args.data else generate_synthetic_dataset(
        config.data_config()
    )
    sizes = (
        tuple(int(s) for s in args.sizes.split(",")) if args.sizes else config["sweep.sizes"]
    )
    runs = args.runs if args.runs is not None else config["sweep.runs"]
    result = augmentation_size_sweep(
        dataset,
        sizes,
        runs,
        config["seed"],
        recipe=config.augment_recipe(),
        rare_class=config["crossval.rare_class"],
        classifier_params=config.classifier_params(),
    )
    os.makedirs(args.out, exist_ok=True)
    write_sweep_csv(os.path.join(args.out, "sweep.csv"), result, dataset.class_names)
    write_sweep_plot(os.path.join(args.out, "sweep.png"), result, dataset.class_names)
    with open(os.path.join(args.out, "recommendation.txt"), "w") as fh:
        fh.write(f"recommended_size = {result.recommended_size}\n")
    _echo_config(config, args.out)
    print(f"swept sizes {list(sizes)} x {runs} runs; recommended size "
          f"{result.recommended_size}; artifacts in {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_verification

    failures, total = run_verification(verbose=True)
    if failures:
        print(f"{failures} of {total} property checks FAILED")
        return EXIT_VALIDATION
    print(f"all {total} property checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowaug",
        description="Normalizing-flow oversampling pipeline for imbalanced images.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_required=True):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--seed", type=int, required=seed_required,
                       help="RNG seed (required: the command is stochastic)")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("gen-data", help="generate the synthetic labeled dataset")
    common(p)
    p.set_defaults(handler=cmd_gen_data)

    p = sub.add_parser("train-flow", help="train the density model on a dataset")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory (from gen-data)")
    p.add_argument("--label", type=int, default=None,
                   help="train on this class only (default: all images)")
    p.set_defaults(handler=cmd_train_flow)

    p = sub.add_parser("sample", help="draw prior samples from a trained model")
    common(p)
    p.add_argument("--model", required=True, help="checkpoint file (from train-flow)")
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--temperature", type=float, default=1.0,
                   help="prior scale; 0 is deterministic (default 1.0)")
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("augment", help="synthesize rare-class images by interpolation")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory (from gen-data)")
    p.add_argument("--model", required=True, help="checkpoint file (from train-flow)")
    p.add_argument("--count", type=int, required=True, help="number of synthetic images")
    p.set_defaults(handler=cmd_augment)

    p = sub.add_parser("crossval", help="paired k-fold comparison of both arms")
    common(p)
    p.add_argument("--data", default=None, help="dataset directory (default: generate)")
    p.add_argument("--k", type=int, default=None, help="fold count (default from config)")
    p.add_argument("--augment", type=int, default=None,
                   help="synthetic images per fold; 0 disables (default from config)")
    p.set_defaults(handler=cmd_crossval)

    p = sub.add_parser("sweep", help="accuracy against augmentation size")
    common(p)
    p.add_argument("--data", default=None, help="dataset directory (default: generate)")
    p.add_argument("--sizes", default=None, help="comma-separated sizes (default from config)")
    p.add_argument("--runs", type=int, default=None, help="runs per size (default from config)")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("verify", help="run the invariant suite")
    p.set_defaults(handler=cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    from .training import TrainingDiverged

    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDiverged, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
