"""Command line entrance for halftoning, restoring, training and evaluating"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .checkpoint import load_checkpoint
from .config import TrainConfig, load_train_config
from .dataset import Dataset, load_split
from .exceptions import ConfigError, MsprlError
from .halftone import DEFAULT_SIGMA, floyd_steinberg
from .image import center_crop, images_to_tensor, load_image, save_image
from .model import (
    ModelConfig,
    build_model,
    count_parameters,
    dump_feature_maps,
    parameter_breakdown,
)
from .trainer import (
    SIZE_MULTIPLE,
    GaussianRestorer,
    ModelRestorer,
    Restorer,
    Trainer,
    evaluate,
    run_ablation,
    write_ablation_csv,
)

logger = logging.getLogger("msprl")

ABLATION_GRID = "sfe,ff"


def _config(path: Optional[str]) -> TrainConfig:
    return load_train_config(path) if path else TrainConfig()


def _split(root: str, split: str, min_side: int) -> Dataset:
    return load_split(root, split, min_side)


def _held_out(root: str, min_side: int, fallback: Dataset) -> Dataset:
    """The `val` split when the data directory lists one, else `fallback`"""
    if (Path(root) / "val.txt").is_file():
        return _split(root, "val", min_side)
    return fallback


def _restorer(args: argparse.Namespace) -> Restorer:
    if args.baseline == "gaussian":
        return GaussianRestorer(args.sigma)
    if not args.checkpoint:
        raise ConfigError("either --checkpoint or --baseline gaussian is required")
    return ModelRestorer(load_checkpoint(args.checkpoint).build_model())


def cmd_halftone(args: argparse.Namespace) -> None:
    """Floyd-Steinberg halftone of one PGM"""
    save_image(floyd_steinberg(load_image(args.input)), args.output)


def cmd_restore(args: argparse.Namespace) -> None:
    """Continuous-tone estimate of one halftone PGM"""
    restorer = _restorer(args)
    image = load_image(args.input)
    if isinstance(restorer, ModelRestorer):
        cropped_image, cropped = center_crop(image, SIZE_MULTIPLE)
        if cropped:
            logger.warning(
                "%s: cropped %dx%d to %dx%d",
                args.input,
                image.height,
                image.width,
                cropped_image.height,
                cropped_image.width,
            )
        image = cropped_image
    save_image(restorer.restore(image), args.output)


def cmd_train(args: argparse.Namespace) -> None:
    """Train a model from a configuration file"""
    cfg = _config(args.config)
    if args.out:
        cfg = cfg.replace(checkpoint_dir=args.out)
    train_set = _split(args.data, "train", cfg.min_side)
    val_set = _held_out(args.data, cfg.min_side, Dataset([]))
    resume = load_checkpoint(args.resume) if args.resume else None
    trainer = Trainer(cfg, train_set, val_set=val_set, resume=resume)
    trainer.run()
    logger.info("final checkpoint written to %s", cfg.checkpoint_dir)


def cmd_evaluate(args: argparse.Namespace) -> None:
    """PSNR / SSIM report of a checkpoint or the baseline"""
    restorer = _restorer(args)
    report = evaluate(restorer, _split(args.data, args.split, args.min_side))
    if args.csv:
        report.write_csv(args.csv)
    print(f"MEAN psnr_db={report.mean_psnr:.4f} ssim={report.mean_ssim:.4f}")


def cmd_ablate(args: argparse.Namespace) -> None:
    """Train and score the four SFE x FF variants"""
    if args.grid != ABLATION_GRID:
        raise ConfigError(f"unsupported ablation grid '{args.grid}', expected '{ABLATION_GRID}'")
    cfg = _config(args.config)
    if args.out:
        cfg = cfg.replace(checkpoint_dir=args.out)
    train_set = _split(args.data, "train", cfg.min_side)
    eval_set = _held_out(args.data, cfg.min_side, train_set)
    results = run_ablation(cfg, train_set, eval_set)
    write_ablation_csv(results, args.csv)


def cmd_summary(args: argparse.Namespace) -> None:
    """Parameter count, total and per block"""
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint).build_model()
    elif args.config:
        model = build_model(load_train_config(args.config).model_config())
    else:
        model = build_model(ModelConfig())
    for name, count in parameter_breakdown(model).items():
        print(f"{name:<8} {count:>12}")
    print(f"{'total':<8} {count_parameters(model):>12}")


def cmd_dump_features(args: argparse.Namespace) -> None:
    """Normalised feature maps of one layer as PGM files"""
    model = load_checkpoint(args.checkpoint).build_model()
    image, _ = center_crop(load_image(args.input), SIZE_MULTIPLE)
    maps = dump_feature_maps(model, images_to_tensor([image], model.config.dtype), args.layer)
    out_dir = Path(args.out)
    label = args.layer.replace("/", "-")
    for channel, feature_map in enumerate(maps):
        save_image(feature_map, out_dir / f"{label}-ch{channel:03d}.pgm")
    logger.info("wrote %d feature maps to %s", len(maps), out_dir)


def read_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Read command line arguments"""
    formatter = argparse.ArgumentDefaultsHelpFormatter
    cmd_parser = argparse.ArgumentParser(
        prog="msprl", description="Inverse halftoning with a multiscale residual network"
    )
    cmd_parser.add_argument("-v", "--verbose", action="store_true", help="log debug messages")
    commands = cmd_parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("halftone", help=cmd_halftone.__doc__, formatter_class=formatter)
    sub.add_argument("--input", required=True, help="grayscale P5 image")
    sub.add_argument("--output", required=True, help="path of the halftone to write")
    sub.set_defaults(handler=cmd_halftone)

    sub = commands.add_parser("restore", help=cmd_restore.__doc__, formatter_class=formatter)
    sub.add_argument("--checkpoint", default=None, help="trained model checkpoint")
    sub.add_argument("--input", required=True, help="halftone P5 image")
    sub.add_argument("--output", required=True, help="path of the restored image")
    sub.add_argument("--baseline", choices=["gaussian"], default=None, help="use a baseline")
    sub.add_argument("--sigma", type=float, default=DEFAULT_SIGMA, help="Gaussian baseline sigma")
    sub.set_defaults(handler=cmd_restore)

    sub = commands.add_parser("train", help=cmd_train.__doc__, formatter_class=formatter)
    sub.add_argument("--config", default=None, help="key = value training configuration")
    sub.add_argument("--data", required=True, help="dataset directory")
    sub.add_argument("--out", default=None, help="checkpoint directory (overrides the config)")
    sub.add_argument("--resume", default=None, help="checkpoint to continue from")
    sub.set_defaults(handler=cmd_train)

    sub = commands.add_parser("evaluate", help=cmd_evaluate.__doc__, formatter_class=formatter)
    sub.add_argument("--checkpoint", default=None, help="trained model checkpoint")
    sub.add_argument("--data", required=True, help="dataset directory")
    sub.add_argument("--split", default="test", help="split list to read when present")
    sub.add_argument("--min-side", type=int, default=16, help="skip smaller images")
    sub.add_argument("--csv", default=None, help="per-image report to write")
    sub.add_argument("--baseline", choices=["gaussian"], default=None, help="use a baseline")
    sub.add_argument("--sigma", type=float, default=DEFAULT_SIGMA, help="Gaussian baseline sigma")
    sub.set_defaults(handler=cmd_evaluate)

    sub = commands.add_parser("ablate", help=cmd_ablate.__doc__, formatter_class=formatter)
    sub.add_argument("--grid", default=ABLATION_GRID, help="ablated switches")
    sub.add_argument("--config", default=None, help="key = value training configuration")
    sub.add_argument("--data", required=True, help="dataset directory")
    sub.add_argument("--out", default=None, help="checkpoint directory (overrides the config)")
    sub.add_argument("--csv", required=True, help="ablation table to write")
    sub.set_defaults(handler=cmd_ablate)

    sub = commands.add_parser("summary", help=cmd_summary.__doc__, formatter_class=formatter)
    sub.add_argument("--checkpoint", default=None, help="summarise this checkpoint's model")
    sub.add_argument("--config", default=None, help="summarise this configuration's model")
    sub.set_defaults(handler=cmd_summary)

    sub = commands.add_parser(
        "dump-features", help=cmd_dump_features.__doc__, formatter_class=formatter
    )
    sub.add_argument("--checkpoint", required=True, help="trained model checkpoint")
    sub.add_argument("--input", required=True, help="halftone P5 image")
    sub.add_argument("--layer", required=True, help="selector such as EB2/layer7 or DB1")
    sub.add_argument("--out", required=True, help="directory for the feature map images")
    sub.set_defaults(handler=cmd_dump_features)

    return cmd_parser.parse_args(argv)


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return the process exit code"""
    args = read_arguments(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args.handler(args)
    except (MsprlError, OSError) as error:
        logger.error("%s", error)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
