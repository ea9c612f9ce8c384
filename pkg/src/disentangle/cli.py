"""Command-line entry point: ``disentangle <subcommand> [flags]``.

Exit codes: 0 on success, 2 on usage errors, 1 on any other failure. Failures
print a single line ``error: <category>: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import sys

from . import config as C
from .checkpoint import load_checkpoint
from .config import NetworkConfig, TrainConfig
from .errors import DisentangleError, GradCheckError, UsageError
from .network import count_params, phase_params
from .synth import SEVERITIES, build_dataset, load_pairs, read_manifest


def _network_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--phases", type=int, default=C.PHASES, help="number of phases P")
    p.add_argument("--channels", type=int, default=C.CHANNELS, help="feature channels C")
    p.add_argument("--fd-layers", type=int, default=C.FD_LAYERS, help="FDlayers (and FAlayers) per phase")
    p.add_argument("--aux-blocks", type=int, default=C.AUX_BLOCKS, help="residual blocks in the auxiliary branch")
    p.add_argument("--reduction", type=int, default=C.REDUCTION, help="channel-attention reduction ratio")


def _net_config(args) -> NetworkConfig:
    return NetworkConfig(phases=args.phases, channels=args.channels, fd_layers=args.fd_layers,
                         aux_blocks=args.aux_blocks, reduction=args.reduction)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="disentangle", formatter_class=fmt,
                                     description="Hybrid-distortion restoration with disentangled features.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("synth", formatter_class=fmt, help="synthesize a distorted/clean patch dataset")
    p.add_argument("--clean-dir", required=True, help="directory of clean source images")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--count", type=int, default=100, help="number of patch pairs")
    p.add_argument("--severity", choices=SEVERITIES, default="moderate", help="severity class")
    p.add_argument("--patch-size", type=int, default=C.PATCH_SIZE, help="square patch side in pixels")
    p.add_argument("--rain", action="store_true", help="add rain streaks")
    p.add_argument("--noise-only", type=float, default=None, metavar="SIGMA",
                   help="only Gaussian noise of this sigma (no blur, JPEG or rain)")
    p.add_argument("--seed", type=int, default=C.SEED, help="master seed")

    p = sub.add_parser("train", formatter_class=fmt, help="train a network on a synthesized dataset")
    p.add_argument("--train", required=True, help="training manifest")
    p.add_argument("--val", default=None, help="validation manifest")
    p.add_argument("--out", required=True, help="output directory for checkpoints and logs")
    _network_flags(p)
    p.add_argument("--lr", type=float, default=C.LR0, help="initial learning rate")
    p.add_argument("--lr-decay", type=float, default=C.LR_DECAY, help="step decay factor")
    p.add_argument("--decay-interval", type=int, default=C.LR_DECAY_INTERVAL, help="iterations per decay step")
    p.add_argument("--batch-size", type=int, default=C.BATCH_SIZE, help="mini-batch size")
    p.add_argument("--beta", type=float, default=C.BETA, help="weight of the SVDO term")
    p.add_argument("--iterations", type=int, default=C.ITERATIONS, help="optimizer steps")
    p.add_argument("--checkpoint-interval", type=int, default=C.CHECKPOINT_INTERVAL, help="steps between checkpoints")
    p.add_argument("--val-interval", type=int, default=C.VAL_INTERVAL, help="steps between validations")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figure")
    p.add_argument("--seed", type=int, default=C.SEED, help="master seed")

    p = sub.add_parser("eval", formatter_class=fmt, help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True, help="checkpoint file")
    p.add_argument("--manifest", required=True, help="test manifest")
    p.add_argument("--out", default=None, help="directory for CSV/text/PNG reports")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figure")

    p = sub.add_parser("gradcheck", formatter_class=fmt, help="finite-difference check of every layer type")
    p.add_argument("--seed", type=int, default=C.SEED, help="seed for the random instances")

    p = sub.add_parser("diagnose", formatter_class=fmt, help="channel-correlation and response diagnostics")
    p.add_argument("--checkpoint", required=True, help="checkpoint file")
    p.add_argument("--manifest", required=True, help="patches for the correlation probe")
    p.add_argument("--probes", default=None, help="manifest whose clean images are the response probes "
                                                 "(default: --manifest)")
    p.add_argument("--count", type=int, default=100, help="maximum patches/probes used")
    p.add_argument("--phase", type=int, default=0, help="phase index of the taps (0 = first)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    p.add_argument("--seed", type=int, default=C.SEED, help="seed for probe noise")

    p = sub.add_parser("info", formatter_class=fmt, help="print a configuration and its parameter count")
    _network_flags(p)
    return parser


def _cmd_synth(args) -> None:
    override = None
    if args.noise_only is not None:
        override = {"blur_sigma": 0.0, "noise_sigma": float(args.noise_only), "jpeg_quality": 100, "rain": None}
    m = build_dataset(args.clean_dir, args.out, args.count, args.severity, args.patch_size, args.seed,
                      with_rain=args.rain, spec_override=override)
    print(f"wrote {len(m.entries)} pairs to {args.out}/manifest.txt")


def _cmd_train(args) -> None:
    from .train import train

    cfg = TrainConfig(lr0=args.lr, lr_decay=args.lr_decay, decay_interval=args.decay_interval,
                      batch_size=args.batch_size, beta=args.beta, iterations=args.iterations, seed=args.seed,
                      checkpoint_interval=args.checkpoint_interval, val_interval=args.val_interval)
    result = train(_net_config(args), args.train, args.val, cfg, args.out, log=print, figure=not args.no_figures)
    last = result.rows[-1]
    print(f"final loss {last['total']:.6g}; checkpoints: {', '.join(str(p) for p in result.checkpoints)}")
    print(f"metrics: {result.metrics_path}")


def _cmd_eval(args) -> None:
    from .train import evaluate

    report = evaluate(args.checkpoint, args.manifest, args.out, figure=not args.no_figures)
    print(report.table())


def _cmd_gradcheck(args) -> None:
    from .gradcheck import all_passed, format_table, run_gradcheck

    rows = run_gradcheck(args.seed)
    print(format_table(rows))
    if not all_passed(rows):
        bad = sorted({r.layer for r in rows if not r.passed})
        raise GradCheckError("gradient check failed for " + ", ".join(bad))


def _cmd_diagnose(args) -> None:
    from .diagnostics import run_diagnostics

    if args.count < 1:
        raise UsageError("--count must be >= 1")
    net = load_checkpoint(args.checkpoint).network
    m = read_manifest(args.manifest)
    m.entries = m.entries[:args.count]
    patches, _ = load_pairs(m)
    pm = read_manifest(args.probes) if args.probes else read_manifest(args.manifest)
    pm.entries = pm.entries[:args.count]
    _, probes = load_pairs(pm)
    summary = run_diagnostics(net, patches, probes, args.out, args.phase, args.seed, figure=not args.no_figures)
    print("\n".join(summary.lines()))


def _cmd_info(args) -> None:
    cfg = _net_config(args)
    for key, value in cfg.to_dict().items():
        print(f"{key} = {value}")
    print(f"per_phase_params = {phase_params(cfg)}")
    print(f"params = {count_params(cfg)}")


COMMANDS = {"synth": _cmd_synth, "train": _cmd_train, "eval": _cmd_eval, "gradcheck": _cmd_gradcheck,
            "diagnose": _cmd_diagnose, "info": _cmd_info}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 2
    except DisentangleError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
