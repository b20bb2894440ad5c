"""Command line entry point: ``seizurecast {synth,train,eval,inspect}``.

Machine-readable results (JSON, shape tables) go to standard output; logs and
diagnostics go to standard error.  Every command that writes files also writes
a ``manifest.json`` next to them.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from contextlib import nullcontext
from dataclasses import asdict
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .architecture import ModelFormatError, Network, NetworkConfig, build, load, save
from .engine import ParameterError, ShapeError
from .metrics import UndefinedMetricError, evaluate, roc_and_auc, write_roc_csv, write_roc_svg
from .pipeline import (
    DataError,
    Recording,
    RecordingError,
    SyntheticProfile,
    TimingPolicy,
    find_lead_seizures,
    generate_synthetic,
    read_bundles,
    split_train_validation,
    stack,
    window_points,
    windows_from_recording,
    write_recording,
)
from .training import TrainConfig, TrainingError, deterministic_mode, predict_scores, train, write_history_csv

log = logging.getLogger("seizurecast")

SEED_ENV = "SEIZURECAST_SEED"
MANIFEST_NAME = "manifest.json"


class CliError(Exception):
    """Expected failure: reported on stderr with a nonzero exit."""

    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


# --------------------------------------------------------------------------
# manifest
# --------------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, argv, seed, inputs, outputs, config: dict) -> Path:
    """Record everything needed to rerun ``command`` next to its outputs."""
    digests = {Path(p).name: sha256_file(p) for p in sorted(map(str, outputs))}
    combined = hashlib.sha256("".join(f"{k}:{v}\n" for k, v in digests.items()).encode()).hexdigest()
    manifest = {
        "command": command,
        "argv": list(argv),
        "tool": "seizurecast",
        "tool_version": __version__,
        "seed": seed,
        "inputs": [str(Path(p).resolve()) for p in inputs],
        "config": config,
        "outputs": digests,
        "output_digest": combined,
    }
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _resolve_seed(flag: int) -> int:
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return flag
    try:
        seed = int(env)
    except ValueError:
        raise CliError(f"{SEED_ENV}={env!r} is not an integer", 2) from None
    log.info("%s=%d overrides --seed %d", SEED_ENV, seed, flag)
    return seed


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    sys.stdout.flush()


# --------------------------------------------------------------------------
# shared flag groups
# --------------------------------------------------------------------------

def _timing_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    d = TimingPolicy()
    g = p.add_argument_group("timing (seconds)")
    g.add_argument("--pil-s", type=float, default=d.pil_s, help="preictal interval length")
    g.add_argument("--sph-s", type=float, default=d.sph_s, help="seizure prediction horizon")
    g.add_argument("--window-s", type=float, default=d.window_s)
    g.add_argument("--overlap-s", type=float, default=d.preictal_overlap_s, help="preictal window overlap")
    g.add_argument("--lead-gap-s", type=float, default=d.lead_gap_s, help="minimum gap before a lead seizure")
    g.add_argument(
        "--interictal-margin-s", type=float, default=d.interictal_margin_s,
        help="minimum distance of interictal time from any seizure",
    )
    return p


def _policy(args) -> TimingPolicy:
    try:
        return TimingPolicy(
            pil_s=args.pil_s,
            sph_s=args.sph_s,
            window_s=args.window_s,
            preictal_overlap_s=args.overlap_s,
            lead_gap_s=args.lead_gap_s,
            interictal_margin_s=args.interictal_margin_s,
        )
    except ValueError as exc:
        raise CliError(f"invalid timing policy: {exc}", 2) from None


def _network_config(arch: str, channels: int, width: int) -> NetworkConfig:
    if arch == "reduced":
        return NetworkConfig.reduced(channels, width)
    return NetworkConfig(input_channels=channels, input_width=width)


def _load_recordings(path) -> list[Recording]:
    recs = read_bundles(path)
    for rec in recs:
        rec.validate()
    rates = {r.sample_rate_hz for r in recs}
    nchan = {len(r.channels) for r in recs}
    if len(rates) > 1 or len(nchan) > 1:
        raise CliError(f"{path}: bundles disagree on sample rate {sorted(rates)} or channel count {sorted(nchan)}")
    return recs


def _gap_report(recs, policy: TimingPolicy) -> str:
    need = policy.pil_s + policy.sph_s
    lines = [
        f"no usable lead seizures (need >= {need:g} s of recording before onset "
        f"and >= {policy.lead_gap_s:g} s since the previous seizure)"
    ]
    for rec in recs:
        if not rec.seizures:
            lines.append(f"  {rec.subject_id}: no seizures annotated")
        prev = None
        for i, (on, off) in enumerate(rec.seizures):
            since = "n/a (first)" if prev is None else f"{on - prev:g} s"
            lines.append(
                f"  {rec.subject_id} seizure {i} at {on:g}-{off:g} s: "
                f"history {on:g} s, gap since previous {since}"
            )
            prev = off
    return "\n".join(lines)


def _windows(recs, policy: TimingPolicy):
    samples = []
    for rec in recs:
        samples.extend(windows_from_recording(rec, policy))
    return samples


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_synth(args, argv) -> int:
    seed = _resolve_seed(args.seed)
    policy = _policy(args)
    if args.channels < 1 or args.rate_hz <= 0 or args.duration_s <= 0:
        raise CliError("--channels, --rate-hz and --duration-s must be positive", 2)
    seizures = sorted((t, t + args.seizure_duration_s) for t in args.seizure_at)
    profile = SyntheticProfile(
        n_channels=args.channels,
        sample_rate_hz=args.rate_hz,
        duration_s=args.duration_s,
        seizures=seizures,
        delta=args.delta,
        noise_std=args.noise_std,
        osc_hz=args.osc_hz,
        policy=policy,
        subject_id=args.subject_id,
    )
    rec = generate_synthetic(profile, seed)
    out = Path(args.out)
    write_recording(rec, out, fmt=args.format)
    payload = out / ("signal.bin" if args.format == "bin" else "signal.csv")
    config = {"timing": asdict(policy), "profile": {k: v for k, v in asdict(profile).items() if k != "policy"}}
    write_manifest(out, "synth", argv, seed, [], [out / "meta.json", payload], config)
    _emit({
        "bundle": str(out),
        "channels": args.channels,
        "samples": rec.n_samples,
        "seizures": [list(s) for s in seizures],
        "lead_seizures": find_lead_seizures(rec, policy),
    })
    return 0


def cmd_train(args, argv) -> int:
    seed = _resolve_seed(args.seed)
    policy = _policy(args)
    recs = _load_recordings(args.data)
    if not any(find_lead_seizures(r, policy) for r in recs):
        raise CliError(_gap_report(recs, policy))
    samples = _windows(recs, policy)
    rate = recs[0].sample_rate_hz
    channels = len(recs[0].channels)
    width = window_points(policy, rate)
    net_cfg = _network_config(args.arch, channels, width)
    try:
        tcfg = TrainConfig(
            learning_rate=args.lr,
            epochs=args.epochs,
            samples_per_epoch=args.samples_per_epoch,
            batch_size=args.batch_size,
            seed=seed,
        )
    except ValueError as exc:
        raise CliError(f"invalid training config: {exc}", 2) from None
    n_pre = sum(s.label for s in samples)
    log.info("%d windows (%d preictal, %d interictal) of %d x %d", len(samples), n_pre, len(samples) - n_pre, channels, width)
    train_set, val_set = split_train_validation(samples, args.val_fraction, seed)

    guard = deterministic_mode() if args.deterministic else nullcontext()
    with guard:
        net = build(net_cfg, seed)
        result = train(net, train_set, val_set, tcfg, window_s=policy.window_s, threshold=args.threshold)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model_path, hist_path = out / "model.bin", out / "history.csv"
    save(result.net, model_path)
    write_history_csv(result.history, hist_path)
    config = {
        "timing": asdict(policy),
        "train": tcfg.to_dict(),
        "network": net_cfg.to_dict(),
        "arch": args.arch,
        "val_fraction": args.val_fraction,
        "threshold": args.threshold,
        "deterministic": args.deterministic,
    }
    write_manifest(out, "train", argv, seed, [args.data], [model_path, hist_path], config)
    last = result.history[-1] if result.history else None
    _emit({
        "model": str(model_path),
        "history": str(hist_path),
        "epochs": len(result.history),
        "train_windows": len(train_set),
        "val_windows": len(val_set),
        "flatten_length": result.net.flatten_length,
        "final": None if last is None else {k: _finite_or_none(v) for k, v in asdict(last).items()},
    })
    return 0


def _finite_or_none(v):
    return None if isinstance(v, float) and not math.isfinite(v) else v


def cmd_eval(args, argv) -> int:
    policy = _policy(args)
    recs = _load_recordings(args.data)
    samples = _windows(recs, policy)
    if not samples:
        raise CliError(f"{args.data}: no labelled windows under this timing policy")
    width = window_points(policy, recs[0].sample_rate_hz)
    net = load(args.model, input_shape=(len(recs[0].channels), width))
    x, y = stack(samples)
    limit = threadpool_limits(limits=args.threads) if args.threads else nullcontext()
    with limit:
        scores = predict_scores(net, x)
    report = evaluate(scores, y, args.threshold, policy.window_s)
    result = report.as_dict()
    if args.roc_out:
        out = Path(args.roc_out)
        out.mkdir(parents=True, exist_ok=True)
        curve = roc_and_auc(scores, y)
        write_roc_csv(curve, out / "roc.csv")
        write_roc_svg(curve, out / "roc.svg")
        (out / "report.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
        config = {"timing": asdict(policy), "network": net.config.to_dict(), "threshold": args.threshold}
        write_manifest(
            out, "eval", argv, None, [args.model, args.data],
            [out / "roc.csv", out / "roc.svg", out / "report.json"], config,
        )
        result["roc_out"] = str(out)
    _emit(result)
    return 0


def cmd_inspect(args, argv) -> int:
    channels = args.channels if args.channels is not None else args.pos_channels
    width = args.width if args.width is not None else args.pos_width
    if channels is None or width is None:
        raise CliError("inspect needs a channel count and a width", 2)
    net = Network(_network_config(args.arch, channels, width))
    if args.json:
        _emit({
            "input": [1, channels, width],
            "layers": [{"layer": r.layer, "shape": list(r.shape), "params": r.params} for r in net.shape_rows],
            "total_params": net.parameter_count,
        })
        return 0
    lines = [f"{'layer':<10}{'output shape':<20}{'params':>10}", f"{'input':<10}{str((1, channels, width)):<20}{0:>10}"]
    for r in net.shape_rows:
        lines.append(f"{r.layer:<10}{str(r.shape):<20}{r.params:>10}")
    lines.append(f"{'total':<10}{'':<20}{net.parameter_count:>10}")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seizurecast", description="CNN seizure prediction on multichannel EEG.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    parser.add_argument("-q", "--quiet", action="store_true", help="only errors on stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    timing = _timing_parent()

    s = sub.add_parser("synth", parents=[timing], help="write a synthetic recording bundle")
    s.add_argument("--channels", type=int, default=4)
    s.add_argument("--rate-hz", type=float, default=100.0)
    s.add_argument("--duration-s", type=float, default=7200.0)
    s.add_argument("--seizure-at", type=float, action="append", default=[], metavar="ONSET_S")
    s.add_argument("--seizure-duration-s", type=float, default=60.0)
    s.add_argument("--delta", type=float, default=0.0, help="preictal oscillation amplitude (noise sd units)")
    s.add_argument("--noise-std", type=float, default=1.0)
    s.add_argument("--osc-hz", type=float, default=10.0)
    s.add_argument("--subject-id", default="synthetic")
    s.add_argument("--format", choices=("bin", "csv"), default="bin")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", parents=[timing], help="train a model on recording bundles")
    d = TrainConfig()
    t.add_argument("--data", required=True, help="bundle or directory of bundles")
    t.add_argument("--arch", choices=("full", "reduced"), default="full")
    t.add_argument("--epochs", type=int, default=d.epochs)
    t.add_argument("--samples-per-epoch", type=int, default=d.samples_per_epoch)
    t.add_argument("--batch-size", type=int, default=d.batch_size)
    t.add_argument("--lr", type=float, default=d.learning_rate)
    t.add_argument("--val-fraction", type=float, default=0.2)
    t.add_argument("--threshold", type=float, default=0.5)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument(
        "--no-deterministic", dest="deterministic", action="store_false",
        help="allow multithreaded BLAS (results may differ between runs)",
    )
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[timing], help="score a model on recording bundles")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--threshold", type=float, default=0.5)
    e.add_argument("--roc-out", help="directory for roc.csv, roc.svg, report.json")
    e.add_argument("--threads", type=int, default=0, help="BLAS threads for scoring (0 = library default)")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("inspect", help="print the per-layer shape table")
    i.add_argument("pos_channels", nargs="?", type=int, metavar="CHANNELS")
    i.add_argument("pos_width", nargs="?", type=int, metavar="WIDTH")
    i.add_argument("--channels", type=int)
    i.add_argument("--width", type=int)
    i.add_argument("--arch", choices=("full", "reduced"), default="full")
    i.add_argument("--json", action="store_true")
    i.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.ERROR if args.quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        return args.func(args, argv)
    except CliError as exc:
        print(f"seizurecast {args.command}: error: {exc}", file=sys.stderr)
        return exc.code
    except (ShapeError, ModelFormatError, RecordingError, DataError, ParameterError,
            UndefinedMetricError, TrainingError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        layer = getattr(exc, "layer", None)
        if layer:
            err["layer"] = layer
        print(f"seizurecast {args.command}: error: {json.dumps(err)}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"seizurecast {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
