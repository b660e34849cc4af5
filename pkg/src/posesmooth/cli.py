"""``posesmooth`` command line: synth, train, smooth, filter, eval, bench.

Exit codes: 0 success, 2 usage/validation error, 3 runtime/numeric failure.
"""
import argparse
import contextlib
import json
import logging
import os
import sys
from dataclasses import fields, replace

import numpy as np

from . import bench, metrics
from .data import (
    LAYOUTS,
    UNITS,
    MotionSpec,
    NoiseSpec,
    load_csv,
    load_manifest,
    load_sequence,
    make_dataset,
    save_csv,
    save_sequence,
    write_dataset,
)
from .errors import ConfigError, NumericError, ParseError, PoseSmoothError, TrainingDiverged
from .filters import BASELINE_PRESETS, FilterSpec, apply_filter
from .io_utils import atomic_write_text
from .model import load_checkpoint, save_checkpoint
from .trainer import TrainConfig, train
from .windowing import smooth_sequence

log = logging.getLogger("posesmooth")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class UsageError(PoseSmoothError):
    pass


def _json_arg(value, what):
    """Inline JSON text or a path to a JSON file."""
    if os.path.isfile(value):
        try:
            with open(value) as fh:
                return json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{what}: {value}: invalid JSON at line {exc.lineno}: {exc.msg}")
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        raise UsageError(f"{what}: not a JSON file or valid inline JSON: {value!r}")


def _build(cls, doc, what):
    if not isinstance(doc, dict):
        raise UsageError(f"{what} must be a JSON object")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise UsageError(f"{what}: unknown field(s) {unknown}; allowed: {sorted(names)}")
    try:
        return cls(**doc)
    except (ConfigError, TypeError, ValueError) as exc:
        raise UsageError(f"{what}: {exc}")


def _read_seq(path, args=None):
    if not os.path.isfile(path):
        raise UsageError(f"no such file: {path}")
    if path.endswith(".csv"):
        return load_csv(path, fps=getattr(args, "fps_meta", 30.0) or 30.0,
                        layout=getattr(args, "layout", "generic") or "generic",
                        units=getattr(args, "units", "unitless") or "unitless")
    return load_sequence(path)


def _write_seq(path, seq):
    if path.endswith(".csv"):
        save_csv(path, seq)
    else:
        save_sequence(path, seq)


def _load_ckpt(path):
    if not os.path.isfile(path):
        raise UsageError(f"no such checkpoint: {path}")
    return load_checkpoint(path)


# -- commands --------------------------------------------------------------

def cmd_synth(args):
    motion = _build(MotionSpec, _json_arg(args.motion_spec, "--motion-spec"), "motion spec")
    noise = _build(NoiseSpec, _json_arg(args.noise_spec, "--noise-spec"), "noise spec")
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    if not 0.0 < args.split < 1.0:
        raise UsageError("--split must lie strictly between 0 and 1")
    m_seed, n_seed = (int(s.generate_state(1, dtype=np.uint64)[0])
                      for s in np.random.SeedSequence(args.seed).spawn(2))
    motion = replace(motion, seed=m_seed)
    noise = replace(noise, seed=n_seed)
    ds = make_dataset(motion, noise, args.count, args.split)
    extra = {"motion_spec": vars(motion), "noise_spec": vars(noise)}
    path = write_dataset(ds, args.out_dir, seed=args.seed, extra=extra)
    print(f"wrote {len(ds.train)} train / {len(ds.test)} test pairs -> {path}")
    return EXIT_OK


def cmd_train(args):
    doc = _json_arg(args.config, "--config")
    if not isinstance(doc, dict):
        raise UsageError("--config must be a JSON object")
    try:
        config = TrainConfig.from_dict(doc)
    except ConfigError as exc:
        raise UsageError(f"config: {exc}")
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.epochs is not None:
        config = replace(config, epochs=args.epochs)
    ds = load_manifest(args.data)
    if not ds.train:
        raise UsageError(f"{args.data}: manifest has no training pairs")
    t = config.model.window_t
    if all(p.noisy.length < t for p in ds.train):
        raise UsageError(f"window_t={t} exceeds every training sequence length")
    log_path = args.log or _default_log_path(args.out)
    try:
        ckpt, history = train(config, ds, ds.test or None)
    except TrainingDiverged as exc:
        if exc.checkpoint is not None:
            save_checkpoint(args.out, exc.checkpoint)
        raise
    ckpt.train_meta["train_config"] = config.to_dict()
    save_checkpoint(args.out, ckpt)
    history.save_csv(log_path)
    print(f"checkpoint -> {args.out}; log -> {log_path}; final loss {ckpt.train_meta['final_loss']:.6g}")
    return EXIT_OK


def _default_log_path(out):
    root, _ = os.path.splitext(out)
    return root + ".log.csv"


def cmd_smooth(args):
    ckpt = _load_ckpt(args.model)
    seq = _read_seq(args.input, args)
    if args.step < 1 or args.step > ckpt.config.window_t:
        raise UsageError(f"--step must lie in [1, {ckpt.config.window_t}] for this model")
    if seq.length < 3:
        raise UsageError(f"input has {seq.length} frames; at least 3 are required")
    out = smooth_sequence(ckpt, seq, args.step, weighting=args.weighting)
    _write_seq(args.output, out)
    return EXIT_OK


def _filter_spec_from_args(args):
    doc = {"kind": args.kind.replace("-", "_")}
    for name in ("window", "sigma", "polyorder", "min_cutoff", "beta", "d_cutoff", "fps"):
        v = getattr(args, name)
        if v is not None:
            doc[name] = v
    return _build(FilterSpec, doc, "filter")


def cmd_filter(args):
    spec = _filter_spec_from_args(args)
    seq = _read_seq(args.input, args)
    if spec.kind == "savgol" and seq.length < spec.window:
        raise UsageError(f"savgol window {spec.window} exceeds sequence length {seq.length}")
    _write_seq(args.output, apply_filter(seq, spec))
    return EXIT_OK


def cmd_eval(args):
    pred = _read_seq(args.pred, args)
    gt = _read_seq(args.gt, args)
    if not pred.same_layout(gt):
        raise UsageError(f"shape mismatch: pred {pred.frames.shape} vs gt {gt.frames.shape}")
    if pred.length < 3:
        raise UsageError("need at least 3 frames")
    report = metrics.evaluate(pred, gt, accel_worst_mode=args.accel_worst_mode)
    outs = args.out or []
    for path in outs:
        if path.endswith(".csv"):
            atomic_write_text(path, report.csv_header() + "\n" + report.csv_row() + "\n")
        else:
            atomic_write_text(path, json.dumps(report.to_dict(per_frame=not args.no_per_frame),
                                               indent=1) + "\n")
    if not outs:
        print(json.dumps(report.to_dict(per_frame=False), indent=1))
    return EXIT_OK


def _parse_filters(value):
    if value is None:
        specs = BASELINE_PRESETS["comparable_accel"] + BASELINE_PRESETS["comparable_mpjpe"]
        return list(specs)
    doc = _json_arg(value, "--filters")
    if not isinstance(doc, list):
        raise UsageError("--filters must be a JSON list of filter specs")
    out = []
    for i, d in enumerate(doc):
        if isinstance(d, dict) and "kind" in d:
            d = {**d, "kind": str(d["kind"]).replace("-", "_")}
        out.append(_build(FilterSpec, d, f"filters[{i}]"))
    return out


def cmd_bench(args):
    filters = _parse_filters(args.filters)
    ds = load_manifest(args.data)
    if not ds.test:
        raise UsageError(f"{args.data}: manifest has no test pairs")
    if args.filters is None:
        short = min(p.noisy.length for p in ds.test)
        dropped = [f for f in filters if f.kind == "savgol" and f.window > short]
        for f in dropped:
            log.warning("skipping default %s: longer than the shortest test sequence", f.label)
        filters = [f for f in filters if f not in dropped]
    for spec in filters:
        if spec.kind == "savgol":
            short = min(p.noisy.length for p in ds.test)
            if spec.window > short:
                raise UsageError(f"{spec.label}: window exceeds shortest test sequence ({short})")
    model = _load_ckpt(args.model) if args.model else None

    sweep_models = {}
    if args.sweep_window:
        try:
            sizes = [int(w) for w in args.sweep_window.split(",") if w.strip()]
        except ValueError:
            raise UsageError("--sweep-window expects a comma-separated list of integers")
        train_cfg = None
        if args.sweep_train_config:
            try:
                train_cfg = TrainConfig.from_dict(_json_arg(args.sweep_train_config,
                                                            "--sweep-train-config"))
            except ConfigError as exc:
                raise UsageError(f"sweep train config: {exc}")
        for w in sizes:
            path = os.path.join(args.sweep_models or args.out, f"smoothnet_w{w}.json")
            if os.path.isfile(path):
                sweep_models[w] = load_checkpoint(path)
            elif train_cfg is None:
                raise UsageError(f"missing checkpoint for W={w}: {path}")
            else:
                sweep_models[w] = None
        for w, ck in list(sweep_models.items()):
            if ck is None:
                cfg = replace(train_cfg, model=replace(train_cfg.model, window_t=w),
                              seed=args.seed, eval_every=0)
                sweep_models[w], _ = train(cfg, ds.train)

    report = bench.run_bench(ds.test, model, filters, args.step, scale=args.scale)
    os.makedirs(args.out, exist_ok=True)
    atomic_write_text(os.path.join(args.out, "bench.csv"), report.to_csv())
    atomic_write_text(os.path.join(args.out, "bench.md"), report.to_markdown())
    if sweep_models:
        sweep = bench.window_sweep(ds.test, sweep_models, args.step)
        atomic_write_text(os.path.join(args.out, "window_sweep.csv"), sweep.to_csv())
        atomic_write_text(os.path.join(args.out, "window_sweep.md"), sweep.to_markdown())
        if args.sweep_train_config:
            for w, ck in sweep_models.items():
                path = os.path.join(args.sweep_models or args.out, f"smoothnet_w{w}.json")
                if not os.path.isfile(path):
                    save_checkpoint(path, ck)
    sys.stdout.write(report.to_markdown())
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="posesmooth", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None, help="single seed for all randomness")
        sp.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")

    def seq_meta(sp):
        sp.add_argument("--fps-meta", type=float, default=30.0,
                        help="frame rate assumed for CSV inputs (default 30)")
        sp.add_argument("--layout", choices=tuple(LAYOUTS), default="generic",
                        help="channel layout assumed for CSV inputs")
        sp.add_argument("--units", choices=UNITS, default="unitless",
                        help="units assumed for CSV inputs")

    sp = sub.add_parser("synth", help="generate paired noisy/clean synthetic sequences")
    sp.add_argument("--motion-spec", required=True,
                    help="MotionSpec as JSON file or inline JSON, e.g. "
                         "'{\"length_l\":256,\"channels\":51,\"max_freq\":1.0}'")
    sp.add_argument("--noise-spec", required=True,
                    help="NoiseSpec as JSON file or inline JSON, e.g. "
                         "'{\"kind\":\"gaussian_impulsive\",\"p\":0.5,\"sigma\":0.01}'")
    sp.add_argument("--count", type=int, default=10, help="number of sequence pairs")
    sp.add_argument("--split", type=float, default=0.8, help="fraction of pairs used for training")
    sp.add_argument("--out-dir", required=True, help="directory for sequences and manifest.json")
    common(sp)
    sp.set_defaults(func=cmd_synth, seed=0)

    sp = sub.add_parser("train", help="train a model from a dataset manifest")
    sp.add_argument("--config", required=True, help="TrainConfig as JSON file or inline JSON")
    sp.add_argument("--data", required=True, help="manifest.json produced by 'synth'")
    sp.add_argument("--out", required=True, help="checkpoint path (.json)")
    sp.add_argument("--log", default=None, help="train log CSV (default: <out>.log.csv)")
    sp.add_argument("--epochs", type=int, default=None, help="override config epochs")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("smooth", help="smooth a sequence with a trained model")
    sp.add_argument("--model", required=True, help="checkpoint path")
    sp.add_argument("--input", required=True, help="input sequence (.json or .csv)")
    sp.add_argument("--output", required=True, help="output sequence (.json or .csv)")
    sp.add_argument("--step", type=int, default=1, help="sliding-window step (default 1)")
    sp.add_argument("--weighting", choices=("uniform", "triangular"), default="uniform",
                    help="overlap merge weighting")
    seq_meta(sp)
    common(sp)
    sp.set_defaults(func=cmd_smooth)

    sp = sub.add_parser("filter", help="apply a classic low-pass filter")
    sp.add_argument("--kind", required=True,
                    choices=("gaussian", "savgol", "one-euro", "moving-avg",
                             "one_euro", "moving_avg"), help="filter family")
    sp.add_argument("--window", type=int, help="odd window length (gaussian/savgol/moving-avg)")
    sp.add_argument("--sigma", type=float, help="gaussian standard deviation in frames")
    sp.add_argument("--polyorder", type=int, help="savgol polynomial order")
    sp.add_argument("--min-cutoff", type=float, help="one-euro minimum cutoff (Hz)")
    sp.add_argument("--beta", type=float, help="one-euro speed coefficient")
    sp.add_argument("--d-cutoff", type=float, help="one-euro derivative cutoff (Hz, default 1)")
    sp.add_argument("--fps", type=float, help="one-euro sampling rate (default: sequence fps)")
    sp.add_argument("--input", required=True, help="input sequence (.json or .csv)")
    sp.add_argument("--output", required=True, help="output sequence (.json or .csv)")
    seq_meta(sp)
    common(sp)
    sp.set_defaults(func=cmd_filter)

    sp = sub.add_parser("eval", help="compute MPJPE, PA-MPJPE, Accel and worst-1%% metrics")
    sp.add_argument("--pred", required=True, help="predicted sequence")
    sp.add_argument("--gt", required=True, help="ground-truth sequence")
    sp.add_argument("--out", action="append",
                    help="report path, .json or .csv (repeatable; default prints JSON)")
    sp.add_argument("--accel-worst-mode", choices=("corresponding", "independent"),
                    default="corresponding",
                    help="Accel-1%%: at the worst-MPJPE frames, or worst Accel frames")
    sp.add_argument("--no-per-frame", action="store_true", help="omit per-frame series in JSON")
    seq_meta(sp)
    common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("bench", help="compare the model with filters on a test split")
    sp.add_argument("--data", required=True, help="manifest.json")
    sp.add_argument("--model", help="checkpoint to benchmark")
    sp.add_argument("--filters", help="JSON list of filter specs (file or inline); "
                                      "default: the built-in baseline presets")
    sp.add_argument("--out", required=True, help="output directory for bench.csv / bench.md")
    sp.add_argument("--step", type=int, default=1, help="sliding-window step")
    sp.add_argument("--scale", type=float, default=1.0,
                    help="multiply reported errors (e.g. 1000 for m -> mm)")
    sp.add_argument("--sweep-window", help="comma-separated window sizes, e.g. 8,16,32,64")
    sp.add_argument("--sweep-models",
                    help="directory holding smoothnet_w<W>.json checkpoints (default: --out)")
    sp.add_argument("--sweep-train-config",
                    help="TrainConfig used to train any missing per-W checkpoint")
    common(sp)
    sp.set_defaults(func=cmd_bench, seed=0)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    limit = contextlib.nullcontext()
    if args.threads:
        from threadpoolctl import threadpool_limits

        limit = threadpool_limits(limits=args.threads)
    try:
        with limit:
            return args.func(args)
    except (UsageError, ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, PoseSmoothError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
