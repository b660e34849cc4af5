"""Supervised training on paired (noisy, clean) sequences."""
import csv
import io
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import metrics
from .data import sequence_normalize
from .errors import ConfigError, TrainingDiverged
from .io_utils import atomic_write_text
from .model import (
    LOSS_KINDS,
    Checkpoint,
    SmoothNetConfig,
    backward,
    copy_weights,
    flat_grads,
    forward,
    init_weights,
    loss_and_grad,
    parameters,
    second_difference,
)
from .nn import AdamState, LrSchedule, adam_step, clip_global_norm, lr_at_epoch
from .numerics import new_rng
from .windowing import smooth_sequence

log = logging.getLogger(__name__)

NORMALIZATIONS = ("none", "sequence")


@dataclass
class TrainConfig:
    model: SmoothNetConfig = field(default_factory=SmoothNetConfig)
    epochs: int = 70
    batch_size: int = 128
    lr: LrSchedule = field(default_factory=LrSchedule)
    seed: int = 0
    loss: str = "pose_plus_accel"
    eval_every: int = 1
    max_steps_per_epoch: int = 500
    clip_norm: float = 1.0
    normalization: str = "none"

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.loss not in LOSS_KINDS:
            raise ConfigError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"normalization must be one of {NORMALIZATIONS}")
        if self.max_steps_per_epoch < 1:
            raise ConfigError("max_steps_per_epoch must be >= 1")

    def to_dict(self):
        d = asdict(self)
        d["model"] = self.model.to_dict()
        d["lr"] = {"initial_lr": self.lr.initial_lr, "decay_rate": self.lr.decay_rate}
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "model" not in d:
            raise ConfigError("train config is missing required key 'model'")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        model = dict(d.pop("model"))
        for key in ("variant", "window_t"):
            if key not in model:
                raise ConfigError(f"train config is missing required key 'model.{key}'")
        lr = d.pop("lr", {})
        if isinstance(lr, (int, float)):
            lr = {"initial_lr": float(lr)}
        try:
            return cls(model=SmoothNetConfig.from_dict(model), lr=LrSchedule(**lr), **d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    mpjpe: float
    accel: float
    lr: float
    seconds: float


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "loss", "mpjpe", "accel", "lr", "seconds"])
        for r in self.records:
            w.writerow([r.epoch, repr(r.loss), repr(r.mpjpe), repr(r.accel), repr(r.lr),
                        f"{r.seconds:.3f}"])
        return buf.getvalue()

    def save_csv(self, path):
        atomic_write_text(path, self.to_csv())


def _frames_pair(pair, normalization):
    noisy, clean = pair.noisy.frames, pair.clean.frames
    if normalization == "sequence":
        # statistics come from the noisy input, as at inference time
        noisy, mean, std = sequence_normalize(noisy)
        clean = (clean - mean) / std
    return noisy, clean


def window_positions(pairs, window_t):
    """All valid ``(sequence index, start)`` pairs; short sequences are skipped."""
    positions = []
    for i, p in enumerate(pairs):
        n = p.noisy.length
        if n < window_t:
            log.warning("skipping sequence %d: %d frames < window %d", i, n, window_t)
            continue
        positions.extend((i, s) for s in range(n - window_t + 1))
    return positions


def sample_windows(pairs, window_t, rng, batch_size=128, normalization="none"):
    """Endless stream of ``(noisy, clean, clean_accel)`` window batches.

    Each batch draws ``batch_size`` (sequence, start) positions uniformly over
    all valid positions; every channel of a window becomes one column.
    """
    positions = window_positions(pairs, window_t)
    if not positions:
        raise ConfigError(f"no sequence is at least {window_t} frames long")
    arrays = [_frames_pair(p, normalization) for p in pairs]
    positions = np.asarray(positions)
    offsets = np.arange(window_t)
    while True:
        pick = positions[rng.integers(0, len(positions), size=batch_size)]
        noisy = np.stack([arrays[i][0][s + offsets] for i, s in pick], axis=1)
        clean = np.stack([arrays[i][1][s + offsets] for i, s in pick], axis=1)
        # (T, B, C) -> (T, B*C)
        noisy = noisy.reshape(window_t, -1)
        clean = clean.reshape(window_t, -1)
        yield noisy, clean, second_difference(clean), pick


def _train_step(cfg, weights, noisy, clean, loss_kind):
    tape = []
    out = forward(cfg, weights, noisy, tape)
    value, grad_out = loss_and_grad(out, clean, loss_kind)
    grads = flat_grads(cfg, backward(cfg, weights, tape, grad_out))
    return value, grads


def train(config, dataset, test_pairs=None, callback=None):
    """Train a model; returns ``(Checkpoint, TrainLog)``.

    ``callback(record, weights)`` is called after every epoch with the live
    weights. ``dataset`` is either a :class:`~posesmooth.data.Dataset` (its ``test``
    split is used for evaluation unless ``test_pairs`` is given) or a list of
    training pairs.
    """
    train_pairs = getattr(dataset, "train", dataset)
    if test_pairs is None:
        test_pairs = getattr(dataset, "test", None) or []
    cfg = config.model
    rng = new_rng(config.seed)
    weights = init_weights(cfg, rng)
    params = parameters(cfg, weights)
    state = AdamState.zeros_like(params)
    n_positions = len(window_positions(train_pairs, cfg.window_t))
    if n_positions == 0:
        raise ConfigError(f"no training sequence is at least {cfg.window_t} frames long")
    steps = min(math.ceil(n_positions / config.batch_size), config.max_steps_per_epoch)
    stream = sample_windows(train_pairs, cfg.window_t, rng, config.batch_size,
                            config.normalization)
    history = TrainLog()
    last_good = copy_weights(weights)
    meta = {"seed": config.seed, "loss": config.loss, "normalization": config.normalization}

    for epoch in range(config.epochs):
        lr = lr_at_epoch(config.lr, epoch)
        t0 = time.perf_counter()
        total = 0.0
        for _ in range(steps):
            noisy, clean, _, _ = next(stream)
            value, grads = _train_step(cfg, weights, noisy, clean, config.loss)
            if not math.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads):
                meta.update(epochs=epoch, final_loss=None)
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}", Checkpoint(cfg, last_good, meta))
            if config.clip_norm and config.clip_norm > 0:
                clip_global_norm(grads, config.clip_norm)
            adam_step(params, grads, state, lr)
            total += value
        train_loss = total / steps
        last_good = copy_weights(weights)
        mpjpe_v = accel_v = math.nan
        if test_pairs and config.eval_every and (epoch + 1) % config.eval_every == 0:
            ckpt = Checkpoint(cfg, weights, meta)
            report = evaluate_checkpoint(ckpt, test_pairs)
            mpjpe_v, accel_v = report.mpjpe, report.accel
        rec = EpochRecord(epoch + 1, train_loss, mpjpe_v, accel_v, lr, time.perf_counter() - t0)
        history.records.append(rec)
        log.info("epoch %d loss %.6g mpjpe %.6g accel %.6g lr %.3g",
                 rec.epoch, rec.loss, rec.mpjpe, rec.accel, rec.lr)
        if callback is not None:
            callback(rec, weights)

    meta.update(epochs=config.epochs, final_loss=history.records[-1].loss)
    return Checkpoint(cfg, weights, meta), history


def evaluate_checkpoint(ckpt, test_pairs, step_s=1):
    """Smooth every noisy test sequence and average the reports over sequences."""
    if not test_pairs:
        raise ConfigError("no test sequences to evaluate")
    reports = []
    for pair in test_pairs:
        out = smooth_sequence(ckpt, pair.noisy, step_s)
        reports.append(metrics.evaluate(out, pair.clean))
    return metrics.aggregate(reports)


def evaluate_inputs(test_pairs):
    """Report of the raw noisy inputs against ground truth."""
    return metrics.aggregate([metrics.evaluate(p.noisy, p.clean) for p in test_pairs])

