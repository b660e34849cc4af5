"""Sliding-window inference with overlap averaging."""
from dataclasses import dataclass

import numpy as np

from .data import sequence_denormalize, sequence_normalize
from .errors import ConfigError, ShapeError
from .model import forward


class InputTooShort(ConfigError):
    pass


@dataclass
class WindowPlan:
    length_l: int
    window_t: int
    step_s: int
    starts: list

    @property
    def count(self):
        return len(self.starts)


def plan_windows(length_l, window_t, step_s=1):
    """Window starts 0, s, 2s, ...; a final window anchored at L-T is appended
    when the regular stride would leave trailing frames uncovered."""
    if window_t < 1:
        raise ConfigError("window_t must be >= 1")
    if not 1 <= step_s <= window_t:
        raise ConfigError(f"step must satisfy 1 <= s <= T, got s={step_s}, T={window_t}")
    if length_l < window_t:
        raise InputTooShort(f"sequence of {length_l} frames is shorter than the window ({window_t})")
    last = length_l - window_t
    starts = list(range(0, last + 1, step_s))
    if starts[-1] != last:
        starts.append(last)
    return WindowPlan(length_l, window_t, step_s, starts)


def triangular_weights(window_t):
    w = np.minimum(np.arange(1, window_t + 1), np.arange(window_t, 0, -1)).astype(np.float64)
    return w / w.max()


def merge_overlap_average(windows, plan, weighting="uniform"):
    """Combine per-window predictions of shape (count, T, C) into (L, C).

    Each output frame is the mean of every window prediction covering it
    (``weighting="triangular"`` down-weights window edges instead).
    """
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim == 2:
        windows = windows[:, :, None]
    if windows.shape[0] != plan.count or windows.shape[1] != plan.window_t:
        raise ShapeError(
            f"expected {plan.count} windows of {plan.window_t} frames, got {windows.shape[:2]}"
        )
    if weighting == "uniform":
        w = np.ones(plan.window_t)
    elif weighting == "triangular":
        w = triangular_weights(plan.window_t)
    else:
        raise ConfigError(f"unknown weighting {weighting!r}")
    acc = np.zeros((plan.length_l, windows.shape[2]))
    norm = np.zeros(plan.length_l)
    for k, start in enumerate(plan.starts):
        acc[start:start + plan.window_t] += w[:, None] * windows[k]
        norm[start:start + plan.window_t] += w
    return acc / norm[:, None]


def extract_windows(frames, plan):
    """Stack windows into shape (count, T, C)."""
    idx = np.asarray(plan.starts)[:, None] + np.arange(plan.window_t)[None, :]
    return frames[idx]


def refine_windows(cfg, weights, windows, chunk_cols=65536):
    """Run the model on (count, T, C) windows, all channels as columns."""
    count, t, c = windows.shape
    cols = windows.transpose(1, 0, 2).reshape(t, count * c)
    out = np.empty_like(cols)
    for lo in range(0, cols.shape[1], chunk_cols):
        out[:, lo:lo + chunk_cols] = forward(cfg, weights, cols[:, lo:lo + chunk_cols])
    return out.reshape(t, count, c).transpose(1, 0, 2)


def smooth_frames(cfg, weights, frames, step_s=1, weighting="uniform", normalization="none"):
    frames = np.asarray(frames, dtype=np.float64)
    n = frames.shape[0]
    if n < 3:
        raise ShapeError(f"need at least 3 frames to smooth, got {n}")
    t = cfg.window_t
    if normalization == "sequence":
        frames, mean, std = sequence_normalize(frames)
    elif normalization != "none":
        raise ConfigError(f"unknown normalization {normalization!r}")
    work = frames
    if n < t:
        # reflect-pad short inputs up to one window, smooth, then crop
        work = np.pad(frames, ((0, t - n), (0, 0)), mode="reflect")
    plan = plan_windows(work.shape[0], t, min(step_s, t))
    refined = refine_windows(cfg, weights, extract_windows(work, plan))
    out = merge_overlap_average(refined, plan, weighting)[:n]
    if normalization == "sequence":
        out = sequence_denormalize(out, mean, std)
    return out


def smooth_sequence(model, seq, step_s=1, weighting="uniform", normalization=None):
    """Smooth a :class:`PoseSequence` with a checkpoint; length and metadata
    are preserved."""
    if normalization is None:
        normalization = model.train_meta.get("normalization", "none")
    out = smooth_frames(model.config, model.weights, seq.frames, step_s, weighting, normalization)
    return seq.with_frames(out)
