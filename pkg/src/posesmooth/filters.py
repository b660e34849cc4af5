"""Classic low-pass baselines, applied independently to every channel.

All functions take a 1-D series or an ``(L, C)`` array (time on axis 0).
"""
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError

KINDS = ("gaussian", "savgol", "one_euro", "moving_avg")


@dataclass
class FilterSpec:
    kind: str
    window: int = None
    sigma: float = None
    polyorder: int = None
    min_cutoff: float = None
    beta: float = None
    d_cutoff: float = 1.0
    fps: float = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"filter kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "gaussian":
            _need(self, "window", "sigma")
            _check_window(self.window)
            if self.sigma <= 0:
                raise ConfigError("sigma must be > 0")
        elif self.kind == "savgol":
            _need(self, "window", "polyorder")
            _check_window(self.window)
            if not 0 <= self.polyorder < self.window:
                raise ConfigError("polyorder must satisfy 0 <= polyorder < window")
        elif self.kind == "moving_avg":
            _need(self, "window")
            if self.window < 1 or self.window % 2 == 0:
                raise ConfigError(f"window must be a positive odd integer, got {self.window}")
        else:
            _need(self, "min_cutoff", "beta")
            if self.min_cutoff <= 0:
                raise ConfigError("min_cutoff must be > 0")
            if self.fps is not None and self.fps <= 0:
                raise ConfigError("fps must be > 0")
            if self.d_cutoff <= 0:
                raise ConfigError("d_cutoff must be > 0")

    @property
    def label(self):
        if self.kind == "gaussian":
            return f"gaussian(w={self.window},sigma={self.sigma:g})"
        if self.kind == "savgol":
            return f"savgol(w={self.window},p={self.polyorder})"
        if self.kind == "moving_avg":
            return f"moving_avg(w={self.window})"
        return f"one_euro(fc={self.min_cutoff:g},beta={self.beta:g})"

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown filter keys: {sorted(unknown)}")
        if "kind" not in d:
            raise ConfigError("filter spec is missing 'kind'")
        d["kind"] = d["kind"].replace("-", "_")
        return cls(**d)


def _need(spec, *names):
    missing = [n for n in names if getattr(spec, n) is None]
    if missing:
        raise ConfigError(f"{spec.kind} filter requires {', '.join(missing)}")


def _check_window(window):
    if window < 3 or window % 2 == 0:
        raise ConfigError(f"window must be odd and >= 3, got {window}")


def _as_2d(seq):
    x = np.asarray(seq, dtype=np.float64)
    if x.ndim == 1:
        return x[:, None], True
    if x.ndim != 2:
        raise ConfigError(f"expected a 1-D or (L, C) array, got shape {x.shape}")
    return x, False


def _restore(y, was_1d):
    return y[:, 0] if was_1d else y


def _correlate_reflect(x, kernel):
    # symmetric kernels only, so correlation == convolution
    r = (len(kernel) - 1) // 2
    padded = np.pad(x, ((r, r), (0, 0)), mode="reflect") if x.shape[0] > 1 else np.pad(
        x, ((r, r), (0, 0)), mode="edge")
    out = np.zeros_like(x)
    for k, wk in enumerate(kernel):
        out += wk * padded[k:k + x.shape[0]]
    return out


def gaussian_kernel(sigma, window):
    _check_window(window)
    if sigma <= 0:
        raise ConfigError("sigma must be > 0")
    r = (window - 1) // 2
    t = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return k / k.sum()


def apply_gaussian(seq, spec):
    x, was_1d = _as_2d(seq)
    return _restore(_correlate_reflect(x, gaussian_kernel(spec.sigma, spec.window)), was_1d)


def apply_moving_average(seq, spec):
    x, was_1d = _as_2d(seq)
    if spec.window == 1:
        return _restore(x.copy(), was_1d)
    kernel = np.full(spec.window, 1.0 / spec.window)
    return _restore(_correlate_reflect(x, kernel), was_1d)


def _vandermonde(window, polyorder):
    r = (window - 1) // 2
    t = np.arange(-r, r + 1, dtype=np.float64)
    return np.vander(t, polyorder + 1, increasing=True)


def savgol_coeffs(window, polyorder):
    """Weights whose dot product with a window equals the centre value of its
    least-squares polynomial fit."""
    _check_window(window)
    if not 0 <= polyorder < window:
        raise ConfigError("polyorder must satisfy 0 <= polyorder < window")
    # centre value of the fit is the constant coefficient, i.e. row 0 of pinv(A)
    return np.linalg.pinv(_vandermonde(window, polyorder))[0]


def apply_savgol(seq, spec):
    """Savitzky-Golay smoothing; edge frames use the polynomial fitted to the
    first/last full window instead of padding."""
    x, was_1d = _as_2d(seq)
    n, w, p = x.shape[0], spec.window, spec.polyorder
    if n < w:
        raise ConfigError(f"sequence length {n} is shorter than the savgol window {w}")
    r = (w - 1) // 2
    coeffs = savgol_coeffs(w, p)
    out = np.empty_like(x)
    interior = np.zeros((n - 2 * r, x.shape[1]))
    for k, ck in enumerate(coeffs):
        interior += ck * x[k:k + n - 2 * r]
    out[r:n - r] = interior

    vander = _vandermonde(w, p)
    pinv = np.linalg.pinv(vander)
    t = np.arange(-r, r + 1, dtype=np.float64)
    eval_head = np.vander(t[:r], p + 1, increasing=True)
    eval_tail = np.vander(t[r + 1:], p + 1, increasing=True)
    if r:
        out[:r] = eval_head @ (pinv @ x[:w])
        out[n - r:] = eval_tail @ (pinv @ x[n - w:])
    return _restore(out, was_1d)


def _alpha(cutoff, fps):
    return 1.0 / (1.0 + fps / (2.0 * math.pi * cutoff))


def apply_one_euro(seq, spec):
    """Causal One-Euro filter run independently on every channel."""
    if spec.fps is None:
        raise ConfigError("one_euro filter needs fps")
    x, was_1d = _as_2d(seq)
    out = np.empty_like(x)
    if x.shape[0] == 0:
        return _restore(out, was_1d)
    fps = float(spec.fps)
    a_d = _alpha(spec.d_cutoff, fps)
    prev = x[0].copy()
    dx_prev = np.zeros(x.shape[1])
    out[0] = prev
    for t in range(1, x.shape[0]):
        dx = (x[t] - prev) * fps
        dx_hat = a_d * dx + (1.0 - a_d) * dx_prev
        cutoff = spec.min_cutoff + spec.beta * np.abs(dx_hat)
        a = _alpha(cutoff, fps)
        # incremental form keeps constant inputs bit-exact
        prev = prev + a * (x[t] - prev)
        dx_prev = dx_hat
        out[t] = prev
    return _restore(out, was_1d)


_DISPATCH = {
    "gaussian": apply_gaussian,
    "savgol": apply_savgol,
    "one_euro": apply_one_euro,
    "moving_avg": apply_moving_average,
}


def filter_array(frames, spec):
    return _DISPATCH[spec.kind](frames, spec)


def apply_filter(seq, spec):
    """Filter every channel of a :class:`~posesmooth.data.PoseSequence`."""
    if spec.kind == "one_euro" and spec.fps is None:
        spec = FilterSpec(**{**asdict(spec), "fps": seq.fps})
    return seq.with_frames(filter_array(seq.frames, spec))


# Reference baseline settings: strong smoothing (low Accel) and light
# smoothing (low position error). One-Euro fps is taken from the sequence.
BASELINE_PRESETS = {
    "comparable_accel": [
        FilterSpec("savgol", window=257, polyorder=2),
        FilterSpec("gaussian", window=129, sigma=4.0),
        FilterSpec("one_euro", min_cutoff=1e-4, beta=0.7),
    ],
    "comparable_mpjpe": [
        FilterSpec("savgol", window=31, polyorder=2),
        FilterSpec("gaussian", window=31, sigma=3.0),
        FilterSpec("one_euro", min_cutoff=0.04, beta=0.7),
    ],
}
