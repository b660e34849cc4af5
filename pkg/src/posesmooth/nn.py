"""Fully-connected layers with hand-written backprop, Adam and LR decay."""
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeError

DEFAULT_LEAKY_SLOPE = 0.01


@dataclass
class DenseLayer:
    """``y = w @ x + bias``; columns of ``x`` are independent samples."""

    w: np.ndarray
    bias: np.ndarray

    @property
    def in_dim(self):
        return self.w.shape[1]

    @property
    def out_dim(self):
        return self.w.shape[0]

    def copy(self):
        return DenseLayer(self.w.copy(), self.bias.copy())


def init_dense(in_dim, out_dim, rng):
    """Uniform weights in +-1/sqrt(in_dim), zero bias."""
    if in_dim < 1 or out_dim < 1:
        raise ShapeError(f"layer dims must be >= 1, got {in_dim}->{out_dim}")
    bound = 1.0 / np.sqrt(in_dim)
    w = rng.uniform(-bound, bound, size=(out_dim, in_dim))
    return DenseLayer(w, np.zeros(out_dim))


def dense_forward(layer, x):
    if x.ndim != 2 or x.shape[0] != layer.in_dim:
        raise ShapeError(f"layer expects {layer.in_dim} input rows, got {x.shape}")
    return layer.w @ x + layer.bias[:, None]


def dense_backward(layer, x, grad_out):
    """Return ``(grad_w, grad_bias, grad_x)`` for upstream gradient ``grad_out``."""
    if grad_out.shape != (layer.out_dim, x.shape[1]) or x.shape[0] != layer.in_dim:
        raise ShapeError(
            f"backward shapes mismatch: w {layer.w.shape}, x {x.shape}, grad {grad_out.shape}"
        )
    return grad_out @ x.T, grad_out.sum(axis=1), layer.w.T @ grad_out


def leaky_relu(x, slope=DEFAULT_LEAKY_SLOPE):
    if not 0.0 <= slope < 1.0:
        raise ValueError(f"slope must lie in [0, 1), got {slope}")
    return np.maximum(x, slope * x)


def leaky_relu_backward(x, grad_out, slope=DEFAULT_LEAKY_SLOPE):
    """Gradient through :func:`leaky_relu` given its pre-activation input ``x``."""
    return np.where(x > 0, grad_out, slope * grad_out)


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **kw):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adam_step(params, grads, state, lr):
    """In-place Adam update of ``params`` (a list of arrays) with bias correction."""
    if not (len(params) == len(grads) == len(state.m)):
        raise ShapeError("params, grads and optimizer state disagree in length")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient passed to adam_step")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.t
    corr2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeError(f"param {p.shape} vs grad {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
    return params, state


def clip_global_norm(grads, max_norm):
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if total > max_norm > 0:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


@dataclass
class LrSchedule:
    initial_lr: float = 1e-3
    decay_rate: float = 0.95

    def __post_init__(self):
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be positive")
        if not 0.0 < self.decay_rate <= 1.0:
            raise ValueError("decay_rate must lie in (0, 1]")


def lr_at_epoch(sched, epoch):
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return sched.initial_lr * sched.decay_rate ** epoch
