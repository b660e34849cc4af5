"""Window-in, window-out temporal refinement network.

A window batch is a ``(T, cols)`` matrix: each column is one scalar channel
of one window, so every layer maps along the time axis and the weights are
shared by all channels.

Two variants are available:

``basic``
    encoder (T->H) + LeakyReLU, ``blocks`` residual blocks, linear decoder (H->T).

``motion_aware``
    three such branches fed with positions (T), velocities (T-1) and
    accelerations (T-2), each decoding to T frames, followed by a linear
    fusion layer (3T->T).

A residual block computes ``h + W2 @ act(W1 @ h + b1) + b2``.
"""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ParseError, ShapeError
from .io_utils import atomic_write_text
from .nn import (
    DEFAULT_LEAKY_SLOPE,
    DenseLayer,
    dense_backward,
    dense_forward,
    init_dense,
    leaky_relu,
    leaky_relu_backward,
)

VARIANTS = ("basic", "motion_aware")
BRANCHES = ("pos", "vel", "acc")
CHECKPOINT_VERSION = 1


@dataclass
class SmoothNetConfig:
    variant: str = "motion_aware"
    window_t: int = 32
    hidden: int = 256
    blocks: int = None
    leaky_slope: float = DEFAULT_LEAKY_SLOPE

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.blocks is None:
            self.blocks = 3 if self.variant == "basic" else 1
        min_t = 2 if self.variant == "basic" else 3
        if int(self.window_t) < min_t:
            raise ConfigError(f"window_t must be >= {min_t} for the {self.variant} variant")
        if int(self.hidden) < 1 or int(self.blocks) < 1:
            raise ConfigError("hidden and blocks must be >= 1")
        if not 0.0 <= self.leaky_slope < 1.0:
            raise ConfigError("leaky_slope must lie in [0, 1)")
        self.window_t = int(self.window_t)
        self.hidden = int(self.hidden)
        self.blocks = int(self.blocks)
        self.leaky_slope = float(self.leaky_slope)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"variant", "window_t", "hidden", "blocks", "leaky_slope"}
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def layer_shapes(cfg):
    """Ordered ``(name, in_dim, out_dim)`` for every dense layer of ``cfg``."""
    t, h = cfg.window_t, cfg.hidden
    if cfg.variant == "basic":
        return _branch_shapes("", t, t, h, cfg.blocks)
    shapes = []
    for offset, branch in enumerate(BRANCHES):
        shapes += _branch_shapes(branch + ".", t - offset, t, h, cfg.blocks)
    shapes.append(("fusion", 3 * t, t))
    return shapes


def _branch_shapes(prefix, in_len, out_len, h, blocks):
    shapes = [(prefix + "encoder", in_len, h)]
    for k in range(blocks):
        shapes.append((f"{prefix}block{k}.fc1", h, h))
        shapes.append((f"{prefix}block{k}.fc2", h, h))
    shapes.append((prefix + "decoder", h, out_len))
    return shapes


def param_count(cfg):
    return sum(o * i + o for _, i, o in layer_shapes(cfg))


def init_weights(cfg, rng):
    return {name: init_dense(i, o, rng) for name, i, o in layer_shapes(cfg)}


def check_weights(cfg, weights):
    for name, i, o in layer_shapes(cfg):
        layer = weights.get(name)
        if layer is None:
            raise ShapeError(f"missing layer {name!r}")
        if layer.w.shape != (o, i) or layer.bias.shape != (o,):
            raise ShapeError(
                f"layer {name!r}: expected w {(o, i)}, bias {(o,)}; "
                f"got {layer.w.shape}, {layer.bias.shape}"
            )


def parameters(cfg, weights):
    """Flat list of parameter arrays (views), in :func:`layer_shapes` order."""
    out = []
    for name, _, _ in layer_shapes(cfg):
        out += [weights[name].w, weights[name].bias]
    return out


def copy_weights(weights):
    return {k: v.copy() for k, v in weights.items()}


# -- motion features -------------------------------------------------------

def diff_velocity(y):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] < 2:
        raise ShapeError(f"velocity needs at least 2 frames, got shape {y.shape}")
    return y[1:] - y[:-1]


def diff_acceleration(v):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] < 2:
        raise ShapeError(f"acceleration needs at least 3 frames, got velocity shape {v.shape}")
    return v[1:] - v[:-1]


def second_difference(y):
    """Direct 3-point stencil ``y[t+1] - 2 y[t] + y[t-1]`` along axis 0."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] < 3:
        raise ShapeError(f"second difference needs at least 3 frames, got {y.shape[0]}")
    return y[2:] - 2.0 * y[1:-1] + y[:-2]


def _second_difference_adjoint(r, length):
    out = np.zeros((length,) + r.shape[1:])
    out[:-2] += r
    out[1:-1] -= 2.0 * r
    out[2:] += r
    return out


# -- forward / backward ----------------------------------------------------

def _check_batch(cfg, batch):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[0] != cfg.window_t:
        raise ShapeError(f"expected a ({cfg.window_t}, cols) window batch, got {batch.shape}")
    return batch


def _branch_forward(weights, prefix, x, blocks, slope, tape):
    enc = weights[prefix + "encoder"]
    z = dense_forward(enc, x)
    tape.append((prefix + "encoder", x, z))
    h = leaky_relu(z, slope)
    for k in range(blocks):
        fc1 = weights[f"{prefix}block{k}.fc1"]
        fc2 = weights[f"{prefix}block{k}.fc2"]
        z1 = dense_forward(fc1, h)
        a1 = leaky_relu(z1, slope)
        tape.append((f"{prefix}block{k}", h, z1, a1))
        h = h + dense_forward(fc2, a1)
    tape.append((prefix + "decoder", h))
    return dense_forward(weights[prefix + "decoder"], h)


def _branch_backward(weights, prefix, grad_out, blocks, slope, tape, grads):
    _, h = tape.pop()
    gw, gb, gh = dense_backward(weights[prefix + "decoder"], h, grad_out)
    grads[prefix + "decoder"] = (gw, gb)
    for k in reversed(range(blocks)):
        _, h_in, z1, a1 = tape.pop()
        fc1 = weights[f"{prefix}block{k}.fc1"]
        fc2 = weights[f"{prefix}block{k}.fc2"]
        gw2, gb2, ga1 = dense_backward(fc2, a1, gh)
        gz1 = leaky_relu_backward(z1, ga1, slope)
        gw1, gb1, gh_in = dense_backward(fc1, h_in, gz1)
        grads[f"{prefix}block{k}.fc1"] = (gw1, gb1)
        grads[f"{prefix}block{k}.fc2"] = (gw2, gb2)
        gh = gh + gh_in
    _, x, z = tape.pop()
    gz = leaky_relu_backward(z, gh, slope)
    gw, gb, gx = dense_backward(weights[prefix + "encoder"], x, gz)
    grads[prefix + "encoder"] = (gw, gb)
    return gx


def forward_basic(cfg, weights, batch, tape=None):
    if cfg.variant != "basic":
        raise ConfigError("forward_basic called with a motion_aware config")
    batch = _check_batch(cfg, batch)
    return _branch_forward(weights, "", batch, cfg.blocks, cfg.leaky_slope,
                           [] if tape is None else tape)


def forward_motion_aware(cfg, weights, batch, tape=None):
    if cfg.variant != "motion_aware":
        raise ConfigError("forward_motion_aware called with a basic config")
    batch = _check_batch(cfg, batch)
    tape = [] if tape is None else tape
    vel = diff_velocity(batch)
    acc = diff_acceleration(vel)
    outs = [
        _branch_forward(weights, b + ".", x, cfg.blocks, cfg.leaky_slope, tape)
        for b, x in zip(BRANCHES, (batch, vel, acc))
    ]
    fused_in = np.concatenate(outs, axis=0)
    tape.append(("fusion", fused_in))
    return dense_forward(weights["fusion"], fused_in)


def forward(cfg, weights, batch, tape=None):
    if cfg.variant == "basic":
        return forward_basic(cfg, weights, batch, tape)
    return forward_motion_aware(cfg, weights, batch, tape)


def backward(cfg, weights, tape, grad_out):
    """Parameter gradients ``{layer: (grad_w, grad_bias)}`` from a forward tape."""
    tape = list(tape)
    grads = {}
    if cfg.variant == "basic":
        _branch_backward(weights, "", grad_out, cfg.blocks, cfg.leaky_slope, tape, grads)
        return grads
    _, fused_in = tape.pop()
    gw, gb, g_in = dense_backward(weights["fusion"], fused_in, grad_out)
    grads["fusion"] = (gw, gb)
    t = cfg.window_t
    # branches were recorded pos, vel, acc; unwind in reverse
    for idx in reversed(range(3)):
        _branch_backward(weights, BRANCHES[idx] + ".", g_in[idx * t:(idx + 1) * t],
                         cfg.blocks, cfg.leaky_slope, tape, grads)
    return grads


def flat_grads(cfg, grads):
    out = []
    for name, _, _ in layer_shapes(cfg):
        out += list(grads[name])
    return out


# -- losses ----------------------------------------------------------------

LOSS_KINDS = ("pose_plus_accel", "pose_only", "accel_only")


def _check_same(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def loss_pose(g_hat, y):
    """Mean absolute position error over all frames and columns."""
    g_hat, y = _check_same(g_hat, y)
    return float(np.mean(np.abs(g_hat - y)))


def loss_accel(g_hat, a_gt):
    """Mean absolute gap between the prediction's second difference and ``a_gt``."""
    g_hat = np.asarray(g_hat, dtype=np.float64)
    a_pred, a_gt = _check_same(second_difference(g_hat), a_gt)
    return float(np.mean(np.abs(a_pred - a_gt)))


def loss_total(g_hat, y):
    return loss_pose(g_hat, y) + loss_accel(g_hat, second_difference(y))


def loss_and_grad(g_hat, y, kind="pose_plus_accel"):
    """Loss value and its gradient with respect to ``g_hat``."""
    if kind not in LOSS_KINDS:
        raise ConfigError(f"loss must be one of {LOSS_KINDS}, got {kind!r}")
    g_hat, y = _check_same(g_hat, y)
    value = 0.0
    grad = np.zeros_like(g_hat)
    if kind != "accel_only":
        diff = g_hat - y
        value += float(np.mean(np.abs(diff)))
        grad += np.sign(diff) / diff.size
    if kind != "pose_only":
        diff = second_difference(g_hat) - second_difference(y)
        value += float(np.mean(np.abs(diff)))
        grad += _second_difference_adjoint(np.sign(diff) / diff.size, g_hat.shape[0])
    return value, grad


# -- checkpoints -----------------------------------------------------------

@dataclass
class Checkpoint:
    config: SmoothNetConfig
    weights: dict
    train_meta: dict = field(default_factory=dict)


def checkpoint_to_dict(ckpt):
    check_weights(ckpt.config, ckpt.weights)
    tensors = {}
    for name, _, _ in layer_shapes(ckpt.config):
        layer = ckpt.weights[name]
        for suffix, arr in (("weight", layer.w), ("bias", layer.bias[:, None])):
            tensors[f"{name}.{suffix}"] = {
                "shape": list(arr.shape),
                "data": arr.astype(np.float32).astype(np.float64).ravel().tolist(),
            }
    return {
        "format_version": CHECKPOINT_VERSION,
        "config": ckpt.config.to_dict(),
        "weights": tensors,
        "train_meta": dict(ckpt.train_meta),
    }


def checkpoint_from_dict(doc):
    for key in ("format_version", "config", "weights"):
        if key not in doc:
            raise ParseError(f"checkpoint is missing {key!r}")
    if doc["format_version"] != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint format_version {doc['format_version']!r}")
    cfg = SmoothNetConfig.from_dict(doc["config"])
    tensors = doc["weights"]

    def load(key, shape):
        if key not in tensors:
            raise ParseError(f"checkpoint weights missing {key!r}")
        entry = tensors[key]
        data = np.asarray(entry["data"], dtype=np.float64)
        if list(entry["shape"]) != list(shape) or data.size != int(np.prod(shape)):
            raise ParseError(f"{key}: expected shape {list(shape)}, got {entry['shape']}")
        if not np.all(np.isfinite(data)):
            raise ParseError(f"{key}: non-finite values")
        return data.reshape(shape)

    weights = {}
    for name, i, o in layer_shapes(cfg):
        weights[name] = DenseLayer(load(f"{name}.weight", (o, i)), load(f"{name}.bias", (o, 1))[:, 0])
    return Checkpoint(cfg, weights, dict(doc.get("train_meta", {})))


def save_checkpoint(path, ckpt):
    atomic_write_text(path, json.dumps(checkpoint_to_dict(ckpt)))


def load_checkpoint(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return checkpoint_from_dict(doc)
