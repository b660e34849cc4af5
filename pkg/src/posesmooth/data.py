"""Pose sequences: container, JSON/CSV I/O, normalisation, synthetic data."""
import csv
import io
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, LayoutError, ParseError
from .io_utils import atomic_write_text
from .numerics import gaussian_samples, new_rng

LAYOUTS = {"xy": 2, "xyz": 3, "generic": 1}
UNITS = ("pixel", "meter", "mm", "unitless")
FORMAT_VERSION = 1


@dataclass
class PoseSequence:
    """``L x C`` per-frame channel values plus layout metadata.

    For ``xy``/``xyz`` layouts the channels are grouped joint-major,
    ``C = num_joints * dims``. A ``generic`` sequence treats every channel as
    its own one-dimensional joint.
    """

    frames: np.ndarray
    fps: float = 30.0
    layout: str = "generic"
    units: str = "unitless"
    num_joints: int = None
    dims: int = None

    def __post_init__(self):
        self.frames = np.array(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise ParseError(f"frames must be an L x C array, got shape {self.frames.shape}")
        if self.layout not in LAYOUTS:
            raise LayoutError(f"layout must be one of {tuple(LAYOUTS)}, got {self.layout!r}")
        if self.units not in UNITS:
            raise ConfigError(f"units must be one of {UNITS}, got {self.units!r}")
        c = self.frames.shape[1]
        d = LAYOUTS[self.layout]
        if self.dims is None:
            self.dims = d
        if self.num_joints is None:
            self.num_joints = c // self.dims if self.dims else c
        if self.dims != d:
            raise LayoutError(f"layout {self.layout!r} implies dims={d}, got {self.dims}")
        if self.num_joints * self.dims != c:
            raise LayoutError(
                f"{c} channels do not match {self.num_joints} joints x {self.dims} dims"
            )
        if not np.all(np.isfinite(self.frames)):
            raise ParseError("frames contain NaN or Inf")
        if not self.fps > 0:
            raise ConfigError("fps must be positive")
        self.fps = float(self.fps)

    @property
    def length(self):
        return self.frames.shape[0]

    @property
    def channels(self):
        return self.frames.shape[1]

    def joints(self):
        """View of the frames as ``(L, N, D)``."""
        return self.frames.reshape(self.length, self.num_joints, self.dims)

    def with_frames(self, frames, **changes):
        return replace(self, frames=frames, **changes)

    def same_layout(self, other):
        return (self.frames.shape == other.frames.shape
                and self.num_joints == other.num_joints and self.dims == other.dims)

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "fps": self.fps,
            "num_joints": self.num_joints,
            "dims": self.dims,
            "layout": self.layout,
            "units": self.units,
            "frames": self.frames.tolist(),
        }

    @classmethod
    def from_dict(cls, doc, source="<sequence>"):
        if not isinstance(doc, dict):
            raise ParseError(f"{source}: top level must be a JSON object")
        for key in ("format_version", "fps", "layout", "frames"):
            if key not in doc:
                raise ParseError(f"{source}: missing required key {key!r}")
        if doc["format_version"] != FORMAT_VERSION:
            raise ParseError(f"{source}: unsupported format_version {doc['format_version']!r}")
        rows = doc["frames"]
        if not isinstance(rows, list) or not rows:
            raise ParseError(f"{source}: 'frames' must be a non-empty list of rows")
        width = len(rows[0]) if isinstance(rows[0], list) else None
        for i, row in enumerate(rows):
            if not isinstance(row, list) or len(row) != width:
                raise ParseError(f"{source}: frames[{i}] is not a row of {width} numbers")
        try:
            frames = np.asarray(rows, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{source}: non-numeric entry in 'frames': {exc}") from exc
        if not np.all(np.isfinite(frames)):
            bad = np.argwhere(~np.isfinite(frames))[0]
            raise ParseError(f"{source}: non-finite value at frames[{bad[0]}][{bad[1]}]")
        return cls(
            frames,
            fps=doc["fps"],
            layout=doc["layout"],
            units=doc.get("units", "unitless"),
            num_joints=doc.get("num_joints"),
            dims=doc.get("dims"),
        )


def save_sequence(path, seq):
    atomic_write_text(path, json.dumps(seq.to_dict()))


def load_sequence(path):
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return PoseSequence.from_dict(doc, source=str(path))


def save_csv(path, seq):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["frame"] + [f"c{i}" for i in range(seq.channels)])
    for t, row in enumerate(seq.frames):
        writer.writerow([t] + [format(v, ".17g") for v in row])
    atomic_write_text(path, buf.getvalue())


def load_csv(path, fps=30.0, layout="generic", units="unitless"):
    """Read a ``frame,c0,c1,...`` table; metadata is supplied by the caller."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty CSV")
    header = rows[0]
    expected = ["frame"] + [f"c{i}" for i in range(len(header) - 1)]
    if header != expected or len(header) < 2:
        raise ParseError(f"{path}: header must be 'frame,c0,c1,...', got {','.join(header)!r}")
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            index = int(row[0])
            values.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        if index != lineno - 2:
            raise ParseError(f"{path}:{lineno}: frames must be numbered 0,1,2,... in order")
    if not values:
        raise ParseError(f"{path}: no frames")
    return PoseSequence(np.asarray(values), fps=fps, layout=layout, units=units)


# -- normalisation ---------------------------------------------------------

def normalize_2d(seq, width, height):
    """Map pixel coordinates into [-1, 1] using the frame size."""
    if seq.layout != "xy":
        raise LayoutError(f"normalize_2d needs an 'xy' sequence, got {seq.layout!r}")
    scale = np.array([2.0 / width, 2.0 / height])
    out = seq.joints() * scale - 1.0
    return seq.with_frames(out.reshape(seq.length, -1), units="unitless")


def denormalize_2d(seq, width, height):
    if seq.layout != "xy":
        raise LayoutError(f"denormalize_2d needs an 'xy' sequence, got {seq.layout!r}")
    scale = np.array([width / 2.0, height / 2.0])
    out = (seq.joints() + 1.0) * scale
    return seq.with_frames(out.reshape(seq.length, -1), units="pixel")


def root_relative_3d(seq, root_joint=0):
    if seq.layout != "xyz":
        raise LayoutError(f"root_relative_3d needs an 'xyz' sequence, got {seq.layout!r}")
    if not 0 <= root_joint < seq.num_joints:
        raise ConfigError(f"root joint {root_joint} out of range for {seq.num_joints} joints")
    j = seq.joints()
    out = j - j[:, root_joint:root_joint + 1, :]
    out[:, root_joint, :] = 0.0
    return seq.with_frames(out.reshape(seq.length, -1))


def sequence_normalize(frames, eps=1e-8):
    """Standardise every channel by its own mean/std; returns ``(normed, mean, std)``."""
    frames = np.asarray(frames, dtype=np.float64)
    mean = frames.mean(axis=0)
    std = frames.std(axis=0)
    std = np.where(std < eps, 1.0, std)
    return (frames - mean) / std, mean, std


def sequence_denormalize(frames, mean, std):
    return frames * std + mean


# -- synthetic motion and noise --------------------------------------------

@dataclass
class MotionSpec:
    """Sum-of-sinusoids ground truth: each channel is independent."""

    length_l: int = 256
    channels: int = 51
    num_sinusoids: int = 3
    max_freq: float = 1.0
    max_amp: float = 0.2
    fps: float = 30.0
    seed: int = 0
    dims: int = 3
    units: str = "meter"

    def __post_init__(self):
        if self.length_l < 1 or self.channels < 1:
            raise ConfigError("length_l and channels must be >= 1")
        if self.num_sinusoids < 1:
            raise ConfigError("num_sinusoids must be >= 1")
        if not 0 <= self.max_freq < self.fps / 2:
            raise ConfigError(f"max_freq must lie in [0, fps/2) = [0, {self.fps / 2})")
        if self.max_amp < 0:
            raise ConfigError("max_amp must be >= 0")

    @property
    def layout(self):
        if self.dims in (2, 3) and self.channels % self.dims == 0:
            return {2: "xy", 3: "xyz"}[self.dims]
        return "generic"


def synth_motion(spec):
    rng = new_rng(spec.seed)
    k, c = spec.num_sinusoids, spec.channels
    amp = rng.uniform(0.0, spec.max_amp, size=(k, c))
    freq = rng.uniform(0.0, spec.max_freq, size=(k, c))
    phase = rng.uniform(0.0, 2.0 * math.pi, size=(k, c))
    t = np.arange(spec.length_l, dtype=np.float64)[:, None, None]
    frames = np.sum(amp * np.sin(2.0 * math.pi * freq * t / spec.fps + phase), axis=1)
    return PoseSequence(frames, fps=spec.fps, layout=spec.layout, units=spec.units)


NOISE_KINDS = ("gaussian_impulsive", "sudden", "long_term")


@dataclass
class NoiseSpec:
    """Corruption process.

    ``gaussian_impulsive``: every (frame, channel) entry independently receives
    N(0, sigma^2) with probability ``p``. ``sudden``: one random frame per
    channel receives an N(0, sigma^2) spike. ``long_term``: one random span of
    ``span`` frames gets a constant per-channel offset of +-``bias`` plus
    per-frame N(0, sigma^2) jitter. ``sigma`` is a standard deviation in the
    sequence's units.
    """

    kind: str = "gaussian_impulsive"
    p: float = 0.5
    sigma: float = 0.01
    span: int = 1
    bias: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigError(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError("p must lie in [0, 1]")
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        if self.span < 1:
            raise ConfigError("span must be >= 1")


def inject_noise(seq, spec):
    rng = new_rng(spec.seed)
    n, c = seq.frames.shape
    noise = np.zeros((n, c))
    if spec.kind == "gaussian_impulsive":
        hit = rng.random((n, c)) < spec.p
        noise = np.where(hit, gaussian_samples(rng, n * c, 0.0, spec.sigma).reshape(n, c), 0.0)
    elif spec.kind == "sudden":
        where = rng.integers(0, n, size=c)
        noise[where, np.arange(c)] = gaussian_samples(rng, c, 0.0, spec.sigma)
    else:
        if spec.span > n:
            raise ConfigError(f"span {spec.span} exceeds sequence length {n}")
        start = int(rng.integers(0, n - spec.span + 1))
        signs = rng.choice([-1.0, 1.0], size=c)
        jitter = gaussian_samples(rng, spec.span * c, 0.0, spec.sigma).reshape(spec.span, c)
        noise[start:start + spec.span] = spec.bias * signs + jitter
    return seq.with_frames(seq.frames + noise)


@dataclass
class Pair:
    noisy: PoseSequence
    clean: PoseSequence
    motion_seed: int = None
    noise_seed: int = None


@dataclass
class Dataset:
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)


def _child_seeds(seed, count):
    return [int(s.generate_state(1, dtype=np.uint64)[0])
            for s in np.random.SeedSequence(seed).spawn(count)]


def make_dataset(motion, noise, count, split=0.8):
    """``count`` seeded (noisy, clean) pairs split into train/test."""
    if not 0.0 < split < 1.0:
        raise ConfigError("split must lie strictly between 0 and 1")
    if count < 1:
        raise ConfigError("count must be >= 1")
    motion_seeds = _child_seeds(motion.seed, count)
    noise_seeds = _child_seeds(noise.seed, count)
    pairs = []
    for ms, ns in zip(motion_seeds, noise_seeds):
        clean = synth_motion(replace(motion, seed=ms))
        noisy = inject_noise(clean, replace(noise, seed=ns))
        pairs.append(Pair(noisy, clean, ms, ns))
    n_train = int(round(count * split))
    if count >= 2:
        n_train = min(max(n_train, 1), count - 1)
    return Dataset(pairs[:n_train], pairs[n_train:])


# -- on-disk datasets ------------------------------------------------------

MANIFEST_NAME = "manifest.json"


def write_dataset(dataset, out_dir, seed=None, extra=None):
    """Write every pair as JSON sequences plus a manifest; returns the manifest path.

    Paths in the manifest are relative to ``out_dir``.
    """
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for split, pairs in (("train", dataset.train), ("test", dataset.test)):
        for i, pair in enumerate(pairs):
            stem = f"{split}_{i:04d}"
            save_sequence(os.path.join(out_dir, stem + "_noisy.json"), pair.noisy)
            save_sequence(os.path.join(out_dir, stem + "_clean.json"), pair.clean)
            entries.append({
                "noisy": stem + "_noisy.json",
                "clean": stem + "_clean.json",
                "split": split,
                "motion_seed": pair.motion_seed,
                "noise_seed": pair.noise_seed,
            })
    doc = {"format_version": FORMAT_VERSION, "pairs": entries, "seed": seed}
    if extra:
        doc.update(extra)
    path = os.path.join(out_dir, MANIFEST_NAME)
    atomic_write_text(path, json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def load_manifest(path):
    """Load a manifest into a :class:`Dataset`; relative paths resolve against
    the manifest's directory."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if doc.get("format_version") != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported or missing format_version")
    if "pairs" not in doc:
        raise ParseError(f"{path}: missing required key 'pairs'")
    base = os.path.dirname(os.path.abspath(path))
    ds = Dataset()
    for i, entry in enumerate(doc["pairs"]):
        for key in ("noisy", "clean", "split"):
            if key not in entry:
                raise ParseError(f"{path}: pairs[{i}] is missing {key!r}")
        if entry["split"] not in ("train", "test"):
            raise ParseError(f"{path}: pairs[{i}].split must be 'train' or 'test'")
        noisy = load_sequence(os.path.join(base, entry["noisy"]))
        clean = load_sequence(os.path.join(base, entry["clean"]))
        if not noisy.same_layout(clean):
            raise ParseError(f"{path}: pairs[{i}] noisy/clean shapes differ")
        pair = Pair(noisy, clean, entry.get("motion_seed"), entry.get("noise_seed"))
        (ds.train if entry["split"] == "train" else ds.test).append(pair)
    return ds
