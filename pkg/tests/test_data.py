import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from posesmooth.data import (
    MotionSpec,
    NoiseSpec,
    PoseSequence,
    denormalize_2d,
    inject_noise,
    load_csv,
    load_manifest,
    load_sequence,
    make_dataset,
    normalize_2d,
    root_relative_3d,
    save_csv,
    save_sequence,
    sequence_denormalize,
    sequence_normalize,
    synth_motion,
    write_dataset,
)
from posesmooth.errors import ConfigError, LayoutError, ParseError
from posesmooth.metrics import accel_error


def _seq(length=12, channels=6, seed=0, **kw):
    return PoseSequence(np.random.default_rng(seed).normal(size=(length, channels)), **kw)


# -- container -------------------------------------------------------------

def test_layout_validation():
    seq = _seq(layout="xyz", units="meter")
    assert seq.num_joints == 2 and seq.dims == 3 and seq.joints().shape == (12, 2, 3)
    assert _seq(layout="generic").num_joints == 6
    with pytest.raises(LayoutError):
        _seq(channels=5, layout="xyz")
    with pytest.raises(LayoutError):
        _seq(layout="xy", dims=3)
    with pytest.raises(LayoutError):
        _seq(layout="uvw")
    with pytest.raises(ConfigError):
        _seq(units="inch")
    with pytest.raises(ConfigError):
        _seq(fps=0)
    with pytest.raises(ParseError):
        PoseSequence(np.array([[0.0, np.nan]]))


# -- JSON / CSV ------------------------------------------------------------

def test_json_round_trip(tmp_path):
    seq = _seq(length=1000, channels=51, layout="xyz", units="mm", fps=50)
    save_sequence(tmp_path / "s.json", seq)
    back = load_sequence(tmp_path / "s.json")
    assert np.max(np.abs(back.frames - seq.frames)) == 0
    assert (back.fps, back.layout, back.units, back.num_joints, back.dims) == (50, "xyz", "mm", 17, 3)


@pytest.mark.parametrize("mutate,needle", [
    (lambda d: d.pop("frames"), "frames"),
    (lambda d: d.pop("fps"), "fps"),
    (lambda d: d.__setitem__("format_version", 2), "format_version"),
    (lambda d: d["frames"].__setitem__(1, [1.0]), "frames[1]"),
    (lambda d: d["frames"][0].__setitem__(0, "x"), "non-numeric"),
])
def test_json_parse_errors_name_the_field(tmp_path, mutate, needle):
    doc = _seq(length=3, channels=2).to_dict()
    mutate(doc)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ParseError, match=needle.replace("[", r"\[").replace("]", r"\]")):
        load_sequence(path)


def test_json_rejects_non_finite(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format_version":1,"fps":30,"layout":"generic","frames":[[1.0, NaN]]}')
    with pytest.raises(ParseError, match="non-finite"):
        load_sequence(path)
    path.write_text("{oops")
    with pytest.raises(ParseError, match="line 1"):
        load_sequence(path)


def test_csv_round_trip_and_cross_format(tmp_path):
    seq = _seq(length=40, channels=6, layout="xy", units="pixel", fps=24)
    save_csv(tmp_path / "s.csv", seq)
    save_sequence(tmp_path / "s.json", seq)
    back = load_csv(tmp_path / "s.csv", fps=24, layout="xy", units="pixel")
    np.testing.assert_array_equal(back.frames, seq.frames)
    np.testing.assert_array_equal(back.frames, load_sequence(tmp_path / "s.json").frames)
    assert back.same_layout(seq)


@pytest.mark.parametrize("text", [
    "frame,x0\n0,1\n",
    "frame,c0,c1\n0,1,2\n1,3\n",
    "frame,c0\n1,1\n",
    "frame,c0\n0,abc\n",
    "",
    "frame,c0\n",
])
def test_csv_errors(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ParseError):
        load_csv(path)


# -- normalisation ---------------------------------------------------------

def test_normalize_2d_corners():
    seq = PoseSequence(np.array([[0.0, 0.0, 640.0, 480.0, 320.0, 240.0]]), layout="xy",
                       units="pixel")
    out = normalize_2d(seq, 640, 480)
    np.testing.assert_allclose(out.frames, [[-1, -1, 1, 1, 0, 0]], atol=1e-15)
    assert out.units == "unitless"
    with pytest.raises(LayoutError):
        normalize_2d(_seq(layout="xyz"), 640, 480)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 6), elements=st.floats(-2, 2)), st.floats(10, 4000),
       st.floats(10, 4000))
def test_normalize_2d_inverse(frames, width, height):
    seq = PoseSequence(frames, layout="xy", units="unitless")
    back = normalize_2d(denormalize_2d(seq, width, height), width, height)
    np.testing.assert_allclose(back.frames, frames, atol=1e-12)


def test_root_relative_3d():
    seq = _seq(channels=12, layout="xyz", units="meter")
    out = root_relative_3d(seq, 1)
    assert np.all(out.joints()[:, 1] == 0.0)
    j, o = seq.joints(), out.joints()
    np.testing.assert_allclose(np.linalg.norm(o[:, 0] - o[:, 3], axis=1),
                               np.linalg.norm(j[:, 0] - j[:, 3], axis=1), atol=1e-12)
    np.testing.assert_array_equal(root_relative_3d(out, 1).frames, out.frames)
    with pytest.raises(ConfigError):
        root_relative_3d(seq, 4)
    with pytest.raises(LayoutError):
        root_relative_3d(_seq(layout="generic"), 0)


def test_sequence_normalize_round_trip():
    x = np.random.default_rng(1).normal(size=(30, 4)) * 7 + 3
    x[:, 2] = 5.0
    normed, mean, std = sequence_normalize(x)
    np.testing.assert_allclose(normed[:, [0, 1, 3]].std(axis=0), 1.0)
    np.testing.assert_allclose(sequence_denormalize(normed, mean, std), x, atol=1e-12)


# -- synthetic motion and noise -------------------------------------------

def test_synth_motion_properties():
    spec = MotionSpec(length_l=200, channels=9, num_sinusoids=3, max_freq=2.0, max_amp=0.3, seed=5)
    seq = synth_motion(spec)
    assert seq.frames.shape == (200, 9) and seq.layout == "xyz" and seq.units == "meter"
    assert np.abs(seq.frames).max() <= 3 * 0.3
    bound = 3 * 0.3 * (2 * math.pi * 2.0 / 30.0) ** 2
    assert np.abs(np.diff(seq.frames, 2, axis=0)).max() <= bound
    np.testing.assert_array_equal(synth_motion(spec).frames, seq.frames)
    flat = synth_motion(MotionSpec(length_l=20, channels=3, num_sinusoids=1, max_freq=0.0))
    assert np.all(flat.frames == flat.frames[0])


def test_motion_spec_validation():
    with pytest.raises(ConfigError):
        MotionSpec(max_freq=15.0, fps=30.0)
    with pytest.raises(ConfigError):
        MotionSpec(num_sinusoids=0)


@pytest.mark.parametrize("kind", ["gaussian_impulsive", "sudden", "long_term"])
def test_noise_degenerate_cases(kind):
    seq = synth_motion(MotionSpec(length_l=50, channels=6))
    zero = inject_noise(seq, NoiseSpec(kind=kind, sigma=0.0, bias=0.0, span=5))
    np.testing.assert_array_equal(zero.frames, seq.frames)
    noisy = inject_noise(seq, NoiseSpec(kind=kind, sigma=0.1, span=5, seed=3))
    assert noisy.same_layout(seq) and noisy.fps == seq.fps and noisy.units == seq.units
    np.testing.assert_array_equal(
        inject_noise(seq, NoiseSpec(kind=kind, sigma=0.1, span=5, seed=3)).frames, noisy.frames)


def test_noise_p_zero_is_identity():
    seq = synth_motion(MotionSpec(length_l=50, channels=6))
    np.testing.assert_array_equal(inject_noise(seq, NoiseSpec(p=0.0, sigma=1.0)).frames, seq.frames)


def test_impulsive_fraction():
    seq = PoseSequence(np.zeros((1000, 100)))
    noisy = inject_noise(seq, NoiseSpec(p=0.5, sigma=1.0, seed=7))
    assert abs(np.mean(noisy.frames != 0.0) - 0.5) < 0.01


def test_sudden_and_long_term_shapes():
    seq = PoseSequence(np.zeros((40, 5)))
    sudden = inject_noise(seq, NoiseSpec(kind="sudden", sigma=1.0, seed=1))
    assert np.all((sudden.frames != 0).sum(axis=0) == 1)
    lt = inject_noise(seq, NoiseSpec(kind="long_term", sigma=0.0, bias=2.0, span=7, seed=2))
    rows = np.nonzero(np.any(lt.frames != 0, axis=1))[0]
    assert len(rows) == 7 and np.all(np.diff(rows) == 1)
    assert np.all(np.abs(lt.frames[rows]) == 2.0)
    with pytest.raises(ConfigError):
        inject_noise(seq, NoiseSpec(kind="long_term", span=41))


@pytest.mark.parametrize("kwargs", [dict(p=1.5), dict(sigma=-1.0), dict(span=0), dict(kind="pink")])
def test_noise_spec_validation(kwargs):
    with pytest.raises(ConfigError):
        NoiseSpec(**kwargs)


def test_accel_zero_clean_positive_noisy():
    clean = synth_motion(MotionSpec(length_l=64, channels=6, seed=2))
    assert accel_error(clean.joints(), clean.joints())[0] == 0.0
    noisy = inject_noise(clean, NoiseSpec(p=0.5, sigma=0.01, seed=3))
    assert accel_error(noisy.joints(), clean.joints())[0] > 0.0


# -- datasets --------------------------------------------------------------

def test_make_dataset_split_and_determinism():
    motion, noise = MotionSpec(length_l=40, channels=6, seed=1), NoiseSpec(seed=2)
    ds = make_dataset(motion, noise, 10, 0.8)
    assert len(ds.train) == 8 and len(ds.test) == 2
    again = make_dataset(motion, noise, 10, 0.8)
    for a, b in zip(ds.train + ds.test, again.train + again.test):
        np.testing.assert_array_equal(a.noisy.frames, b.noisy.frames)
    seeds = [p.motion_seed for p in ds.train + ds.test]
    assert len(set(seeds)) == 10
    test_accel = np.mean([accel_error(p.noisy.joints(), p.clean.joints())[0] for p in ds.test])
    assert test_accel > 0
    with pytest.raises(ConfigError):
        make_dataset(motion, noise, 10, 1.0)


def test_write_and_load_dataset(tmp_path):
    ds = make_dataset(MotionSpec(length_l=20, channels=3, seed=1), NoiseSpec(seed=2), 4, 0.5)
    path = write_dataset(ds, tmp_path / "d", seed=9)
    doc = json.loads(open(path).read())
    assert doc["seed"] == 9 and len(doc["pairs"]) == 4
    back = load_manifest(path)
    assert len(back.train) == 2 and len(back.test) == 2
    np.testing.assert_array_equal(back.test[1].clean.frames, ds.test[1].clean.frames)
    assert back.train[0].noise_seed == ds.train[0].noise_seed


def test_manifest_errors(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"format_version": 1}))
    with pytest.raises(ParseError, match="pairs"):
        load_manifest(path)
    path.write_text(json.dumps({"format_version": 1, "pairs": [{"noisy": "a.json"}]}))
    with pytest.raises(ParseError, match="clean"):
        load_manifest(path)
