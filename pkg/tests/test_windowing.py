import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posesmooth.data import MotionSpec, NoiseSpec, PoseSequence, make_dataset
from posesmooth.errors import ConfigError, ShapeError
from posesmooth.model import Checkpoint, SmoothNetConfig, forward, init_weights
from posesmooth.nn import LrSchedule
from posesmooth.numerics import new_rng
from posesmooth.trainer import TrainConfig, train
from posesmooth.windowing import (
    InputTooShort,
    extract_windows,
    merge_overlap_average,
    plan_windows,
    refine_windows,
    smooth_frames,
    smooth_sequence,
    triangular_weights,
)


def _ckpt(t=8, h=6, seed=0, variant="motion_aware", **meta):
    cfg = SmoothNetConfig(variant=variant, window_t=t, hidden=h)
    return Checkpoint(cfg, init_weights(cfg, new_rng(seed)), meta)


def _covered(plan):
    counts = np.zeros(plan.length_l, dtype=int)
    for s in plan.starts:
        counts[s:s + plan.window_t] += 1
    return counts


def test_plan_examples():
    assert plan_windows(32, 32, 1).starts == [0]
    assert plan_windows(5, 3, 1).starts == [0, 1, 2]
    plan = plan_windows(10, 4, 3)
    assert plan.starts == [0, 3, 6]
    assert _covered(plan).min() >= 1 and plan.starts[-1] + 4 == 10
    assert plan_windows(11, 4, 3).starts == [0, 3, 6, 7]


def test_plan_errors():
    with pytest.raises(InputTooShort):
        plan_windows(3, 4, 1)
    with pytest.raises(ConfigError):
        plan_windows(10, 4, 5)
    with pytest.raises(ConfigError):
        plan_windows(10, 4, 0)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 64).flatmap(lambda t: st.tuples(st.integers(t, 200), st.just(t),
                                                      st.integers(1, t))))
def test_plan_covers_every_frame(lts):
    length, t, s = lts
    plan = plan_windows(length, t, s)
    assert _covered(plan).min() >= 1
    assert plan.starts[0] == 0 and plan.starts[-1] + t == length
    assert plan.starts == sorted(set(plan.starts))


def test_merge_single_window_identity():
    plan = plan_windows(6, 6, 1)
    w = np.random.default_rng(0).normal(size=(1, 6, 2))
    np.testing.assert_array_equal(merge_overlap_average(w, plan), w[0])


def test_merge_hand_coverage():
    plan = plan_windows(4, 2, 1)
    np.testing.assert_array_equal(_covered(plan), [1, 2, 2, 1])
    x = np.array([[1.0], [4.0], [9.0], [16.0]])
    np.testing.assert_array_equal(merge_overlap_average(extract_windows(x, plan), plan), x)


def test_merge_matches_accumulation_oracle():
    plan = plan_windows(23, 6, 4)
    chunks = np.random.default_rng(1).normal(size=(plan.count, 6, 3))
    total = np.zeros((23, 3))
    count = np.zeros(23)
    for k, s in enumerate(plan.starts):
        for j in range(6):
            total[s + j] += chunks[k, j]
            count[s + j] += 1
    np.testing.assert_allclose(merge_overlap_average(chunks, plan), total / count[:, None],
                               atol=1e-12)


def test_merge_errors_and_triangular():
    plan = plan_windows(10, 4, 2)
    with pytest.raises(ShapeError):
        merge_overlap_average(np.zeros((plan.count + 1, 4, 1)), plan)
    with pytest.raises(ConfigError):
        merge_overlap_average(np.zeros((plan.count, 4, 1)), plan, weighting="hann")
    np.testing.assert_allclose(triangular_weights(4), [0.5, 1.0, 1.0, 0.5])
    const = np.full((plan.count, 4, 2), 3.25)
    np.testing.assert_allclose(merge_overlap_average(const, plan, "triangular"), 3.25, atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 64).flatmap(lambda t: st.tuples(st.integers(t, 200), st.just(t),
                                                      st.integers(1, t))),
       st.floats(-1e3, 1e3))
def test_merge_constant_chunks(lts, value):
    length, t, s = lts
    plan = plan_windows(length, t, s)
    out = merge_overlap_average(np.full((plan.count, t, 1), value), plan)
    assert np.max(np.abs(out - value)) <= 1e-12 * max(1.0, abs(value))


def test_output_depends_only_on_covering_windows():
    plan = plan_windows(20, 5, 3)
    chunks = np.random.default_rng(2).normal(size=(plan.count, 5, 1))
    base = merge_overlap_average(chunks, plan)
    chunks[1] += 100.0
    changed = np.nonzero(np.abs(merge_overlap_average(chunks, plan) - base)[:, 0] > 0)[0]
    s = plan.starts[1]
    assert set(changed) == set(range(s, s + 5))


def test_refine_windows_matches_per_window_forward():
    ck = _ckpt()
    wins = np.random.default_rng(3).normal(size=(5, 8, 3))
    out = refine_windows(ck.config, ck.weights, wins, chunk_cols=4)
    for k in range(5):
        np.testing.assert_allclose(out[k], forward(ck.config, ck.weights, wins[k]), atol=1e-12)


@pytest.mark.parametrize("length", [33, 64, 100])
def test_smooth_sequence_preserves_length(length):
    ck = _ckpt(t=32, h=8)
    seq = PoseSequence(np.random.default_rng(length).normal(size=(length, 6)), fps=25,
                       layout="xyz", units="meter")
    out = smooth_sequence(ck, seq)
    assert out.length == length and out.same_layout(seq) and out.fps == 25
    assert out.units == "meter"


def test_short_inputs_are_reflect_padded():
    ck = _ckpt(t=8)
    x = np.random.default_rng(4).normal(size=(5, 2))
    padded = np.pad(x, ((0, 3), (0, 0)), mode="reflect")
    np.testing.assert_allclose(smooth_frames(ck.config, ck.weights, x),
                               forward(ck.config, ck.weights, padded)[:5], atol=1e-12)
    with pytest.raises(ShapeError):
        smooth_frames(ck.config, ck.weights, x[:2])


def test_channel_permutation_end_to_end():
    ck = _ckpt(t=8)
    seq = PoseSequence(np.random.default_rng(5).normal(size=(30, 5)))
    perm = [3, 0, 4, 1, 2]
    out = smooth_sequence(ck, seq).frames
    # window stacking changes the BLAS column layout, so allow round-off
    np.testing.assert_allclose(smooth_sequence(ck, seq.with_frames(seq.frames[:, perm])).frames,
                               out[:, perm], rtol=0, atol=1e-12)


def test_sequence_normalization_round_trip():
    ck = _ckpt(t=8, normalization="sequence")
    x = np.random.default_rng(6).normal(size=(20, 3)) * 50 + 7
    seq = PoseSequence(x)
    out = smooth_sequence(ck, seq)
    manual = smooth_frames(ck.config, ck.weights, x, normalization="sequence")
    np.testing.assert_array_equal(out.frames, manual)
    with pytest.raises(ConfigError):
        smooth_frames(ck.config, ck.weights, x, normalization="minmax")


def test_copy_model_yields_near_identity():
    ds = make_dataset(MotionSpec(length_l=64, channels=6, seed=1), NoiseSpec(p=0.0, sigma=0.0, seed=2),
                      10, 0.8)
    cfg = TrainConfig(SmoothNetConfig(variant="basic", window_t=8, hidden=32), epochs=20,
                      batch_size=32, max_steps_per_epoch=100, eval_every=0, loss="pose_only",
                      lr=LrSchedule(3e-3, 0.9))
    ck, _ = train(cfg, ds)
    seq = ds.test[0].clean
    out = smooth_sequence(ck, seq, step_s=3)
    assert np.abs(out.frames - seq.frames).mean() < 0.02 * np.abs(seq.frames).mean()
