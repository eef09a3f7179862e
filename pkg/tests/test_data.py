import json
import logging
import math

import numpy as np
import pytest
from scipy import stats

from psgesture.data import (
    DatasetError,
    DatasetManifest,
    SkeletonSequence,
    augment,
    augment_noise,
    augment_rotation,
    augment_temporal,
    load_jsonl,
    rotation_matrix,
    save_jsonl,
    sequence_rng,
    shift_frames,
    synth_generate,
)
from psgesture.transforms import normalize_skeleton


@pytest.fixture
def clip():
    return np.random.default_rng(0).normal(size=(39, 10, 3))


def test_jsonl_round_trip(tmp_path, clip):
    seqs = [SkeletonSequence("a", clip, 2, 30.0), SkeletonSequence("b", clip[:5] * 1e-7, None, None)]
    path = tmp_path / "d.jsonl"
    save_jsonl(seqs, path)
    back = load_jsonl(path)
    assert back == seqs
    np.testing.assert_array_equal(back[0].frames, clip)


def test_missing_label_loads_as_absent(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text(json.dumps({"id": "t", "frames": [[[0, 0, 0]], [[1, 1, 1]]]}) + "\n")
    (seq,) = load_jsonl(path)
    assert seq.label is None and seq.fps is None
    assert seq.frames.shape == (2, 1, 3)


@pytest.mark.parametrize("record,fragment", [
    ({"id": "r", "frames": [[[0, 0, 0], [1, 1, 1]], [[0, 0, 0]]]}, "line 2"),
    ({"frames": [[[0, 0, 0]]]}, "missing required field 'id'"),
    ({"id": "r", "label": "x", "frames": [[[0, 0, 0]]]}, "label"),
    ({"id": "r", "frames": [[[0, 0, 0], [1, 1]]]}, "line 2"),
])
def test_bad_records(tmp_path, record, fragment):
    path = tmp_path / "d.jsonl"
    good = {"id": "ok", "frames": [[[0, 0, 0]]]}
    path.write_text(json.dumps(good) + "\n" + json.dumps(record) + "\n")
    with pytest.raises(DatasetError, match=fragment):
        load_jsonl(path)


def test_invalid_json_line(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text('{"id": "a", "frames": [[[0,0,0]]]}\n{broken\n')
    with pytest.raises(DatasetError, match="line 2"):
        load_jsonl(path)


def test_manifest_round_trip_and_checks(tmp_path):
    m = DatasetManifest(["a", "b"], splits={"train": ["x"], "val": [], "test": ["y"]})
    m.save(tmp_path / "m.json")
    back = DatasetManifest.load(tmp_path / "m.json")
    assert back.to_dict() == m.to_dict()
    with pytest.raises(DatasetError):
        DatasetManifest(["a"], splits={"train": ["x"], "test": ["x"]})
    with pytest.raises(DatasetError):
        back.check_ids([SkeletonSequence("x", np.zeros((2, 1, 3)))])


def test_sequence_rng_is_keyed():
    a = sequence_rng(3, "clip-7", 2).random()
    assert a == sequence_rng(3, "clip-7", 2).random()
    assert a != sequence_rng(3, "clip-7", 3).random()
    assert a != sequence_rng(4, "clip-7", 2).random()


def test_temporal_shift_rule(clip):
    np.testing.assert_array_equal(shift_frames(clip, 0), clip)
    out = shift_frames(clip, 5)
    assert out.shape == clip.shape
    for f in range(6):
        np.testing.assert_array_equal(out[f], clip[0])
    np.testing.assert_array_equal(out[5:], clip[:34])
    back = shift_frames(clip, -5)
    np.testing.assert_array_equal(back[-6:], np.broadcast_to(clip[-1], (6, 10, 3)))


def test_temporal_shift_distribution():
    rng = np.random.default_rng(0)
    ramp = np.arange(39, dtype=float)[:, None, None] * np.ones((1, 1, 1))
    counts = np.zeros(11, dtype=int)
    for _ in range(11_000):
        out = augment_temporal(ramp, rng)
        k = int(round(ramp[20, 0, 0] - out[20, 0, 0]))
        counts[k + 5] += 1
    assert np.all(np.abs(counts - 1000) <= 100)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_noise_statistics():
    rng = np.random.default_rng(1)
    delta = augment_noise(np.zeros((1_000_000, 1, 1)), rng)
    assert 0.00097 <= delta.std() <= 0.00103
    assert abs(delta.mean()) < 1e-5
    x = np.ones((3, 2, 3))
    np.testing.assert_array_equal(augment_noise(x, rng, sigma=0.0), x)


def test_rotation_definition():
    v = np.array([1.0, 0.0, 0.0])
    a = math.pi / 18
    np.testing.assert_allclose(rotation_matrix(0, a, 0) @ v, [math.cos(a), 0, -math.sin(a)], atol=1e-15)
    np.testing.assert_array_equal(rotation_matrix(0, 0, 0), np.eye(3))


def test_rotation_rigid(clip):
    out = augment_rotation(clip, np.random.default_rng(3))
    assert out.shape == clip.shape
    for f in (0, 17, 38):
        d0 = np.linalg.norm(clip[f, :, None] - clip[f, None], axis=-1)
        d1 = np.linalg.norm(out[f, :, None] - out[f, None], axis=-1)
        np.testing.assert_allclose(d1, d0, atol=1e-12)


def test_rotation_angles_in_range():
    rng = np.random.default_rng(4)
    ranges = (math.pi / 36, math.pi / 18, math.pi / 36)
    for _ in range(200):
        R = augment_rotation(np.eye(3)[None], rng)[0].T  # rows of eye map to columns of R
        # recover x-y-z angles from R = Rz Ry Rx
        ay = -math.asin(R[2, 0])
        ax = math.atan2(R[2, 1], R[2, 2])
        az = math.atan2(R[1, 0], R[0, 0])
        for angle, bound in zip((ax, ay, az), ranges):
            assert abs(angle) <= bound + 1e-12


def test_rotation_2d_is_noop_with_warning(caplog):
    x = np.random.default_rng(0).normal(size=(5, 4, 2))
    with caplog.at_level(logging.WARNING):
        out = augment_rotation(x, np.random.default_rng(0))
    np.testing.assert_array_equal(out, x)
    assert "3D" in caplog.text


def test_augment_preserves_shape_and_order(clip):
    out = augment(clip, sequence_rng(0, "s", 1))
    assert out.shape == clip.shape
    rng = sequence_rng(0, "s", 1)
    manual = augment_noise(augment_rotation(augment_temporal(clip, rng), rng), rng)
    np.testing.assert_array_equal(out, manual)
    np.testing.assert_array_equal(augment(clip, rng, ()), clip)
    with pytest.raises(ValueError):
        augment(clip, rng, ("mirror",))


def test_synth_counts_and_balance():
    seqs, manifest = synth_generate(5, 100, seed=1)
    assert len(seqs) == 500
    labels = np.array([s.label for s in seqs])
    assert np.all(np.bincount(labels) == 100)
    assert all(s.frames.shape[1:] == (10, 3) for s in seqs)
    assert len(manifest.classes) == 5
    sizes = {k: len(v) for k, v in manifest.splits.items()}
    assert sizes == {"train": 350, "val": 50, "test": 100}
    manifest.check_ids(seqs)


def test_synth_deterministic(tmp_path):
    a, _ = synth_generate(3, 4, seed=9)
    b, _ = synth_generate(3, 4, seed=9)
    c, _ = synth_generate(3, 4, seed=10)
    assert a == b
    assert a != c
    save_jsonl(a, tmp_path / "a.jsonl")
    save_jsonl(b, tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_synth_circle_closes():
    seqs, _ = synth_generate(1, 50, seed=2, noise=0.0)
    for s in seqs:
        x = normalize_skeleton(s.frames)
        assert np.linalg.norm(x[0, 9] - x[-1, 9]) < 0.05


def test_synth_rejects_bad_class_count():
    with pytest.raises(ValueError):
        synth_generate(9, 10, 0)
    with pytest.raises(ValueError):
        synth_generate(0, 10, 0)
