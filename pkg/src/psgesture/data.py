"""Skeleton sequences on disk, training augmentations and a synthetic generator."""
from __future__ import annotations

import json
import logging
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import DEFAULT_LAYOUT

logger = logging.getLogger(__name__)

TEMPORAL_SHIFT_RANGE = 5
NOISE_STD = 0.001
ROTATION_RANGES = (math.pi / 36, math.pi / 18, math.pi / 36)


class DatasetError(ValueError):
    """Malformed dataset record or manifest."""


@dataclass
class SkeletonSequence:
    id: str
    frames: np.ndarray  # (F, J, d)
    label: int | None = None
    fps: float | None = None
    source: str = ""

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3:
            raise DatasetError(f"sequence {self.id!r}: frames must be (F, J, d), got shape {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise DatasetError(f"sequence {self.id!r}: non-finite coordinates")

    def to_record(self) -> dict:
        return {"id": self.id, "label": self.label, "fps": self.fps, "frames": self.frames.tolist()}

    def __eq__(self, other):
        if not isinstance(other, SkeletonSequence):
            return NotImplemented
        return (self.id, self.label, self.fps) == (other.id, other.label, other.fps) and np.array_equal(
            self.frames, other.frames
        )


def _parse_record(obj, lineno: int, source: str) -> SkeletonSequence:
    if not isinstance(obj, dict):
        raise DatasetError(f"line {lineno}: record must be a JSON object")
    for key in ("id", "frames"):
        if key not in obj:
            raise DatasetError(f"line {lineno}: missing required field {key!r}")
    seq_id = obj["id"]
    if not isinstance(seq_id, str):
        raise DatasetError(f"line {lineno}: id must be a string")
    label = obj.get("label")
    if label is not None and (isinstance(label, bool) or not isinstance(label, int)):
        raise DatasetError(f"line {lineno} ({seq_id}): label must be an integer or null")
    fps = obj.get("fps")
    if fps is not None and (isinstance(fps, bool) or not isinstance(fps, (int, float))):
        raise DatasetError(f"line {lineno} ({seq_id}): fps must be a number or null")
    frames = obj["frames"]
    if not isinstance(frames, list) or not frames:
        raise DatasetError(f"line {lineno} ({seq_id}): frames must be a non-empty list")
    try:
        arr = np.array(frames, dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise DatasetError(f"line {lineno} ({seq_id}): ragged or non-numeric frames") from exc
    if arr.ndim != 3 or 0 in arr.shape:
        raise DatasetError(f"line {lineno} ({seq_id}): frames must be rectangular F x J x d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DatasetError(f"line {lineno} ({seq_id}): non-finite coordinates")
    return SkeletonSequence(seq_id, arr, label, None if fps is None else float(fps), source)


def load_jsonl(path) -> list[SkeletonSequence]:
    path = Path(path)
    out = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            out.append(_parse_record(obj, lineno, str(path)))
    return out


def save_jsonl(sequences, path) -> None:
    # json writes floats with repr, the shortest text that parses back exactly
    with Path(path).open("w") as fh:
        for seq in sequences:
            fh.write(json.dumps(seq.to_record(), separators=(",", ":")))
            fh.write("\n")


@dataclass
class DatasetManifest:
    classes: list[str]
    layout: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_LAYOUT))
    splits: dict[str, list[str]] = field(default_factory=lambda: {"train": [], "val": [], "test": []})
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        seen = {}
        for name, ids in self.splits.items():
            for seq_id in ids:
                if seq_id in seen:
                    raise DatasetError(f"id {seq_id!r} appears in both {seen[seq_id]!r} and {name!r} splits")
                seen[seq_id] = name

    def check_ids(self, sequences) -> None:
        known = {s.id for s in sequences}
        for name, ids in self.splits.items():
            missing = [i for i in ids if i not in known]
            if missing:
                raise DatasetError(f"split {name!r} references unknown ids, e.g. {missing[0]!r}")

    def to_dict(self) -> dict:
        out = {"classes": self.classes, "layout": self.layout, "splits": self.splits}
        out.update(self.extra)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetManifest":
        try:
            core = {k: data[k] for k in ("classes", "layout", "splits")}
        except KeyError as exc:
            raise DatasetError(f"manifest is missing {exc.args[0]!r}") from exc
        extra = {k: v for k, v in data.items() if k not in core}
        return cls(**core, extra=extra)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}: invalid manifest JSON ({exc.msg})") from exc
        return cls.from_dict(data)


def sequence_rng(seed: int, seq_id, *extra: int) -> np.random.Generator:
    """Generator keyed on ``(seed, sequence id, ...)``, independent of call order."""
    key = seq_id if isinstance(seq_id, int) else zlib.crc32(str(seq_id).encode())
    return np.random.default_rng([int(seed), int(key), *[int(e) for e in extra]])


# -- augmentations -----------------------------------------------------------


def shift_frames(frames: np.ndarray, k: int) -> np.ndarray:
    """Delay a clip by ``k`` frames (advance for negative k), replicating edge frames."""
    F = frames.shape[0]
    idx = np.clip(np.arange(F) - k, 0, F - 1)
    return frames[idx]


def augment_temporal(frames, rng: np.random.Generator, max_shift: int = TEMPORAL_SHIFT_RANGE) -> np.ndarray:
    k = int(rng.integers(-max_shift, max_shift + 1))
    return shift_frames(np.asarray(frames, dtype=np.float64), k)


def augment_noise(frames, rng: np.random.Generator, sigma: float = NOISE_STD) -> np.ndarray:
    frames = np.asarray(frames, dtype=np.float64)
    if sigma == 0:
        return frames.copy()
    return frames + rng.normal(0.0, sigma, size=frames.shape)


def rotation_matrix(ax: float, ay: float, az: float) -> np.ndarray:
    """Rotation about x, then y, then z (angles in radians)."""
    cx, sx = math.cos(ax), math.sin(ax)
    cy, sy = math.cos(ay), math.sin(ay)
    cz, sz = math.cos(az), math.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def augment_rotation(frames, rng: np.random.Generator, ranges=ROTATION_RANGES) -> np.ndarray:
    frames = np.asarray(frames, dtype=np.float64)
    angles = [rng.uniform(-r, r) for r in ranges]
    if frames.shape[-1] != 3:
        logger.warning("rotation augmentation needs 3D coordinates; leaving %dD clip unchanged", frames.shape[-1])
        return frames.copy()
    return frames @ rotation_matrix(*angles).T


AUGMENTATIONS = ("temporal", "rotation", "noise")


def augment(frames, rng: np.random.Generator, kinds=AUGMENTATIONS) -> np.ndarray:
    """Apply the requested augmentations in the fixed order temporal, rotation, noise."""
    unknown = set(kinds) - set(AUGMENTATIONS)
    if unknown:
        raise ValueError(f"unknown augmentations {sorted(unknown)}")
    out = np.asarray(frames, dtype=np.float64)
    if "temporal" in kinds:
        out = augment_temporal(out, rng)
    if "rotation" in kinds:
        out = augment_rotation(out, rng)
    if "noise" in kinds:
        out = augment_noise(out, rng)
    return out


# -- synthetic gestures ------------------------------------------------------

SYNTH_CLASSES = (
    "circle",
    "swipe_horizontal",
    "swipe_vertical",
    "push",
    "wave",
    "figure_eight",
    "static_pose_a",
    "static_pose_b",
)

_BODY = {
    "head": (0.0, 1.62, 0.0),
    "neck": (0.0, 1.45, 0.0),
    "shoulder_l": (-0.19, 1.40, 0.0),
    "shoulder_r": (0.19, 1.40, 0.0),
}
_REST_L = np.array([-0.25, 0.95, 0.08])
_READY_R = np.array([0.22, 1.15, 0.30])


def _right_hand(kind: str, s: np.ndarray, amp: float, phase: float = 0.0, direction: float = 1.0) -> np.ndarray:
    """Right-hand trajectory over gesture phase ``s`` in [0, 1].

    ``phase`` (radians) sets where periodic gestures start on their loop;
    ``direction`` (+1 or -1) flips the sweep of the swipes.
    """
    z = np.zeros_like(s)
    two_pi = 2 * np.pi
    if kind == "circle":
        a = two_pi * s + phase
        off = np.stack([0.18 * np.cos(a), 0.18 * np.sin(a), z], -1)
    elif kind == "swipe_horizontal":
        off = np.stack([-0.2 * direction * np.cos(np.pi * s), z, z], -1)
    elif kind == "swipe_vertical":
        off = np.stack([z, 0.2 * direction * np.cos(np.pi * s), z], -1)
    elif kind == "push":
        off = np.stack([z, z, 0.25 * np.sin(np.pi * s)], -1)
    elif kind == "wave":
        off = np.stack([0.1 * np.sin(3 * two_pi * s + phase), 0.15 + z, z], -1)
    elif kind == "figure_eight":
        a = two_pi * s + phase
        off = np.stack([0.18 * np.sin(a), 0.1 * np.sin(2 * a), z], -1)
    elif kind == "static_pose_a":
        off = np.stack([z - 0.05, z + 0.45, z - 0.2], -1)
    elif kind == "static_pose_b":
        off = np.stack([z - 0.2, z - 0.1, z - 0.15], -1)
    else:
        raise ValueError(f"unknown gesture {kind!r}")
    return _READY_R + amp * off


def _left_hand(kind: str, s: np.ndarray, amp: float) -> np.ndarray:
    pos = np.broadcast_to(_REST_L, s.shape + (3,)).copy()
    if kind == "static_pose_a":
        pos += amp * np.array([0.0, 0.7, 0.1])
    elif kind == "static_pose_b":
        pos += amp * np.array([-0.35, 0.4, 0.0])
    return pos


def _arm(shoulder: np.ndarray, hand: np.ndarray, side: float) -> tuple[np.ndarray, np.ndarray]:
    reach = hand - shoulder
    unit = reach / np.linalg.norm(reach, axis=-1, keepdims=True)
    wrist = hand - 0.07 * unit
    bend = np.array([0.4 * side, -1.0, -0.2])
    bend /= np.linalg.norm(bend)
    elbow = 0.5 * (shoulder + wrist) + 0.08 * bend
    return elbow, wrist


def synth_sequence(kind: str, rng: np.random.Generator, *, noise: float = 0.01, jitter: float = 5.0,
                   amp_range: float = 0.2, speed_range: float = 0.3, yaw_range: float = np.pi / 9,
                   length=(50, 70)) -> np.ndarray:
    """One ``(F, 10, 3)`` clip of the given gesture class."""
    n_frames = int(rng.integers(length[0], length[1] + 1))
    amp = rng.uniform(1 - amp_range, 1 + amp_range)
    speed = rng.uniform(1 - speed_range, 1 + speed_range)
    phase = rng.uniform(0, 2 * np.pi)
    direction = rng.choice([-1.0, 1.0])
    yaw = rng.uniform(-yaw_range, yaw_range)
    duration = min(0.6 * n_frames / speed, n_frames - 1.0)
    start = (n_frames - 1 - duration) / 2 + rng.uniform(-jitter, jitter)
    # keep the whole gesture inside the clip so loops close
    start = min(max(start, 0.0), n_frames - 1 - duration)
    t = np.arange(n_frames, dtype=np.float64)
    s = np.clip((t - start) / duration, 0.0, 1.0)
    hand_r = _right_hand(kind, s, amp, phase, direction)
    hand_l = _left_hand(kind, s, amp)
    L = DEFAULT_LAYOUT
    out = np.empty((n_frames, len(L), 3))
    for name, pos in _BODY.items():
        out[:, L[name]] = pos
    for side, hand, sign in (("r", hand_r, 1.0), ("l", hand_l, -1.0)):
        shoulder = np.asarray(_BODY[f"shoulder_{side}"])
        elbow, wrist = _arm(shoulder, hand, sign)
        out[:, L[f"elbow_{side}"]] = elbow
        out[:, L[f"wrist_{side}"]] = wrist
        out[:, L[f"hand_{side}"]] = hand
    out = out @ rotation_matrix(0.0, yaw, 0.0).T
    if noise:
        out += rng.normal(0.0, noise, size=out.shape)
    return out


def synth_generate(n_classes: int, n_per_class: int, seed: int, *, val_fraction: float = 0.1,
                   test_fraction: float = 0.2, **kwargs) -> tuple[list[SkeletonSequence], DatasetManifest]:
    """Balanced synthetic gesture set with a stratified train/val/test manifest.

    Amplitude varies by +-20 %, speed by +-30 %, gesture onset by +-5 frames;
    every joint carries Gaussian noise. Each clip is seeded by
    ``(seed, class, index)`` so the output is a pure function of the arguments.
    """
    if not 1 <= n_classes <= len(SYNTH_CLASSES):
        raise ValueError(f"n_classes must lie in [1, {len(SYNTH_CLASSES)}], got {n_classes}")
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be positive, got {n_per_class}")
    sequences = []
    splits = {"train": [], "val": [], "test": []}
    n_test = int(round(test_fraction * n_per_class))
    n_val = int(round(val_fraction * n_per_class))
    for c in range(n_classes):
        kind = SYNTH_CLASSES[c]
        for i in range(n_per_class):
            rng = np.random.default_rng([int(seed), c, i])
            seq_id = f"synth-{seed}-{kind}-{i:04d}"
            sequences.append(SkeletonSequence(seq_id, synth_sequence(kind, rng, **kwargs), c, 30.0, "synthetic"))
            if i < n_per_class - n_val - n_test:
                splits["train"].append(seq_id)
            elif i < n_per_class - n_test:
                splits["val"].append(seq_id)
            else:
                splits["test"].append(seq_id)
    manifest = DatasetManifest(list(SYNTH_CLASSES[:n_classes]), dict(DEFAULT_LAYOUT), splits)
    return sequences, manifest
