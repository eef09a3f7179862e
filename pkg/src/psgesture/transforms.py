"""Sequence transforms: lead-lag lift, dyadic splits, resampling, normalization."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .signature import _batch_signature_cf, _combine_levels_cf, _from_cf, check_depth, flatten_levels

MAX_DYADIC_LEVEL = 6


def lead_lag(seq) -> np.ndarray:
    """Lift a 1D sequence of length n to a 2D path with 2n - 1 vertices.

    Vertex pairs are ``(lead, lag)``; the lead coordinate advances first.
    Leading axes are treated as batch axes, the last axis is time.
    """
    x = np.asarray(seq, dtype=np.float64)
    n = x.shape[-1]
    if n < 2:
        raise ValueError(f"lead-lag needs at least 2 samples, got {n}")
    out = np.empty(x.shape[:-1] + (2 * n - 1, 2))
    out[..., 0::2, 0] = x
    out[..., 0::2, 1] = x
    out[..., 1::2, 0] = x[..., 1:]
    out[..., 1::2, 1] = x[..., :-1]
    return out


def _round_half_up_split(j: int, level: int, n_points: int) -> int:
    # round(j * (n_points - 1) / 2**level) with halves going up, in exact integers
    return (2 * j * (n_points - 1) + 2**level) // 2 ** (level + 1)


def dyadic_subpaths(n_points: int, depth: int) -> list[tuple[int, int]]:
    """Dyadic decomposition of ``n_points`` vertices into nested intervals.

    Returns ``2**(depth + 1) - 1`` inclusive 0-based ``(start, end)`` pairs,
    level by level, left to right within a level. Adjacent intervals share
    their endpoint.
    """
    if depth < 0 or depth > MAX_DYADIC_LEVEL:
        raise ValueError(f"dyadic level must lie in [0, {MAX_DYADIC_LEVEL}], got {depth}")
    if n_points < 2:
        raise ValueError(f"need at least 2 points, got {n_points}")
    intervals = []
    for level in range(depth + 1):
        cuts = [_round_half_up_split(j, level, n_points) for j in range(2**level + 1)]
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b <= a:
                raise ValueError(
                    f"dyadic level {depth} degenerates on {n_points} points "
                    f"(interval [{a}, {b}] at level {level})"
                )
            intervals.append((a, b))
    return intervals


def n_dyadic(depth: int) -> int:
    return 2 ** (depth + 1) - 1


def dyadic_signatures(paths: np.ndarray, depth: int, m: int, stride: int = 1) -> np.ndarray:
    """Flattened signatures of every dyadic subpath of a batch of paths.

    ``paths`` has shape ``(..., V, d)``. Split points are computed on
    ``(V - 1) // stride + 1`` base points and scaled by ``stride``; lead-lag
    paths use ``stride=2`` so every cut lands on a diagonal vertex. Finest
    intervals are computed directly, coarser ones by Chen-combining their two
    halves. Output shape is ``(..., 2**(depth+1) - 1, sig_dimension(d, m))``.
    """
    paths = np.asarray(paths, dtype=np.float64)
    n_base = (paths.shape[-2] - 1) // stride + 1
    check_depth(paths.shape[-1], m)
    intervals = dyadic_subpaths(n_base, depth)
    first_finest = n_dyadic(depth - 1) if depth > 0 else 0
    level_sigs = [
        _batch_signature_cf(paths[..., a * stride : b * stride + 1, :], m) for a, b in intervals[first_finest:]
    ]
    per_level = [level_sigs]
    for _ in range(depth):
        children = per_level[0]
        parents = [_combine_levels_cf(children[2 * j], children[2 * j + 1]) for j in range(len(children) // 2)]
        per_level.insert(0, parents)
    flat = [flatten_levels(_from_cf(sig)) for level in per_level for sig in level]
    return np.stack(flat, axis=-2)


def resample(frames, n_target: int) -> np.ndarray:
    """Resample along the first axis to ``n_target`` frames.

    Upsampling interpolates linearly at evenly spaced positions; downsampling
    picks frames at rounded evenly spaced indices. Endpoints are kept.
    """
    frames = np.asarray(frames, dtype=np.float64)
    n = frames.shape[0]
    if n < 2 or n_target < 2:
        raise ValueError(f"resampling needs at least 2 source and target frames, got {n} -> {n_target}")
    if n == n_target:
        return frames.copy()
    if n > n_target:
        idx = (2 * np.arange(n_target) * (n - 1) + (n_target - 1)) // (2 * (n_target - 1))
        return frames[idx]
    pos = np.linspace(0.0, n - 1, n_target)
    lo = np.minimum(np.floor(pos).astype(int), n - 2)
    alpha = (pos - lo).reshape((-1,) + (1,) * (frames.ndim - 1))
    out = (1.0 - alpha) * frames[lo] + alpha * frames[lo + 1]
    out[0], out[-1] = frames[0], frames[-1]
    return out


def normalize_skeleton(frames) -> np.ndarray:
    """Center a ``(F, J, d)`` clip on its mean joint and scale it into [-1, 1].

    The scale is one scalar per clip, the largest absolute centered
    coordinate; a clip with no spread is only centered.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3 or frames.shape[0] < 1 or frames.shape[1] < 1:
        raise ValueError(f"expected a (frames, joints, dims) array, got shape {frames.shape}")
    centered = frames - frames.mean(axis=(0, 1), keepdims=True)
    scale = np.abs(centered).max()
    if scale > 0:
        centered = centered / scale
    return centered


class SkeletonPreprocessor(TransformerMixin, BaseEstimator):
    """Normalize each clip and resample it to a fixed frame count.

    Accepts a list of ``(F_i, J, d)`` clips of varying length (or a stacked
    array) and returns an ``(n, n_frames, J, d)`` array.
    """

    def __init__(self, n_frames=39, normalize=True):
        self.n_frames = n_frames
        self.normalize = normalize

    def fit(self, X, y=None):
        clips = [np.asarray(c, dtype=np.float64) for c in X]
        if not clips:
            raise ValueError("no clips to fit on")
        shapes = {c.shape[1:] for c in clips}
        if len(shapes) != 1 or clips[0].ndim != 3:
            raise ValueError(f"clips must share (joints, dims), got {sorted(shapes)}")
        self.n_joints_, self.n_dims_ = clips[0].shape[1:]
        return self

    def transform(self, X):
        out = []
        for clip in X:
            clip = np.asarray(clip, dtype=np.float64)
            if clip.ndim != 3 or clip.shape[1:] != (self.n_joints_, self.n_dims_):
                raise ValueError(f"clip shape {clip.shape} does not match ({self.n_joints_}, {self.n_dims_})")
            if self.normalize:
                clip = normalize_skeleton(clip)
            out.append(resample(clip, self.n_frames))
        return np.stack(out)
