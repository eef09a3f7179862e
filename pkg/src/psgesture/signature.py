"""Truncated signatures of piecewise-linear paths.

A signature truncated at depth ``m`` is stored as a list of ``m`` flat arrays;
level ``k`` holds ``d**k`` coefficients indexed lexicographically by the word
``(i_1, ..., i_k)`` with ``i_1`` varying slowest. The level-0 term is always 1
and is never stored. Words are tuples of 0-based letters.

The batched helpers (``segment_levels``, ``combine_levels``,
``batch_signature``) accept arrays with arbitrary leading batch axes.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_DEPTH = 6
MAX_LEVEL_SIZE = 100_000

Word = tuple[int, ...]


def sig_dimension(d: int, m: int) -> int:
    """Number of stored coefficients, ``d + d**2 + ... + d**m``."""
    if int(d) != d or int(m) != m:
        raise TypeError("d and m must be integers")
    if d < 1 or m < 1:
        raise ValueError(f"sig_dimension needs d >= 1 and m >= 1, got d={d}, m={m}")
    return sum(d**k for k in range(1, m + 1))


def check_depth(d: int, m: int) -> None:
    """Reject truncation depths whose top level would be unreasonably large."""
    if d < 1 or m < 1:
        raise ValueError(f"need d >= 1 and m >= 1, got d={d}, m={m}")
    if m > MAX_DEPTH:
        raise ValueError(f"truncation depth {m} exceeds the cap of {MAX_DEPTH}")
    if d**m > MAX_LEVEL_SIZE:
        raise ValueError(f"d**m = {d**m} exceeds the guard of {MAX_LEVEL_SIZE}")


def as_path(points) -> np.ndarray:
    """Validate a piecewise-linear path given as an ``(F, d)`` array."""
    path = np.asarray(points, dtype=np.float64)
    if path.ndim == 1:
        path = path[:, None]
    if path.ndim != 2:
        raise ValueError(f"path must be 2-dimensional (F, d), got shape {path.shape}")
    if path.shape[0] < 2:
        raise ValueError(f"path needs at least 2 vertices, got {path.shape[0]}")
    if path.shape[1] < 1:
        raise ValueError("path dimension must be at least 1")
    if not np.all(np.isfinite(path)):
        raise ValueError("path contains non-finite coordinates")
    return path


# ---------------------------------------------------------------------------
# batched level arithmetic


def segment_levels(increments: np.ndarray, m: int) -> list[np.ndarray]:
    """Signature levels of straight segments with the given increments.

    Level k is the k-fold outer power of the increment divided by k!.
    ``increments`` has shape ``(..., d)``; level k has shape ``(..., d**k)``.
    """
    inc = np.asarray(increments, dtype=np.float64)
    batch = inc.shape[:-1]
    # powers first, one division by k! per level: exact whenever the power is
    levels, power = [inc.copy()], inc
    for k in range(2, m + 1):
        power = (power[..., :, None] * inc[..., None, :]).reshape(*batch, -1)
        levels.append(power / math.factorial(k))
    return levels


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    batch = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
    return (a[..., :, None] * b[..., None, :]).reshape(*batch, -1)


def combine_levels(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Truncated tensor product of two signatures (Chen concatenation)."""
    m = len(a)
    out = []
    for n in range(1, m + 1):
        level = a[n - 1] + b[n - 1]
        for k in range(1, n):
            level = level + _outer(a[k - 1], b[n - k - 1])
        out.append(level)
    return out


def _segment_levels_cf(inc: np.ndarray, m: int) -> list[np.ndarray]:
    # coefficient-first layout: inc is (d, *batch), level k is (d**k, *batch)
    levels, power = [inc], inc
    for k in range(2, m + 1):
        power = (power[:, None] * inc[None, :]).reshape((-1,) + inc.shape[1:])
        levels.append(power / math.factorial(k))
    return levels


def _combine_levels_cf(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> list[np.ndarray]:
    out = []
    for n in range(1, len(a) + 1):
        level = a[n - 1] + b[n - 1]
        for k in range(1, n):
            left, right = a[k - 1], b[n - k - 1]
            level += (left[:, None] * right[None, :]).reshape(level.shape)
        out.append(level)
    return out


def _batch_signature_cf(paths: np.ndarray, m: int) -> list[np.ndarray]:
    # paths (..., F, d) -> levels (d**k, ...), folding one segment at a time.
    # Appending a segment with increment x updates level n (top level first,
    # so lower levels still hold old values) by the Horner form of
    # sum_k S_k (x)^(n-k) / (n-k)!.
    inc = np.diff(paths, axis=-2)
    inc = np.ascontiguousarray(np.moveaxis(inc, (-1, -2), (0, 1)))  # (d, S, ...)
    batch = inc.shape[2:]
    levels = _segment_levels_cf(inc[:, 0].copy(), m)
    for j in range(1, inc.shape[1]):
        x = inc[:, j]
        for n in range(m, 0, -1):
            acc = x / n
            for k in range(1, n):
                acc = ((acc + levels[k - 1])[:, None] * x[None]).reshape((-1,) + batch) / (n - k)
            levels[n - 1] += acc
    return levels


def _from_cf(levels: Sequence[np.ndarray]) -> list[np.ndarray]:
    return [np.moveaxis(lv, 0, -1) for lv in levels]


def batch_signature(paths: np.ndarray, m: int) -> list[np.ndarray]:
    """Signatures of many equal-length paths at once.

    ``paths`` has shape ``(..., F, d)``; level k comes back as ``(..., d**k)``.
    Equivalent to ``path_signature`` on each path, vectorized over the batch.
    """
    paths = np.asarray(paths, dtype=np.float64)
    if paths.shape[-2] < 2:
        raise ValueError("paths need at least 2 vertices")
    check_depth(paths.shape[-1], m)
    return _from_cf(_batch_signature_cf(paths, m))


def flatten_levels(levels: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate(list(levels), axis=-1)


# ---------------------------------------------------------------------------
# single-path API


@dataclass(frozen=True)
class TruncatedSignature:
    """Levels 1..m of the signature of a path in ``R^d``."""

    d: int
    m: int
    levels: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.levels) != self.m:
            raise ValueError(f"expected {self.m} levels, got {len(self.levels)}")
        for k, level in enumerate(self.levels, start=1):
            if level.shape != (self.d**k,):
                raise ValueError(f"level {k} must have {self.d**k} coefficients, got shape {level.shape}")
            level.setflags(write=False)

    @classmethod
    def from_levels(cls, levels: Sequence[np.ndarray]) -> "TruncatedSignature":
        levels = tuple(np.array(lv, dtype=np.float64) for lv in levels)
        return cls(d=levels[0].shape[0], m=len(levels), levels=levels)

    @classmethod
    def identity(cls, d: int, m: int) -> "TruncatedSignature":
        """Signature of a constant path: every stored coefficient is zero."""
        return cls.from_levels([np.zeros(d**k) for k in range(1, m + 1)])

    def __getitem__(self, word: Word) -> float:
        word = tuple(word)
        if not word:
            return 1.0
        if len(word) > self.m:
            raise IndexError(f"word of length {len(word)} exceeds depth {self.m}")
        offset = 0
        for letter in word:
            if not 0 <= letter < self.d:
                raise IndexError(f"letter {letter} out of range for d={self.d}")
            offset = offset * self.d + letter
        return float(self.levels[len(word) - 1][offset])

    def to_vector(self) -> np.ndarray:
        return flatten_levels(self.levels)

    def __len__(self) -> int:
        return sig_dimension(self.d, self.m)


def segment_signature(start, end, m: int) -> TruncatedSignature:
    start = np.atleast_1d(np.asarray(start, dtype=np.float64))
    end = np.atleast_1d(np.asarray(end, dtype=np.float64))
    if start.shape != end.shape or start.ndim != 1:
        raise ValueError(f"segment endpoints differ in dimension: {start.shape} vs {end.shape}")
    check_depth(start.shape[0], m)
    return TruncatedSignature.from_levels(segment_levels(end - start, m))


def chen_combine(a: TruncatedSignature, b: TruncatedSignature) -> TruncatedSignature:
    """Signature of the concatenation of the path of ``a`` followed by ``b``."""
    if a.d != b.d or a.m != b.m:
        raise ValueError(f"cannot combine signatures with (d, m) = ({a.d}, {a.m}) and ({b.d}, {b.m})")
    return TruncatedSignature.from_levels(combine_levels(a.levels, b.levels))


def path_signature(path, m: int) -> TruncatedSignature:
    """Signature of a piecewise-linear path, folding Chen's identity left to right."""
    path = as_path(path)
    check_depth(path.shape[1], m)
    sig = segment_signature(path[0], path[1], m)
    for j in range(1, path.shape[0] - 1):
        sig = chen_combine(sig, segment_signature(path[j], path[j + 1], m))
    return sig


def time_augment(path) -> np.ndarray:
    """Append a time coordinate running from 0 to 1 over the vertices."""
    path = as_path(path)
    t = np.linspace(0.0, 1.0, path.shape[0])
    return np.column_stack([path, t])


def shuffles(w1: Word, w2: Word) -> list[Word]:
    """All interleavings of two words, with multiplicity."""
    n1, n2 = len(w1), len(w2)
    out = []
    for positions in itertools.combinations(range(n1 + n2), n1):
        chosen = set(positions)
        it1, it2 = iter(w1), iter(w2)
        out.append(tuple(next(it1) if i in chosen else next(it2) for i in range(n1 + n2)))
    return out


def shuffle_residual(sig: TruncatedSignature, w1: Word, w2: Word) -> float:
    """``S[w1] * S[w2]`` minus the sum of ``S`` over shuffles of the two words.

    Vanishes for a genuine signature; generically nonzero otherwise.
    """
    w1, w2 = tuple(w1), tuple(w2)
    if len(w1) + len(w2) > sig.m:
        raise ValueError(f"|w1| + |w2| = {len(w1) + len(w2)} exceeds depth {sig.m}")
    return sig[w1] * sig[w2] - math.fsum(sig[w] for w in shuffles(w1, w2))
