"""Temporal transformer module: regress one shift per sequence and resample.

A localization net maps the raw-coordinate vector ``I`` of a sequence to a
scalar shift ``delta``. The ``(rows, F)`` frame matrix is then read at the
fractional positions ``x - delta`` (clamped to the valid frame range) by
linear interpolation. Frames are 0-based here, so the clamp range is
``[0, F - 1]``.

At an integer position the lower neighbour is the position itself and the
interpolation weight is 0; the derivative there is taken from that branch,
``v[p + 1] - v[p]`` with respect to the position.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVATIONS = {
    "tanh": (np.tanh, lambda h: 1.0 - h * h),
    "relu": (lambda z: np.maximum(z, 0.0), lambda h: (h > 0).astype(np.float64)),
}


@dataclass
class LocalizationNet:
    """Two dense layers, ``D_RC -> hidden -> 1``."""

    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    activation: str = "tanh"

    @classmethod
    def init(cls, n_in: int, rng: np.random.Generator, hidden: int = 64, activation: str = "tanh"):
        # final layer starts at zero so the module is the identity at init
        bound = np.sqrt(6.0 / (n_in + hidden))
        return cls(
            W1=rng.uniform(-bound, bound, size=(n_in, hidden)),
            b1=np.zeros(hidden),
            w2=np.zeros((hidden, 1)),
            b2=np.zeros(1),
            activation=activation,
        )

    @property
    def n_in(self) -> int:
        return self.W1.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


@dataclass
class ShiftCache:
    delta: np.ndarray  # (n,)
    V_in: np.ndarray  # (n, rows, F)
    lo: np.ndarray  # (n, F) lower source column
    hi: np.ndarray  # (n, F) upper source column
    alpha: np.ndarray  # (n, F) weight of the upper column
    clamped: np.ndarray  # (n, F) bool


@dataclass
class TTMCache:
    I: np.ndarray
    hidden: np.ndarray
    shift: ShiftCache
    n_frames: int


def ln_forward(I, net: LocalizationNet, return_hidden: bool = False):
    """Shift regressed from RC vectors ``I`` of shape ``(n, D_RC)`` or ``(D_RC,)``."""
    I = np.asarray(I, dtype=np.float64)
    single = I.ndim == 1
    I2 = np.atleast_2d(I)
    if I2.shape[1] != net.n_in:
        raise ValueError(f"localization net expects {net.n_in} inputs, got {I2.shape[1]}")
    act, _ = ACTIVATIONS[net.activation]
    hidden = act(I2 @ net.W1 + net.b1)
    delta = (hidden @ net.w2)[:, 0] + net.b2[0]
    if single:
        delta, hidden = delta[0], hidden[0]
    return (delta, hidden) if return_hidden else delta


def temporal_shift(V_in, delta):
    """Read each frame column at ``x - delta`` by clamped linear interpolation.

    ``V_in`` is ``(rows, F)`` with scalar ``delta`` or ``(n, rows, F)`` with
    ``delta`` of shape ``(n,)``. Returns the shifted matrix and its cache.
    """
    V = np.asarray(V_in, dtype=np.float64)
    single = V.ndim == 2
    V3 = V[None] if single else V
    deltas = np.atleast_1d(np.asarray(delta, dtype=np.float64))
    n, _, F = V3.shape
    if F < 2:
        raise ValueError(f"temporal shift needs at least 2 frames, got {F}")
    if deltas.shape != (n,):
        raise ValueError(f"expected {n} shifts, got shape {deltas.shape}")
    pos = np.arange(F)[None, :] - deltas[:, None]
    clamped = (pos < 0) | (pos > F - 1)
    pos = np.clip(pos, 0, F - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, F - 1)
    alpha = pos - lo
    rows = np.arange(n)[:, None]
    V_out = (1.0 - alpha)[:, None, :] * V3[rows, :, lo].transpose(0, 2, 1) \
        + alpha[:, None, :] * V3[rows, :, hi].transpose(0, 2, 1)
    cache = ShiftCache(deltas, V3, lo, hi, alpha, clamped)
    return (V_out[0] if single else V_out), cache


def temporal_shift_backward(grad_out, cache: ShiftCache):
    """Gradients of a shift with respect to ``V_in`` and ``delta``."""
    g = np.asarray(grad_out, dtype=np.float64)
    g3 = g[None] if g.ndim == 2 else g
    n, rows, F = g3.shape
    grad_V = np.zeros_like(cache.V_in)
    w_lo = (1.0 - cache.alpha)[:, None, :] * g3
    w_hi = cache.alpha[:, None, :] * g3
    for i in range(n):
        np.add.at(grad_V[i].T, cache.lo[i], w_lo[i].T)
        np.add.at(grad_V[i].T, cache.hi[i], w_hi[i].T)
    rows_idx = np.arange(n)[:, None]
    v_lo = cache.V_in[rows_idx, :, cache.lo].transpose(0, 2, 1)
    v_hi = cache.V_in[rows_idx, :, cache.hi].transpose(0, 2, 1)
    # d out / d delta = -(d out / d pos) = v_lo - v_hi, zero where clamped
    d_out_d_delta = np.where(cache.clamped[:, None, :], 0.0, v_lo - v_hi)
    grad_delta = np.einsum("nrf,nrf->n", g3, d_out_d_delta)
    if g.ndim == 2:
        return grad_V[0], grad_delta[0]
    return grad_V, grad_delta


def rc_to_matrix(I: np.ndarray, n_frames: int) -> np.ndarray:
    """``(n, F * rows)`` frame-major RC vectors to ``(n, rows, F)`` matrices."""
    n = I.shape[0]
    return I.reshape(n, n_frames, -1).transpose(0, 2, 1)


def matrix_to_rc(V: np.ndarray) -> np.ndarray:
    return V.transpose(0, 2, 1).reshape(V.shape[0], -1)


def ttm_forward(I, net: LocalizationNet, n_frames: int):
    """Shift RC vectors by their regressed deltas; returns ``(O, deltas, cache)``."""
    I = np.atleast_2d(np.asarray(I, dtype=np.float64))
    if I.shape[1] % n_frames:
        raise ValueError(f"RC length {I.shape[1]} is not a multiple of {n_frames} frames")
    delta, hidden = ln_forward(I, net, return_hidden=True)
    V_out, shift = temporal_shift(rc_to_matrix(I, n_frames), delta)
    return matrix_to_rc(V_out), delta, TTMCache(I, hidden, shift, n_frames)


def ttm_backward(grad_O, cache: TTMCache, net: LocalizationNet):
    """Gradients with respect to the RC input and the localization parameters."""
    if cache is None:
        raise RuntimeError("ttm_backward called without a forward cache")
    grad_O = np.atleast_2d(grad_O)
    if grad_O.shape != cache.I.shape:
        raise RuntimeError(f"gradient shape {grad_O.shape} does not match cached input {cache.I.shape}")
    grad_V, grad_delta = temporal_shift_backward(rc_to_matrix(grad_O, cache.n_frames), cache.shift)
    grad_I = matrix_to_rc(grad_V)
    _, dact = ACTIVATIONS[net.activation]
    grad_hidden = grad_delta[:, None] * net.w2[:, 0][None, :]
    grad_pre = grad_hidden * dact(cache.hidden)
    grads = {
        "W1": cache.I.T @ grad_pre,
        "b1": grad_pre.sum(axis=0),
        "w2": cache.hidden.T @ grad_delta[:, None],
        "b2": np.array([grad_delta.sum()]),
    }
    grad_I = grad_I + grad_pre @ net.W1.T
    return grad_I, grads
