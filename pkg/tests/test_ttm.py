import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_difference, relative_error
from psgesture.ttm import (
    LocalizationNet,
    ln_forward,
    matrix_to_rc,
    rc_to_matrix,
    temporal_shift,
    temporal_shift_backward,
    ttm_backward,
    ttm_forward,
)

ROW = np.array([[1.0, 2.0, 3.0, 4.0]])


@pytest.mark.parametrize("delta,expected", [
    (0.0, [1, 2, 3, 4]),
    (1.0, [1, 1, 2, 3]),
    (-0.5, [1.5, 2.5, 3.5, 4]),
])
def test_shift_examples(delta, expected):
    out, _ = temporal_shift(ROW, delta)
    np.testing.assert_array_equal(out[0], expected)


def test_identity_is_bitwise():
    V = np.random.default_rng(0).normal(size=(18, 39))
    out, _ = temporal_shift(V, 0.0)
    np.testing.assert_array_equal(out, V)


@pytest.mark.parametrize("k", [-3, -1, 2, 5])
def test_integer_shift_replicates_edges(k):
    V = np.random.default_rng(1).normal(size=(4, 12))
    out, _ = temporal_shift(V, float(k))
    src = np.clip(np.arange(12) - k, 0, 11)
    np.testing.assert_array_equal(out, V[:, src])


def test_shift_shared_across_rows():
    V = np.random.default_rng(2).normal(size=(6, 10))
    out, _ = temporal_shift(V, 0.37)
    for r in range(6):
        row_out, _ = temporal_shift(V[r:r + 1], 0.37)
        np.testing.assert_array_equal(out[r], row_out[0])


def test_shift_then_unshift_interior():
    V = np.random.default_rng(3).normal(size=(3, 20))
    out, _ = temporal_shift(V, 2.0)
    back, _ = temporal_shift(out, -2.0)
    np.testing.assert_allclose(back[:, :18], V[:, :18], atol=1e-12)
    assert not np.allclose(back[:, 18:], V[:, 18:])


@settings(max_examples=50, deadline=None)
@given(st.floats(-30, 30, allow_nan=False))
def test_property_convex_combination(delta):
    V = np.random.default_rng(4).normal(size=(5, 15))
    out, _ = temporal_shift(V, delta)
    assert np.all(out <= V.max(axis=1, keepdims=True) + 1e-12)
    assert np.all(out >= V.min(axis=1, keepdims=True) - 1e-12)


def test_fully_clamped_delta_gradient_is_zero():
    V = np.random.default_rng(5).normal(size=(4, 8))
    for delta in (8.0, 12.5, -9.0):
        out, cache = temporal_shift(V, delta)
        _, g = temporal_shift_backward(np.ones_like(out), cache)
        assert g == 0.0


def test_integer_position_uses_lower_branch():
    out, cache = temporal_shift(ROW, 1.0)
    _, g = temporal_shift_backward(np.array([[0.0, 0.0, 1.0, 0.0]]), cache)
    # column 2 reads position 1; d/d(pos) = v[2] - v[1] = 1, so d/d(delta) = -1
    assert g == -1.0


def test_shift_gradcheck_random_configs():
    rng = np.random.default_rng(6)
    for _ in range(50):
        rows, F = int(rng.integers(1, 5)), int(rng.integers(3, 12))
        V = rng.normal(size=(rows, F))
        delta = np.array([rng.uniform(-F + 1.5, F - 1.5)])
        if abs(delta[0] - np.round(delta[0])) < 1e-3:
            delta[0] += 0.01
        G = rng.normal(size=(rows, F))
        out, cache = temporal_shift(V, delta[0])
        gV, gd = temporal_shift_backward(G, cache)

        def f():
            return float(np.sum(G * temporal_shift(V, delta[0])[0]))

        assert relative_error(gV, central_difference(f, V)) < 1e-5
        fd = central_difference(f, delta)
        assert relative_error([gd], fd) < 1e-5 or (abs(gd) < 1e-12 and abs(fd[0]) < 1e-9)


def test_ln_zero_final_layer_is_identity():
    net = LocalizationNet.init(18, np.random.default_rng(0))
    I = np.random.default_rng(1).normal(size=(7, 18))
    np.testing.assert_array_equal(ln_forward(I, net), np.zeros(7))
    O, delta, _ = ttm_forward(I, net, n_frames=6)
    np.testing.assert_array_equal(O, I)


def test_ln_constant_output():
    net = LocalizationNet(np.zeros((5, 4)), np.zeros(4), np.ones((4, 1)), np.array([0.3]))
    assert ln_forward(np.random.default_rng(0).normal(size=5), net) == pytest.approx(0.3, abs=0)


def test_ln_permutation_control():
    rng = np.random.default_rng(2)
    net = LocalizationNet(rng.normal(size=(6, 4)), rng.normal(size=4), rng.normal(size=(4, 1)), np.zeros(1))
    I = rng.normal(size=6)
    perm = rng.permutation(6)
    permuted = LocalizationNet(net.W1[perm], net.b1, net.w2, net.b2)
    assert ln_forward(I[perm], permuted) == pytest.approx(ln_forward(I, net), abs=1e-14)
    assert ln_forward(I[perm], net) != pytest.approx(ln_forward(I, net), abs=1e-6)


def test_ln_dimension_mismatch():
    net = LocalizationNet.init(6, np.random.default_rng(0))
    with pytest.raises(ValueError):
        ln_forward(np.zeros(5), net)


def test_rc_matrix_round_trip():
    I = np.arange(2 * 4 * 6, dtype=float).reshape(2, 24)
    V = rc_to_matrix(I, 4)
    assert V.shape == (2, 6, 4)
    np.testing.assert_array_equal(V[0, :, 1], I[0, 6:12])
    np.testing.assert_array_equal(matrix_to_rc(V), I)


@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_ttm_full_gradcheck(activation):
    rng = np.random.default_rng(7)
    F, rows, n = 6, 3, 3
    net = LocalizationNet(
        rng.normal(scale=0.3, size=(F * rows, 5)), rng.normal(scale=0.1, size=5),
        rng.normal(scale=0.5, size=(5, 1)), np.array([0.4]), activation,
    )
    I = rng.normal(size=(n, F * rows))
    G = rng.normal(size=(n, F * rows))
    O, delta, cache = ttm_forward(I, net, F)
    assert np.all(np.abs(delta - np.round(delta)) > 1e-3)
    grad_I, grads = ttm_backward(G, cache, net)

    def f():
        return float(np.sum(G * ttm_forward(I, net, F)[0]))

    assert relative_error(grad_I, central_difference(f, I)) < 1e-5
    for name, value in net.params().items():
        assert relative_error(grads[name], central_difference(f, value)) < 1e-5, name


def test_ttm_backward_requires_matching_cache():
    net = LocalizationNet.init(12, np.random.default_rng(0))
    I = np.zeros((2, 12))
    _, _, cache = ttm_forward(I, net, 4)
    with pytest.raises(RuntimeError):
        ttm_backward(np.zeros((3, 12)), cache, net)
    with pytest.raises(RuntimeError):
        ttm_backward(np.zeros((2, 12)), None, net)
