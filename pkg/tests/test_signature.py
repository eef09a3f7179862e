import itertools
import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import riemann_signature
from psgesture.signature import (
    TruncatedSignature,
    batch_signature,
    chen_combine,
    flatten_levels,
    path_signature,
    segment_signature,
    shuffle_residual,
    shuffles,
    sig_dimension,
    time_augment,
)


@pytest.mark.parametrize("d,m,expected", [(3, 2, 12), (4, 4, 340), (2, 3, 14)])
def test_sig_dimension(d, m, expected):
    assert sig_dimension(d, m) == expected


@pytest.mark.parametrize("d,m", [(0, 2), (2, 0), (-1, 1)])
def test_sig_dimension_domain(d, m):
    with pytest.raises(ValueError):
        sig_dimension(d, m)


def test_segment_signature_values():
    sig = segment_signature((0, 0), (1, 2), 2)
    np.testing.assert_array_equal(sig.levels[0], [1, 2])
    np.testing.assert_array_equal(sig.levels[1], [0.5, 1, 1, 2])


def test_segment_signature_zero_increment():
    sig = segment_signature((0.3, -1.0, 2.0), (0.3, -1.0, 2.0), 3)
    assert not np.any(sig.to_vector())


def test_segment_signature_1d_powers():
    sig = segment_signature([0.0], [2.0], 3)
    np.testing.assert_allclose(sig.to_vector(), [2, 2, 4 / 3], rtol=0, atol=1e-15)


def test_segment_signature_dimension_mismatch():
    with pytest.raises(ValueError):
        segment_signature((0, 0), (1, 2, 3), 2)


def test_depth_guard():
    with pytest.raises(ValueError):
        segment_signature((0, 0), (1, 1), 7)
    with pytest.raises(ValueError):
        segment_signature(np.zeros(10), np.ones(10), 6)  # 10**6 coefficients at the top level


def test_chen_combine_two_segments_matches_oracle():
    a = segment_signature((0, 0), (1, 0), 2)
    b = segment_signature((1, 0), (1, 1), 2)
    ab = chen_combine(a, b)
    np.testing.assert_allclose(ab.levels[0], [1, 1], atol=1e-15)
    np.testing.assert_allclose(ab.levels[1], [0.5, 1, 0, 0.5], atol=1e-15)
    oracle = riemann_signature([[0, 0], [1, 0], [1, 1]], 2)
    for word, value in oracle.items():
        assert ab[word] == pytest.approx(value, abs=1e-6)


def test_chen_identity_is_neutral():
    b = segment_signature((0.2, -0.4), (1.5, 0.3), 3)
    out = chen_combine(TruncatedSignature.identity(2, 3), b)
    np.testing.assert_array_equal(out.to_vector(), b.to_vector())
    out = chen_combine(b, TruncatedSignature.identity(2, 3))
    np.testing.assert_array_equal(out.to_vector(), b.to_vector())


def test_chen_associative():
    rng = np.random.default_rng(3)
    a, b, c = (segment_signature(rng.normal(size=3), rng.normal(size=3), 4) for _ in range(3))
    left = chen_combine(chen_combine(a, b), c).to_vector()
    right = chen_combine(a, chen_combine(b, c)).to_vector()
    np.testing.assert_allclose(left, right, rtol=1e-13, atol=1e-14)


def test_chen_mismatch():
    with pytest.raises(ValueError):
        chen_combine(segment_signature((0, 0), (1, 1), 2), segment_signature((0, 0), (1, 1), 3))
    with pytest.raises(ValueError):
        chen_combine(segment_signature((0, 0), (1, 1), 2), segment_signature((0, 0, 0), (1, 1, 1), 2))


def test_two_vertex_path_equals_segment():
    p = np.array([[0.1, 0.2, 0.3], [1.0, -2.0, 0.5]])
    np.testing.assert_array_equal(path_signature(p, 3).to_vector(), segment_signature(p[0], p[1], 3).to_vector())


def test_l_shaped_path_area_terms():
    sig = path_signature([[0, 0], [1, 0], [1, 1]], 2)
    assert sig[(0, 1)] == 1.0
    assert sig[(1, 0)] == 0.0
    oracle = riemann_signature([[0, 0], [1, 0], [1, 1]], 2)
    assert oracle[(0, 1)] == pytest.approx(1.0, abs=1e-9)
    assert oracle[(1, 0)] == pytest.approx(0.0, abs=1e-9)


def test_split_at_interior_vertex():
    rng = np.random.default_rng(0)
    p = rng.normal(size=(9, 3))
    whole = path_signature(p, 4).to_vector()
    for j in range(1, 8):
        split = chen_combine(path_signature(p[: j + 1], 4), path_signature(p[j:], 4)).to_vector()
        np.testing.assert_allclose(split, whole, rtol=0, atol=1e-12)


def test_path_rejects_bad_input():
    with pytest.raises(ValueError):
        path_signature([[0.0, 1.0]], 2)
    with pytest.raises(ValueError):
        path_signature([[0.0, np.nan], [1.0, 1.0]], 2)


def test_word_indexing_is_lexicographic():
    sig = path_signature(np.random.default_rng(1).normal(size=(4, 3)), 3)
    for k in (1, 2, 3):
        for offset, word in enumerate(itertools.product(range(3), repeat=k)):
            assert sig[word] == sig.levels[k - 1][offset]
    assert sig[()] == 1.0


def test_batch_signature_matches_left_fold():
    rng = np.random.default_rng(7)
    paths = rng.normal(size=(2, 3, 11, 3))
    batch = flatten_levels(batch_signature(paths, 4))
    for i, j in itertools.product(range(2), range(3)):
        np.testing.assert_allclose(batch[i, j], path_signature(paths[i, j], 4).to_vector(), rtol=1e-12, atol=1e-13)


def test_time_augment():
    p = time_augment([[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]])
    assert p.shape == (3, 3)
    np.testing.assert_array_equal(p[:, -1], [0, 0.5, 1])
    np.testing.assert_array_equal(time_augment([[1.0], [2.0]])[:, -1], [0, 1])
    twice = time_augment(time_augment([[0.0], [1.0], [5.0]]))
    assert twice.shape == (3, 3)
    np.testing.assert_array_equal(twice[:, 1], twice[:, 2])


def test_shuffles_counts():
    assert sorted(shuffles((0,), (1,))) == [(0, 1), (1, 0)]
    assert len(shuffles((0, 1), (2, 3, 4))) == math.comb(5, 2)


def test_shuffle_residual_examples():
    sig = path_signature([[0, 0], [1, 0], [1, 1]], 2)
    assert shuffle_residual(sig, (0,), (1,)) == pytest.approx(0.0, abs=1e-15)
    rng = np.random.default_rng(4)
    sig = path_signature(rng.normal(size=(6, 2)), 3)
    assert abs(shuffle_residual(sig, (0,), (0,))) < 1e-12


def test_shuffle_residual_detects_non_signature():
    rng = np.random.default_rng(5)
    fake = TruncatedSignature.from_levels([rng.normal(size=2), rng.normal(size=4)])
    assert abs(shuffle_residual(fake, (0,), (1,))) > 1e-3


def test_shuffle_residual_word_overflow():
    sig = path_signature([[0, 0], [1, 1]], 2)
    with pytest.raises(ValueError):
        shuffle_residual(sig, (0, 1), (1,))


def test_translation_invariance_exact_on_dyadic_grid():
    rng = np.random.default_rng(6)
    p = rng.integers(-8, 8, size=(7, 3)) / 4.0
    offset = np.array([3.0, -5.0, 0.5])
    np.testing.assert_array_equal(path_signature(p + offset, 4).to_vector(), path_signature(p, 4).to_vector())


finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@st.composite
def paths(draw, max_d=4, max_f=8):
    d = draw(st.integers(1, max_d))
    f = draw(st.integers(2, max_f))
    return draw(arrays(np.float64, (f, d), elements=finite))


@settings(max_examples=60, deadline=None)
@given(paths(), st.integers(1, 4))
def test_property_chen_consistency(p, m):
    whole = path_signature(p, m).to_vector()
    scale = max(1.0, np.abs(whole).max())
    for j in range(1, len(p) - 1):
        split = chen_combine(path_signature(p[: j + 1], m), path_signature(p[j:], m)).to_vector()
        assert np.abs(split - whole).max() <= 1e-10 * scale


@settings(max_examples=60, deadline=None)
@given(paths(), st.integers(1, 4), arrays(np.float64, 4, elements=finite))
def test_property_translation_invariance(p, m, shift):
    a = path_signature(p + shift[: p.shape[1]], m).to_vector()
    b = path_signature(p, m).to_vector()
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(paths(max_d=3), st.integers(2, 4))
def test_property_shuffle_identity(p, m):
    sig = path_signature(p, m)
    d = p.shape[1]
    scale = max(1.0, np.abs(sig.to_vector()).max()) ** 2
    for n1 in range(1, m):
        for n2 in range(1, m - n1 + 1):
            for w1 in itertools.product(range(d), repeat=n1):
                for w2 in itertools.product(range(d), repeat=n2):
                    assert abs(shuffle_residual(sig, w1, w2)) <= 1e-10 * scale


@settings(max_examples=40, deadline=None)
@given(st.floats(-4, 4, allow_nan=False), st.integers(1, 6))
def test_property_one_dimensional_power_law(a, m):
    sig = path_signature([[0.0], [a]], m)
    for k in range(1, m + 1):
        assert sig.levels[k - 1][0] == pytest.approx(a**k / math.factorial(k), rel=1e-15, abs=0)


@settings(max_examples=30, deadline=None)
@given(paths(max_d=3, max_f=6), st.integers(1, 3))
@example(np.array([[1.0], [0.0], [0.0], [-2.0], [2.0]]), 3)  # long path: plain trapezoid error exceeds 1e-6
def test_property_matches_quadrature(p, m):
    sig = path_signature(p, m)
    oracle = riemann_signature(p, m, substeps=2000)
    got = np.array([sig[w] for w in oracle])
    want = np.array(list(oracle.values()))
    assert np.linalg.norm(got - want) <= 1e-6 * max(1.0, np.linalg.norm(want))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4))
def test_property_stored_size(d, m):
    sig = path_signature(np.random.default_rng(d * 10 + m).normal(size=(3, d)), m)
    assert sig.to_vector().size == sig_dimension(d, m) == len(sig)
