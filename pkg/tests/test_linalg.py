import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ssalign.errors import DegenerateInputError, ParameterError, ShapeError
from ssalign.linalg import cosine_matrix, cosine_similarity, cosine_vjp, logsumexp, softmax_row

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vec3 = arrays(np.float64, 3, elements=finite).filter(lambda v: np.linalg.norm(v) > 1e-3)


@pytest.mark.parametrize(
    "u, v, expected",
    [([1, 0], [1, 0], 1.0), ([1, 0], [0, 1], 0.0), ([1, 0], [-1, 0], -1.0)],
)
def test_cosine_examples(u, v, expected):
    assert cosine_similarity(u, v) == expected


def test_cosine_errors():
    with pytest.raises(ShapeError):
        cosine_similarity([1, 0], [1, 0, 0])
    with pytest.raises(DegenerateInputError):
        cosine_similarity([0, 0], [1, 0])


@given(vec3, vec3, st.floats(1e-3, 1e3))
def test_cosine_symmetric_and_scale_invariant(u, v, alpha):
    c = cosine_similarity(u, v)
    assert -1.0 <= c <= 1.0
    assert c == cosine_similarity(v, u)
    assert cosine_similarity(alpha * u, v) == pytest.approx(c, abs=1e-12)


def test_cosine_matrix_matches_pairwise(rng):
    x = rng.standard_normal((4, 5))
    y = rng.standard_normal((3, 5))
    expected = [[cosine_similarity(a, b) for b in y] for a in x]
    np.testing.assert_allclose(cosine_matrix(x, y), expected, atol=1e-14)


def test_cosine_vjp_at_orthogonal_units():
    gx, gy = cosine_vjp([[1.0, 0.0]], [[0.0, 1.0]], [[1.0]])
    np.testing.assert_allclose(gx, [[0.0, 1.0]])
    np.testing.assert_allclose(gy, [[1.0, 0.0]])


def test_logsumexp_examples():
    assert logsumexp([0.0]) == 0.0
    assert logsumexp([2.5, 2.5]) == pytest.approx(2.5 + math.log(2), abs=1e-15)
    assert logsumexp([1000.0, 1000.0]) == pytest.approx(1000 + math.log(2), abs=1e-12)
    with pytest.raises(ShapeError):
        logsumexp([])


@given(arrays(np.float64, st.integers(1, 8), elements=finite))
def test_logsumexp_bounds(v):
    lse = logsumexp(v)
    assert lse >= v.max() - 1e-12
    assert lse <= v.max() + math.log(v.size) + 1e-12


def test_softmax_examples():
    np.testing.assert_array_equal(softmax_row([0.0, 0.0], 1.0), [0.5, 0.5])
    np.testing.assert_array_equal(softmax_row([3.0], 0.1), [1.0])
    e = math.e
    np.testing.assert_allclose(softmax_row([1.0, 0.0], 1.0), [e / (e + 1), 1 / (e + 1)], rtol=1e-15)
    assert np.all(softmax_row([-5.0, 0.0, 5.0], 1.0) > 0)
    with pytest.raises(ParameterError):
        softmax_row([1.0], 0.0)


@given(arrays(np.float64, st.integers(1, 8), elements=finite), st.floats(-100, 100), st.floats(0.05, 10))
def test_softmax_normalized_and_shift_invariant(v, c, tau):
    p = softmax_row(v, tau)
    assert abs(p.sum() - 1.0) <= 1e-12
    np.testing.assert_allclose(softmax_row(v + c, tau), p, atol=1e-9)
