import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybridcontract.norms import (
    NormSpec,
    induced_norm,
    matrix_measure,
    measure_quotient,
    norm_function,
    vector_norm,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
square = st.integers(1, 4).flatmap(lambda n: arrays(np.float64, (n, n), elements=finite))
specs = st.sampled_from([NormSpec(1), NormSpec(2), NormSpec(np.inf)])


def weighted_spec(n, p, rng):
    return NormSpec.weighted(rng.uniform(0.2, 5.0, n), p)


def test_vector_norms_match_numpy():
    x = np.array([3.0, -4.0, 1.0])
    assert vector_norm(x, NormSpec(1)) == 8.0
    assert vector_norm(x, NormSpec(2)) == pytest.approx(np.sqrt(26))
    assert vector_norm(x, NormSpec(np.inf)) == 4.0
    w = NormSpec.weighted([2.0, 1.0, 0.5], 1)
    assert vector_norm(x, w) == pytest.approx(6 + 4 + 0.5)
    assert norm_function(w, 3)(x) == vector_norm(x, w)


def test_spec_parsing_and_validation():
    assert NormSpec.parse("inf").p == np.inf
    assert NormSpec.parse(" 1 ") == NormSpec(1)
    w = NormSpec.parse("1,2@2")
    assert w.weights == (1.0, 2.0) and w.p == 2
    assert NormSpec.parse(w.label) == w
    with pytest.raises(ValueError):
        NormSpec(3)
    with pytest.raises(ValueError):
        NormSpec.weighted([1.0, 0.0])
    with pytest.raises(ValueError):
        NormSpec.parse("1.5")
    with pytest.raises(ValueError):
        vector_norm(np.ones(3), NormSpec.weighted([1.0, 2.0]))


def test_induced_norm_examples():
    M = np.array([[1.0, -2.0], [3.0, 4.0]])
    assert induced_norm(M, NormSpec(1)).value == 6.0
    assert induced_norm(M, NormSpec(np.inf)).value == 7.0
    assert induced_norm(M, NormSpec(2)).value == pytest.approx(np.linalg.svd(M)[1][0])
    assert induced_norm(np.diag([0.5, 1.0]), NormSpec(2)) == (1.0, True)


def test_mixed_norm_is_flagged_lower_bound():
    M = np.array([[1.0, 2.0], [3.0, -1.0]])
    res = induced_norm(M, NormSpec(2), NormSpec(1))
    assert not res.exact
    # the 1 -> 2 operator norm is the largest column 2-norm, attained at a basis vector
    assert res.value == pytest.approx(np.linalg.norm(M, axis=0).max())


@settings(max_examples=60, deadline=None)
@given(square, specs, st.integers(0, 2**32 - 1))
def test_induced_norm_bounds_every_direction(M, spec, seed):
    rng = np.random.default_rng(seed)
    n = M.shape[0]
    for s in (spec, weighted_spec(n, spec.p, rng)):
        val = induced_norm(M, s).value
        for _ in range(50):
            x = rng.standard_normal(n)
            assert vector_norm(M @ x, s) <= val * vector_norm(x, s) * (1 + 1e-9) + 1e-12


@settings(max_examples=60, deadline=None)
@given(square, specs, st.integers(0, 2**32 - 1))
def test_measure_agrees_with_difference_quotient(A, spec, seed):
    rng = np.random.default_rng(seed)
    for s in (spec, weighted_spec(A.shape[0], spec.p, rng)):
        mu = matrix_measure(A, s)
        scale = max(1.0, float(np.abs(A).max()) ** 2)
        assert abs(measure_quotient(A, s) - mu) <= 1e-4 * scale


@settings(max_examples=60, deadline=None)
@given(square, square, specs)
def test_measure_properties(A, B, spec):
    if A.shape != B.shape:
        return
    n = A.shape[0]
    mu = matrix_measure(A, spec)
    tol = 1e-9 * (1 + np.abs(A).max() + np.abs(B).max())
    # subadditive, bounded by the norm, bounds the spectral abscissa
    assert matrix_measure(A + B, spec) <= mu + matrix_measure(B, spec) + tol
    assert mu <= induced_norm(A, spec).value + tol
    assert np.linalg.eigvals(A).real.max() <= mu + 1e-7 * (1 + np.abs(A).max())
    assert matrix_measure(A + 2.5 * np.eye(n), spec) == pytest.approx(mu + 2.5, abs=tol)


def test_measure_examples():
    A = np.array([[-1.0, 3.0], [0.5, -2.0]])
    assert matrix_measure(A, NormSpec(1)) == pytest.approx(1.0)
    assert matrix_measure(A, NormSpec(np.inf)) == pytest.approx(2.0)
    rot = np.array([[-0.3, -2.0], [2.0, -0.3]])
    assert matrix_measure(rot, NormSpec(2)) == pytest.approx(-0.3, abs=1e-12)
    with pytest.raises(ValueError):
        matrix_measure(np.ones((2, 3)), NormSpec(2))


def test_weighted_measure_by_conjugation():
    A = np.array([[-1.0, 4.0], [0.1, -1.0]])
    assert matrix_measure(A, NormSpec(1)) == pytest.approx(3.0)
    # D A D^-1 with D = diag(1, 4) has off-diagonals 1 and 0.4
    w = NormSpec.weighted([1.0, 4.0], 1)
    assert matrix_measure(A, w) == pytest.approx(0.0)
