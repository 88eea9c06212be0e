import numpy as np
import pytest
from numpy.testing import assert_allclose

from toyfock.tensor import FactorShape, adjoint, kron, permute_factors

CREATE = np.array([[0, 0], [1, 0]], dtype=complex)
ANNIHILATE = np.array([[0, 1], [0, 0]], dtype=complex)


def test_kron_identity():
    assert_allclose(kron(np.eye(2), np.eye(2)), np.eye(4))


def test_kron_scalars():
    assert_allclose(kron([[2.0]], [[3.0]]), [[6.0]])


def test_kron_ladder_pair():
    out = kron(CREATE, ANNIHILATE)
    expected = np.zeros((4, 4), dtype=complex)
    expected[2, 1] = 1.0
    assert_allclose(out, expected)


def test_kron_mixed_product(rng):
    a, b, c, d = (rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
                  for _ in range(4))
    assert_allclose(kron(a, b) @ kron(c, d), kron(a @ c, b @ d), atol=1e-12)


def test_permute_identity(rng):
    a = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    assert_allclose(permute_factors(a, (2, 2, 2), (0, 1, 2)), a)


def test_permute_identity_matrix_invariant():
    out = permute_factors(np.eye(9), (3, 3), (1, 0))
    assert_allclose(out, np.eye(9))


def test_permute_swaps_kron_factors(rng):
    a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    out = permute_factors(kron(a, b), (2, 3), (1, 0))
    assert_allclose(out, kron(b, a), atol=1e-14)


def test_permute_roundtrip_exact(rng):
    a = rng.standard_normal((12, 12)) + 1j * rng.standard_normal((12, 12))
    perm = [2, 0, 1]
    inverse = [perm.index(k) for k in range(3)]
    back = permute_factors(permute_factors(a, (2, 2, 3), perm),
                           (3, 2, 2), inverse)
    assert np.array_equal(back, a)


def test_permute_rejects_bad_perm():
    with pytest.raises(ValueError):
        permute_factors(np.eye(4), (2, 2), (0,))
    with pytest.raises(ValueError):
        permute_factors(np.eye(4), (2, 2), (0, 0))


def test_adjoint_basics(rng):
    assert_allclose(adjoint(np.eye(3)), np.eye(3))
    assert_allclose(adjoint(CREATE), ANNIHILATE)
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    assert np.array_equal(adjoint(adjoint(a)), a)


def test_adjoint_reverses_products(rng):
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    b = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    assert_allclose(adjoint(a @ b), adjoint(b) @ adjoint(a), atol=1e-12)


def test_factor_shape():
    shape = FactorShape((2, 3, 3))
    assert shape.dim == 18
    assert shape.matches(np.zeros((18, 18)))
    with pytest.raises(ValueError):
        FactorShape((2, 0))
