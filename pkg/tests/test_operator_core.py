import math

import numpy as np
import pytest

from errors import AsymmetricMatrixError, SpectralBoundError
from operator_core import (
    ExponentFamily, as_symmetric, commute_check, commutator_defect, eig_power, eigendecompose,
    make_probes, matrix_power, spectral_bounds,
)


def test_eigendecompose_sorts_and_fixes_signs():
    eig = eigendecompose([[2.0, 1.0], [1.0, 2.0]])
    assert np.allclose(eig.spectrum, [1.0, 3.0], atol=1e-14)
    for j in range(2):
        col = eig.basis[:, j]
        assert col[np.flatnonzero(np.abs(col) > 1e-14)[0]] > 0
    rebuilt = (eig.basis * eig.spectrum) @ eig.basis.T
    assert np.allclose(rebuilt, [[2.0, 1.0], [1.0, 2.0]], atol=1e-13)


def test_eigendecompose_is_deterministic():
    rng = np.random.default_rng(4)
    A = rng.normal(size=(5, 5))
    M = A + A.T
    first, second = eigendecompose(M), eigendecompose(M)
    assert np.array_equal(first.spectrum, second.spectrum)
    assert np.array_equal(first.basis, second.basis)
    assert np.allclose(first.basis.T @ first.basis, np.eye(5), atol=1e-12)
    assert np.allclose(first.spectrum, np.linalg.eigvalsh(M), atol=1e-10)


def test_diagonal_input_keeps_axes():
    eig = eigendecompose(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(eig.spectrum, [1.0, 2.0, 3.0])
    assert np.allclose(np.abs(eig.basis), np.eye(3)[:, [1, 2, 0]])


def test_asymmetry_is_rejected_above_tolerance():
    with pytest.raises(AsymmetricMatrixError):
        as_symmetric([[1.0, 1e-6], [0.0, 1.0]])
    S = as_symmetric([[1.0, 1e-13], [0.0, 1.0]])
    assert np.array_equal(S, S.T)


def test_non_square_matrix_is_a_value_error():
    with pytest.raises(ValueError):
        as_symmetric(np.ones((2, 3)))


def test_matrix_power_semigroup():
    D = np.array([[0.6, 0.1], [0.1, 1.2]])
    lhs = matrix_power(D, 2.0) @ matrix_power(D, 3.0)
    assert np.allclose(lhs, matrix_power(D, 6.0), rtol=1e-12)
    assert np.allclose(matrix_power(D, 1.0), np.eye(2), atol=1e-14)
    assert np.allclose(eig_power(eigendecompose(D), 0.5), matrix_power(D, 0.5))


@pytest.mark.parametrize("r", [0.0, -1.0])
def test_matrix_power_needs_positive_base(r):
    with pytest.raises(ValueError):
        matrix_power(np.eye(2), r)


def test_commutation():
    assert commute_check(np.diag([1.0, 2.0]), np.diag([3.0, 4.0]))
    A, B = np.diag([1.0, 1.5]), np.array([[0.25, 0.2], [0.2, 0.75]])
    assert not commute_check(A, B)
    assert math.isclose(commutator_defect(A, B), 0.1, rel_tol=1e-12)
    with pytest.raises(ValueError):
        commute_check(np.eye(2), np.eye(3))


def test_spectral_bounds_of_constant_family():
    family = ExponentFamily.constant_family(np.diag([1.0, 1.5]))
    sb = spectral_bounds(family, make_probes(1, 2, 0))
    assert math.isclose(sb.a_hat, 1.0 / 1.5)
    assert math.isclose(sb.b_hat, 1.0)
    assert sb.within_declared


def test_spectral_bounds_against_declared_interval():
    family = ExponentFamily.constant_family(np.diag([1.0, 1.5]), declared_a=0.8, declared_b=1.0)
    assert not spectral_bounds(family, make_probes(1, 2, 0)).within_declared


def test_spectral_bounds_reject_small_eigenvalues():
    family = ExponentFamily(d=1, m=1, B=lambda s: np.eye(1) * (0.4 if s[0] > 1 else 0.8))
    with pytest.raises(SpectralBoundError):
        spectral_bounds(family, make_probes(1, 2, 0))


def test_multistable_family():
    family = ExponentFamily.multistable(lambda s: 1.2 + 0.3 / (1.0 + s[0] ** 2), m=2)
    assert np.allclose(family.B_at([0.0]), np.eye(2) / 1.5)
    assert family.alpha([0.0]) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        family.D_at([0.0])


def test_probe_grid():
    probes = make_probes(1, 2, 0)
    assert probes.shape == (11, 1)
    assert 0.0 in probes[:, 0]
    assert np.allclose(sorted(np.abs(probes[probes[:, 0] > 0, 0])), [0.25, 0.5, 1.0, 2.0, 4.0])
    assert make_probes(2, 2, 10).shape == (121 + 10, 2)
