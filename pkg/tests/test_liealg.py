import numpy as np
import pytest

from harmq.liealg import (LieAlgebra, direct_sum, jacobi_residual, killing_form, rescaled, so, su,
                          su3_standard, torus)


@pytest.mark.parametrize("L", [su(2), su(3), su(4), so(3), so(5), su3_standard()],
                         ids=lambda L: L.name)
def test_structure_is_a_lie_algebra(L):
    c = L.structure
    assert np.abs(c + c.transpose(1, 0, 2)).max() == 0
    assert jacobi_residual(L) < 1e-12


@pytest.mark.parametrize("n", [2, 3, 4])
def test_su_killing_form_is_minus_n_times_trace_form(n):
    K = killing_form(su(n)).matrix
    assert np.allclose(K, -n * np.eye(su(n).dim), atol=1e-12)


def test_killing_form_is_ad_invariant():
    L = so(5)
    assert killing_form(L).invariance_residual(L) < 1e-12


def test_su3_standard_calibration():
    L = su3_standard()
    assert np.allclose(killing_form(L).matrix, -np.eye(8), atol=1e-12)
    c = L.structure
    assert np.allclose(c[2, 5, :2], [np.sqrt(3) / 6, -0.5])
    assert np.allclose(c[3, 6, :2], [np.sqrt(3) / 6, 0.5])
    assert np.allclose(c[4, 7, :2], [np.sqrt(3) / 3, 0.0])


def test_direct_sum_lists_simple_ideals_before_center():
    D = direct_sum([torus(3, 2), su(2), so(3)])
    kinds = [(b.kind, b.dim) for b in D.blocks]
    assert kinds == [("simple", 3), ("simple", 3), ("center", 2)]
    assert jacobi_residual(D) == 0


def test_torus_is_abelian():
    T = torus(4)
    assert T.dim == 3 and np.abs(T.structure).max() == 0


def test_rescaled_scales_brackets():
    L = rescaled(su(2), [2.0, 2.0, 2.0])
    assert jacobi_residual(L) < 1e-12


def test_bad_structure_shape_rejected():
    with pytest.raises(ValueError):
        LieAlgebra(np.zeros((2, 3, 3)), (), ("a", "b"))


def test_bracket_matches_matrix_commutator():
    L = su(3)
    X, Y = L.matrices[1], L.matrices[4]
    coeffs = L.bracket(np.eye(8)[1], np.eye(8)[4])
    assert np.allclose(np.einsum("k,kab->ab", coeffs, L.matrices), X @ Y - Y @ X)
