"""Property tests: identities of the exterior calculus and of H_Q that must
hold for every metric, form and admissible Q."""

import math

import numpy as np
import pytest

hypothesis = pytest.importorskip("hypothesis")
from hypothesis import given, settings
from hypothesis import strategies as st

from harmq import exterior as ext
from harmq.cartan import _C, admissible_basis, h_q, make_Q, q_tilde
from harmq.cli import prepare
from harmq.liealg import so, su3_standard
from harmq.spaces import CATALOG, spec_from_dict

from conftest import space

QUOTIENTS = ["ledger-obata-su2-s3-z112", "ex1-n2", "su2-cubed-u1", "su3-cubed-so3", "ex2-su3-torus"]
GROUPS = {"su3": ext.GroupFrame(su3_standard()), "so5": ext.GroupFrame(so(5))}

names = st.sampled_from(QUOTIENTS)
seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)
PROFILE = settings(max_examples=25, deadline=None)


def _x(rng, n):
    return np.exp(rng.uniform(-math.log(2), math.log(2), n))


def _invariant(split, k, rng):
    V = ext.invariant_matrix(split, k)
    return ext.InvariantForm(k, V @ rng.normal(size=V.shape[1]), split)


def _frame(name):
    return GROUPS[name] if name in GROUPS else space(name).split


@PROFILE
@given(name=st.sampled_from(QUOTIENTS + list(GROUPS)), k=st.integers(0, 3), seed=seeds)
def test_d_squared_zero(name, k, seed):
    frame, rng = _frame(name), np.random.default_rng(seed)
    a = _invariant(frame, k, rng)
    dda = ext.differential(frame, ext.differential(frame, a))
    assert np.abs(dda.coeffs).max(initial=0.0) <= 1e-9 * max(1.0, np.abs(a.coeffs).max(initial=0.0))


@PROFILE
@given(name=st.sampled_from(QUOTIENTS + list(GROUPS)), k=st.integers(1, 3), seed=seeds)
def test_codifferential_adjoint(name, k, seed):
    frame, rng = _frame(name), np.random.default_rng(seed)
    x = _x(rng, len(frame.blocks) if name not in GROUPS else frame.dim)
    a, b = _invariant(frame, k - 1, rng), _invariant(frame, k, rng)
    lhs = ext.inner(frame, x, ext.codifferential(frame, x, b), a)
    rhs = ext.inner(frame, x, b, ext.differential(frame, a))
    assert abs(lhs - rhs) <= 1e-9 * max(1.0, ext.norm(frame, x, a) * ext.norm(frame, x, b))


@PROFILE
@given(name=names, seed=seeds)
def test_h_q_closed(name, seed):
    sp, rng = space(name), np.random.default_rng(seed)
    Y = admissible_basis(sp.E)
    Q = make_Q(sp.E, Y @ rng.normal(size=Y.shape[1]))
    H = h_q(sp.split, Q, check=False).form
    scale = max(1.0, ext.norm(sp.split, None, H))
    assert ext.norm(sp.split, None, ext.differential(sp.split, H)) <= 1e-9 * scale


@PROFILE
@given(name=names, seed=seeds)
def test_q_tilde_coclosed_for_gb(name, seed):
    sp, rng = space(name), np.random.default_rng(seed)
    Y = admissible_basis(sp.E)
    qt = q_tilde(sp.split, make_Q(sp.E, Y @ rng.normal(size=Y.shape[1])))
    d_star = ext.codifferential(sp.split, None, qt)
    assert ext.norm(sp.split, None, d_star) <= 1e-9 * max(1.0, ext.norm(sp.split, None, qt))


@PROFILE
@given(name=st.sampled_from(["ledger-obata-su2-s3", "su3-cubed-so3", "su3-cubed-su2"]),
       z=st.lists(st.floats(0.3, 3.0), min_size=3, max_size=3), seed=seeds)
def test_bracket_relations_of_adapted_basis(name, z, seed):
    """Q pairs e^{2s} with e^{s+j} by -C_j / sqrt(B_j B_2s), and the bracket of
    an eta block with itself is D_j / B_j^{3/2} times the brackets of k."""
    sp = prepare(spec_from_dict(dict(CATALOG[name], z=z)))
    S, s, rng = sp.split, sp.s, np.random.default_rng(seed)
    y = admissible_basis(sp.E) @ rng.normal(size=s - 1)
    Q = make_Q(sp.E, y)
    C = _C(sp.A, S.A, y)
    e2s = S.k_basis / math.sqrt(S.B2s)
    Zc = S.adapted_k_basis
    cbar = np.einsum("ia,jb,ijk,kl,lc->abc", Zc, Zc, sp.E.sub.structure, sp.A.inner_product, Zc)
    for j in range(1, s):
        blk = S.blocks[s + j - 1]
        P = S.p_basis[:, blk.start:blk.stop]
        M = e2s.T @ Q.matrix @ P
        assert np.allclose(M, -C[j - 1] / math.sqrt(S.B[j - 1] * S.B2s) * np.eye(len(M)), atol=1e-10)
        f = np.einsum("ia,jb,ijk,kl,lc->abc", P, P, sp.E.ambient.structure, S.gb, P)
        assert np.allclose(f, S.D[j - 1] / S.B[j - 1] ** 1.5 * cbar, atol=1e-10)
