"""Embeddings K in G, Killing constants, alignment and reductive splits."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from harmq.liealg import Block, LieAlgebra, block_killing, direct_sum
from harmq.linalg import nullspace, orth, orthonormalize

HOM_TOL = 1e-9
RANK1_TOL = 1e-8
RATIO_TOL = 1e-8


class EmbeddingError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Embedding:
    """Inclusion of k (``sub``) into g (``ambient``).

    ``inclusion`` is dim(g) x dim(k); its columns are the images of the
    basis of k.  The ideal blocks of ``sub`` give k = z(k) + k_1 + ... + k_t.
    """

    ambient: LieAlgebra
    sub: LieAlgebra
    inclusion: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.inclusion, dtype=float).reshape(self.ambient.dim, self.sub.dim)
        object.__setattr__(self, "inclusion", M)
        if self.ambient.center_block is not None:
            raise EmbeddingError("ambient algebra must be semisimple")
        if self.sub.dim and np.linalg.matrix_rank(M, tol=1e-10) < self.sub.dim:
            raise EmbeddingError("inclusion is not injective")
        bad = self.homomorphism_defect()
        if bad is not None:
            (a, b), res = bad
            raise EmbeddingError(
                f"inclusion is not a homomorphism: basis pair ({self.sub.labels[a]}, "
                f"{self.sub.labels[b]}) has residual {res:.3e}")

    def homomorphism_defect(self):
        """Worst offending basis pair of k, or None if the residual is within tolerance."""
        M, cg, ck = self.inclusion, self.ambient.structure, self.sub.structure
        lhs = np.einsum("abk,ik->abi", ck, M)
        rhs = np.einsum("ia,jb,ijk->abk", M, M, cg)
        diff = np.abs(lhs - rhs)
        if diff.size == 0:
            return None
        scale = max(1.0, float(np.abs(rhs).max()))
        if diff.max() <= HOM_TOL * scale:
            return None
        a, b, _ = np.unravel_index(np.argmax(diff), diff.shape)
        return (int(a), int(b)), float(diff.max())

    @property
    def s(self) -> int:
        return len(self.ambient.simple_blocks)

    @property
    def ideals(self) -> tuple[Block, ...]:
        return self.ambient.simple_blocks

    @property
    def k_simple(self) -> tuple[Block, ...]:
        return self.sub.simple_blocks

    @property
    def k_center(self) -> Block | None:
        return self.sub.center_block

    @property
    def t(self) -> int:
        return len(self.k_simple)

    @property
    def d0(self) -> int:
        c = self.k_center
        return 0 if c is None else c.dim

    def projection(self, i: int) -> np.ndarray:
        """pi_i restricted to k, as a dim(g) x dim(k) matrix (zero outside g_i)."""
        blk = self.ideals[i]
        P = np.zeros_like(self.inclusion)
        P[blk.start:blk.stop] = self.inclusion[blk.start:blk.stop]
        return P

    @cached_property
    def ideal_killing(self) -> tuple[np.ndarray, ...]:
        return tuple(block_killing(self.ambient, b) for b in self.ideals)

    def projected_grams(self) -> list[np.ndarray]:
        """kappa_{g_i}(pi_i Z, pi_i W) on the basis of k, one matrix per ideal."""
        return [self.inclusion.T @ K @ self.inclusion for K in self.ideal_killing]


def matrix_inclusion(target: LieAlgebra, placements) -> np.ndarray:
    """Inclusion of a sum of matrix algebras into ``target`` by block placement.

    ``placements`` is a list of ``(algebra, offset)`` in the order of the
    summands of k; ``offset=None`` maps that summand to zero.  Each basis
    matrix of the summand is put on the diagonal block starting at
    ``offset`` and expanded in the basis of ``target``.
    """
    if target.matrices is None:
        raise ValueError(f"{target.name} has no matrix realization")
    N = target.matrices.shape[1]
    flat = target.matrices.reshape(target.dim, -1)
    flat = np.concatenate([flat.real, flat.imag], axis=1).T
    pinv = np.linalg.pinv(flat)
    cols = []
    for alg, offset in placements:
        if offset is None:
            cols.append(np.zeros((target.dim, alg.dim)))
            continue
        if alg.matrices is None:
            raise ValueError(f"{alg.name} has no matrix realization")
        m = alg.matrices.shape[1]
        if offset < 0 or offset + m > N:
            raise ValueError(f"block of size {m} at offset {offset} does not fit in {N}x{N}")
        block = np.zeros((alg.dim, N, N), complex)
        block[:, offset:offset + m, offset:offset + m] = alg.matrices
        v = block.reshape(alg.dim, -1)
        v = np.concatenate([v.real, v.imag], axis=1).T
        coeff = pinv @ v
        if np.linalg.norm(flat @ coeff - v) > 1e-9 * max(1.0, np.linalg.norm(v)):
            raise ValueError(f"{alg.name} at offset {offset} does not land in {target.name}")
        cols.append(coeff)
    M = np.concatenate(cols, axis=1) if cols else np.zeros((target.dim, 0))
    M[np.abs(M) < 1e-14] = 0.0
    return M


def diagonal_embedding(sub: LieAlgebra, factors) -> Embedding:
    """Embedding Z -> (iota_1(Z), ..., iota_s(Z)) into the sum of the targets.

    ``factors`` is a list of ``(target, matrix)`` where ``matrix`` is
    dim(target) x dim(sub) or None for the zero map.
    """
    targets, mats = [], []
    for target, M in factors:
        if len(target.blocks) != 1 or target.blocks[0].kind != "simple":
            raise EmbeddingError(f"target {target.name} must be simple")
        targets.append(target)
        mats.append(np.zeros((target.dim, sub.dim)) if M is None else np.asarray(M, float))
    ambient = direct_sum(targets)
    return Embedding(ambient, sub, np.vstack(mats) if mats else np.zeros((0, sub.dim)))


def trivial_embedding(ambient: LieAlgebra) -> Embedding:
    """K = {e}: the Lie group case."""
    empty = LieAlgebra(np.zeros((0, 0, 0)), (), (), "0")
    return Embedding(ambient, empty, np.zeros((ambient.dim, 0)))


# --------------------------------------------------------------------------
# Killing constants and alignment


@dataclass(frozen=True)
class KillingConstants:
    c: np.ndarray  # s x (t + 1); column 0 is the center and always zero
    residual: float
    proportional: bool

    @property
    def simple(self) -> np.ndarray:
        return self.c[:, 1:]


def killing_constants(E: Embedding) -> KillingConstants:
    s, t = E.s, E.t
    c = np.zeros((s, t + 1))
    worst = 0.0
    for j, kb in enumerate(E.k_simple, start=1):
        sl = slice(kb.start, kb.stop)
        kk = block_killing(E.sub, kb)[sl, sl]
        for i, K in enumerate(E.ideal_killing):
            P = E.inclusion[:, sl]
            gram = P.T @ K @ P
            if np.abs(gram).max(initial=0.0) < 1e-12:
                continue
            ratio = float(np.sum(kk * gram) / np.sum(gram * gram))
            res = float(np.linalg.norm(kk - ratio * gram) / np.linalg.norm(kk))
            worst = max(worst, res)
            c[i, j] = ratio
    return KillingConstants(c, worst, worst <= RATIO_TOL)


@dataclass(frozen=True)
class AlignmentData:
    c: np.ndarray
    lam: np.ndarray
    killing_constants: np.ndarray
    is_aligned: bool
    diagnostics: str
    inner_product: np.ndarray | None = field(default=None, repr=False)

    @property
    def s(self) -> int:
        return len(self.c)


def alignment_from_constants(cij) -> AlignmentData:
    """Alignment test on a bare matrix of Killing constants (i over g, j over simple k_j)."""
    C = np.atleast_2d(np.asarray(cij, dtype=float))
    s, t = C.shape
    if t == 0:
        return AlignmentData(np.zeros(s), np.zeros(0), C, False, "no simple factors")
    if np.any(C <= 0):
        return AlignmentData(np.zeros(s), np.zeros(t), C, False,
                             "some Killing constant vanishes: pi_i(k_j) = 0")
    u, sv, vt = np.linalg.svd(C)
    if len(sv) > 1 and sv[1] / sv[0] >= RANK1_TOL:
        return AlignmentData(np.zeros(s), np.zeros(t), C, False,
                             f"Killing constant matrix not rank one (sigma2/sigma1 = {sv[1] / sv[0]:.3e})")
    ui = np.abs(u[:, 0])
    alpha = float(np.sum(1.0 / ui))
    c = alpha * ui
    lam = C[0] / c[0]
    lam = np.mean(C / c[:, None], axis=0)
    return AlignmentData(c, lam, C, True, "aligned")


def alignment_check(E: EmbeddingError | Embedding) -> AlignmentData:
    s = E.s
    kc = killing_constants(E)
    if E.sub.dim == 0:
        return AlignmentData(np.zeros(s), np.zeros(0), kc.c, False, "k = 0")
    grams = E.projected_grams()
    vanishing = [i + 1 for i, M in enumerate(grams) if np.abs(M).max() < 1e-12]
    if vanishing:
        return AlignmentData(np.zeros(s), np.zeros(E.t), kc.c, False,
                             f"pi_i(k) = 0 for i in {vanishing}: G/K splits off a factor")
    total = sum(grams)
    inner = -total
    notes = []
    ratios = np.array([np.sum(M * total) / np.sum(total * total) for M in grams])
    resid = max(np.linalg.norm(M - r * total) / np.linalg.norm(M) for M, r in zip(grams, ratios))
    ok = resid <= RATIO_TOL and np.all(ratios > 0)
    if not ok:
        notes.append(f"kappa_(g_i) restricted to k not proportional across i (residual {resid:.3e})")
    c = 1.0 / ratios
    lam = np.zeros(E.t)
    if E.t:
        pure = alignment_from_constants(kc.simple)
        if not pure.is_aligned:
            ok = False
            notes.append(pure.diagnostics)
        elif not np.allclose(pure.c, c, rtol=1e-8, atol=0):
            ok = False
            notes.append("simple-factor constants disagree with center constants")
        lam = kc.simple[0] / c[0] if ok else pure.lam
        if ok:
            lam = np.mean(kc.simple / c[:, None], axis=0)
    if not kc.proportional:
        ok = False
        notes.append(f"restricted Killing forms not proportional (residual {kc.residual:.3e})")
    return AlignmentData(c, lam, kc.c, bool(ok), "; ".join(notes) or "aligned", inner)


class B3Result(NamedTuple):
    b3: int
    d: int
    kernel: np.ndarray  # columns are y-vectors with Q|_(k x k) = 0


def b3_dimension(E: Embedding) -> B3Result:
    s = E.s
    if E.sub.dim == 0:
        return B3Result(s, 0, np.eye(s))
    cols = np.stack([M.ravel() for M in E.projected_grams()], axis=1)
    ker = nullspace(cols)
    b3 = ker.shape[1]
    return B3Result(b3, s - b3, ker)


# --------------------------------------------------------------------------
# Reductive splits


def bi_invariant_metric(E: Embedding, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (E.s,):
        raise ValueError(f"need {E.s} bi-invariant coefficients, got {z.shape}")
    if np.any(z <= 0):
        raise ValueError("bi-invariant coefficients must be positive")
    return -sum(zi * K for zi, K in zip(z, E.ideal_killing))


@dataclass(frozen=True, eq=False)
class ReductiveSplit:
    embedding: Embedding
    z: np.ndarray
    gb: np.ndarray
    p_basis: np.ndarray  # dim(g) x dim(p), g_b-orthonormal columns
    blocks: tuple[Block, ...]
    k_basis: np.ndarray  # dim(g) x dim(k): images of the basis used for k
    kind: str = "generic"
    alignment: AlignmentData | None = None
    eta: np.ndarray | None = None
    adapted_k_basis: np.ndarray | None = None  # coordinates of Z^alpha in the basis of k
    A: np.ndarray | None = None  # A_{s+j}, j = 1..s-1
    B: np.ndarray | None = None  # B_{s+j}, j = 1..s-1
    D: np.ndarray | None = None  # D_{s+j}, j = 1..s-1
    B2s: float | None = None

    @property
    def dim(self) -> int:
        return self.p_basis.shape[1]

    @property
    def s(self) -> int:
        return self.embedding.s

    @property
    def algebra(self) -> LieAlgebra:
        return self.embedding.ambient

    def block(self, label: str) -> Block:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    @cached_property
    def _brackets(self) -> np.ndarray:
        P = self.p_basis
        return np.einsum("ia,jb,ijk->abk", P, P, self.algebra.structure)

    @cached_property
    def structure_p(self) -> np.ndarray:
        """f[a, b, c] = g_b([P_a, P_b], P_c): the p-component of brackets."""
        return np.einsum("abk,kl,lc->abc", self._brackets, self.gb, self.p_basis)

    @cached_property
    def _k_dual(self) -> np.ndarray:
        K = self.k_basis
        if K.shape[1] == 0:
            return np.zeros((0, K.shape[0]))
        return np.linalg.solve(K.T @ self.gb @ K, K.T @ self.gb)

    @cached_property
    def structure_k(self) -> np.ndarray:
        """h[a, b, m]: coordinates of [P_a, P_b]_k in the basis ``k_basis``."""
        return np.einsum("abk,mk->abm", self._brackets, self._k_dual)

    @cached_property
    def isotropy_action(self) -> np.ndarray:
        """rho[m, c, a] = g_b([Z_m, P_a], P_c) for the columns Z_m of ``k_basis``."""
        P, K = self.p_basis, self.k_basis
        br = np.einsum("im,ja,ijk->mak", K, P, self.algebra.structure)
        return np.einsum("mak,kl,lc->mca", br, self.gb, P)

    def weights(self, x) -> np.ndarray:
        """Per-basis-vector weights for block scalings ``x``."""
        x = np.asarray(x, dtype=float)
        if x.shape != (len(self.blocks),):
            raise ValueError(f"need one scaling per block ({len(self.blocks)}), got {x.shape}")
        if np.any(x <= 0):
            raise ValueError("metric scalings must be positive")
        w = np.empty(self.dim)
        for b, xb in zip(self.blocks, x):
            w[b.start:b.stop] = xb
        return w

    def invariance_residuals(self) -> dict[str, float]:
        P, K, G = self.p_basis, self.k_basis, self.gb
        out = {
            "gram": float(np.abs(P.T @ G @ P - np.eye(self.dim)).max(initial=0.0)),
            "k_perp_p": float(np.abs(K.T @ G @ P).max(initial=0.0)),
        }
        rho = self.isotropy_action
        worst = 0.0
        for a, b in itertools.product(self.blocks, repeat=2):
            if a is b or a.dim == 0 or b.dim == 0:
                continue
            worst = max(worst, float(np.abs(rho[:, b.start:b.stop, a.start:a.stop]).max(initial=0.0)))
        out["block_invariance"] = worst
        return out


def _isotropy_complements(E: Embedding, gb: np.ndarray) -> list[np.ndarray]:
    """g_b-orthonormal bases of q_i, the complement of pi_i(k) in g_i."""
    out = []
    for i, blk in enumerate(E.ideals):
        sl = slice(blk.start, blk.stop)
        S = E.inclusion[sl]
        Gi = gb[sl, sl]
        span = orth(S)
        comp = nullspace(span.T @ Gi) if span.shape[1] else np.eye(blk.dim)
        comp = orthonormalize(comp, Gi)
        Q = np.zeros((E.ambient.dim, comp.shape[1]))
        Q[sl] = comp
        out.append(Q)
    return out


def _adapted_k_basis(E: Embedding, inner: np.ndarray) -> np.ndarray:
    """<,>-orthonormal basis of k adapted to z(k) + k_1 + ... + k_t (coordinates in k)."""
    Zc = np.zeros((E.sub.dim, E.sub.dim))
    for b in E.sub.blocks:
        sl = slice(b.start, b.stop)
        Zc[sl, sl] = orthonormalize(np.eye(b.dim), inner[sl, sl])
    return Zc


def aligned_split(E: Embedding, A: AlignmentData, z) -> ReductiveSplit:
    if not A.is_aligned:
        raise ValueError(f"aligned_split needs an aligned space: {A.diagnostics}")
    gb = bi_invariant_metric(E, z)
    z = np.asarray(z, dtype=float)
    s, c = E.s, A.c
    zc = z / c
    Acoef = np.array([-(c[j] / z[j]) * zc[:j].sum() for j in range(1, s)])
    Bcoef = np.array([zc[:j].sum() + Acoef[j - 1] ** 2 * zc[j] for j in range(1, s)])
    Dcoef = np.array([zc[:j].sum() + Acoef[j - 1] ** 3 * zc[j] for j in range(1, s)])
    B2s = float(zc.sum())
    eta = np.zeros((s - 1, s))
    for j in range(1, s):
        eta[j - 1, :j] = 1.0
        eta[j - 1, j] = Acoef[j - 1]

    Zc = _adapted_k_basis(E, A.inner_product)
    Zg = E.inclusion @ Zc
    proj = [E.projection(i) @ Zc for i in range(s)]

    cols, blocks = [], []
    for i, Q in enumerate(_isotropy_complements(E, gb)):
        start = sum(x.shape[1] for x in cols)
        cols.append(Q)
        blocks.append(Block(f"p{i + 1}", start, start + Q.shape[1], "isotropy"))
    for j in range(1, s):
        phi = sum(proj[:j]) + Acoef[j - 1] * proj[j]
        start = sum(x.shape[1] for x in cols)
        cols.append(phi / np.sqrt(Bcoef[j - 1]))
        blocks.append(Block(f"p{s + j}", start, start + Zc.shape[1], "eta"))
    P = np.concatenate(cols, axis=1) if cols else np.zeros((E.ambient.dim, 0))
    split = ReductiveSplit(E, z, gb, P, tuple(blocks), Zg, "aligned", A, eta, Zc,
                           Acoef, Bcoef, Dcoef, B2s)
    res = split.invariance_residuals()
    if max(res.values()) > 1e-8:
        raise ValueError(f"aligned split failed its invariants: {res}")
    return split


def generic_split(E: Embedding, z) -> ReductiveSplit:
    """g_b-orthogonal complement p = q_1 + ... + q_s + p~ (empty blocks dropped)."""
    gb = bi_invariant_metric(E, z)
    K = E.inclusion
    qs = _isotropy_complements(E, gb)
    ktilde = orth(np.concatenate([E.projection(i) for i in range(E.s)], axis=1)) \
        if E.sub.dim else np.zeros((E.ambient.dim, 0))
    if ktilde.shape[1]:
        inner = nullspace(K.T @ gb @ ktilde)
        ptilde = orthonormalize(ktilde @ inner, gb)
    else:
        ptilde = ktilde
    cols, blocks = [], []
    for i, Q in enumerate(qs):
        if Q.shape[1] == 0:
            continue
        start = sum(x.shape[1] for x in cols)
        cols.append(Q)
        blocks.append(Block(f"p{i + 1}", start, start + Q.shape[1], "isotropy"))
    if ptilde.shape[1]:
        start = sum(x.shape[1] for x in cols)
        cols.append(ptilde)
        blocks.append(Block("p~", start, start + ptilde.shape[1], "tilde"))
    P = np.concatenate(cols, axis=1) if cols else np.zeros((E.ambient.dim, 0))
    return ReductiveSplit(E, np.asarray(z, float), gb, P, tuple(blocks), K, "generic")


# --------------------------------------------------------------------------
# Representation-theoretic assumptions of the harmonicity theorem


@dataclass(frozen=True)
class AssumptionReport:
    condition_i: bool
    condition_ii: bool
    hom_dims: dict
    fixed_dims: tuple[int, ...]

    @property
    def holds(self) -> bool:
        return self.condition_i and self.condition_ii


def _hom_dimension(rho_q: np.ndarray, ad_k: np.ndarray) -> int:
    """dim of {T : rho_q(Z) T = T ad_k(Z) for all Z}; both stacks indexed [m, :, :]."""
    nq, nk = rho_q.shape[1], ad_k.shape[1]
    if nq == 0 or nk == 0:
        return 0
    rows = [np.kron(np.eye(nk), R) - np.kron(a.T, np.eye(nq)) for R, a in zip(rho_q, ad_k)]
    return nullspace(np.concatenate(rows, axis=0)).shape[1]


def assumption_check(E: Embedding, split: ReductiveSplit) -> AssumptionReport:
    gb = split.gb
    qs = _isotropy_complements(E, gb)
    ck = E.sub.structure
    hom, fixed = {}, []
    for i, Q in enumerate(qs):
        br = np.einsum("im,ja,ijk->mak", E.inclusion, Q, E.ambient.structure)
        rho = np.einsum("mak,kl,lc->mca", br, gb, Q)
        if Q.shape[1]:
            fixed.append(nullspace(rho.reshape(-1, Q.shape[1])).shape[1])
        else:
            fixed.append(0)
        for j, kb in enumerate(E.k_simple, start=1):
            sl = slice(kb.start, kb.stop)
            # ad of every basis vector of k on k_j; other factors act by zero
            ad = np.einsum("mjk->mkj", ck[:, sl, sl])
            hom[(i + 1, j)] = _hom_dimension(rho, ad)
    cond_i = all(v == 0 for v in hom.values())
    cond_ii = E.d0 == 0 or all(f == 0 for f in fixed)
    return AssumptionReport(cond_i, cond_ii, hom, tuple(fixed))
