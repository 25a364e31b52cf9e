"""Compact Lie algebras as dense structure-constant tensors.

Conventions: ``structure[i, j, k]`` is the coefficient of ``e_k`` in
``[e_i, e_j]``.  Every algebra carries an ordered list of ideal blocks
(simple ideals and at most one central block) so that downstream code can
address ``g_1, ..., g_s`` and ``z(k)`` by index range.

Basis of ``su(n)``: the real antisymmetric pairs ``(E_ab - E_ba)/2``, then
the imaginary symmetric pairs ``i(E_ab + E_ba)/2`` (both for ``a < b`` in
lexicographic order), then the traceless diagonal elements
``i diag(1, .., 1, -l, 0, ..) / sqrt(2 l (l + 1))``.  These are orthonormal
for ``<X, Y> = -2 Re tr(XY)``, and the Killing form is ``-n <., .>``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from harmq.linalg import ABS_TOL, REL_TOL, numerical_rank


@dataclass(frozen=True)
class Block:
    label: str
    start: int
    stop: int
    kind: str = "simple"  # "simple" or "center"

    @property
    def indices(self) -> range:
        return range(self.start, self.stop)

    @property
    def dim(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True, eq=False)
class LieAlgebra:
    structure: np.ndarray
    blocks: tuple[Block, ...]
    labels: tuple[str, ...]
    name: str = ""
    # Basis in a defining matrix representation, shape (dim, N, N); optional.
    matrices: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        c = np.asarray(self.structure, dtype=float)
        if c.ndim != 3 or not (c.shape[0] == c.shape[1] == c.shape[2]):
            raise ValueError(f"structure tensor must be (n, n, n), got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "structure", c)
        if len(self.labels) != c.shape[0]:
            raise ValueError("one basis label per basis vector is required")
        covered = sorted(i for b in self.blocks for i in b.indices)
        if covered != list(range(c.shape[0])):
            raise ValueError("ideal blocks must partition the basis")

    @property
    def dim(self) -> int:
        return self.structure.shape[0]

    @property
    def simple_blocks(self) -> tuple[Block, ...]:
        return tuple(b for b in self.blocks if b.kind == "simple")

    @property
    def center_block(self) -> Block | None:
        for b in self.blocks:
            if b.kind == "center":
                return b
        return None

    def bracket(self, X, Y) -> np.ndarray:
        return np.einsum("i,j,ijk->k", np.asarray(X, float), np.asarray(Y, float), self.structure)

    def __repr__(self):
        return f"LieAlgebra({self.name or '?'}, dim={self.dim})"


@dataclass(frozen=True, eq=False)
class BilinearForm:
    matrix: np.ndarray
    ad_invariant: bool = False

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("bilinear form matrix must be square")
        if not np.allclose(m, m.T, rtol=0, atol=max(REL_TOL * np.abs(m).max(initial=0), ABS_TOL)):
            raise ValueError("bilinear form must be symmetric")
        object.__setattr__(self, "matrix", (m + m.T) / 2)

    def __call__(self, X, Y) -> float:
        return float(np.asarray(X) @ self.matrix @ np.asarray(Y))

    def invariance_residual(self, L: LieAlgebra) -> float:
        """max |B([X,Y],Z) + B(Y,[X,Z])| over basis triples."""
        c = L.structure
        t = np.einsum("xyk,kz->xyz", c, self.matrix)
        return float(np.max(np.abs(t + np.transpose(t, (0, 2, 1))), initial=0.0))


def _ip(X, Y) -> float:
    return float(-2.0 * np.trace(X @ Y).real)


def structure_from_matrices(mats: np.ndarray) -> np.ndarray:
    """Structure constants of the real span of the matrices ``mats``."""
    n = len(mats)
    flat = np.concatenate([mats.reshape(n, -1).real, mats.reshape(n, -1).imag], axis=1).T
    pinv = np.linalg.pinv(flat)
    c = np.zeros((n, n, n))
    for i, j in itertools.combinations(range(n), 2):
        br = mats[i] @ mats[j] - mats[j] @ mats[i]
        v = np.concatenate([br.ravel().real, br.ravel().imag])
        coeff = pinv @ v
        if np.linalg.norm(flat @ coeff - v) > 1e-9 * max(1.0, np.linalg.norm(v)):
            raise ValueError("matrices do not span a Lie algebra")
        c[i, j] = coeff
        c[j, i] = -coeff
    c[np.abs(c) < 1e-14] = 0.0
    return c


def _su_matrices(n: int) -> tuple[np.ndarray, list[str]]:
    mats, labels = [], []
    pairs = list(itertools.combinations(range(n), 2))
    for a, b in pairs:
        m = np.zeros((n, n), complex)
        m[a, b], m[b, a] = 0.5, -0.5
        mats.append(m)
        labels.append(f"A{a + 1}{b + 1}")
    for a, b in pairs:
        m = np.zeros((n, n), complex)
        m[a, b] = m[b, a] = 0.5j
        mats.append(m)
        labels.append(f"S{a + 1}{b + 1}")
    for l in range(1, n):
        d = np.zeros(n)
        d[:l] = 1.0
        d[l] = -l
        mats.append(np.diag(1j * d) / np.sqrt(2 * l * (l + 1)))
        labels.append(f"H{l}")
    return np.array(mats), labels


def su(n: int) -> LieAlgebra:
    if n < 2:
        raise ValueError(f"su(n) needs n >= 2, got {n}")
    mats, labels = _su_matrices(n)
    c = structure_from_matrices(mats)
    return LieAlgebra(c, (Block(f"su{n}", 0, len(labels)),), tuple(labels), f"su({n})", mats)


def su3_standard() -> LieAlgebra:
    """su(3) in the -Killing-orthonormal basis e_1, ..., e_8 with

    [e3, e6] = (sqrt3/6) e1 - (1/2) e2,  [e4, e7] = (sqrt3/6) e1 + (1/2) e2,
    [e5, e8] = (sqrt3/3) e1.

    In terms of the ``su(3)`` basis above (divided by sqrt 3):
    e1 = H1, e2 = -H2, e3 = A13, e4 = -A23, e5 = A12, e6 = S13, e7 = S23, e8 = S12.
    """
    mats, labels = _su_matrices(3)
    idx = {lab: i for i, lab in enumerate(labels)}
    order = [("H1", 1), ("H2", -1), ("A13", 1), ("A23", -1), ("A12", 1),
             ("S13", 1), ("S23", 1), ("S12", 1)]
    new = np.array([sgn * mats[idx[lab]] for lab, sgn in order]) / np.sqrt(3.0)
    c = structure_from_matrices(new)
    return LieAlgebra(c, (Block("su3", 0, 8),), tuple(f"e{i}" for i in range(1, 9)), "su(3)", new)


def so(n: int) -> LieAlgebra:
    """so(n) in the basis e_rs = E_rs - E_sr, r < s."""
    if n < 3:
        raise ValueError(f"so(n) needs n >= 3, got {n}")
    if n == 4:
        raise ValueError("so(4) is not simple; build it as direct_sum([so(3), so(3)])")
    mats, labels = [], []
    for r, s in itertools.combinations(range(n), 2):
        m = np.zeros((n, n), complex)
        m[r, s], m[s, r] = 1.0, -1.0
        mats.append(m)
        labels.append(f"e{r + 1}{s + 1}")
    mats = np.array(mats)
    c = structure_from_matrices(mats)
    return LieAlgebra(c, (Block(f"so{n}", 0, len(labels)),), tuple(labels), f"so({n})", mats)


def abelian(d: int) -> LieAlgebra:
    if d < 1:
        raise ValueError("abelian algebra needs positive dimension")
    return LieAlgebra(np.zeros((d, d, d)), (Block("z", 0, d, "center"),),
                      tuple(f"t{i + 1}" for i in range(d)), f"R^{d}")


def torus(n: int, dim: int | None = None) -> LieAlgebra:
    """Abelian algebra spanned by the first ``dim`` diagonal elements of su(n)."""
    dim = n - 1 if dim is None else dim
    if not 1 <= dim <= n - 1:
        raise ValueError(f"a torus inside su({n}) has dimension 1..{n - 1}, got {dim}")
    mats, labels = _su_matrices(n)
    diag = mats[-(n - 1):][:dim]
    return LieAlgebra(np.zeros((dim, dim, dim)), (Block("z", 0, dim, "center"),),
                      tuple(labels[-(n - 1):][:dim]), f"t{dim}<su({n})", diag)


def rescaled(L: LieAlgebra, factors) -> LieAlgebra:
    """Replace each basis vector e_i by factors[i] * e_i."""
    f = np.broadcast_to(np.asarray(factors, dtype=float), (L.dim,))
    if np.any(f == 0):
        raise ValueError("rescaling factors must be nonzero")
    c = np.einsum("ijk,i,j,k->ijk", L.structure, f, f, 1.0 / f)
    mats = None if L.matrices is None else L.matrices * f[:, None, None]
    return LieAlgebra(c, L.blocks, L.labels, L.name, mats)


def direct_sum(parts, labels=None) -> LieAlgebra:
    """Block-diagonal direct sum; all central blocks are merged into one."""
    parts = list(parts)
    if not parts:
        raise ValueError("direct_sum needs at least one summand")
    labels = labels or [f"g{i + 1}" for i in range(len(parts))]
    dims = [p.dim for p in parts]
    n = sum(dims)
    offsets = np.concatenate([[0], np.cumsum(dims)])
    perm, blocks, basis_labels = [], [], []
    center = []
    # simple ideals first (in summand order), then the merged center
    for p, off, lab in zip(parts, offsets, labels):
        for b in p.blocks:
            if b.kind == "center":
                center.append((p, off, lab, b))
                continue
            start = len(perm)
            perm.extend(off + i for i in b.indices)
            name = lab if len(p.simple_blocks) == 1 and p.center_block is None else f"{lab}.{b.label}"
            blocks.append(Block(name, start, len(perm)))
            basis_labels.extend(f"{lab}.{p.labels[i]}" for i in b.indices)
    if center:
        start = len(perm)
        for p, off, lab, b in center:
            perm.extend(off + i for i in b.indices)
            basis_labels.extend(f"{lab}.{p.labels[i]}" for i in b.indices)
        blocks.append(Block("z", start, len(perm), "center"))
    big = np.zeros((n, n, n))
    for p, off in zip(parts, offsets):
        sl = slice(off, off + p.dim)
        big[sl, sl, sl] = p.structure
    perm = np.array(perm)
    big = big[np.ix_(perm, perm, perm)]
    name = " + ".join(p.name for p in parts)
    return LieAlgebra(big, tuple(blocks), tuple(basis_labels), name)


def ad_matrix(L: LieAlgebra, X) -> np.ndarray:
    """Matrix of ad X: column j holds the coordinates of [X, e_j]."""
    X = np.asarray(X, dtype=float)
    if X.shape != (L.dim,):
        raise ValueError(f"vector of length {L.dim} expected, got shape {X.shape}")
    return np.einsum("i,ijk->kj", X, L.structure)


def killing_form(L: LieAlgebra) -> BilinearForm:
    c = L.structure
    # ad(e_i)[k, j] = c[i, j, k];  tr(ad e_a ad e_b) = sum_{j,k} c[a,j,k] c[b,k,j]
    kappa = np.einsum("ajk,bkj->ab", c, c)
    return BilinearForm(kappa, ad_invariant=True)


def jacobi_residual(L: LieAlgebra) -> float:
    c = L.structure
    # J[i,j,k,l] = sum_m c_ij^m c_mk^l + cyclic(i,j,k)
    t = np.einsum("ijm,mkl->ijkl", c, c)
    jac = t + np.transpose(t, (1, 2, 0, 3)) + np.transpose(t, (2, 0, 1, 3))
    return float(np.max(np.abs(jac), initial=0.0))


def restrict_form(B: BilinearForm, basis) -> BilinearForm:
    """Gram matrix basis^T B basis of B on the span of the columns of ``basis``."""
    V = np.atleast_2d(np.asarray(basis, dtype=float))
    if V.shape[0] != B.matrix.shape[0]:
        raise ValueError("subspace basis has wrong ambient dimension")
    if numerical_rank(V) < V.shape[1]:
        raise ValueError("subspace basis is rank deficient")
    return BilinearForm(V.T @ B.matrix @ V, ad_invariant=False)


def block_killing(L: LieAlgebra, block: Block) -> np.ndarray:
    """Killing form of the ideal ``block`` extended by zero to all of L."""
    K = np.zeros((L.dim, L.dim))
    if block.kind == "simple":
        sl = slice(block.start, block.stop)
        c = L.structure[sl, sl, sl]
        K[sl, sl] = np.einsum("ajk,bkj->ab", c, c)
    return K
