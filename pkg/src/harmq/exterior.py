"""Invariant exterior calculus on p: d, inner products, d*, Hodge Laplacian.

Forms are stored as dense coefficient vectors over strictly increasing index
tuples in lexicographic order, relative to a g_b-orthonormal basis of p.
``alpha(e_I)`` for an unsorted tuple picks up the sign of the sorting
permutation.  The inner product sums over all ordered tuples of a
g-orthonormal basis, so for g = (x_1, ..., x_m)_{g_b} the weight of an
increasing tuple I is k! / prod_{i in I} x_i.

Everything here works for any "frame": an object with ``dim``,
``structure_p`` (f[a,b,c] = coefficient of P_c in [P_a,P_b]_p),
``isotropy_action`` (rho[m,c,a], the action of the k basis on p) and
``blocks``/``weights``.  ReductiveSplit is one; GroupFrame covers K = {e}.
"""

from __future__ import annotations

import itertools
import math
import weakref
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from harmq.liealg import Block, LieAlgebra
from harmq.linalg import KERNEL_TOL, inv_sqrt_psd, nullspace

MAX_DIM = 24


class FrameTooLarge(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GroupFrame:
    """The Lie-group case: p = g with its given basis declared g_b-orthonormal.

    The reference bi-invariant metric is the one making this basis
    orthonormal (e.g. -kappa for ``su3_standard``); metrics are diagonal in
    the basis, given per block (= simple ideal) or per basis vector.
    """

    algebra: LieAlgebra

    @property
    def dim(self) -> int:
        return self.algebra.dim

    @property
    def blocks(self) -> tuple[Block, ...]:
        return self.algebra.blocks

    @property
    def structure_p(self) -> np.ndarray:
        return self.algebra.structure

    @cached_property
    def isotropy_action(self) -> np.ndarray:
        return np.zeros((0, self.dim, self.dim))

    def weights(self, x) -> np.ndarray:
        return _weights_from(self, x)


def _weights_from(frame, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("metric scalings must be positive")
    if x.shape == (frame.dim,) and len(frame.blocks) != frame.dim:
        return x.copy()
    if x.shape != (len(frame.blocks),):
        raise ValueError(f"need {len(frame.blocks)} block scalings or {frame.dim} "
                         f"per-vector scalings, got shape {x.shape}")
    w = np.empty(frame.dim)
    for b, xb in zip(frame.blocks, x):
        w[b.start:b.stop] = xb
    return w


@dataclass(frozen=True)
class MetricSpec:
    """g = (x_1, ..., x_r)_{g_b}; ``x`` per block of the frame or per basis vector."""

    x: tuple
    z: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        if any(v <= 0 for v in self.x):
            raise ValueError("metric scalings must be positive")
        if self.z is not None:
            object.__setattr__(self, "z", tuple(float(v) for v in self.z))
            if any(v <= 0 for v in self.z):
                raise ValueError("bi-invariant coefficients must be positive")

    def weights(self, frame) -> np.ndarray:
        if hasattr(frame, "z") and self.z is not None and not np.allclose(frame.z, self.z):
            raise ValueError("metric z does not match the split's bi-invariant coefficients")
        if hasattr(frame, "weights") and not isinstance(frame, GroupFrame) and \
                len(self.x) == len(frame.blocks):
            return frame.weights(self.x)
        return _weights_from(frame, self.x)


def metric_weights(frame, metric) -> np.ndarray:
    """Per-basis-vector scalings; ``None`` means g_b itself."""
    if metric is None:
        return np.ones(frame.dim)
    if isinstance(metric, MetricSpec):
        return metric.weights(frame)
    return _weights_from(frame, metric)


# --------------------------------------------------------------------------
# Index bookkeeping


def _encode(t: np.ndarray, m: int) -> np.ndarray:
    key = np.zeros(t.shape[0], dtype=np.int64)
    for i in range(t.shape[1]):
        key = key * m + t[:, i]
    return key


def _sort_with_sign(t: np.ndarray):
    """Sort rows; return (sorted, sign), sign = 0 for repeated entries."""
    k = t.shape[1]
    inv = np.zeros(t.shape[0], dtype=np.int64)
    for a, b in itertools.combinations(range(k), 2):
        inv += t[:, a] > t[:, b]
    s = np.sort(t, axis=1)
    sign = np.where(inv % 2 == 0, 1.0, -1.0)
    if k > 1:
        sign[np.any(s[:, 1:] == s[:, :-1], axis=1)] = 0.0
    return s, sign


def _clean(a) -> np.ndarray:
    # rounding noise from basis changes would only densify the sparse operators
    a = np.array(a, dtype=float)
    a[np.abs(a) < 1e-13 * max(1.0, np.abs(a).max(initial=0.0))] = 0.0
    return a


class _Complex:
    def __init__(self, frame):
        m = frame.dim
        if m > MAX_DIM:
            raise FrameTooLarge(f"dim p = {m} exceeds the supported maximum {MAX_DIM}")
        self.m = m
        self.f = _clean(frame.structure_p)
        self.rho = _clean(frame.isotropy_action)
        self._tuples: dict[int, np.ndarray] = {}
        self._lookup: dict[int, np.ndarray] = {}
        self._d: dict[int, sp.csr_matrix] = {}
        self._inv: dict[int, np.ndarray] = {}

    def tuples(self, k: int) -> np.ndarray:
        if k not in self._tuples:
            if k == 0:
                t = np.zeros((1, 0), dtype=np.int64)
            else:
                t = np.array(list(itertools.combinations(range(self.m), k)), dtype=np.int64)
                t = t.reshape(-1, k)
            self._tuples[k] = t
        return self._tuples[k]

    def size(self, k: int) -> int:
        return math.comb(self.m, k) if 0 <= k <= self.m else 0

    def index(self, k: int, sorted_tuples: np.ndarray) -> np.ndarray:
        if k == 0:
            return np.zeros(sorted_tuples.shape[0], dtype=np.int64)
        if k not in self._lookup:
            lut = np.full(self.m ** k, -1, dtype=np.int64)
            lut[_encode(self.tuples(k), self.m)] = np.arange(self.size(k))
            self._lookup[k] = lut
        return self._lookup[k][_encode(sorted_tuples, self.m)]

    def d(self, k: int) -> sp.csr_matrix:
        """Matrix of d: Lambda^k -> Lambda^{k+1}."""
        if k in self._d:
            return self._d[k]
        m, f = self.m, self.f
        nrow, ncol = self.size(k + 1), self.size(k)
        if nrow == 0 or ncol == 0:
            M = sp.csr_matrix((nrow, ncol))
            self._d[k] = M
            return M
        J = self.tuples(k + 1)
        rows, cols, vals = [], [], []
        cs = np.arange(m)
        for a, b in itertools.combinations(range(k + 1), 2):
            sgn = -1.0 if (a + b) % 2 else 1.0
            rest = np.delete(J, [a, b], axis=1)
            coef = f[J[:, a], J[:, b], :]  # (N, m)
            r_idx, c_idx = np.nonzero(np.abs(coef) > 0)
            if r_idx.size == 0:
                continue
            t = np.concatenate([cs[c_idx][:, None], rest[r_idx]], axis=1)
            s, sign = _sort_with_sign(t)
            keep = sign != 0
            rows.append(r_idx[keep])
            cols.append(self.index(k, s[keep]))
            vals.append(sgn * sign[keep] * coef[r_idx[keep], c_idx[keep]])
        if rows:
            M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(nrow, ncol))
        else:
            M = sp.csr_matrix((nrow, ncol))
        M.sum_duplicates()
        self._d[k] = M
        return M

    def lie_derivative(self, k: int, T: np.ndarray) -> sp.csr_matrix:
        """(L alpha)_I = sum_pos sum_c T[c, I_pos] alpha(I with I_pos -> c)."""
        N = self.size(k)
        if k == 0 or N == 0:
            return sp.csr_matrix((N, N))
        I = self.tuples(k)
        rows, cols, vals = [], [], []
        for pos in range(k):
            coef = T[:, I[:, pos]].T  # (N, m): T[c, I_pos]
            r_idx, c_idx = np.nonzero(np.abs(coef) > 0)
            if r_idx.size == 0:
                continue
            t = I[r_idx].copy()
            t[:, pos] = c_idx
            s, sign = _sort_with_sign(t)
            keep = sign != 0
            rows.append(r_idx[keep])
            cols.append(self.index(k, s[keep]))
            vals.append(sign[keep] * coef[r_idx[keep], c_idx[keep]])
        if not rows:
            return sp.csr_matrix((N, N))
        M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(N, N))
        M.sum_duplicates()
        return M

    def invariant(self, k: int) -> np.ndarray:
        """g_b-orthonormal basis (columns) of the K-invariant k-forms."""
        if k in self._inv:
            return self._inv[k]
        N = self.size(k)
        scale = 1.0 / math.sqrt(math.factorial(k))
        acting = [R for R in self.rho if np.abs(R).max(initial=0.0) > 0]
        if N == 0:
            V = np.zeros((0, 0))
        elif not acting or k == 0:
            V = np.eye(N) * scale
        else:
            ops = [self.lie_derivative(k, R) for R in acting]
            # a generic element of k first: its kernel contains the invariants
            rng = np.random.default_rng(20240601)
            gen = sum(w * L for w, L in zip(rng.standard_normal(len(ops)), ops))
            gram = (gen.T @ gen).toarray()
            ev, U = np.linalg.eigh(gram)
            top = max(ev[-1], 1.0)
            V0 = U[:, ev <= 1e-6 * top]
            if V0.shape[1]:
                stacked = np.concatenate([(L @ V0) for L in ops], axis=0)
                V = V0 @ nullspace(stacked, KERNEL_TOL)
            else:
                V = V0
            V = V * scale
        self._inv[k] = V
        return V


_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def complex_of(frame) -> _Complex:
    cx = _CACHE.get(frame)
    if cx is None:
        cx = _Complex(frame)
        _CACHE[frame] = cx
    return cx


# --------------------------------------------------------------------------
# Forms


@dataclass(frozen=True, eq=False)
class InvariantForm:
    degree: int
    coeffs: np.ndarray
    space: object

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).ravel()
        n = complex_of(self.space).size(self.degree)
        if c.shape != (n,):
            raise ValueError(f"a {self.degree}-form on a {self.space.dim}-dim space "
                             f"has {n} coefficients, got {c.shape[0]}")
        object.__setattr__(self, "coeffs", c)

    def __call__(self, *idx) -> float:
        if len(idx) != self.degree:
            raise ValueError(f"{self.degree} arguments expected")
        cx = complex_of(self.space)
        s, sign = _sort_with_sign(np.array([idx], dtype=np.int64))
        if sign[0] == 0:
            return 0.0
        return float(sign[0] * self.coeffs[cx.index(self.degree, s)[0]])

    def as_dict(self, tol: float = 0.0) -> dict:
        cx = complex_of(self.space)
        T = cx.tuples(self.degree)
        return {tuple(int(v) for v in T[i]): float(c)
                for i, c in enumerate(self.coeffs) if abs(c) > tol}

    def tensor(self) -> np.ndarray:
        """Full antisymmetric coefficient array of shape (m,)*degree."""
        m, k = self.space.dim, self.degree
        out = np.zeros((m,) * k)
        T = complex_of(self.space).tuples(k)
        for perm in itertools.permutations(range(k)):
            s, sign = _sort_with_sign(np.array([perm]))
            out[tuple(T[:, list(perm)].T)] = sign[0] * self.coeffs
        return out

    @classmethod
    def from_tensor(cls, space, tensor) -> "InvariantForm":
        tensor = np.asarray(tensor, dtype=float)
        k = tensor.ndim
        T = complex_of(space).tuples(k)
        return cls(k, tensor[tuple(T.T)] if k else tensor.reshape(1), space)

    @classmethod
    def zero(cls, space, k: int) -> "InvariantForm":
        return cls(k, np.zeros(complex_of(space).size(k)), space)

    def _check(self, other):
        if other.space is not self.space or other.degree != self.degree:
            raise ValueError("forms live on different spaces or degrees")

    def __add__(self, other):
        self._check(other)
        return InvariantForm(self.degree, self.coeffs + other.coeffs, self.space)

    def __sub__(self, other):
        self._check(other)
        return InvariantForm(self.degree, self.coeffs - other.coeffs, self.space)

    def __mul__(self, t):
        return InvariantForm(self.degree, float(t) * self.coeffs, self.space)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def invariance_residual(self) -> float:
        cx = complex_of(self.space)
        if self.degree == 0 or cx.rho.shape[0] == 0:
            return 0.0
        return max(float(np.abs(cx.lie_derivative(self.degree, R) @ self.coeffs).max(initial=0.0))
                   for R in cx.rho)


def wedge_basis(space, *idx) -> InvariantForm:
    """e^{i_1} ^ ... ^ e^{i_k} for distinct indices (sign from their order)."""
    k = len(idx)
    out = np.zeros(complex_of(space).size(k))
    cx = complex_of(space)
    s, sign = _sort_with_sign(np.array([idx], dtype=np.int64))
    if sign[0] != 0:
        out[cx.index(k, s)[0]] = sign[0]
    return InvariantForm(k, out, space)


def invariant_matrix(split, k: int) -> np.ndarray:
    """Columns: coefficient vectors of a g_b-orthonormal basis of (Lambda^k p*)^K."""
    if k < 0 or k > split.dim:
        raise ValueError(f"degree {k} outside 0..{split.dim}")
    return complex_of(split).invariant(k)


def invariant_basis(split, k: int) -> list[InvariantForm]:
    V = invariant_matrix(split, k)
    return [InvariantForm(k, V[:, i], split) for i in range(V.shape[1])]


def differential_matrix(split, k: int) -> sp.csr_matrix:
    return complex_of(split).d(k)


def differential(split, alpha: InvariantForm) -> InvariantForm:
    D = differential_matrix(split, alpha.degree)
    return InvariantForm(alpha.degree + 1, D @ alpha.coeffs, split)


def form_weights(split, metric, k: int) -> np.ndarray:
    """Diagonal of the inner product on Lambda^k in the increasing-tuple basis."""
    x = metric_weights(split, metric)
    T = complex_of(split).tuples(k)
    return math.factorial(k) / np.prod(x[T], axis=1) if k else np.ones(1)


def inner(split, metric, alpha: InvariantForm, beta: InvariantForm) -> float:
    alpha._check(beta)
    return float(np.sum(form_weights(split, metric, alpha.degree) * alpha.coeffs * beta.coeffs))


def norm(split, metric, alpha: InvariantForm) -> float:
    return math.sqrt(max(inner(split, metric, alpha, alpha), 0.0))


def form_gram(split, metric, k: int) -> np.ndarray:
    V = invariant_matrix(split, k)
    return V.T @ (form_weights(split, metric, k)[:, None] * V)


def codifferential_matrix(split, metric, k: int) -> sp.csr_matrix:
    """d*_g: Lambda^k -> Lambda^{k-1} as W_{k-1}^{-1} D_{k-1}^T W_k."""
    if k < 1:
        raise ValueError("codifferential needs degree >= 1")
    D = differential_matrix(split, k - 1)
    Wk = form_weights(split, metric, k)
    Wl = form_weights(split, metric, k - 1)
    return sp.diags(1.0 / Wl) @ D.T @ sp.diags(Wk)


def codifferential(split, metric, beta: InvariantForm) -> InvariantForm:
    C = codifferential_matrix(split, metric, beta.degree)
    return InvariantForm(beta.degree - 1, C @ beta.coeffs, split)


def laplacian(split, metric, k: int) -> np.ndarray:
    """Delta_g on the invariant k-forms, in a g-orthonormal invariant basis."""
    V = invariant_matrix(split, k)
    n = V.shape[1]
    if n == 0:
        return np.zeros((0, 0))
    Wk = form_weights(split, metric, k)
    S = np.zeros((n, n))
    if k < split.dim:
        DV = differential_matrix(split, k) @ V
        S += DV.T @ (form_weights(split, metric, k + 1)[:, None] * DV)
    if k >= 1:
        E = differential_matrix(split, k - 1).T @ (Wk[:, None] * V)
        S += E.T @ (E / form_weights(split, metric, k - 1)[:, None])
    G = V.T @ (Wk[:, None] * V)
    R = inv_sqrt_psd(G)
    L = R @ S @ R
    return (L + L.T) / 2


def laplacian_spectrum(split, metric, k: int) -> np.ndarray:
    L = laplacian(split, metric, k)
    return np.linalg.eigvalsh(L) if L.size else np.zeros(0)


def betti(split, metric, k: int) -> int:
    ev = laplacian_spectrum(split, metric, k)
    if ev.size == 0:
        return 0
    top = max(1.0, float(np.abs(ev).max()))
    return int(np.sum(ev < KERNEL_TOL * top))


def harmonic_residual(split, metric, alpha: InvariantForm) -> float:
    """||d alpha||_g + ||d*_g alpha||_g."""
    total = 0.0
    if alpha.degree < split.dim:
        total += norm(split, metric, differential(split, alpha))
    if alpha.degree >= 1:
        total += norm(split, metric, codifferential(split, metric, alpha))
    return total


def harmonic_projection(split, metric, alpha: InvariantForm) -> InvariantForm:
    """The g-harmonic representative of a closed invariant form's class."""
    k = alpha.degree
    if k == 0:
        return alpha
    # alpha - d beta with beta invariant chosen to kill d* (least squares in g-norm)
    B = invariant_matrix(split, k - 1)
    DB = differential_matrix(split, k - 1) @ B
    W = form_weights(split, metric, k)
    sw = np.sqrt(W)
    coef, *_ = np.linalg.lstsq(sw[:, None] * DB, sw * alpha.coeffs, rcond=None)
    return InvariantForm(k, alpha.coeffs - DB @ coef, split)


# --------------------------------------------------------------------------
# Low degree: p_0, 1-forms, 2-forms omega_X


def trivial_isotypic(split) -> np.ndarray:
    """Coordinates (in the basis of p) of a basis of p_0 = {X in p : [k, X] = 0}."""
    rho = np.asarray(split.isotropy_action)
    if rho.shape[0] == 0:
        return np.eye(split.dim)
    return nullspace(rho.reshape(-1, split.dim))


def theta(split, X) -> InvariantForm:
    """theta_X = g_b(., X) for X given in p coordinates."""
    return InvariantForm(1, np.asarray(X, dtype=float), split)


def omega(split, X) -> InvariantForm:
    """omega_X(Y, W) = g_b([Y, W], X) for X in g (coordinates of the ambient algebra)."""
    P, gb = split.p_basis, split.gb
    br = np.einsum("ia,jb,ijk->abk", P, P, split.algebra.structure)
    T = np.einsum("abk,kl,l->ab", br, gb, np.asarray(X, dtype=float))
    return InvariantForm.from_tensor(split, T)


def harmonic_2form_correction(split, Z) -> InvariantForm:
    """omega_{Z + X_Z}, the g_b-harmonic representative of [omega_Z] for Z in z(k).

    X_Z in p_0 solves kappa(X, X_Z) = -kappa(X, Z) for all X in p_0.
    """
    from harmq.liealg import killing_form

    Z = np.asarray(Z, dtype=float)
    U = split.p_basis @ trivial_isotypic(split)
    if U.shape[1] == 0:
        return omega(split, Z)
    kap = killing_form(split.algebra).matrix
    G = U.T @ kap @ U
    if np.linalg.matrix_rank(G) < G.shape[0]:
        raise np.linalg.LinAlgError("Killing form degenerate on p_0")
    XZ = U @ np.linalg.solve(G, -U.T @ kap @ Z)
    return omega(split, Z + XZ)
