"""Closed-form side: Q-forms, H_Q, the codifferential on Lie groups, Casimir
constants and the harmonicity criterion for H_Q on aligned spaces.

Indexing: A_j, C_j, a_j, b_j use j = 1..s-1 (stored 0-based in arrays);
``ReductiveSplit.A[j-1]`` is the same number written A_{s+j} elsewhere.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from harmq import exterior as ext
from harmq.homog import (AlignmentData, AssumptionReport, Embedding, ReductiveSplit, aligned_split,
                         assumption_check, b3_dimension)
from harmq.liealg import LieAlgebra, killing_form
from harmq.linalg import nullspace, orth

HARM_TOL = 1e-8


class AssumptionError(ValueError):
    """The harmonicity criterion is not proven for this input."""


# --------------------------------------------------------------------------
# Bi-invariant forms


@dataclass(frozen=True, eq=False)
class BiInvariantQ:
    y: np.ndarray
    matrix: np.ndarray  # on the ambient algebra, in its basis
    restriction_norm: float
    admissible: bool


def make_Q(E: Embedding, y) -> BiInvariantQ:
    y = np.asarray(y, dtype=float)
    if y.shape != (E.s,):
        raise ValueError(f"need {E.s} coefficients y, got shape {y.shape}")
    Q = sum(yi * K for yi, K in zip(y, E.ideal_killing))
    if E.sub.dim:
        res = float(np.abs(E.inclusion.T @ Q @ E.inclusion).max())
        ker = b3_dimension(E).kernel
        # y is admissible iff it lies in the kernel of y -> Q|_(k x k)
        off = y - ker @ (ker.T @ y)
        admissible = np.linalg.norm(off) <= 1e-9 * max(1.0, np.linalg.norm(y))
    else:
        res, admissible = 0.0, True
    return BiInvariantQ(y, Q, res, bool(admissible))


def admissible_basis(E: Embedding) -> np.ndarray:
    """Columns span {y : Q|_(k x k) = 0}."""
    return b3_dimension(E).kernel


# --------------------------------------------------------------------------
# Cartan forms on Lie groups


def _qmatrix(Q) -> np.ndarray:
    return Q.matrix if isinstance(Q, BiInvariantQ) else np.asarray(Q, dtype=float)


def cartan_form(L: LieAlgebra | ext.GroupFrame, Q) -> ext.InvariantForm:
    """Q-bar(X, Y, Z) = Q([X, Y], Z) on g, as a form on ``GroupFrame(L)``."""
    frame = L if isinstance(L, ext.GroupFrame) else ext.GroupFrame(L)
    T = np.einsum("abk,kc->abc", frame.algebra.structure, _qmatrix(Q))
    return ext.InvariantForm.from_tensor(frame, T)


def dgstar_lemma(frame: ext.GroupFrame, x, beta: ext.InvariantForm) -> ext.InvariantForm:
    """Closed-form codifferential of a 3-form for g = (x_1, ..., x_n)_{g_b}.

    Evaluates
        -3/2 sum_{k<l} ( x_k S(k, l) - x_l S(l, k) ) e_k ^ e_l,
        S(k, l) = sum_{i,j} c_ij^k beta(e_i, e_j, e_l) / (x_i x_j),
    with c_ij^k = g_b([e_i, e_j], e_k).
    """
    if beta.degree != 3:
        raise ValueError("the closed-form codifferential is for 3-forms")
    w = ext.metric_weights(frame, x)
    c = frame.algebra.structure
    B = beta.tensor()
    inv = 1.0 / w
    S = np.einsum("ijk,ijl,i,j->kl", c, B, inv, inv)
    M = -1.5 * (w[:, None] * S - (w[:, None] * S).T)
    n = frame.dim
    iu = np.triu_indices(n, 1)
    out = np.zeros((n, n))
    out[iu] = M[iu]
    return ext.InvariantForm.from_tensor(frame, out - out.T)


@dataclass(frozen=True)
class GroupHarmonicity:
    harmonic: bool
    residual: float
    violations: tuple


def group_harmonicity(frame: ext.GroupFrame, x, Q, alpha: ext.InvariantForm | None = None
                      ) -> GroupHarmonicity:
    """Criterion for Q-bar (+ d alpha) to be g-harmonic on a Lie group.

    Without ``alpha``: for every simple ideal on which Q is nonzero,
    sum_{i,j} c_ij^k c_ij^l / (x_i x_j) = 0 whenever x_k != x_l (k, l in that ideal).
    With ``alpha``: the closed-form codifferential of Q-bar + d alpha must vanish.
    """
    w = ext.metric_weights(frame, x)
    Qm = _qmatrix(Q)
    if alpha is not None:
        beta = cartan_form(frame, Qm) + ext.differential(frame, alpha)
        r = float(np.abs(dgstar_lemma(frame, w, beta).coeffs).max(initial=0.0))
        scale = max(1.0, float(np.abs(beta.coeffs).max(initial=0.0)))
        return GroupHarmonicity(r <= HARM_TOL * scale, r, ())
    c = frame.algebra.structure
    inv = 1.0 / w
    M = np.einsum("ijk,ijl,i,j->kl", c, c, inv, inv)
    bad, worst = [], 0.0
    for blk in frame.algebra.blocks:
        sl = slice(blk.start, blk.stop)
        if blk.kind != "simple" or np.abs(Qm[sl, sl]).max() < 1e-14:
            continue
        for k in blk.indices:
            for l in range(k + 1, blk.stop):
                if abs(w[k] - w[l]) <= 1e-12 * max(w[k], w[l]):
                    continue
                v = abs(M[k, l])
                worst = max(worst, v)
                if v > HARM_TOL * max(1.0, abs(M[k, k]), abs(M[l, l])):
                    bad.append((k, l))
    return GroupHarmonicity(not bad, worst, tuple(bad))


def su3_correction(x, variant: str = "printed") -> float:
    """t such that H_kappa + t d(e1 ^ e2) should be g-harmonic on SU(3), g = (x_1..x_8).

    ``variant="printed"`` is the published closed form
        -sqrt3 (x1 - x2)(u - v) / ((x1 + 3 x2)(u + v) + 12 x1 / (x5 x8)),
    with u = 1/(x3 x6), v = 1/(x4 x7).  ``variant="derived"`` is the
    expression obtained by solving d*(H_kappa + t d(e1 ^ e2)) = 0 symbolically
    from the same brackets:
        -sqrt3 (x1 - x2)(v - u) / ((x1 + 3 x2)(u + v) + 4 x1 / (x5 x8)).
    Both vanish exactly when x1 = x2 or x3 x6 = x4 x7; only the derived one
    lands on the harmonic representative in general.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (8,) or np.any(x <= 0):
        raise ValueError("need eight positive scalings")
    x1, x2, x3, x4, x5, x6, x7, x8 = x
    u, v = 1.0 / (x3 * x6), 1.0 / (x4 * x7)
    if variant == "printed":
        num = -math.sqrt(3.0) * (x1 - x2) * (u - v)
        den = (x1 + 3 * x2) * (u + v) + 12 * x1 / (x5 * x8)
    elif variant == "derived":
        num = -math.sqrt(3.0) * (x1 - x2) * (v - u)
        den = (x1 + 3 * x2) * (u + v) + 4 * x1 / (x5 * x8)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return float(num / den)


def su3_harmonic_form(frame: ext.GroupFrame, x, variant: str = "printed") -> ext.InvariantForm:
    """H_kappa + t d(e1 ^ e2) on ``GroupFrame(su3_standard())``."""
    H = cartan_form(frame, killing_form(frame.algebra).matrix)
    t = su3_correction(x, variant)
    return H + ext.differential(frame, ext.wedge_basis(frame, 0, 1)) * t


# --------------------------------------------------------------------------
# H_Q on G/K


def _split_tensors(split: ReductiveSplit, Q):
    Qm = _qmatrix(Q)
    P, gb = split.p_basis, split.gb
    br = np.einsum("ia,jb,ijk->abk", P, P, split.algebra.structure)
    proj_p = P @ P.T @ gb
    br_p = br @ proj_p.T
    br_k = br - br_p
    return Qm, P, br, br_p, br_k


def q_tilde(split: ReductiveSplit, Q) -> ext.InvariantForm:
    """Q-tilde = Q([., .], .) restricted to p."""
    Qm, P, br, _, _ = _split_tensors(split, Q)
    return ext.InvariantForm.from_tensor(split, np.einsum("abk,kl,lc->abc", br, Qm, P))


def h_q_tensor(split: ReductiveSplit, Q, variant: str = "4q") -> np.ndarray:
    """H_Q on p as a full tensor, by either of the two equivalent expressions."""
    Qm, P, br, br_p, br_k = _split_tensors(split, Q)

    def term(b):
        return np.einsum("abk,kl,lc->abc", b, Qm, P)

    if variant == "4q":
        Tp = term(br_p)
        T = 4 * term(br) - Tp + Tp.transpose(0, 2, 1) - Tp.transpose(2, 0, 1)
    elif variant == "k":
        Tk = term(br_k)
        T = term(br) + Tk - Tk.transpose(0, 2, 1) + Tk.transpose(2, 0, 1)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    skew = max(np.abs(T + T.transpose(1, 0, 2)).max(initial=0.0),
               np.abs(T + T.transpose(0, 2, 1)).max(initial=0.0))
    if skew > 1e-9 * max(1.0, np.abs(T).max(initial=0.0)):
        raise ArithmeticError(f"H_Q tensor not alternating (defect {skew:.2e})")
    return T


def alpha_q(split: ReductiveSplit, Q) -> np.ndarray:
    """alpha_Q as a matrix on the ambient algebra: Q(pi_p u, pi_k v) - Q(pi_p v, pi_k u)."""
    Qm, P = _qmatrix(Q), split.p_basis
    proj_p = P @ P.T @ split.gb
    proj_k = np.eye(len(Qm)) - proj_p
    M = proj_p.T @ Qm @ proj_k
    return M - M.T


def pullback_residual(split: ReductiveSplit, Q) -> float:
    """max |pi^* H_Q - (Q-bar + d-hat alpha_Q)| over the basis [p_basis | k_basis] of g."""
    Qm = _qmatrix(Q)
    c = split.algebra.structure
    F = np.concatenate([split.p_basis, split.k_basis], axis=1)
    m = split.dim
    br = np.einsum("ia,jb,ijk->abk", F, F, c)  # [F_a, F_b] in ambient coordinates
    qbar = np.einsum("abk,kl,lc->abc", br, Qm, F)
    al = alpha_q(split, Qm)
    t = np.einsum("abk,kl,lc->abc", br, al, F)  # alpha([F_a, F_b], F_c)
    dal = -t + t.transpose(0, 2, 1) - t.transpose(2, 0, 1)
    lhs = np.zeros_like(qbar)
    lhs[:m, :m, :m] = h_q_tensor(split, Qm)
    return float(np.abs(lhs - qbar - dal).max())


@dataclass(frozen=True, eq=False)
class HQResult:
    form: ext.InvariantForm
    alpha: np.ndarray
    closed_residual: float
    variant_residual: float
    pullback_residual: float


def h_q(split: ReductiveSplit, Q, check: bool = True) -> HQResult:
    if isinstance(Q, BiInvariantQ) and not Q.admissible:
        raise ValueError("Q must vanish on k x k")
    if not isinstance(Q, BiInvariantQ):
        Qm = np.asarray(Q, dtype=float)
        K = split.k_basis
        if K.shape[1] and np.abs(K.T @ Qm @ K).max() > 1e-9 * max(1.0, np.abs(Qm).max()):
            raise ValueError("Q must vanish on k x k")
    T = h_q_tensor(split, Q)
    H = ext.InvariantForm.from_tensor(split, T)
    al = alpha_q(split, Q)
    if not check:
        return HQResult(H, al, float("nan"), float("nan"), float("nan"))
    dH = float(np.abs(ext.differential(split, H).coeffs).max(initial=0.0))
    var = float(np.abs(T - h_q_tensor(split, Q, "k")).max(initial=0.0))
    pb = pullback_residual(split, Q)
    scale = max(1.0, float(np.abs(T).max(initial=0.0)))
    if max(dH, var, pb) > 1e-9 * scale:
        raise ArithmeticError(f"H_Q self-checks failed: dH={dH:.2e}, variants={var:.2e}, "
                              f"pullback={pb:.2e}")
    return HQResult(H, al, dH, var, pb)


# --------------------------------------------------------------------------
# Casimir constants and the criterion


@dataclass(frozen=True)
class CasimirData:
    cas0: float
    cas: np.ndarray
    cas0_from_lambda: float
    identity_residual: float


def casimir_data(A: AlignmentData, split: ReductiveSplit) -> CasimirData:
    if split.kind != "aligned":
        raise ValueError("Casimir constants need the aligned split")
    E = split.embedding
    rho = split.isotropy_action  # relative to the <,>-orthonormal adapted basis
    cas = np.zeros(E.s)
    for i in range(E.s):
        b = split.blocks[i]
        R = rho[:, b.start:b.stop, b.start:b.stop]
        cas[i] = -float(np.einsum("mab,mba->", R, R)) if b.dim else 0.0
    ck = E.sub.structure
    ad = np.einsum("ijk,ia->akj", ck, split.adapted_k_basis)
    cas0 = -float(np.einsum("aij,aji->", ad, ad))
    lam_sum = float(sum(l * kb.dim for l, kb in zip(A.lam, E.k_simple)))
    dimk = E.sub.dim
    res = float(np.max(np.abs(cas + cas0 - dimk / A.c)))
    return CasimirData(cas0, cas, lam_sum, res)


@dataclass(frozen=True)
class HarmonicityCheck:
    a: np.ndarray
    b: np.ndarray
    A: np.ndarray
    C: np.ndarray
    residuals: dict
    holds: bool
    max_residual: float


def _C(A: AlignmentData, Avec, y) -> np.ndarray:
    yc = np.asarray(y, dtype=float) / A.c
    s = len(yc)
    return np.array([yc[:j].sum() + Avec[j - 1] * yc[j] for j in range(1, s)])


def _ab(cas: CasimirData, x, s: int):
    x = np.asarray(x, dtype=float)
    inv2 = 1.0 / x ** 2
    a = np.array([cas.cas[j] * inv2[j] + cas.cas0 * inv2[s + j - 1] for j in range(1, s)])
    b = np.array([np.sum(cas.cas[:j] * inv2[:j]) + cas.cas0 * np.sum(inv2[s:s + j])
                  for j in range(1, s)])
    return a, b


_ASSUMPTIONS: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _assumptions(split: ReductiveSplit) -> AssumptionReport:
    rep = _ASSUMPTIONS.get(split)
    if rep is None:
        rep = assumption_check(split.embedding, split)
        _ASSUMPTIONS[split] = rep
    return rep


def _qtilde_pairing(A: AlignmentData, split: ReductiveSplit, cas: CasimirData, x, y) -> np.ndarray:
    """P[n, k] such that g(Q~, d omega) = sum_{n,k} P[n, k] Omega[n, k].

    omega is the invariant 2-form on the eta blocks with
    omega(e^{s+n}_a, e^{s+k}_b) = delta_ab Omega[n, k] B_2s / sqrt(B_{s+n} B_{s+k}).
    Q~ = Q([.,.],.) is coclosed for g_b but not for a general block metric,
    so this pairing has to be added to the dalpha_Q part of g(H_Q, d omega).
    """
    s, c, z = split.s, A.c, split.z
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    Av = np.asarray(split.A)
    B = np.append(split.B, split.B2s)  # index a-1 for eta index a = 1..s (s means k)
    D = np.append(split.D, split.B2s)
    B2s, c0 = split.B2s, cas.cas0
    yc = y / c
    C = np.array([yc[:a].sum() + Av[a - 1] * yc[a] for a in range(1, s)] + [0.0])
    G = np.array([yc[:a].sum() + Av[a - 1] ** 2 * yc[a] for a in range(1, s)])
    xe = x[s:]

    def q(m, k):  # Q(e^{s+m}_g, e^{s+k}_g)
        if m == s and k == s:
            return 0.0
        if m == k:
            return -G[m - 1] / B[m - 1]
        return -C[min(m, k) - 1] / math.sqrt(B[m - 1] * B[k - 1])

    def mu(k, i):  # coefficient of Z_i in phi_k(Z)
        return 1.0 if i <= k else (Av[k - 1] if i == k + 1 else 0.0)

    def gam(i, m):  # [e^{s+i}_a, e^{s+i}_b] has e^{s+m} coefficient gam * cbar
        if m == i:
            return D[i - 1] / B[i - 1] ** 1.5
        return 1.0 / math.sqrt(B[m - 1]) if m > i else 0.0

    eta = range(1, s)
    P = np.zeros((s, s))
    for i in range(1, s + 1):
        if cas.cas[i - 1] == 0.0:
            continue
        w = 3 * B2s * (y[i - 1] / z[i - 1]) * cas.cas[i - 1] / x[i - 1] ** 2
        for k in eta:
            for m in eta:
                P[m, k] += w * mu(k, i) * mu(m, i) / (B[k - 1] * B[m - 1] * xe[k - 1])
    if c0:
        for i in eta:
            for k in eta:
                w = B2s / math.sqrt(B[k - 1])
                for m in range(i, s + 1):
                    for n in range(i, s):
                        P[n, k] -= (3 * c0 * w * q(m, k) * gam(i, m) * gam(i, n)
                                    / (math.sqrt(B[n - 1]) * xe[i - 1] ** 2 * xe[k - 1]))
                for j in range(i + 1, s):
                    P[i, k] -= (6 * c0 * w * q(i, k) / (math.sqrt(B[i - 1]) * B[j - 1]
                                * xe[i - 1] * xe[j - 1] * xe[k - 1]))
    return P[1:, 1:]


CRITERIA = ("printed", "corrected")


def _pair_sides(A: AlignmentData, split: ReductiveSplit, cas: CasimirData, x, y,
                fault: str | None, criterion: str) -> dict:
    """{(j, k): (lhs, rhs)} of the pairwise condition, 1 <= j < k <= s-1."""
    s = split.s
    a, b = _ab(cas, x, s)
    Av = split.A
    C = _C(A, Av, y)
    xs = np.asarray(x, dtype=float)[s:]
    sign = -1.0 if fault == "flip-sign" else 1.0
    P = _qtilde_pairing(A, split, cas, x, y) if criterion == "corrected" else None
    out = {}
    for j in range(1, s):
        for k in range(j + 1, s):
            lhs = xs[k - 1] * (a[k - 1] * Av[k - 1] + b[k - 1]
                               + sign * 2 * cas.cas0 * (1 / xs[j - 1] ** 2 - 1 / xs[k - 1] ** 2)) * C[j - 1]
            rhs = xs[j - 1] * (a[j - 1] * Av[j - 1] + b[j - 1]) * C[k - 1]
            if P is not None:
                lhs += (split.B[j - 1] * split.B[k - 1] * xs[j - 1] * xs[k - 1] / 3
                        * (P[k - 1, j - 1] - P[j - 1, k - 1]))
            out[(j, k)] = (lhs, rhs)
    return out


def _validate(A: AlignmentData, split: ReductiveSplit, x, criterion: str) -> np.ndarray:
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}")
    if split.kind != "aligned" or not A.is_aligned:
        raise AssumptionError("the criterion needs an aligned space and its aligned split")
    rep = _assumptions(split)
    if not rep.holds:
        raise AssumptionError(f"representation-theoretic assumptions fail: {rep}")
    s = split.s
    x = np.asarray(x, dtype=float)
    if x.shape != (2 * s - 1,) or np.any(x <= 0):
        raise ValueError(f"need {2 * s - 1} positive block scalings")
    return x


def theorem_check(A: AlignmentData, split: ReductiveSplit, x, Q, *,
                  cas: CasimirData | None = None, fault: str | None = None,
                  criterion: str = "printed") -> HarmonicityCheck:
    """Closed-form verdict on the g-harmonicity of H_Q, g = (x_1..x_{2s-1})_{g_b}.

    ``criterion="printed"`` evaluates the published pairwise condition as is.
    It drops the pairing of Q~ with d omega, which only vanishes when g is
    normal; ``criterion="corrected"`` adds that pairing back in closed form.

    ``fault="flip-sign"`` deliberately flips the sign of the 2 Cas_0 term; it
    exists only as a negative control for the verification runner.
    """
    x = _validate(A, split, x, criterion)
    y = Q.y if isinstance(Q, BiInvariantQ) else np.asarray(Q, dtype=float)
    if isinstance(Q, BiInvariantQ) and not Q.admissible:
        raise ValueError("Q is not admissible")
    if abs(np.sum(y / A.c)) > 1e-9 * max(1.0, np.abs(y / A.c).max()):
        raise ValueError("Q is not admissible: sum y_i / c_i != 0")
    cas = cas or casimir_data(A, split)
    a, b = _ab(cas, x, split.s)
    res, worst = {}, 0.0
    for key, (lhs, rhs) in _pair_sides(A, split, cas, x, y, fault, criterion).items():
        r = (lhs - rhs) / max(abs(lhs), abs(rhs), 1.0)
        res[key] = float(r)
        worst = max(worst, abs(r))
    return HarmonicityCheck(a, b, np.array(split.A), _C(A, split.A, y), res,
                            worst <= HARM_TOL, worst)


def harmonic_q_space(A: AlignmentData, split: ReductiveSplit, x, *,
                     criterion: str = "printed", fault: str | None = None) -> np.ndarray:
    """Orthonormal columns spanning the admissible y that pass the closed-form test.

    Before normalization the pairwise differences lhs - rhs are linear in y,
    so the passing set is a kernel over an admissible basis.
    """
    x = _validate(A, split, x, criterion)
    Y = admissible_basis(split.embedding)
    if split.s < 3 or Y.shape[1] == 0:
        return Y
    cas = casimir_data(A, split)
    M = np.array([[l - r for l, r in _pair_sides(A, split, cas, x, col, fault, criterion).values()]
                  for col in Y.T]).T
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    N = nullspace(M / scale, 1e-9)
    return orth(Y @ N) if N.shape[1] else np.zeros((Y.shape[0], 0))


def oracle_residual(split: ReductiveSplit, x, Q) -> float:
    """||d H_Q||_g + ||d*_g H_Q||_g, H_Q normalized to unit g_b-norm."""
    H = h_q(split, Q, check=False).form
    n = ext.norm(split, None, H)
    if n == 0:
        return 0.0
    return ext.harmonic_residual(split, x, H * (1.0 / n))


# --------------------------------------------------------------------------
# Distinguished Q's and metric families


def _normal_ab(A: AlignmentData, dimk: int):
    c = A.c
    s = len(c)
    a = np.array([dimk / c[j] for j in range(1, s)])
    b = np.array([dimk * np.sum(1.0 / c[:j]) for j in range(1, s)])
    return a, b


def _y_from_C(A: AlignmentData, Avec, C) -> np.ndarray:
    s = len(A.c)
    M = np.zeros((s, s))
    for j in range(1, s):
        M[j - 1, :j] = 1.0
        M[j - 1, j] = Avec[j - 1]
    M[s - 1, :] = 1.0
    rhs = np.concatenate([np.asarray(C, dtype=float), [0.0]])
    return A.c * np.linalg.solve(M, rhs)


def _normalize(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    y = y / np.linalg.norm(y)
    nz = np.flatnonzero(np.abs(y) > 1e-12)
    if nz.size and y[nz[0]] < 0:
        y = -y
    return y


def unique_harmonic_q(A: AlignmentData, split: ReductiveSplit) -> BiInvariantQ:
    """The ray of Q whose H_Q is g_b-harmonic, for a non-standard normal metric g_b."""
    E = split.embedding
    a, b = _normal_ab(A, E.sub.dim)
    w = a * split.A + b
    if np.all(np.abs(w) <= 1e-9 * np.maximum(np.abs(b), 1.0)):
        raise ValueError("g_b is the standard metric: every H_Q is harmonic")
    w[np.abs(w) <= 1e-12 * np.maximum(np.abs(b), 1.0)] = 0.0
    y = _normalize(_y_from_C(A, split.A, w))
    return make_Q(E, y)


@dataclass(frozen=True)
class MetricFamily:
    mode: str
    feasible: bool
    x: np.ndarray | None
    z: np.ndarray | None = None
    params: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    diagnostics: str = ""


MODES = ("abelian-k", "nonabelian-k", "ledger-obata", "normal-for-Q")


def special_families(A: AlignmentData, split: ReductiveSplit, mode: str, **params) -> MetricFamily:
    """Metrics on which every H_Q (or a chosen H_Q) is harmonic.

    abelian-k:     params x1 (default 1), tail = (x_{s+1}..x_{2s-1}) (default ones)
    nonabelian-k:  params x1, xs, xs1 (= x_{s+1}); defaults 1
    ledger-obata:  param criterion ("printed" closed form or "corrected" root);
                   returns (1, ..., 1, t)
    normal-for-Q:  params y (admissible), tau (value of f_1, default 0.05)
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    s = split.s
    cas = casimir_data(A, split)
    Av = np.asarray(split.A)
    if mode == "ledger-obata":
        if np.any(cas.cas > 1e-9):
            return MetricFamily(mode, False, None, diagnostics="some isotropy block p_i is nonzero")
        criterion = params.get("criterion", "printed")
        if criterion == "printed":
            bad = [j for j in range(1, s - 1) if abs(Av[j - 1] + j) > 1e-9]
            if bad:
                return MetricFamily(mode, False, None, diagnostics=(
                    f"needs A_j = -j for j <= s-2; violated at j = {bad} "
                    f"(A = {Av.tolist()})"))
            t = math.sqrt((1.0 - Av[-1]) / s)
        else:
            roots = _ledger_obata_roots(A, split, cas)
            if not roots:
                return MetricFamily(mode, False, None, diagnostics=(
                    "no t in (0.05, 20) makes every H_Q pass the corrected test"))
            t = roots[0]
        x = np.ones(2 * s - 1)
        x[-1] = t
        return MetricFamily(mode, True, x, split.z, {"t": t, "criterion": criterion})

    if mode == "abelian-k":
        if cas.cas0 > 1e-9:
            return MetricFamily(mode, False, None, diagnostics="k is not abelian")
        x = np.ones(2 * s - 1)
        x[0] = params.get("x1", 1.0)
        tail = params.get("tail")
        if tail is not None:
            x[s:] = tail
        for j in range(1, s):
            rhs = np.sum(cas.cas[:j] / x[:j] ** 2)
            x[j] = math.sqrt(-Av[j - 1] * cas.cas[j] / rhs)
        return MetricFamily(mode, True, x, split.z, {"x1": x[0]})

    if mode == "nonabelian-k":
        if cas.cas0 <= 1e-9:
            return MetricFamily(mode, False, None, diagnostics="k is abelian")
        x1, xs, xs1 = (float(params.get(k, 1.0)) for k in ("x1", "xs", "xs1"))
        x, note = _nonabelian_family(cas, Av, s, x1, xs, xs1)
        th = {"u": _threshold_u(cas, Av, s, x1), "v": None}
        if x is not None or note.startswith("xjm3"):
            th["v"] = _threshold_v(cas, Av, s, x1, xs1)
        return MetricFamily(mode, x is not None, x, split.z,
                            {"x1": x1, "xs": xs, "xs1": xs1}, th, note)

    # normal-for-Q
    y = np.asarray(params["y"], dtype=float)
    tau = float(params.get("tau", 0.05))
    a, b = _normal_ab(A, split.embedding.sub.dim)
    yc = y / A.c
    Anew = -b / a
    roots = []
    for j in range(1, s):
        u, v = yc[:j].sum(), yc[j]
        a0 = Anew[j - 1]
        if abs(u + a0 * v) <= 1e-12 * max(1.0, abs(u), abs(v)):
            continue
        f = lambda t, a=a[j - 1], b=b[j - 1], u=u, v=v: (a * t + b) / (u + t * v) - tau
        lo, hi, step = a0, a0, 1e-3 * max(1.0, abs(a0))
        for _ in range(60):
            lo, hi = a0 - step, a0 + step
            if (u + lo * v) * (u + hi * v) > 0 and f(lo) * f(hi) < 0:
                break
            step *= 1.5 if (u + lo * v) * (u + hi * v) > 0 else 0.5
        else:
            return MetricFamily(mode, False, None, diagnostics=f"no root bracket for j={j}")
        Anew[j - 1] = brentq(f, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps)
        roots.append(j)
    if np.any(Anew >= 0):
        return MetricFamily(mode, False, None, diagnostics="root left the negative range; decrease tau")
    z = np.ones(s)
    for j in range(1, s):
        z[j] = -(A.c[j] / Anew[j - 1]) * np.sum(z[:j] / A.c[:j])
    return MetricFamily(mode, True, np.ones(2 * s - 1), z / z[0],
                        {"y": y.tolist(), "tau": tau, "A": Anew.tolist(), "solved": roots})


def _ledger_obata_roots(A: AlignmentData, split: ReductiveSplit, cas: CasimirData) -> list:
    """t with x = (1, .., 1, t) passing the corrected test for every admissible Q."""
    s = split.s
    Y = admissible_basis(split.embedding)

    def entries(t):
        x = np.ones(2 * s - 1)
        x[-1] = t
        return np.array([l - r for y in Y.T
                         for l, r in _pair_sides(A, split, cas, x, y, None, "corrected").values()])

    grid = np.geomspace(0.05, 20.0, 801)
    vals = np.array([entries(t) for t in grid])
    scale = max(1.0, float(np.abs(vals).max(initial=0.0)))
    live = [e for e in range(vals.shape[1]) if np.abs(vals[:, e]).max() > 1e-9 * scale]
    if not live:
        return [1.0]
    e0 = max(live, key=lambda e: np.abs(vals[:, e]).max())
    roots = []
    for lo, hi, vl, vh in zip(grid[:-1], grid[1:], vals[:-1, e0], vals[1:, e0]):
        if vl == 0.0:
            cand = lo
        elif vl * vh < 0:
            cand = brentq(lambda t: entries(t)[e0], lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
        else:
            continue
        if np.abs(entries(cand)).max() <= 1e-9 * scale:
            roots.append(float(cand))
    return roots


def _nonabelian_family(cas, Av, s, x1, xs, xs1):
    x = np.ones(2 * s - 1)
    x[0], x[s - 1] = x1, xs
    x[s:2 * s - 2] = xs1
    for j in range(1, s - 1):
        rhs = np.sum(cas.cas[:j] / x[:j] ** 2) + cas.cas0 * (j + Av[j - 1]) / xs1 ** 2
        if cas.cas[j] <= 1e-12:
            if abs(rhs) > 1e-9 * max(1.0, cas.cas0):
                return None, f"xjm2 at j={j}: empty block but nonzero right side {rhs:.3e}"
            continue
        if rhs <= 0:
            return None, f"xjm2 at j={j}: x_(s+1) below threshold"
        x[j] = math.sqrt(-Av[j - 1] * cas.cas[j] / rhs)
    num = (np.sum(cas.cas[:s - 1] / x[:s - 1] ** 2) + Av[-1] * cas.cas[s - 1] / xs ** 2
           + s * cas.cas0 / xs1 ** 2)
    if num <= 0:
        return None, "xjm3: x_s below threshold"
    x[-1] = math.sqrt(cas.cas0 * (1 - Av[-1]) / num)
    return x, "ok"


def _threshold_u(cas, Av, s, x1):
    def ok(v):
        x, note = _nonabelian_family(cas, Av, s, x1, 1e6, v)
        return x is not None or note.startswith("xjm3")

    lo, hi = 1e-6, 1e6
    if not ok(hi):
        return None
    if ok(lo):
        return 0.0
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
        if hi / lo < 1 + 1e-12:
            break
    return hi


def _threshold_v(cas, Av, s, x1, xs1):
    x, _ = _nonabelian_family(cas, Av, s, x1, 1e6, xs1)
    if x is None or cas.cas[s - 1] <= 1e-12:
        return 0.0
    rest = np.sum(cas.cas[:s - 1] / x[:s - 1] ** 2) + s * cas.cas0 / xs1 ** 2
    if rest <= 0:
        return math.inf
    return math.sqrt(-Av[-1] * cas.cas[s - 1] / rest)


# --------------------------------------------------------------------------
# How much of the space of invariant metrics the (x, z) family reaches


@dataclass(frozen=True)
class MetricCoverage:
    invariant_dim: int  # dim of the G-invariant symmetric forms on g/k
    family_dim: int  # rank of (x, z) -> metric at a generic point

    @property
    def complete(self) -> bool:
        return self.family_dim == self.invariant_dim


def _sym_basis(n: int) -> np.ndarray:
    iu = np.triu_indices(n)
    B = np.zeros((len(iu[0]), n, n))
    for m, (i, j) in enumerate(zip(*iu)):
        B[m, i, j] = B[m, j, i] = 1.0
    return B


def metric_coverage(A: AlignmentData, split: ReductiveSplit, seed: int = 0) -> MetricCoverage:
    """Compare dim M^G with the dimension of the metrics (x_1..x_{2s-1})_{g_b(z)}.

    Metrics for different z live on different complements p_z; they are all
    read as forms on the reference complement (projecting along k), and the
    family dimension is the Jacobian rank in (log x, log z) at a random point.
    The family may well fall short of M^G; no claim is made either way.
    """
    E = split.embedding
    P0, n = split.p_basis, split.dim
    rho = split.isotropy_action
    B = _sym_basis(n)
    if rho.shape[0]:
        eqs = np.concatenate([np.einsum("mca,bcd->bmad", rho, B).reshape(len(B), -1)
                              + np.einsum("bac,mcd->bmad", B, rho).reshape(len(B), -1)], axis=1)
        inv_dim = nullspace(eqs.T).shape[1]
    else:
        inv_dim = len(B)
    def metric(params):
        x, z = np.exp(params[:2 * E.s - 1]), np.exp(params[2 * E.s - 1:])
        sz = aligned_split(E, A, z)
        L = sz.gb @ sz.p_basis
        G = L @ np.diag(sz.weights(x)) @ L.T
        M = P0.T @ G @ P0
        return M[np.triu_indices(n)]

    rng = np.random.default_rng(seed)
    p0 = rng.uniform(-0.3, 0.3, 3 * E.s - 1)
    h = 1e-6
    J = np.column_stack([(metric(p0 + h * e) - metric(p0 - h * e)) / (2 * h)
                         for e in np.eye(len(p0))])
    sv = np.linalg.svd(J, compute_uv=False)
    fam = int(np.sum(sv > 1e-6 * sv[0])) if sv.size else 0
    return MetricCoverage(inv_dim, fam)


__all__ = [
    "AssumptionError", "BiInvariantQ", "CasimirData", "GroupHarmonicity", "HQResult",
    "CRITERIA", "HarmonicityCheck", "MetricCoverage", "MetricFamily", "admissible_basis", "alpha_q", "cartan_form",
    "casimir_data", "dgstar_lemma", "group_harmonicity", "h_q", "harmonic_q_space", "h_q_tensor", "make_Q",
    "metric_coverage", "oracle_residual", "pullback_residual", "q_tilde", "special_families", "su3_correction",
    "su3_harmonic_form", "theorem_check", "unique_harmonic_q",
]
