"""Acceptance criteria 1-9, each at its stated tolerance and time budget.

Every test prints one ``criterion N (...): PASS|FAIL`` line; the lines are
repeated in the terminal summary.  Where the published closed form does not
survive the oracle, the test is a strict xfail raising ``PublishedFormFails``
(any other assertion error is a real failure), and the detail in brackets
shows what the corrected closed form achieves on the same inputs.
"""

import math
import subprocess
import sys
import time

import numpy as np
import pytest

from harmq import exterior as ext
from harmq.cartan import (admissible_basis, cartan_form, casimir_data, dgstar_lemma,
                          h_q, harmonic_q_space, make_Q, oracle_residual, q_tilde, special_families,
                          su3_harmonic_form, theorem_check, unique_harmonic_q)
from harmq.cli import prepare
from harmq.homog import b3_dimension
from harmq.liealg import so, su3_standard
from harmq.spaces import BETTI_SUITE, CATALOG, catalog_spec, spec_from_dict

from conftest import FIXTURES, report_line, space

ORACLE_TOL = 1e-8
ALIGNED_CATALOG = [n for n in sorted(CATALOG) if CATALOG[n]["k_blocks"]]


class PublishedFormFails(AssertionError):
    """The closed form as published disagrees with the numerical oracle."""


def published_xfail(reason):
    return pytest.mark.xfail(strict=True, raises=PublishedFormFails, reason=reason)


def _log_uniform(rng, n):
    return np.exp(rng.uniform(-math.log(2), math.log(2), n))


# --------------------------------------------------------------------------


def test_criterion_1_betti_suite():
    t0 = time.perf_counter()
    bad = []
    for name in BETTI_SUITE:
        sp = prepare(catalog_spec(name))
        frame = ext.GroupFrame(sp.E.ambient) if sp.group else sp.split
        numeric = [ext.betti(frame, None, k) for k in (1, 2, 3)]
        formula = [0, sp.E.d0, sp.s - b3_dimension(sp.E).d]
        if numeric != formula:
            bad.append((name, numeric, formula))
    dt = time.perf_counter() - t0
    ok = not bad and dt < 60
    report_line(1, "Betti suite", ok, f"{len(BETTI_SUITE)} spaces, {dt:.1f} s, mismatches {bad}")
    assert ok


@published_xfail("the published su(3) correction t misses the harmonic representative")
def test_criterion_2_su3_example():
    t0 = time.perf_counter()
    frame = ext.GroupFrame(su3_standard())
    H = cartan_form(frame, np.eye(8))
    rng = np.random.default_rng(2)
    printed_bad = derived_bad = dichotomy_bad = 0
    for i in range(20):
        x = _log_uniform(rng, 8)
        # a third of the metrics on each branch of the dichotomy
        if i % 3 == 1:
            x[1] = x[0]
        elif i % 3 == 2:
            x[6] = x[2] * x[5] / x[3]
        r_printed = ext.harmonic_residual(frame, x, su3_harmonic_form(frame, x, "printed"))
        r_derived = ext.harmonic_residual(frame, x, su3_harmonic_form(frame, x, "derived"))
        printed_bad += r_printed > ORACLE_TOL
        derived_bad += r_derived > ORACLE_TOL
        predicted = math.isclose(x[0], x[1], rel_tol=1e-12) or \
            math.isclose(x[2] * x[5], x[3] * x[6], rel_tol=1e-12)
        kernel = ext.harmonic_residual(frame, x, H) <= ORACLE_TOL * ext.norm(frame, None, H)
        dichotomy_bad += predicted != kernel
    dt = time.perf_counter() - t0
    line = report_line(2, "su(3) example", printed_bad == 0 and dichotomy_bad == 0 and dt < 10,
                       f"published t fails {printed_bad}/20; dichotomy mismatches {dichotomy_bad}/20; "
                       f"derived t fails {derived_bad}/20; {dt:.1f} s")
    assert dichotomy_bad == 0 and derived_bad == 0 and dt < 10
    if printed_bad:
        raise PublishedFormFails(line)


def test_criterion_3_dgstar_lemma():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for L in (su3_standard(), so(5)):
        frame = ext.GroupFrame(L)
        n3, n2 = ext.complex_of(frame).size(3), ext.complex_of(frame).size(2)
        for _ in range(25):
            x = _log_uniform(rng, L.dim)
            beta = ext.InvariantForm(3, rng.normal(size=n3), frame)
            gap = dgstar_lemma(frame, x, beta) - ext.codifferential(frame, x, beta)
            assert ext.norm(frame, x, gap) <= 1e-9 * ext.norm(frame, x, beta)
            # operator norm of the difference in the g-norms on 3- and 2-forms
            D = np.column_stack([dgstar_lemma(frame, x, ext.InvariantForm(3, e, frame)).coeffs
                                 for e in np.eye(n3)])
            D = D - ext.codifferential_matrix(frame, x, 3).toarray()
            w3, w2 = ext.form_weights(frame, x, 3), ext.form_weights(frame, x, 2)
            worst = max(worst, float(np.linalg.norm(np.sqrt(w2)[:, None] * D / np.sqrt(w3), 2)))
            assert D.shape == (n2, n3)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and dt < 30
    report_line(3, "closed-form codifferential", ok, f"50 pairs, max operator-norm gap {worst:.1e}, {dt:.1f} s")
    assert ok


def test_criterion_4_casimir_identity():
    worst, names = 0.0, []
    for name in ALIGNED_CATALOG:
        sp = space(name)
        if not sp.A.is_aligned:
            continue
        cas = casimir_data(sp.A, sp.split)
        worst = max(worst, float(np.abs(cas.cas + cas.cas0 - sp.E.sub.dim / sp.A.c).max()))
        names.append(name)
    ok = worst <= 1e-8 and len(names) >= 8
    report_line(4, "Casimir identity", ok, f"{len(names)} aligned spaces, max residual {worst:.1e}")
    assert ok


def _oracle_equivalence(name, criterion, seed, n=50):
    """Disagreements of ``criterion`` with the oracle over n seeded samples.

    Odd samples draw y from the subspace the criterion itself calls harmonic,
    so the "holds" side is exercised and not only the generic "fails" side.
    """
    sp = space(name)
    rng = np.random.default_rng(seed)
    Y = admissible_basis(sp.E)
    bad = hits = 0
    for trial in range(n):
        x = _log_uniform(rng, 2 * sp.s - 1)
        S = harmonic_q_space(sp.A, sp.split, x, criterion=criterion) if trial % 2 else Y
        B = S if S.shape[1] else Y
        Q = make_Q(sp.E, B @ rng.normal(size=B.shape[1]))
        verdict = theorem_check(sp.A, sp.split, x, Q, criterion=criterion).holds
        harmonic = oracle_residual(sp.split, x, Q) <= ORACLE_TOL
        bad += verdict != harmonic
        hits += harmonic
    return bad, hits


@published_xfail("the published pairwise condition drops the pairing of Q-tilde with d omega")
def test_criterion_5_oracle_equivalence():
    t0 = time.perf_counter()
    spaces = ("ledger-obata-su2-s3", "su3-cubed-su2")
    printed = {n: _oracle_equivalence(n, "printed", 5) for n in spaces}
    corrected = {n: _oracle_equivalence(n, "corrected", 5) for n in spaces}
    dt = time.perf_counter() - t0
    n_printed = sum(b for b, _ in printed.values())
    line = report_line(5, "criterion vs oracle", n_printed == 0 and dt < 300,
                       "published: " + ", ".join(f"{n} {b}/50 disagree" for n, (b, _) in printed.items())
                       + "; corrected: " + ", ".join(f"{n} {b}/50 disagree ({h} harmonic)"
                                                     for n, (b, h) in corrected.items())
                       + f"; {dt:.0f} s")
    assert all(b == 0 and h > 0 for b, h in corrected.values()) and dt < 300
    if n_printed:
        raise PublishedFormFails(line)


def test_criterion_6_normal_metrics():
    problems = []
    for name in ALIGNED_CATALOG:
        raw = dict(CATALOG[name])
        raw.pop("z", None)
        sp = prepare(spec_from_dict(raw))
        if not sp.applicable:
            continue
        x = np.ones(2 * sp.s - 1)
        for y in admissible_basis(sp.E).T:
            Q = make_Q(sp.E, y)
            for crit in ("printed", "corrected"):
                if not theorem_check(sp.A, sp.split, x, Q, criterion=crit).holds:
                    problems.append((name, crit))
            if oracle_residual(sp.split, x, Q) > ORACLE_TOL:
                problems.append((name, "oracle"))
    sp = space("ledger-obata-su2-s3-z112")
    x = np.ones(5)
    Q = unique_harmonic_q(sp.A, sp.split)
    Y = admissible_basis(sp.E)
    u = Y.T @ Q.y
    Qperp = make_Q(sp.E, Y @ np.array([-u[1], u[0]]))
    ray_ok = theorem_check(sp.A, sp.split, x, Q).holds and oracle_residual(sp.split, x, Q) <= ORACLE_TOL
    perp_ok = not theorem_check(sp.A, sp.split, x, Qperp).holds and \
        oracle_residual(sp.split, x, Qperp) > ORACLE_TOL
    ok = not problems and ray_ok and perp_ok
    report_line(6, "normal metrics", ok, f"standard metric failures {problems}; z=(1,1,2) ray "
                                         f"{'ok' if ray_ok else 'bad'}, complement {'fails' if perp_ok else 'passes'}")
    assert ok


def _family_verdict(sp, t):
    worst_at = lambda tt: max(oracle_residual(sp.split, np.r_[np.ones(4), tt], make_Q(sp.E, y))
                              for y in admissible_basis(sp.E).T)
    at, off = worst_at(t), min(worst_at(t - 0.05), worst_at(t + 0.05))
    return at, off, at <= ORACLE_TOL and off > 1e-4


@published_xfail("the published Ledger-Obata scaling leaves H_Q non-harmonic when z3 != z1")
def test_criterion_7_ledger_obata_family():
    sp1, sp2 = space("ledger-obata-su2-s3"), space("ledger-obata-su2-s3-z112")
    t1 = special_families(sp1.A, sp1.split, "ledger-obata").params["t"]
    t2 = special_families(sp2.A, sp2.split, "ledger-obata").params["t"]
    tc = special_families(sp2.A, sp2.split, "ledger-obata", criterion="corrected").params["t"]
    assert math.isclose(t1, 1.0) and math.isclose(t2, 0.8164965809277260, rel_tol=1e-12)
    at1, off1, ok1 = _family_verdict(sp1, t1)
    at2, off2, ok2 = _family_verdict(sp2, t2)
    atc, offc, okc = _family_verdict(sp2, tc)
    line = report_line(7, "Ledger-Obata family", ok1 and ok2,
                       f"z=(1,1,1) t=1 residual {at1:.1e}; z=(1,1,2) published t={t2:.10f} residual "
                       f"{at2:.1e}; corrected t={tc:.10f} residual {atc:.1e}, at t+-0.05 {offc:.1e}")
    assert ok1 and okc and math.isclose(tc, 2 / math.sqrt(5), rel_tol=1e-10)
    if not ok2:
        raise PublishedFormFails(line)


def test_criterion_8_identities():
    rng = np.random.default_rng(8)
    names = ["ledger-obata-su2-s3-z112", "ex1-n2", "su2-cubed-u1", "su3-cubed-so3", "su3-pair-so3"]
    worst = {"d2": 0.0, "adjoint": 0.0, "dH": 0.0, "qtilde": 0.0}
    for i in range(200):
        sp = space(names[i % len(names)])
        S = sp.split
        k = 1 + i % 3
        x = _log_uniform(rng, len(S.blocks))
        a = ext.InvariantForm(k - 1, ext.invariant_matrix(S, k - 1) @ rng.normal(
            size=ext.invariant_matrix(S, k - 1).shape[1]), S)
        b = ext.InvariantForm(k, ext.invariant_matrix(S, k) @ rng.normal(
            size=ext.invariant_matrix(S, k).shape[1]), S)
        dd = ext.differential(S, ext.differential(S, a))
        worst["d2"] = max(worst["d2"], ext.norm(S, x, dd) / max(1.0, ext.norm(S, x, a)))
        lhs = ext.inner(S, x, ext.codifferential(S, x, b), a)
        rhs = ext.inner(S, x, b, ext.differential(S, a))
        worst["adjoint"] = max(worst["adjoint"], abs(lhs - rhs) / max(1.0, ext.norm(S, x, a) * ext.norm(S, x, b)))
        Y = admissible_basis(sp.E)
        Q = make_Q(sp.E, Y @ rng.normal(size=Y.shape[1]))
        H = h_q(S, Q, check=False).form
        worst["dH"] = max(worst["dH"], ext.norm(S, None, ext.differential(S, H)) / ext.norm(S, None, H))
        qt = q_tilde(S, Q)
        worst["qtilde"] = max(worst["qtilde"],
                              ext.norm(S, None, ext.codifferential(S, None, qt)) / max(1.0, ext.norm(S, None, qt)))
    ok = max(worst.values()) <= 1e-9
    report_line(8, "closure and coclosure", ok,
                "200 instances, " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok


def test_criterion_9_negative_control(tmp_path):
    spec = FIXTURES / "negative-control-lo-z121.json"
    cmd = [sys.executable, "-m", "harmq.cli", "verify", "--spec", str(spec), "--trials", "50",
           "--seed", "0", "--bundle-dir", str(tmp_path), "--out", str(tmp_path / "report.json")]
    clean = subprocess.run(cmd, capture_output=True, text=True, timeout=300)
    faulty = subprocess.run(cmd + ["--inject-fault", "flip-sign"], capture_output=True, text=True, timeout=300)
    bundles = sorted(p.name for p in tmp_path.glob("repro-*.json"))
    ok = clean.returncode == 0 and faulty.returncode == 1 and bundles
    report_line(9, "negative control", ok, f"clean exit {clean.returncode}, injected exit "
                                           f"{faulty.returncode}, bundle {bundles[:1]}")
    assert ok
