"""Command line runner: analyze a space spec, cross-check the closed-form
harmonicity test against the numerical Hodge oracle, compute Betti numbers,
and sweep metric families.

Exit codes: 0 success, 1 closed-form/oracle disagreement, 2 invalid input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from harmq import exterior as ext
from harmq.cartan import (CRITERIA, AssumptionError, admissible_basis, cartan_form,
                          casimir_data, group_harmonicity, harmonic_q_space, make_Q,
                          metric_coverage,
                          oracle_residual, su3_correction, su3_harmonic_form,
                          theorem_check)
from harmq.homog import Embedding, aligned_split, alignment_check, assumption_check, b3_dimension, generic_split
from harmq.spaces import CATALOG, SpaceSpec, SpecError, build_embedding, catalog_spec, load_spec

REPORT_SCHEMA_VERSION = 1
DIGITS = 12
ORACLE_TOL = 1e-8
EXIT_OK, EXIT_DISAGREE, EXIT_INVALID = 0, 1, 2

_MASK = (1 << 64) - 1


class SplitMix64:
    """splitmix64 (Steele, Lea, Flood 2014): 64-bit state, golden-ratio increment.

    state += 0x9E3779B97F4A7C15
    z = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out = z ^ (z >> 31)                      (all mod 2^64)

    Uniforms use the top 53 bits; normals use Box-Muller on two uniforms.
    """

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * ((self.next_u64() >> 11) * 2.0 ** -53)

    def normal(self) -> float:
        u1 = 1.0 - self.uniform()  # (0, 1]
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)])

    def log_uniform(self, n: int, lo: float = 0.5, hi: float = 2.0) -> np.ndarray:
        a, b = math.log(lo), math.log(hi)
        return np.array([math.exp(self.uniform(a, b)) for _ in range(n)])


# --------------------------------------------------------------------------
# numbers in reports


def fnum(v):
    """Round to 12 significant digits so text and binary values agree."""
    if v is None:
        return None
    v = float(v)
    if not math.isfinite(v):
        return str(v)
    return float(f"{v:.{DIGITS}g}") if v != 0 else 0.0


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return fnum(obj)
    return obj


# --------------------------------------------------------------------------
# context: everything analyze needs about a space, built once


@dataclass
class Space:
    spec: SpaceSpec
    E: Embedding
    z: np.ndarray
    group: bool
    A: object = None
    split: object = None
    cas: object = None
    assumptions: object = None
    applicable: bool = False
    note: str = ""

    @property
    def s(self) -> int:
        return self.E.s

    @property
    def x_len(self) -> int:
        if self.group:
            return self.E.ambient.dim
        return 2 * self.s - 1 if self.applicable else len(self.split.blocks)


def parse_spec(path) -> SpaceSpec:
    """Load a spec file, or a catalog entry given as ``catalog:NAME``."""
    p = str(path)
    if p.startswith("catalog:"):
        try:
            return catalog_spec(p.split(":", 1)[1])
        except KeyError as exc:
            raise SpecError("--spec", exc.args[0]) from exc
    return load_spec(path)


def prepare(spec: SpaceSpec) -> Space:
    E = build_embedding(spec)
    z = np.ones(E.s) if spec.z is None else np.asarray(spec.z, dtype=float)
    if E.sub.dim == 0:
        return Space(spec, E, z, True, note="K trivial: Lie group checks")
    A = alignment_check(E)
    if A.is_aligned:
        split = aligned_split(E, A, z)
        rep = assumption_check(E, split)
        cas = casimir_data(A, split)
        note = "aligned" if rep.holds else "aligned, but the isotropy assumptions fail"
        return Space(spec, E, z, False, A, split, cas, rep, rep.holds, note)
    split = generic_split(E, z)
    return Space(spec, E, z, False, A, split, None, None, False,
                 f"not aligned ({A.diagnostics}): oracle only")


def _group_frame(sp: Space) -> ext.GroupFrame:
    return ext.GroupFrame(sp.E.ambient)


def _group_qmatrix(sp: Space, y) -> np.ndarray:
    w = np.zeros(sp.E.ambient.dim)
    for blk, yi in zip(sp.E.ambient.blocks, y):
        w[blk.start:blk.stop] = yi
    return np.diag(w)


def _default_ys(sp: Space) -> list:
    if sp.spec.y:
        return [np.asarray(v) for v in sp.spec.y]
    if sp.group:
        return list(np.eye(sp.s))
    return list(admissible_basis(sp.E).T)


def _default_xs(sp: Space) -> list:
    if sp.spec.x:
        return [np.asarray(v) for v in sp.spec.x]
    return [np.ones(sp.x_len)]


# --------------------------------------------------------------------------
# a single (x, y) check


def check_pair(sp: Space, x, y, *, oracle: bool = True, fault: str | None = None,
               criterion: str = "corrected") -> dict:
    """Closed-form verdicts (both criteria) and the oracle verdict for one (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rec = {"x": x, "y": y}
    if sp.group:
        frame = _group_frame(sp)
        Qm = _group_qmatrix(sp, y)
        g = group_harmonicity(frame, x, Qm)
        rec["closed_form"] = {"holds": bool(g.harmonic), "residual": g.residual}
        if oracle:
            H = cartan_form(frame, Qm)
            n = ext.norm(frame, None, H)
            r = ext.harmonic_residual(frame, x, H * (1.0 / n)) if n else 0.0
            rec["oracle"] = {"residual": r, "harmonic": bool(r <= ORACLE_TOL)}
        verdict = bool(g.harmonic)
    elif sp.applicable:
        Q = make_Q(sp.E, y)
        for crit in CRITERIA:
            hc = theorem_check(sp.A, sp.split, x, Q, cas=sp.cas, fault=fault, criterion=crit)
            rec[crit] = {"holds": bool(hc.holds), "residual": hc.max_residual}
        verdict = rec[criterion]["holds"]
        if oracle:
            r = oracle_residual(sp.split, x, Q)
            rec["oracle"] = {"residual": r, "harmonic": bool(r <= ORACLE_TOL)}
    else:
        verdict = None
        if oracle:
            r = oracle_residual(sp.split, x, make_Q(sp.E, y))
            rec["oracle"] = {"residual": r, "harmonic": bool(r <= ORACLE_TOL)}
    rec["verdict"] = verdict
    if verdict is not None and "oracle" in rec:
        rec["agree"] = verdict == rec["oracle"]["harmonic"]
    return rec


# --------------------------------------------------------------------------
# reports


def betti_numbers(sp: Space) -> dict:
    E = sp.E
    formula = {"b1": 0, "b2": E.d0, "b3": b3_dimension(E).b3}
    frame = _group_frame(sp) if sp.group else sp.split
    numeric = {f"b{k}": ext.betti(frame, None, k) for k in (1, 2, 3)}
    return {"formula": formula, "numeric": numeric, "match": formula == numeric}


def _space_section(sp: Space) -> dict:
    out = {"name": sp.spec.name, "s": sp.s, "dim_g": sp.E.ambient.dim, "dim_k": sp.E.sub.dim,
           "dim_p": sp.E.ambient.dim - sp.E.sub.dim, "z": sp.z, "mode": sp.note}
    if sp.A is not None:
        out["alignment"] = {"aligned": sp.A.is_aligned, "diagnostics": sp.A.diagnostics,
                            "c": sp.A.c, "lambda": sp.A.lam}
    if sp.split is not None and sp.split.kind == "aligned":
        out["alignment"]["A"] = list(sp.split.A)
    if sp.assumptions is not None:
        out["assumptions"] = {"holds": sp.assumptions.holds,
                              "condition_i": sp.assumptions.condition_i,
                              "condition_ii": sp.assumptions.condition_ii}
    if sp.applicable:
        cov = metric_coverage(sp.A, sp.split)
        out["metric_coverage"] = {"invariant_metrics_dim": cov.invariant_dim,
                                  "family_dim": cov.family_dim, "complete": cov.complete}
    if sp.cas is not None:
        out["casimir"] = {"cas0": sp.cas.cas0, "cas": sp.cas.cas,
                          "identity_residual": sp.cas.identity_residual}
    return out


def _finish(report: dict, checks: list) -> dict:
    checks = sorted(checks, key=lambda r: (list(map(fnum, r["x"])), list(map(fnum, r["y"]))))
    bad = [c for c in checks if c.get("agree") is False]
    report["checks"] = checks
    report["disagreements"] = len(bad)
    report["status"] = "failed" if bad else "ok"
    return report


def analyze(spec: SpaceSpec, *, seed: int = 0, oracle: str = "on", criterion: str = "corrected",
            fault: str | None = None, timings: bool = False) -> dict:
    t0 = time.perf_counter()
    sp = prepare(spec)
    report = {"schema_version": REPORT_SCHEMA_VERSION, "command": "analyze", "seed": seed,
              "criterion": criterion, "space": _space_section(sp), "betti": betti_numbers(sp)}
    if fault:
        report["fault"] = fault
    t1 = time.perf_counter()
    rng = SplitMix64(seed)
    checks = []
    for x in _default_xs(sp):
        if len(x) != sp.x_len:
            raise SpecError("x", f"each metric needs {sp.x_len} scalings, got {len(x)}")
        for y in _default_ys(sp):
            use = oracle == "on" or (oracle == "sample" and rng.uniform() < 0.25)
            checks.append(check_pair(sp, x, y, oracle=use, fault=fault, criterion=criterion))
    if sp.group and sp.spec.g_factors[0].get("basis") == "standard":
        report["su3"] = [_su3_extra(sp, x) for x in _default_xs(sp)]
    _finish(report, checks)
    if timings:
        report["timings"] = {"setup_s": t1 - t0, "checks_s": time.perf_counter() - t1}
    return report


def _su3_extra(sp: Space, x) -> dict:
    """Harmonic representative of [H_kappa] with both closed-form corrections."""
    frame = _group_frame(sp)
    x = np.asarray(x, dtype=float)
    out = {"x": x}
    for variant in ("printed", "derived"):
        H = su3_harmonic_form(frame, x, variant)
        out[variant] = {"t": su3_correction(x, variant),
                        "residual": ext.harmonic_residual(frame, x, H)}
    x1, x2, x3, x4, _, x6, x7, _ = x
    out["dichotomy"] = bool(abs(x1 - x2) <= 1e-12 * max(x1, x2)
                            or abs(x3 * x6 - x4 * x7) <= 1e-12 * max(x3 * x6, x4 * x7))
    out["h_kappa_harmonic"] = ext.harmonic_residual(
        frame, x, cartan_form(frame, np.eye(frame.dim))) <= ORACLE_TOL
    return out


def _random_y(sp: Space, rng: SplitMix64, S: np.ndarray | None) -> np.ndarray:
    if sp.group:
        return rng.normals(sp.s)
    basis = S if S is not None and S.shape[1] else admissible_basis(sp.E)
    y = basis @ rng.normals(basis.shape[1])
    return y / np.linalg.norm(y)


def verify(spec: SpaceSpec, trials: int, seed: int, *, criterion: str = "corrected",
           fault: str | None = None, bundle_dir: Path | None = None) -> tuple[int, dict]:
    """Random cross-check: closed form vs oracle; stops at the first disagreement.

    Metrics are log-uniform in [1/2, 2] per scaling (every fourth trial is the
    normal metric).  Odd trials draw y from the subspace the closed form calls
    harmonic, so the test also probes the "holds" side.
    """
    sp = prepare(spec)
    rng = SplitMix64(seed)
    report = {"schema_version": REPORT_SCHEMA_VERSION, "command": "verify", "seed": seed,
              "trials": trials, "criterion": criterion, "space": _space_section(sp)}
    if fault:
        report["fault"] = fault
    checks = []
    if not sp.group and not sp.applicable:
        report["note"] = "closed-form test not applicable; nothing to cross-check"
        return EXIT_OK, _finish(report, checks)
    if not sp.group and admissible_basis(sp.E).shape[1] == 0:
        report["note"] = "no admissible Q (b3 = 0)"
        return EXIT_OK, _finish(report, checks)
    for trial in range(trials):
        x = np.ones(sp.x_len) if trial % 4 == 0 else rng.log_uniform(sp.x_len)
        S = None
        if trial % 2 and not sp.group:
            S = harmonic_q_space(sp.A, sp.split, x, criterion=criterion, fault=fault)
        y = _random_y(sp, rng, S)
        rec = check_pair(sp, x, y, fault=fault, criterion=criterion)
        rec["trial"] = trial
        checks.append(rec)
        if rec.get("agree") is False:
            _finish(report, checks)
            report["repro"] = str(write_bundle(report, rec, spec, bundle_dir))
            return EXIT_DISAGREE, report
    return EXIT_OK, _finish(report, checks)


def write_bundle(report: dict, rec: dict, spec: SpaceSpec, where: Path | None) -> Path:
    """Everything needed to replay a failing trial: the spec with x and y pinned."""
    where = Path(where or ".")
    where.mkdir(parents=True, exist_ok=True)
    pinned = spec.to_dict()
    pinned["x"] = [list(map(float, rec["x"]))]
    pinned["y"] = [list(map(float, rec["y"]))]
    bundle = {"schema_version": REPORT_SCHEMA_VERSION, "seed": report["seed"],
              "trial": rec["trial"], "criterion": report["criterion"],
              "fault": report.get("fault"), "spec": pinned, "check": _clean(rec),
              "replay": "harmq analyze --spec <bundle>.spec.json"
                        + (f" --inject-fault {report['fault']}" if report.get("fault") else "")}
    path = where / f"repro-{spec.name}-seed{report['seed']}-trial{rec['trial']}.json"
    path.write_text(json.dumps(bundle, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    path.with_suffix(".spec.json").write_text(json.dumps(pinned, indent=2) + "\n", encoding="utf-8")
    return path


def sweep(spec: SpaceSpec, index: int, grid: np.ndarray, *, base=None, seed: int = 0,
          oracle: str = "sample", criterion: str = "corrected") -> dict:
    """Vary scaling ``index`` (0-based) of the base metric over ``grid``."""
    sp = prepare(spec)
    base = np.asarray(base if base is not None else _default_xs(sp)[0], dtype=float)
    if not 0 <= index < sp.x_len:
        raise SpecError("--index", f"must lie in 0..{sp.x_len - 1}")
    rng = SplitMix64(seed)
    ys = _default_ys(sp)
    picks = [[rng.uniform() < 0.2 for _ in ys] for _ in grid]
    checks = []
    for t, pick in zip(grid, picks):
        x = base.copy()
        x[index] = t
        for y, p in zip(ys, pick):
            rec = check_pair(sp, x, y, oracle=False, criterion=criterion)
            use = oracle == "on" or (oracle == "sample" and (p or rec["verdict"]))
            if use:
                rec = check_pair(sp, x, y, oracle=True, criterion=criterion)
            checks.append(rec)
    report = {"schema_version": REPORT_SCHEMA_VERSION, "command": "sweep", "seed": seed,
              "criterion": criterion, "space": _space_section(sp), "index": index,
              "grid": [float(grid[0]), float(grid[-1]), len(grid)]}
    return _finish(report, checks)


# --------------------------------------------------------------------------
# output


def _rows(report: dict) -> list[dict]:
    rows = []
    for c in report.get("checks", []):
        row = {"x": " ".join(f"{fnum(v):.{DIGITS}g}" for v in c["x"]),
               "y": " ".join(f"{fnum(v):.{DIGITS}g}" for v in c["y"])}
        for key in ("printed", "corrected", "closed_form", "oracle"):
            if key in c:
                flag = "holds" if key != "oracle" else "harmonic"
                row[key] = c[key][flag]
                row[f"{key}_residual"] = fnum(c[key]["residual"])
        row["agree"] = c.get("agree")
        rows.append(row)
    return rows


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(_clean(report), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    rows = _rows(report)
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(r.get(k)) for k in cols})
        return buf.getvalue()
    if fmt == "table":
        return _table(report, rows, cols)
    raise ValueError(f"unknown format {fmt!r}")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return f"{v:.{DIGITS}g}"
    return str(v)


def _res(v) -> str:
    # tables are for people: round-off below 1e-12 reads as 0
    return "0" if v is None or abs(v) < 1e-12 else f"{v:.3e}"


def _table(report: dict, rows: list, cols: list) -> str:
    sp = report["space"]
    head = [f"space: {sp['name']}  s={sp['s']}  dim p={sp['dim_p']}  ({sp['mode']})",
            f"command: {report['command']}  seed: {report['seed']}  criterion: {report['criterion']}"]
    if "betti" in report:
        b = report["betti"]
        head.append("betti numeric " + " ".join(f"{k}={v}" for k, v in sorted(b["numeric"].items()))
                    + "  formula " + " ".join(f"{k}={v}" for k, v in sorted(b["formula"].items())))
    for extra in report.get("su3", []):
        head.append("su3 x=" + " ".join(_cell(fnum(v)) for v in extra["x"])
                    + f"  dichotomy={_cell(extra['dichotomy'])}"
                    + "".join(f"  {k}: t={_cell(fnum(extra[k]['t']))} res={_res(extra[k]['residual'])}"
                              for k in ("printed", "derived")))
    if not rows:
        return "\n".join(head + ["", "(no checks)", f"status: {report['status']}"]) + "\n"
    cells = [[_res(r.get(k)) if k.endswith("_residual") else _cell(r.get(k)) for k in cols]
             for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    lines.append(f"status: {report['status']}  disagreements: {report['disagreements']}")
    return "\n".join(head + [""] + [l.rstrip() for l in lines]) + "\n"


def report_emit(report: dict, fmt: str = "json", out=None) -> str:
    text = render(report, fmt)
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        try:
            Path(out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write report to {out}: {exc.strerror}") from exc
    return text


# --------------------------------------------------------------------------
# entry point


def _grid(text: str) -> np.ndarray:
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError("grid is START:STOP:N") from None
    if n < 1 or a <= 0 or b <= 0:
        raise argparse.ArgumentTypeError("grid needs positive endpoints and N >= 1")
    return np.linspace(a, b, n)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="harmq", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", required=True,
                        help="space spec JSON, or catalog:NAME (" + ", ".join(sorted(CATALOG)) + ")")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("json", "csv", "table"), default="json")
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("--oracle", choices=("on", "off", "sample"), default="on")
    common.add_argument("--criterion", choices=CRITERIA, default="corrected",
                        help="closed-form test that decides agreement (both are always reported)")
    common.add_argument("--inject-fault", choices=("flip-sign",), default=None,
                        help="negative control: corrupt the closed-form test")
    common.add_argument("--timings", action="store_true", help="add wall-clock timings (breaks byte determinism)")

    sub.add_parser("analyze", parents=[common], help="full analysis of one space")
    v = sub.add_parser("verify", parents=[common], help="random closed-form vs oracle cross-check")
    v.add_argument("--trials", type=int, default=50)
    v.add_argument("--bundle-dir", default="repro", help="where a failing trial is written")
    sub.add_parser("betti", parents=[common], help="b1, b2, b3 numerically and by formula")
    s = sub.add_parser("sweep", parents=[common], help="vary one metric scaling over a grid")
    s.add_argument("--index", type=int, default=None, help="0-based scaling index (default last)")
    s.add_argument("--grid", type=_grid, default=_grid("0.05:2:40"), help="START:STOP:N")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = parse_spec(args.spec)
        if args.command == "analyze":
            report = analyze(spec, seed=args.seed, oracle=args.oracle, criterion=args.criterion,
                             fault=args.inject_fault, timings=args.timings)
            code = EXIT_DISAGREE if report["disagreements"] else EXIT_OK
        elif args.command == "verify":
            if args.trials < 1:
                raise SpecError("--trials", "must be positive")
            code, report = verify(spec, args.trials, args.seed, criterion=args.criterion,
                                  fault=args.inject_fault, bundle_dir=Path(args.bundle_dir))
            if code:
                print(f"disagreement; repro bundle: {report['repro']}", file=sys.stderr)
        elif args.command == "betti":
            sp = prepare(spec)
            report = {"schema_version": REPORT_SCHEMA_VERSION, "command": "betti", "seed": args.seed,
                      "criterion": args.criterion, "space": _space_section(sp),
                      "betti": betti_numbers(sp), "checks": [], "disagreements": 0, "status": "ok"}
            if not report["betti"]["match"]:
                report["status"] = "failed"
            code = EXIT_OK if report["betti"]["match"] else EXIT_DISAGREE
        else:
            sp_len = prepare(spec).x_len
            idx = sp_len - 1 if args.index is None else args.index
            report = sweep(spec, idx, args.grid, seed=args.seed, oracle=args.oracle,
                           criterion=args.criterion)
            code = EXIT_DISAGREE if report["disagreements"] else EXIT_OK
    except (SpecError, AssumptionError, ValueError) as exc:
        print(f"harmq: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        report_emit(report, args.format, args.out)
    except OSError as exc:
        print(f"harmq: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return code


if __name__ == "__main__":
    sys.exit(main())
