"""Space specifications: validation, construction of K in G, and a small catalog.

A spec is a JSON object::

    {
      "schema_version": 1,
      "name": "ledger-obata-su2-s3",
      "g_factors": [{"type": "su", "n": 2}, ...],
      "k_blocks":  [{"type": "su", "n": 2}, {"type": "torus", "n": 3, "dim": 2}, ...],
      "embedding": [[<descriptor per k block>] per g factor],
      "z": [...], "x": [[...], ...], "y": [[...], ...]
    }

An embedding descriptor is ``"zero"``, ``{"diagonal-blocks": [offset, ...]}``
(the block's defining matrices repeated on the diagonal at each offset) or
``{"matrix": [[...]]}`` (dim g_i rows, dim k_j columns, constructor bases).
``z``, ``x`` and ``y`` are optional.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from harmq.exterior import MAX_DIM
from harmq.homog import Embedding, EmbeddingError, diagonal_embedding, matrix_inclusion, trivial_embedding
from harmq.liealg import LieAlgebra, direct_sum, so, su, su3_standard, torus

SCHEMA_VERSION = 1


class SpecError(ValueError):
    """Invalid space spec; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class SpaceSpec:
    name: str
    g_factors: tuple
    k_blocks: tuple
    embedding: tuple
    z: tuple | None = None
    x: tuple = ()
    y: tuple = ()
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def s(self) -> int:
        return len(self.g_factors)

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "g_factors": [dict(f) for f in self.g_factors],
            "k_blocks": [dict(b) for b in self.k_blocks],
            "embedding": [list(row) for row in self.embedding],
        }
        if self.z is not None:
            out["z"] = list(self.z)
        if self.x:
            out["x"] = [list(v) for v in self.x]
        if self.y:
            out["y"] = [list(v) for v in self.y]
        return out


# --------------------------------------------------------------------------
# validation


def _int(d: dict, key: str, where: str, lo: int) -> int:
    v = d.get(key)
    if not isinstance(v, int) or isinstance(v, bool) or v < lo:
        raise SpecError(f"{where}.{key}", f"expected an integer >= {lo}, got {v!r}")
    return v


def _vec(v, where: str, length: int | None = None, positive: bool = False) -> tuple:
    if not isinstance(v, (list, tuple)) or not all(
            isinstance(a, (int, float)) and not isinstance(a, bool) for a in v):
        raise SpecError(where, "expected a list of numbers")
    if length is not None and len(v) != length:
        raise SpecError(where, f"expected {length} entries, got {len(v)}")
    if positive and any(a <= 0 for a in v):
        raise SpecError(where, "entries must be positive")
    return tuple(float(a) for a in v)


def _factor_algebra(d: dict, where: str) -> LieAlgebra:
    kind = d.get("type")
    if kind == "su":
        n = _int(d, "n", where, 2)
        if d.get("basis", "default") == "standard":
            if n != 3:
                raise SpecError(f"{where}.basis", "the standard basis exists for su(3) only")
            return su3_standard()
        return su(n)
    if kind == "so":
        n = _int(d, "n", where, 3)
        if n == 4:
            raise SpecError(f"{where}.n", "so(4) is not simple; use two so(3) factors")
        return so(n)
    raise SpecError(f"{where}.type", f"g factors are 'su' or 'so', got {kind!r}")


def _block_algebra(d: dict, where: str) -> LieAlgebra:
    if d.get("type") == "torus":
        n = _int(d, "n", where, 2)
        dim = d.get("dim", n - 1)
        if not isinstance(dim, int) or not 1 <= dim <= n - 1:
            raise SpecError(f"{where}.dim", f"a torus in su({n}) has dimension 1..{n - 1}")
        return torus(n, dim)
    return _factor_algebra(d, where)


def spec_from_dict(raw: dict) -> SpaceSpec:
    if not isinstance(raw, dict):
        raise SpecError("<root>", "expected a JSON object")
    ver = raw.get("schema_version", SCHEMA_VERSION)
    if ver != SCHEMA_VERSION:
        raise SpecError("schema_version", f"unsupported version {ver!r} (this build reads {SCHEMA_VERSION})")
    g = raw.get("g_factors")
    if not isinstance(g, list) or not g:
        raise SpecError("g_factors", "expected a nonempty list")
    k = raw.get("k_blocks", [])
    if not isinstance(k, list):
        raise SpecError("k_blocks", "expected a list")
    for i, f in enumerate(g):
        if not isinstance(f, dict):
            raise SpecError(f"g_factors[{i}]", "expected an object")
        _factor_algebra(f, f"g_factors[{i}]")
    for j, b in enumerate(k):
        if not isinstance(b, dict):
            raise SpecError(f"k_blocks[{j}]", "expected an object")
        _block_algebra(b, f"k_blocks[{j}]")
    emb = raw.get("embedding", [])
    if k:
        if not isinstance(emb, list) or len(emb) != len(g):
            raise SpecError("embedding", f"expected one row per g factor ({len(g)})")
        for i, row in enumerate(emb):
            if not isinstance(row, list) or len(row) != len(k):
                raise SpecError(f"embedding[{i}]", f"expected one descriptor per k block ({len(k)})")
    s = len(g)
    z = raw.get("z")
    z = None if z is None else _vec(z, "z", s, positive=True)
    xs = raw.get("x", [])
    if not isinstance(xs, list):
        raise SpecError("x", "expected a list of metrics")
    x = tuple(_vec(v, f"x[{i}]", positive=True) for i, v in enumerate(xs))
    ys = raw.get("y", [])
    if not isinstance(ys, list):
        raise SpecError("y", "expected a list of coefficient vectors")
    y = tuple(_vec(v, f"y[{i}]", s) for i, v in enumerate(ys))
    spec = SpaceSpec(str(raw.get("name", "unnamed")), tuple(g), tuple(k),
                     tuple(tuple(r) for r in emb), z, x, y, copy.deepcopy(raw))
    build_embedding(spec)  # dimension and homomorphism checks
    return spec


def load_spec(path) -> SpaceSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"line {exc.lineno}", f"invalid JSON: {exc.msg}") from exc
    return spec_from_dict(raw)


# --------------------------------------------------------------------------
# construction


def _block_map(target: LieAlgebra, alg: LieAlgebra, desc, where: str) -> np.ndarray:
    if desc == "zero" or desc is None:
        return np.zeros((target.dim, alg.dim))
    if isinstance(desc, dict) and "diagonal-blocks" in desc:
        offs = desc["diagonal-blocks"]
        if not isinstance(offs, list) or not offs or not all(isinstance(o, int) for o in offs):
            raise SpecError(where, "diagonal-blocks needs a nonempty list of integer offsets")
        try:
            return sum(matrix_inclusion(target, [(alg, o)]) for o in offs)
        except ValueError as exc:
            raise SpecError(where, str(exc)) from exc
    if isinstance(desc, dict) and "matrix" in desc:
        M = np.asarray(desc["matrix"], dtype=float)
        if M.shape != (target.dim, alg.dim):
            raise SpecError(where, f"matrix must be {target.dim}x{alg.dim}, got "
                                   f"{'x'.join(map(str, M.shape))}")
        return M
    raise SpecError(where, f"unknown descriptor {desc!r}")


def build_embedding(spec: SpaceSpec) -> Embedding:
    targets = [_factor_algebra(f, f"g_factors[{i}]") for i, f in enumerate(spec.g_factors)]
    dim_g = sum(t.dim for t in targets)
    if not spec.k_blocks:
        if dim_g > MAX_DIM:
            raise SpecError("dimension", f"dim p = {dim_g} exceeds the supported {MAX_DIM}")
        return trivial_embedding(direct_sum(targets))
    algs = [_block_algebra(b, f"k_blocks[{j}]") for j, b in enumerate(spec.k_blocks)]
    # direct_sum lists simple ideals before the (merged) center
    order = sorted(range(len(algs)), key=lambda j: algs[j].center_block is not None)
    k = algs[order[0]] if len(algs) == 1 else direct_sum([algs[j] for j in order])
    dim_p = dim_g - k.dim
    if dim_p > MAX_DIM:
        raise SpecError("dimension", f"dim p = {dim_p} exceeds the supported {MAX_DIM}")
    factors = []
    for i, target in enumerate(targets):
        cols = [_block_map(target, algs[j], spec.embedding[i][j], f"embedding[{i}][{j}]")
                for j in order]
        factors.append((target, np.concatenate(cols, axis=1)))
    try:
        return diagonal_embedding(k, factors)
    except EmbeddingError as exc:
        raise SpecError("embedding", str(exc)) from exc


# --------------------------------------------------------------------------
# catalog

_SU2 = {"type": "su", "n": 2}
_SU3 = {"type": "su", "n": 3}
_SU4 = {"type": "su", "n": 4}
_DIAG0 = {"diagonal-blocks": [0]}


def _ledger_obata(s: int, z=None) -> dict:
    d = {"name": f"ledger-obata-su2-s{s}", "g_factors": [_SU2] * s,
         "k_blocks": [_SU2], "embedding": [[_DIAG0]] * s}
    if z is not None:
        d["z"] = list(z)
        d["name"] += "-z" + "".join(str(int(v)) if float(v).is_integer() else str(v) for v in z)
    return d


CATALOG: dict[str, dict] = {
    "su2-pair-diag": {"name": "su2-pair-diag", "g_factors": [_SU2, _SU2], "k_blocks": [_SU2],
                      "embedding": [[_DIAG0], [_DIAG0]]},
    "ledger-obata-su2-s3": _ledger_obata(3),
    "ledger-obata-su2-s3-z112": _ledger_obata(3, (1, 1, 2)),
    "ledger-obata-su2-s4": _ledger_obata(4),
    "ex1-n2": {"name": "ex1-n2", "g_factors": [_SU4, _SU4], "k_blocks": [_SU2, _SU2],
               "embedding": [[_DIAG0, {"diagonal-blocks": [2]}]] * 2},
    "ex2-su3-torus": {"name": "ex2-su3-torus", "g_factors": [_SU3, _SU3],
                      "k_blocks": [{"type": "torus", "n": 3, "dim": 2}],
                      "embedding": [[_DIAG0], [_DIAG0]]},
    "su3-flag": {"name": "su3-flag", "g_factors": [_SU3],
                 "k_blocks": [{"type": "torus", "n": 3, "dim": 2}], "embedding": [[_DIAG0]]},
    "su2-cubed-group": {"name": "su2-cubed-group", "g_factors": [_SU2] * 3, "k_blocks": [],
                        "embedding": []},
    "su3-group": {"name": "su3-group", "g_factors": [{"type": "su", "n": 3, "basis": "standard"}],
                  "k_blocks": [], "embedding": [],
                  "x": [[1, 2, 1, 1, 1, 1, 3, 1], [1, 1, 2, 3, 1, 1, 1, 1]]},
    # so(3) acting irreducibly on C^3: the real antisymmetric matrices inside su(3)
    "su3-pair-so3": {"name": "su3-pair-so3", "g_factors": [_SU3, _SU3],
                     "k_blocks": [{"type": "so", "n": 3}], "embedding": [[_DIAG0], [_DIAG0]]},
    "su3-cubed-so3": {"name": "su3-cubed-so3", "g_factors": [_SU3] * 3,
                      "k_blocks": [{"type": "so", "n": 3}], "embedding": [[_DIAG0]] * 3},
    # SU(2) in the upper-left corner of SU(3): C^3 = C^2 + C
    "su3-cubed-su2": {"name": "su3-cubed-su2", "g_factors": [_SU3] * 3,
                      "k_blocks": [_SU2], "embedding": [[_DIAG0]] * 3},
    "su2-cubed-u1": {"name": "su2-cubed-u1", "g_factors": [_SU2] * 3,
                     "k_blocks": [{"type": "torus", "n": 2, "dim": 1}], "embedding": [[_DIAG0]] * 3},
}

# the spaces whose Betti numbers are checked against the closed formulas
BETTI_SUITE = ("su2-pair-diag", "ledger-obata-su2-s3", "ex1-n2", "ex2-su3-torus",
               "su3-flag", "su2-cubed-group")


def catalog_spec(name: str) -> SpaceSpec:
    if name not in CATALOG:
        raise KeyError(f"unknown catalog space {name!r}; known: {sorted(CATALOG)}")
    return spec_from_dict(copy.deepcopy(CATALOG[name]))


def catalog_embedding(name: str) -> Embedding:
    return build_embedding(catalog_spec(name))
