import copy
import json

import pytest

from harmq.spaces import (CATALOG, SCHEMA_VERSION, SpecError, build_embedding, catalog_spec,
                          load_spec, spec_from_dict)

from conftest import FIXTURES


def test_ledger_obata_fixture():
    spec = load_spec(FIXTURES / "ledger-obata-su2-s3.json")
    assert spec.s == 3 and len(spec.k_blocks) == 1
    E = build_embedding(spec)
    assert E.ambient.dim == 9 and E.sub.dim == 3


def test_ex1_fixture():
    E = build_embedding(load_spec(FIXTURES / "ex1-n2.json"))
    assert E.ambient.dim - E.sub.dim == 24


def test_mismatched_matrix_names_block():
    with pytest.raises(SpecError) as err:
        load_spec(FIXTURES / "bad-embedding-dims.json")
    assert err.value.field == "embedding[1][0]"
    assert "3x3" in str(err.value)


def test_oversized_space_reports_dimension():
    raw = copy.deepcopy(CATALOG["su3-cubed-so3"])
    raw["g_factors"] = raw["g_factors"] + [{"type": "su", "n": 3}]
    raw["embedding"] = raw["embedding"] + [[{"diagonal-blocks": [0]}]]
    with pytest.raises(SpecError, match="dim p = 29"):
        spec_from_dict(raw)


def test_invalid_json_reports_line(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "g_factors": [\n  oops\n]}', encoding="utf-8")
    with pytest.raises(SpecError, match="line 3"):
        load_spec(p)


@pytest.mark.parametrize("patch,field", [
    ({"g_factors": []}, "g_factors"),
    ({"g_factors": [{"type": "sp", "n": 2}]}, "g_factors[0].type"),
    ({"g_factors": [{"type": "so", "n": 4}]}, "g_factors[0].n"),
    ({"k_blocks": [{"type": "torus", "n": 2, "dim": 3}]}, "k_blocks[0].dim"),
    ({"embedding": [[{"diagonal-blocks": [0]}]]}, "embedding"),
    ({"z": [1, 2]}, "z"),
    ({"z": [1, -1, 1]}, "z"),
    ({"y": [[1, 2]]}, "y[0]"),
    ({"schema_version": 7}, "schema_version"),
])
def test_validation_names_field(patch, field):
    raw = copy.deepcopy(CATALOG["ledger-obata-su2-s3"])
    raw.update(patch)
    with pytest.raises(SpecError) as err:
        spec_from_dict(raw)
    assert err.value.field == field


def test_offset_out_of_range_names_block():
    raw = copy.deepcopy(CATALOG["ledger-obata-su2-s3"])
    raw["embedding"][2] = [{"diagonal-blocks": [1]}]
    with pytest.raises(SpecError) as err:
        spec_from_dict(raw)
    assert err.value.field == "embedding[2][0]"


def test_non_homomorphism_rejected():
    raw = copy.deepcopy(CATALOG["su2-pair-diag"])
    raw["embedding"][1] = [{"matrix": [[2, 0, 0], [0, 2, 0], [0, 0, 2]]}]
    with pytest.raises(SpecError) as err:
        spec_from_dict(raw)
    assert err.value.field == "embedding"


def test_round_trip():
    spec = catalog_spec("ledger-obata-su2-s3-z112")
    again = spec_from_dict(json.loads(json.dumps(spec.to_dict())))
    assert again == spec and again.to_dict()["schema_version"] == SCHEMA_VERSION


def test_center_ordering_matches_direct_sum():
    # torus listed first in the spec; the builder still puts su(2) first
    raw = {"g_factors": [{"type": "su", "n": 4}], "k_blocks": [
        {"type": "torus", "n": 2, "dim": 1}, {"type": "su", "n": 2}],
        "embedding": [[{"diagonal-blocks": [2]}, {"diagonal-blocks": [0]}]]}
    E = build_embedding(spec_from_dict(raw))
    assert [b.kind for b in E.sub.blocks] == ["simple", "center"]
    assert E.d0 == 1


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_catalog_builds(name):
    E = build_embedding(catalog_spec(name))
    assert E.ambient.dim - E.sub.dim <= 24


def test_unknown_catalog_name():
    with pytest.raises(KeyError):
        catalog_spec("nope")
