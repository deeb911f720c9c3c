import json

import pytest

from caseprivacy.errors import SchemaError
from caseprivacy.schema import (
    NA,
    FieldClass,
    load_schema,
    parse_schema,
    schema_to_dict,
    validate_schema,
    write_schema,
)

PUBLIC_FIELDS = [
    "cdc_report_dt", "pos_spec_dt", "onset_dt", "current_status", "sex", "age_group",
    "race_ethnicity_combined", "hosp_yn", "icu_yn", "death_yn", "medcond_yn",
]
SCIENTIFIC_FIELDS = [
    "current_status", "cdc_report_dt", "sex", "age_group", "race_ethnicity_combined",
    "county_fips_code", "res_county", "res_state", "onset_dt", "pos_spec_dt", "hosp_yn", "icu_yn",
    "death_yn", "hc_work_yn", "pna_yn", "abxchest_yn", "acuterespdistress_yn", "mechvent_yn",
    "fever_yn", "sfever_yn", "chills_yn", "myalgia_yn", "runnose_yn", "sthroat_yn", "cough_yn",
    "sob_yn", "nauseavomit_yn", "headache_yn", "abdom_yn", "diarrhea_yn", "medcond_yn",
]


def minimal(**over):
    doc = {
        "name": "t",
        "thresholds": {"k": 5, "l": 2},
        "dedup_key": [],
        "report_date": None,
        "fields": [
            {"name": "sex", "class": "quasi_identifier", "type": "category", "domain": ["Male", "Female"]},
            {"name": "pos_spec_dt", "class": "confidential", "type": "date"},
        ],
    }
    doc.update(over)
    return doc


def test_public_schema_classes(public):
    assert set(public.qi_order) == {"sex", "age_group", "race_ethnicity_combined"}
    assert public.confidential_fields == ("pos_spec_dt",)
    assert (public.thresholds.k, public.thresholds.l) == (5, 2)
    assert public.release_delay_days == 14


def test_scientific_schema_classes(scientific):
    assert set(scientific.qi_order) == {"sex", "age_group", "race_ethnicity_combined",
                                        "res_county", "res_state", "hc_work_yn"}
    assert scientific.confidential_fields == ("pos_spec_dt",)
    assert (scientific.thresholds.k, scientific.thresholds.l) == (5, 2)


def test_bundled_field_lists_match_dictionaries(public, scientific):
    assert sorted(public.release_fields) == sorted(PUBLIC_FIELDS)
    assert len(public.release_fields) == 11
    assert sorted(scientific.release_fields) == sorted(SCIENTIFIC_FIELDS)
    assert len(scientific.release_fields) == 31


def test_bundled_schemas_validate_clean(public, scientific):
    assert validate_schema(public).findings == []
    assert validate_schema(scientific).findings == []


def test_direct_identifiers_never_released(public, scientific):
    for schema in (public, scientific):
        for spec in schema.fields + schema.source_fields:
            if spec.field_class is FieldClass.DIRECT_IDENTIFIER:
                assert spec.name not in schema.release_fields


def test_age_domain_follows_dictionary(public):
    assert public.field("age_group").domain == (
        "0 - 9 Years", "10 - 19 Years", "20 - 39 Years", "40 - 49 Years", "50 - 59 Years",
        "60 - 69 Years", "70 - 79 Years", "80 + Years", "Unknown",
    )


def test_zero_quasi_identifiers_rejected():
    doc = minimal(fields=[{"name": "pos_spec_dt", "class": "confidential", "type": "date"}])
    with pytest.raises(SchemaError, match="no quasi-identifier"):
        parse_schema(doc)


def test_k_below_two_reported():
    schema = parse_schema(minimal(thresholds={"k": 1, "l": 1}), validate=False)
    assert "k below minimum 2" in validate_schema(schema).findings


def test_sentinel_in_domain_reported():
    doc = minimal()
    doc["fields"][0]["domain"] = ["Male", NA]
    schema = parse_schema(doc, validate=False)
    assert any("reserved sentinel in domain" in f for f in validate_schema(schema).findings)


def test_l_above_k_reported():
    schema = parse_schema(minimal(thresholds={"k": 2, "l": 3}), validate=False)
    assert "l exceeds k" in validate_schema(schema).findings


@pytest.mark.parametrize("doc, message", [
    ({"name": "t", "fields": []}, "missing thresholds"),
    (minimal(fields=[{"name": "x", "class": "secret", "type": "category", "domain": ["a"]}]), "unknown field class"),
    (minimal(fields=[{"name": "x", "class": "quasi_identifier", "domain": ["a"], "recode": {"kind": "magic"}}]),
     "unknown recode kind"),
])
def test_malformed_documents(doc, message):
    with pytest.raises(SchemaError, match=message):
        parse_schema(doc)


def test_bad_age_bins_reported():
    doc = minimal()
    doc["fields"].append({
        "name": "age_group", "class": "quasi_identifier", "type": "category",
        "domain": ["a", "b", "Unknown"],
        "recode": {"kind": "age_bin", "bins": [[0, 9, "a"], [5, None, "b"]]},
    })
    doc["qi_order"] = ["sex", "age_group"]
    findings = validate_schema(parse_schema(doc, validate=False)).findings
    assert any("not contiguous" in f for f in findings)


def test_round_trip(tmp_path, public, scientific):
    for schema in (public, scientific):
        path = tmp_path / f"{schema.name}.json"
        write_schema(schema, path)
        again = load_schema(path)
        assert again == schema
        assert again.digest() == schema.digest()


def test_digest_changes_with_thresholds(public):
    assert public.with_thresholds(k=10).digest() != public.digest()


def test_unreadable_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SchemaError, match="cannot parse"):
        load_schema(bad)
    with pytest.raises(SchemaError, match="cannot read"):
        load_schema(tmp_path / "missing.json")


def test_suppressible_fields_order(scientific):
    assert scientific.suppressible_fields[:6] == (
        "race_ethnicity_combined", "sex", "age_group", "hc_work_yn", "res_county", "res_state")
    assert set(scientific.suppressible_fields[6:]) == {"pos_spec_dt", "county_fips_code"}


def test_schema_to_dict_is_json(public):
    json.dumps(schema_to_dict(public))
