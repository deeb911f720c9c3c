import json

import pytest

from caseprivacy.report import (
    CatalogEntry,
    link_scan,
    read_synonyms,
    release_manifest,
    schema_summary,
    suppression_summary,
)
from caseprivacy.errors import DataError
from caseprivacy.suppress import K_ANONYMITY, SuppressionAction, SuppressionPlan, plan_k_suppression


def test_empty_plan_summary(public):
    s = schema_summary(SuppressionPlan(), 100, public)
    assert [(r.field, r.count, r.percent) for r in s.rows] == [
        ("race_ethnicity_combined", 0, "0.00%"), ("sex", 0, "0.00%"), ("age_group", 0, "0.00%")]


def test_figure_plan_summary(figure_k, figure_k_schema):
    raw, _ = figure_k
    s = suppression_summary(plan_k_suppression(raw, figure_k_schema), 10, figure_k_schema.qi_order)
    assert {r.field: (r.count, r.percent) for r in s.rows} == {
        "sex": (5, "50.00%"), "age_group": (0, "0.00%"), "race_ethnicity_combined": (5, "50.00%")}


def test_public_layout(public):
    s = schema_summary(SuppressionPlan(), 10, public)
    lines = s.to_csv().splitlines()
    assert lines[0] == ("Field Name,Number of Values per Field Suppressed,"
                        "Percent of Values per Field Suppressed")
    assert [ln.split(",")[0] for ln in lines[1:]] == ["race_ethnicity_combined", "sex", "age_group"]


def test_conservation_and_extras(scientific):
    actions = [SuppressionAction(i, f, K_ANONYMITY) for i in range(3)
               for f in ("sex", "res_county", "county_fips_code")]
    actions.append(SuppressionAction(5, "pos_spec_dt", "l_diversity"))
    plan = SuppressionPlan.from_actions(actions)
    s = schema_summary(plan, 1000, scientific)
    assert s.total == len(plan)
    assert [r.field for r in s.rows] == ["race_ethnicity_combined", "sex", "age_group", "hc_work_yn",
                                         "res_county", "res_state"]
    assert {r.field for r in s.extra} == {"county_fips_code", "pos_spec_dt"}
    assert s.count("res_county") == 3 and s.count("county_fips_code") == 3


def test_percent_rounding():
    plan = SuppressionPlan.from_actions([SuppressionAction(i, "sex", K_ANONYMITY) for i in range(324)])
    assert suppression_summary(plan, 10000, ["sex"]).rows[0].percent == "3.24%"
    tiny = SuppressionPlan.from_actions([SuppressionAction(0, "sex", K_ANONYMITY)])
    assert suppression_summary(tiny, 8405079, ["sex"]).rows[0].percent == "0.00%"


def test_row_count_precondition():
    plan = SuppressionPlan.from_actions([SuppressionAction(9, "sex", K_ANONYMITY)])
    with pytest.raises(DataError):
        suppression_summary(plan, 5, ["sex"])


def test_table_has_thousands_separators(public):
    plan = SuppressionPlan.from_actions([SuppressionAction(i, "sex", K_ANONYMITY) for i in range(1500)])
    text = schema_summary(plan, 100000, public).to_table("t")
    assert "1,500" in text and "1.50%" in text


def test_link_scan_synonym(scientific):
    rows = link_scan(scientific, [CatalogEntry("cases by state", ("sex", "age_group", "state"))],
                     read_synonyms())
    assert rows[0].overlap == 3
    assert set(rows[0].shared) == {"sex", "age_group", "res_state"}


def test_link_scan_empty_and_order(scientific):
    assert link_scan(scientific, [], read_synonyms()) == []
    cat = [CatalogEntry("b", ("weather",)), CatalogEntry("a", ("SEX",)), CatalogEntry("c", ("Sex", "County"))]
    rows = link_scan(scientific, cat, read_synonyms())
    assert [(r.dataset, r.overlap, r.rank) for r in rows] == [("c", 2, 1), ("a", 1, 2), ("b", 0, 3)]


def test_catalog_entry_needs_columns():
    with pytest.raises(DataError):
        CatalogEntry("x", ())


def test_manifest_contents(public, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    from datetime import date

    m = release_manifest(schema=public, release_date=date(2020, 12, 4), processing_date=None,
                         inputs=["a.csv"], row_counts={"input": 3}, summary=schema_summary(SuppressionPlan(), 3, public),
                         verdicts={"overall": "pass"})
    assert m["thresholds"] == {"k": 5, "l": 2}
    assert m["release_delay_days"] == 14
    assert m["schema"]["sha256"] == public.digest()
    assert m["generated_at_utc"] == "1970-01-01T00:00:00Z"
    assert all(r["count"] == 0 for r in m["suppression_summary"]["fields"])
    json.dumps(m)
