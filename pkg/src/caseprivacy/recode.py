"""Variable recoding applied before suppression.

Every transformation here is a pure per-row function. The dataset-level
entry points evaluate each rule once per distinct input value and map the
result back, which keeps million-row inputs cheap.
"""
from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field
from datetime import date
from functools import lru_cache
from importlib import resources
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import DataError
from .schema import NA, FieldSpec, RecodeRule, Schema

logger = logging.getLogger(__name__)

_SUFFIX = re.compile(r"\s+(COUNTY|PARISH)$")
_SPACE = re.compile(r"\s+")


@dataclass
class QualityLog:
    """Data-quality findings collected during recoding, grouped by
    (field, issue). Raw values are never recorded."""

    entries: dict[tuple[str, str], list[int]] = field(default_factory=dict)

    def add(self, field_name: str, issue: str, rows: Iterable[int]) -> None:
        rows = [int(r) for r in rows]
        if rows:
            self.entries.setdefault((field_name, issue), []).extend(rows)

    def __len__(self) -> int:
        return sum(len(v) for v in self.entries.values())

    def records(self) -> list[dict[str, Any]]:
        out = []
        for (field_name, issue), rows in sorted(self.entries.items()):
            rows = sorted(set(rows))
            out.append({"field": field_name, "issue": issue, "count": len(rows), "rows": rows})
        return out


# ---------------------------------------------------------------------------
# FIPS reference


def normalize_county(name: str) -> str:
    return _SUFFIX.sub("", _SPACE.sub(" ", name.strip().upper()))


class FipsTable:
    """County lookup keyed on (state postal code, county name).

    Matching is case-insensitive, collapses whitespace and ignores a trailing
    "County"/"Parish".
    """

    def __init__(self, rows: Iterable[tuple[str, str, str]]):
        self._by_key: dict[tuple[str, str], tuple[str, str]] = {}
        states: set[str] = set()
        for state, county, code in rows:
            state = state.strip().upper()
            canon = normalize_county(county)
            self._by_key[(state, canon)] = (canon, code)
            states.add(state)
        self._states = tuple(sorted(states))

    @classmethod
    @lru_cache(maxsize=1)
    def bundled(cls) -> FipsTable:
        ref = resources.files("caseprivacy") / "data" / "county_fips.csv"
        with ref.open("r", encoding="utf-8", newline="") as fh:
            rows = [(r["state"], r["county"], r["fips"]) for r in csv.DictReader(fh)]
        return cls(rows)

    def states(self) -> tuple[str, ...]:
        return self._states

    def county_names(self) -> tuple[str, ...]:
        return tuple(sorted({canon for canon, _ in self._by_key.values()}))

    def codes(self) -> tuple[str, ...]:
        return tuple(sorted({code for _, code in self._by_key.values()}))

    def match(self, state: str, county: str) -> tuple[str, str] | None:
        """Return (canonical county name, 5-digit code) or None."""
        if not state or not county:
            return None
        return self._by_key.get((state.strip().upper(), normalize_county(county)))


def derive_fips(res_state: str | None, res_county: str | None, lookup: FipsTable,
                log: QualityLog | None = None, row: int | None = None) -> str:
    """5-digit county FIPS code for a (state, county) pair, or NA."""
    if not res_state or not res_county or res_state == NA or res_county == NA:
        return NA
    hit = lookup.match(res_state, res_county)
    if hit is None:
        if log is not None and row is not None:
            log.add("county_fips_code", "unmatched_fips_lookup", [row])
        return NA
    return hit[1]


# ---------------------------------------------------------------------------
# dates


def check_date_logic(value: date, processing_date: date, epoch: date) -> date | None:
    """Null out dates in the future or before the epidemic epoch."""
    if value > processing_date or value < epoch:
        return None
    return value


# ---------------------------------------------------------------------------
# age


@dataclass(frozen=True)
class AgeBins:
    bins: tuple[tuple[int, int | None, str], ...]
    unknown: str = "Unknown"

    @classmethod
    def from_rule(cls, rule: RecodeRule) -> AgeBins:
        bins = tuple((int(lo), None if hi is None else int(hi), label) for lo, hi, label in rule.params["bins"])
        return cls(bins, rule.params.get("unknown_label", "Unknown"))

    def label(self, age: int) -> str:
        if age < 0:
            return self.unknown
        for lo, hi, lab in self.bins:
            if age >= lo and (hi is None or age <= hi):
                return lab
        return self.unknown

    def labels(self) -> tuple[str, ...]:
        return tuple(b[2] for b in self.bins) + (self.unknown,)


def whole_years(born: date, at: date) -> int:
    years = at.year - born.year
    if (at.month, at.day) < (born.month, born.day):
        years -= 1
    return years


def bin_age(age_years: int | None, date_of_birth: date | None, onset_date: date | None,
            bins: AgeBins, log: QualityLog | None = None, row: int = -1) -> str:
    if age_years is not None:
        if age_years < 0:
            if log is not None:
                log.add("age_group", "negative_age", [row])
            return bins.unknown
        return bins.label(int(age_years))
    if date_of_birth is not None and onset_date is not None:
        age = whole_years(date_of_birth, onset_date)
        if age < 0:
            if log is not None:
                log.add("age_group", "negative_age", [row])
            return bins.unknown
        return bins.label(age)
    return bins.unknown


def _bin_age_frame(df: pd.DataFrame, spec: FieldSpec, log: QualityLog) -> pd.Series:
    rule = spec.recode
    assert rule is not None
    bins = AgeBins.from_rule(rule)
    n = len(df)
    age_col = rule.params.get("age_field")
    dob_col = rule.params.get("dob_field")
    onset_col = rule.params.get("onset_field")

    if age_col in df.columns:
        age = pd.to_numeric(df[age_col].where(df[age_col] != "", None), errors="coerce").to_numpy(dtype=float)
    else:
        age = np.full(n, np.nan)
    if dob_col in df.columns and onset_col in df.columns:
        dob = pd.to_datetime(df[dob_col].where(df[dob_col] != "", None), format="%Y-%m-%d", errors="coerce")
        onset = pd.to_datetime(df[onset_col].where(df[onset_col] != "", None), format="%Y-%m-%d", errors="coerce")
        years = onset.dt.year - dob.dt.year
        before = (onset.dt.month * 100 + onset.dt.day) < (dob.dt.month * 100 + dob.dt.day)
        derived = (years - before.astype(float)).to_numpy(dtype=float)
        age = np.where(np.isnan(age), derived, age)

    labels = np.full(n, bins.unknown, dtype=object)
    known = ~np.isnan(age)
    negative = known & (age < 0)
    log.add(spec.name, "negative_age", np.flatnonzero(negative))
    ok = known & ~negative
    if ok.any():
        whole = np.floor(age[ok]).astype(np.int64)
        lows = np.array([b[0] for b in bins.bins])
        idx = np.searchsorted(lows, whole, side="right") - 1
        names = np.array([b[2] for b in bins.bins], dtype=object)
        labels[ok] = names[idx]

    if age_col not in df.columns and not (dob_col in df.columns and onset_col in df.columns):
        # Nothing to derive from: keep an already-binned column.
        if spec.name in df.columns:
            return _normalize_category(df[spec.name], spec, bins.unknown, log)
    return pd.Series(labels, index=df.index, dtype=object)


# ---------------------------------------------------------------------------
# race / ethnicity

_DEFAULT_RACE_RULE = RecodeRule(
    kind="race_ethnicity_combine",
    params={
        "race_field": "race",
        "ethnicity_field": "ethnicity",
        "race_labels": {
            "American Indian/Alaska Native": "American Indian/Alaska Native, Non-Hispanic",
            "Asian": "Asian, Non-Hispanic",
            "Black": "Black, Non-Hispanic",
            "Multiple/Other": "Multiple/Other, Non-Hispanic",
            "Native Hawaiian/Other Pacific Islander": "Native Hawaiian/Other Pacific Islander, Non-Hispanic",
            "White": "White, Non-Hispanic",
        },
        "hispanic_values": ["Hispanic/Latino"],
        "unknown_race_values": ["Unknown"],
        "hispanic_label": "Hispanic/Latino",
        "multiple_label": "Multiple/Other, Non-Hispanic",
        "unknown_label": "Unknown",
    },
)


def combine_race_ethnicity(races: Sequence[str], ethnicity: str, rule: RecodeRule | None = None,
                           missing_label: str = "Missing") -> str:
    """Collapse reported race(s) and ethnicity into one category."""
    p = (rule or _DEFAULT_RACE_RULE).params
    labels: Mapping[str, str] = p["race_labels"]
    unknown_races = set(p.get("unknown_race_values", ("Unknown",)))
    races = [r.strip() for r in races if r and r.strip()]
    ethnicity = (ethnicity or "").strip()
    for r in races:
        if r not in labels and r not in unknown_races:
            raise DataError(f"race value {r!r} outside declared domain")
    if not races and not ethnicity:
        return missing_label
    if ethnicity in p.get("hispanic_values", ("Hispanic/Latino",)):
        return p.get("hispanic_label", "Hispanic/Latino")
    known = sorted({r for r in races if r not in unknown_races})
    if len(known) == 1:
        return labels[known[0]]
    if len(known) >= 2:
        return p.get("multiple_label", "Multiple/Other, Non-Hispanic")
    return p.get("unknown_label", "Unknown")


def _race_frame(df: pd.DataFrame, spec: FieldSpec, schema: Schema, log: QualityLog) -> pd.Series:
    rule = spec.recode
    assert rule is not None
    race_col = rule.params["race_field"]
    eth_col = rule.params["ethnicity_field"]
    missing = spec.missing_label or "Missing"
    if race_col not in df.columns and eth_col not in df.columns:
        if spec.name in df.columns:
            return _normalize_category(df[spec.name], spec, missing, log)
        return pd.Series(missing, index=df.index, dtype=object)

    try:
        sep = schema.field(race_col).multi_separator or ";"
    except KeyError:
        sep = ";"
    race = df[race_col] if race_col in df.columns else pd.Series("", index=df.index)
    eth = df[eth_col] if eth_col in df.columns else pd.Series("", index=df.index)
    key = race.astype(str) + "\x1f" + eth.astype(str)
    uniq = pd.unique(key)
    mapping: dict[str, str] = {}
    bad: set[str] = set()
    for u in uniq:
        r, e = u.split("\x1f")
        try:
            mapping[u] = combine_race_ethnicity(r.split(sep) if r else [], e, rule, missing)
        except DataError:
            bad.add(u)
            mapping[u] = missing
    if bad:
        log.add(spec.name, "race_out_of_domain", np.flatnonzero(key.isin(bad).to_numpy()))
    return key.map(mapping).astype(object)


# ---------------------------------------------------------------------------
# generic category normalisation


def _normalize_category(col: pd.Series, spec: FieldSpec, missing: str | None, log: QualityLog) -> pd.Series:
    """Map values onto the declared domain (case-insensitive). Empty cells get
    ``missing``; when ``missing`` is None they are left unchanged. Out-of-domain
    values become the missing label and are logged."""
    fold = {v.casefold(): v for v in spec.domain}
    if missing is not None:
        fold.setdefault(missing.casefold(), missing)
    uniq = pd.unique(col)
    mapping: dict[str, str] = {}
    bad: list[str] = []
    for u in uniq:
        s = u.strip()
        if s == NA:
            mapping[u] = NA
        elif s == "":
            mapping[u] = missing if missing is not None else u
        elif s.casefold() in fold:
            mapping[u] = fold[s.casefold()]
        else:
            bad.append(u)
            mapping[u] = missing if missing is not None else NA
    if bad:
        log.add(spec.name, "out_of_domain", np.flatnonzero(col.isin(bad).to_numpy()))
    return col.map(mapping).astype(object)


def _missing_target(spec: FieldSpec) -> str | None:
    """Label an empty cell becomes during missing-value normalisation; None
    means the cell is left unchanged."""
    kind = spec.recode.kind if spec.recode else "missing_normalize"
    if kind in ("county_normalize", "fips_derive"):
        return None
    if kind == "jurisdiction_fill":
        return None  # filled from the jurisdiction column instead
    return spec.missing_label or "Missing"


def recode_missing(df: pd.DataFrame, schema: Schema, log: QualityLog | None = None) -> pd.DataFrame:
    """Re-label unanswered category cells.

    Empty cells become the field's missing label ("Missing" for most
    fields, "Unknown" for age group). Residence state is filled from the
    reporting jurisdiction; county and county FIPS code are left as they are.
    """
    log = log if log is not None else QualityLog()
    out = df.copy()
    for spec in schema.fields:
        if spec.value_type != "category" or spec.name not in out.columns:
            continue
        col = out[spec.name]
        if spec.recode is not None and spec.recode.kind == "jurisdiction_fill":
            jcol = spec.recode.params["jurisdiction_field"]
            if jcol in out.columns:
                empty = col.str.strip() == ""
                col = col.where(~empty, out[jcol])
            out[spec.name] = _normalize_category(col, spec, spec.missing_label, log)
            continue
        target = _missing_target(spec)
        if target is None:
            continue
        empty = col.str.strip() == ""
        out[spec.name] = col.where(~empty, target)
    return out


# ---------------------------------------------------------------------------
# dataset-level entry point


def _date_logic_frame(col: pd.Series, processing_date: date, epoch: date, name: str,
                      log: QualityLog) -> pd.Series:
    s = col.str.strip()
    concrete = (s != "") & (s != NA)
    hi, lo = processing_date.isoformat(), epoch.isoformat()
    # ISO dates order lexicographically.
    future = concrete & (s > hi)
    early = concrete & (s < lo)
    log.add(name, "date_in_future", np.flatnonzero(future.to_numpy()))
    log.add(name, "date_before_epoch", np.flatnonzero(early.to_numpy()))
    return s.where(~(future | early), "")


def _county_frame(df: pd.DataFrame, spec: FieldSpec, state: pd.Series, table: FipsTable,
                  log: QualityLog) -> pd.Series:
    county = df[spec.name] if spec.name in df.columns else pd.Series("", index=df.index, dtype=object)
    key = state.astype(str) + "\x1f" + county.astype(str)
    known = set(spec.domain)
    mapping: dict[str, str] = {}
    unmatched: list[str] = []
    for u in pd.unique(key):
        st, ct = u.split("\x1f")
        ct = ct.strip()
        if ct == "" or ct == NA:
            mapping[u] = NA
            continue
        hit = table.match(st, ct)
        if hit is None:
            if st.strip() in ("", NA, "Missing") and normalize_county(ct) in known:
                # State suppressed or unknown: keep a recognisable county name.
                mapping[u] = normalize_county(ct)
                continue
            unmatched.append(u)
            mapping[u] = NA
        else:
            mapping[u] = hit[0]
    if unmatched:
        log.add(spec.name, "unmatched_county", np.flatnonzero(key.isin(unmatched).to_numpy()))
    return key.map(mapping).astype(object)


def _fips_frame(df: pd.DataFrame, spec: FieldSpec, table: FipsTable, log: QualityLog) -> pd.Series:
    rule = spec.recode
    assert rule is not None
    st_col, ct_col = rule.params["state_field"], rule.params["county_field"]
    state = df[st_col] if st_col in df.columns else pd.Series("", index=df.index)
    county = df[ct_col] if ct_col in df.columns else pd.Series("", index=df.index)
    key = state.astype(str) + "\x1f" + county.astype(str)
    mapping: dict[str, str] = {}
    unmatched: list[str] = []
    for u in pd.unique(key):
        st, ct = u.split("\x1f")
        if not st or not ct or st == NA or ct == NA:
            mapping[u] = NA
            continue
        hit = table.match(st, ct)
        if hit is None:
            unmatched.append(u)
            mapping[u] = NA
        else:
            mapping[u] = hit[1]
    if unmatched:
        log.add(spec.name, "unmatched_fips_lookup", np.flatnonzero(key.isin(unmatched).to_numpy()))
    return key.map(mapping).astype(object)


def recode_dataset(df: pd.DataFrame, schema: Schema, processing_date: date,
                   log: QualityLog | None = None, fips: FipsTable | None = None) -> pd.DataFrame:
    """Apply every configured recode rule and return the released columns.

    Source-only columns (raw age, date of birth, raw race, ...) and direct
    identifiers are dropped. Fields absent from the input are filled with
    their missing label (categories) or left blank (dates). Row count and
    order are unchanged.
    """
    log = log if log is not None else QualityLog()
    fips = fips or FipsTable.bundled()
    n = len(df)
    work = df.copy()
    out: dict[str, pd.Series] = {}

    # Dates first: age derivation reads the cleaned onset date.
    dob_fields = _dob_fields(schema)
    for spec in schema.fields + schema.source_fields:
        if spec.value_type != "date" or spec.name not in work.columns:
            continue
        if spec.name in dob_fields:
            work[spec.name] = _date_logic_frame(work[spec.name], processing_date, date.min, spec.name, log)
        elif spec.recode is not None and spec.recode.kind == "date_logic":
            work[spec.name] = _date_logic_frame(work[spec.name], processing_date, schema.epidemic_epoch,
                                                spec.name, log)

    state_series: pd.Series | None = None
    for spec in _ordered_for_recode(schema):
        if not spec.emitted:
            continue
        kind = spec.recode.kind if spec.recode else None
        if spec.value_type == "date":
            out[spec.name] = work[spec.name] if spec.name in work.columns else pd.Series("", index=df.index, dtype=object)
            continue
        if spec.value_type != "category":
            out[spec.name] = work[spec.name] if spec.name in work.columns else pd.Series("", index=df.index, dtype=object)
            continue
        if kind == "age_bin":
            out[spec.name] = _bin_age_frame(work, spec, log)
        elif kind == "race_ethnicity_combine":
            out[spec.name] = _race_frame(work, spec, schema, log)
        elif kind == "jurisdiction_fill":
            col = work[spec.name] if spec.name in work.columns else pd.Series("", index=df.index, dtype=object)
            jcol = spec.recode.params["jurisdiction_field"]
            if jcol in work.columns:
                col = col.where(col.str.strip() != "", work[jcol])
            col = col.str.strip().str.upper().where(col.str.strip() != NA, NA)
            out[spec.name] = _normalize_category(col, spec, spec.missing_label or "Missing", log)
            state_series = out[spec.name]
        elif kind == "county_normalize":
            st_col = spec.recode.params["state_field"]
            state = state_series if state_series is not None else (
                work[st_col] if st_col in work.columns else pd.Series("", index=df.index))
            out[spec.name] = _county_frame(work, spec, state, fips, log)
        elif kind == "fips_derive":
            view = pd.DataFrame({k: v for k, v in out.items()}, index=df.index)
            for c in (spec.recode.params["state_field"], spec.recode.params["county_field"]):
                if c not in view.columns:
                    view[c] = work[c] if c in work.columns else ""
            out[spec.name] = _fips_frame(view, spec, fips, log)
        else:
            col = work[spec.name] if spec.name in work.columns else pd.Series("", index=df.index, dtype=object)
            out[spec.name] = _normalize_category(col, spec, spec.missing_label or "Missing", log)

    result = pd.DataFrame({name: out[name] for name in schema.release_fields}, index=df.index)
    result = result.reset_index(drop=True)
    assert len(result) == n
    return result


def _dob_fields(schema: Schema) -> set[str]:
    names = set()
    for spec in schema.fields:
        if spec.recode is not None and spec.recode.kind == "age_bin":
            if spec.recode.params.get("dob_field"):
                names.add(spec.recode.params["dob_field"])
    return names


def _ordered_for_recode(schema: Schema) -> list[FieldSpec]:
    """State before county before FIPS; everything else in schema order."""
    rank = {"jurisdiction_fill": 0, "county_normalize": 1, "fips_derive": 2}
    specs = list(schema.fields)
    return sorted(specs, key=lambda s: rank.get(s.recode.kind if s.recode else "", -1))


def recode_record(record: Mapping[str, str], schema: Schema, processing_date: date) -> dict[str, str]:
    """Recode a single record; equivalent to :func:`recode_dataset` on one row."""
    df = pd.DataFrame([{k: ("" if v is None else str(v)) for k, v in record.items()}], dtype=object)
    return recode_dataset(df, schema, processing_date).iloc[0].to_dict()


__all__ = [
    "AgeBins",
    "FipsTable",
    "QualityLog",
    "bin_age",
    "check_date_logic",
    "combine_race_ethnicity",
    "derive_fips",
    "normalize_county",
    "recode_dataset",
    "recode_missing",
    "recode_record",
    "whole_years",
]
