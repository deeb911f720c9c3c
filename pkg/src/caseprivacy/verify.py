"""Independent verification of released datasets.

Class frequencies are recounted by sorting rows on their quasi-identifier
values and scanning for run boundaries. Nothing here is shared with the
suppression engine, which partitions by hashing.
"""
from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

from .schema import NA, Schema

MAX_VALUE_LENGTH = 64

_MULTI_TOKEN = re.compile(r"[A-Za-z]{2,}\s+[A-Za-z]{2,}")
_DIGIT_RUN = re.compile(r"\d(?:[\s\-.()/]*\d){8,}")
_ISO = re.compile(r"\d{4}-\d{2}-\d{2}")


@dataclass
class PiiFinding:
    field: str
    row: int | None
    pattern: str


@dataclass
class PrivacyReport:
    k: int | None = None
    l: int | None = None  # noqa: E741
    rows: int = 0
    classes: int = 0
    k_min_frequency: int | None = None
    k_violations: list[tuple[tuple[str, ...], int]] = field(default_factory=list)
    l_violations: list[tuple[str, tuple[str, ...], int]] = field(default_factory=list)
    pii_findings: list[PiiFinding] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not (self.k_violations or self.l_violations or self.pii_findings)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def merge(self, other: PrivacyReport) -> PrivacyReport:
        return PrivacyReport(
            k=other.k if other.k is not None else self.k,
            l=other.l if other.l is not None else self.l,
            rows=max(self.rows, other.rows),
            classes=max(self.classes, other.classes),
            k_min_frequency=other.k_min_frequency if other.k_min_frequency is not None else self.k_min_frequency,
            k_violations=self.k_violations + other.k_violations,
            l_violations=self.l_violations + other.l_violations,
            pii_findings=self.pii_findings + other.pii_findings,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict,
            "k": self.k,
            "l": self.l,
            "rows": self.rows,
            "classes": self.classes,
            "k_min_frequency": self.k_min_frequency,
            "k_violations": [{"signature": list(s), "frequency": f} for s, f in self.k_violations],
            "l_violations": [{"field": c, "signature": list(s), "distinct": d} for c, s, d in self.l_violations],
            "pii_findings": [asdict(p) for p in self.pii_findings],
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _rank_codes(values: np.ndarray) -> np.ndarray:
    """Rank of each string among the column's sorted distinct values."""
    if values.size == 0:
        return np.zeros(0, dtype=np.int64)
    levels = np.array(sorted(set(values.tolist())), dtype=str)
    return np.searchsorted(levels, values.astype(str)).astype(np.int64)


def column_codes(df: pd.DataFrame, columns: Sequence[str]) -> list[np.ndarray]:
    return [_rank_codes(df[name].to_numpy(dtype=object)) for name in columns]


def _sorted_runs(df: pd.DataFrame, qi_order: Sequence[str], extra: np.ndarray | None = None,
                 codes: list[np.ndarray] | None = None):
    """Sort rows by their quasi-identifier strings; returns (order, run starts)."""
    if codes is None:
        codes = column_codes(df, qi_order)
    keys = ([extra] if extra is not None else []) + codes[::-1]
    order = np.lexsort(keys) if keys else np.arange(len(df))
    n = len(df)
    change = np.zeros(n, dtype=bool)
    change[0] = True
    for c in codes:
        sc = c[order]
        change[1:] |= sc[1:] != sc[:-1]
    return order, np.flatnonzero(change)


def verify_k_anonymity(df: pd.DataFrame, qi_order: Sequence[str], k: int,
                       codes: list[np.ndarray] | None = None) -> PrivacyReport:
    report = PrivacyReport(k=k, rows=len(df))
    if len(df) == 0:
        return report
    order, starts = _sorted_runs(df, qi_order, codes=codes)
    sizes = np.diff(np.append(starts, len(df)))
    report.classes = len(sizes)
    report.k_min_frequency = int(sizes.min())
    for i in np.flatnonzero(sizes < k):
        row = order[starts[i]]
        sig = tuple(str(df[c].iat[row]) for c in qi_order)
        report.k_violations.append((sig, int(sizes[i])))
    return report


def verify_l_diversity(df: pd.DataFrame, qi_order: Sequence[str], confidential: str, l: int,  # noqa: E741
                       missing_label: str | None = None,
                       codes: list[np.ndarray] | None = None) -> PrivacyReport:
    """A class passes when it shows at least ``l`` distinct concrete values of
    ``confidential`` or none at all (every member blank, missing or NA)."""
    report = PrivacyReport(l=l, rows=len(df))
    if len(df) == 0:
        return report
    vals = df[confidential].to_numpy(dtype=object)
    hidden = (vals == "") | (vals == NA)
    if missing_label:
        hidden |= vals == missing_label
    vcode = np.where(hidden, -1, _rank_codes(vals))
    order, starts = _sorted_runs(df, qi_order, extra=vcode, codes=codes)
    n = len(df)
    sv = vcode[order]
    class_of = np.zeros(n, dtype=np.int64)
    class_of[starts] = 1
    class_of = np.cumsum(class_of) - 1
    new_value = np.ones(n, dtype=bool)
    new_value[1:] = (sv[1:] != sv[:-1]) | (class_of[1:] != class_of[:-1])
    counted = new_value & (sv >= 0)
    distinct = np.bincount(class_of, weights=counted, minlength=len(starts)).astype(np.int64)
    report.classes = len(starts)
    for i in np.flatnonzero((distinct > 0) & (distinct < l)):
        row = order[starts[i]]
        sig = tuple(str(df[c].iat[row]) for c in qi_order)
        report.l_violations.append((confidential, sig, int(distinct[i])))
    return report


def _text_patterns(value: str, max_len: int) -> list[str]:
    found = []
    if len(value) > max_len:
        found.append("long_value")
    if _MULTI_TOKEN.search(value):
        found.append("multi_token_text")
    if _DIGIT_RUN.search(value):
        found.append("long_digit_run")
    return found


def _date_ok(value: str) -> bool:
    if not _ISO.fullmatch(value):
        return False
    try:
        date.fromisoformat(value)
    except ValueError:
        return False
    return True


def _number_ok(value: str) -> bool:
    try:
        float(value)
    except ValueError:
        return False
    return True


def scan_pii(df: pd.DataFrame, schema: Schema, max_len: int = MAX_VALUE_LENGTH) -> PrivacyReport:
    """Flag cells that could carry identifying free text.

    Values inside a declared category domain are accepted as vetted. Anything
    else is flagged as out of domain (or unparseable, for dates and numbers)
    and additionally checked for free-text signs: excessive length, several
    alphabetic words, or a run of nine or more digits.
    """
    report = PrivacyReport(rows=len(df))
    known = {f.name: f for f in schema.fields + schema.source_fields}
    for name in df.columns:
        spec = known.get(name)
        if spec is None:
            report.pii_findings.append(PiiFinding(name, None, "undeclared_field"))
            continue
        if not spec.emitted or spec.value_type == "text":
            report.pii_findings.append(PiiFinding(name, None, "identifier_or_free_text_field"))
            continue
        allowed = {"", NA}
        if spec.missing_label:
            allowed.add(spec.missing_label)
        if spec.value_type == "category":
            allowed |= set(spec.domain)
        col = df[name].astype(str)
        for value in pd.unique(col):
            if value in allowed:
                continue
            if spec.value_type == "date":
                if _date_ok(value):
                    continue
                patterns = ["unparseable_date"]
            elif spec.value_type == "numeric":
                if _number_ok(value):
                    continue
                patterns = ["unparseable_numeric"]
            else:
                patterns = ["out_of_domain"]
            patterns += _text_patterns(value, max_len)
            for row in np.flatnonzero((col == value).to_numpy()):
                for pattern in patterns:
                    report.pii_findings.append(PiiFinding(name, int(row), pattern))
    report.pii_findings.sort(key=lambda f: (f.row if f.row is not None else -1, f.field, f.pattern))
    return report


def verify_release(df: pd.DataFrame, schema: Schema, pii: bool = True) -> PrivacyReport:
    """k-anonymity, l-diversity for every confidential field, and the PII scan."""
    t = schema.thresholds
    codes = column_codes(df, schema.qi_order)
    report = verify_k_anonymity(df, schema.qi_order, t.k, codes=codes)
    for name in schema.confidential_fields:
        if name in df.columns:
            report = report.merge(verify_l_diversity(df, schema.qi_order, name, t.l,
                                                     schema.field(name).missing_label, codes=codes))
    report.l = t.l
    if pii:
        report = report.merge(scan_pii(df, schema))
    return report
