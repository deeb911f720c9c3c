"""Suppression summaries, release manifests and the linkage scan."""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from . import __version__
from .errors import DataError
from .schema import Schema
from .suppress import SuppressionPlan

SUMMARY_HEADER = (
    "Field Name",
    "Number of Values per Field Suppressed",
    "Percent of Values per Field Suppressed",
)


def format_percent(count: int, total: int) -> str:
    return f"{(100.0 * count / total) if total else 0.0:.2f}%"


@dataclass(frozen=True)
class SummaryRow:
    field: str
    count: int
    percent: str


@dataclass
class SuppressionSummary:
    row_count: int
    rows: list[SummaryRow]
    # fields whose counts are tracked but left out of the published table
    extra: list[SummaryRow] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(r.count for r in self.rows) + sum(r.count for r in self.extra)

    def count(self, name: str) -> int:
        for r in self.rows + self.extra:
            if r.field == name:
                return r.count
        raise KeyError(name)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for r in self.rows:
            w.writerow((r.field, r.count, r.percent))
        return buf.getvalue()

    def to_table(self, title: str | None = None) -> str:
        body = [SUMMARY_HEADER] + [(r.field, f"{r.count:,}", r.percent) for r in self.rows]
        widths = [max(len(line[i]) for line in body) for i in range(3)]
        lines = []
        if title:
            lines.append(f"{title} (n={self.row_count:,})")
        for i, line in enumerate(body):
            lines.append("  ".join(
                cell.ljust(widths[j]) if j == 0 else cell.rjust(widths[j]) for j, cell in enumerate(line)
            ).rstrip())
            if i == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict[str, Any]:
        as_dict = lambda rs: [{"field": r.field, "count": r.count, "percent": r.percent} for r in rs]  # noqa: E731
        return {"row_count": self.row_count, "fields": as_dict(self.rows), "other_fields": as_dict(self.extra)}


def suppression_summary(plan: SuppressionPlan, row_count: int,
                        fields: Sequence[str] | None = None) -> SuppressionSummary:
    """Per-field suppressed-cell counts with two-decimal percentages.

    ``fields`` fixes the published rows and their order (zero rows included);
    any other field present in the plan is counted under ``extra`` so that
    the grand total always equals the number of actions.
    """
    if len(plan) and row_count < int(plan.rows.max()) + 1:
        raise DataError(f"row count {row_count} is smaller than the plan's largest row index")
    counts = plan.counts_by_field()
    order = list(fields) if fields is not None else sorted(counts)
    rows = [SummaryRow(f, counts.get(f, 0), format_percent(counts.get(f, 0), row_count)) for f in order]
    extra = [SummaryRow(f, c, format_percent(c, row_count)) for f, c in sorted(counts.items()) if f not in order]
    return SuppressionSummary(row_count, rows, extra)


def schema_summary(plan: SuppressionPlan, row_count: int, schema: Schema) -> SuppressionSummary:
    """Summary laid out in the schema's published order; confidential and
    linked fields are kept as extra rows."""
    published = list(schema.summary_order or schema.qi_order)
    summary = suppression_summary(plan, row_count, schema.suppressible_fields)
    rows = [r for r in summary.rows if r.field in published]
    extra = [r for r in summary.rows if r.field not in published] + summary.extra
    return SuppressionSummary(row_count, rows, extra)


# ---------------------------------------------------------------------------
# linkage scan


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    columns: tuple[str, ...]
    url: str = ""

    def __post_init__(self) -> None:
        if not self.columns:
            raise DataError(f"catalog entry {self.name!r} has no columns")


@dataclass(frozen=True)
class LinkageRow:
    dataset: str
    shared: tuple[str, ...]
    overlap: int
    rank: int
    url: str = ""


def read_catalog(path: str | Path) -> list[CatalogEntry]:
    """JSON list (or ``{"datasets": [...]}``) of ``{name, columns, url}`` objects."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read catalog {path}: {exc}") from exc
    items = doc.get("datasets", []) if isinstance(doc, dict) else doc
    try:
        return [CatalogEntry(str(i["name"]), tuple(map(str, i["columns"])), str(i.get("url", ""))) for i in items]
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed catalog {path}: {exc}") from exc


def read_synonyms(path: str | Path | None = None) -> dict[str, str]:
    if path is None:
        path = Path(__file__).parent / "schemas" / "link_synonyms.json"
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read synonym map {path}: {exc}") from exc
    doc = doc.get("synonyms", doc)
    return {str(k).lower(): str(v) for k, v in doc.items()}


def link_scan(schema: Schema, catalog: Iterable[CatalogEntry],
              synonyms: Mapping[str, str] | None = None) -> list[LinkageRow]:
    """Quasi-identifiers each catalog dataset shares with the schema, by
    column name (case-insensitive, synonyms resolved), most overlap first."""
    synonyms = {k.lower(): v for k, v in (synonyms or {}).items()}
    qi = {name.lower(): name for name in schema.qi_order}
    found = []
    for entry in catalog:
        shared = set()
        for col in entry.columns:
            key = col.strip().lower()
            key = synonyms.get(key, key).lower()
            if key in qi:
                shared.add(qi[key])
        ordered = tuple(n for n in schema.qi_order if n in shared)
        found.append((entry, ordered))
    found.sort(key=lambda item: (-len(item[1]), item[0].name))
    return [LinkageRow(e.name, s, len(s), i + 1, e.url) for i, (e, s) in enumerate(found)]


def linkage_to_dict(rows: Sequence[LinkageRow], schema: Schema) -> dict[str, Any]:
    return {
        "schema": schema.name,
        "quasi_identifiers": list(schema.qi_order),
        "datasets": [
            {"rank": r.rank, "dataset": r.dataset, "overlap": r.overlap, "shared": list(r.shared), "url": r.url}
            for r in rows
        ],
    }


# ---------------------------------------------------------------------------
# manifest


def _generated_at() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    moment = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return moment.replace(microsecond=0).isoformat().replace("+00:00", "Z")


def release_manifest(*, schema: Schema, release_date: date | None, processing_date: date | None,
                     inputs: Sequence[str], row_counts: Mapping[str, int],
                     summary: SuppressionSummary, verdicts: Mapping[str, str],
                     infeasible: bool = False, overridden: bool = False) -> dict[str, Any]:
    """Everything a reviewer needs to reproduce and audit a release. The only
    wall-clock value is ``generated_at_utc``."""
    return {
        "tool": "caseprivacy",
        "tool_version": __version__,
        "schema": {"name": schema.name, "sha256": schema.digest()},
        "thresholds": {"k": schema.thresholds.k, "l": schema.thresholds.l},
        "release_delay_days": schema.release_delay_days,
        "release_date": release_date.isoformat() if release_date else None,
        "processing_date": processing_date.isoformat() if processing_date else None,
        "inputs": list(inputs),
        "row_counts": dict(row_counts),
        "suppression_summary": summary.to_dict(),
        "verification": dict(verdicts),
        "infeasible_override": infeasible,
        "verification_override": overridden,
        "generated_at_utc": _generated_at(),
    }


def write_json(doc: Any, path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
