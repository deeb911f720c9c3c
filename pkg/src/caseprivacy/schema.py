"""Declarative field catalog: sensitivity classes, value domains, recode rules
and privacy thresholds.

Schemas are JSON documents. Two are bundled with the package
(``public_use`` and ``scientific_use``); see ``docs/schema_format.md`` for
the file format.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import SchemaError

NA = "NA"
"""Sentinel written into cells suppressed for privacy protection."""

VALUE_TYPES = ("category", "date", "numeric", "text")

# Required parameters per recode kind.
RECODE_PARAMS: dict[str, tuple[str, ...]] = {
    "missing_normalize": (),
    "age_bin": ("bins",),
    "race_ethnicity_combine": ("race_field", "ethnicity_field", "race_labels"),
    "date_logic": (),
    "fips_derive": ("state_field", "county_field"),
    "county_normalize": ("state_field",),
    "jurisdiction_fill": ("jurisdiction_field",),
}

DOMAIN_REFS = ("fips:states", "fips:counties", "fips:codes")


class FieldClass(str, Enum):
    DIRECT_IDENTIFIER = "direct_identifier"
    QUASI_IDENTIFIER = "quasi_identifier"
    CONFIDENTIAL = "confidential"
    NON_CONFIDENTIAL = "non_confidential"


@dataclass(frozen=True)
class RecodeRule:
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class FieldSpec:
    name: str
    field_class: FieldClass | None
    value_type: str = "category"
    domain: tuple[str, ...] = ()
    domain_ref: str | None = None
    recode: RecodeRule | None = None
    missing_label: str | None = None
    # Suppress this field whenever any of these fields is suppressed
    # (a derived value must not reveal a suppressed source).
    suppress_with: tuple[str, ...] = ()
    multi_separator: str | None = None
    description: str = ""

    @property
    def emitted(self) -> bool:
        return self.field_class is not FieldClass.DIRECT_IDENTIFIER


@dataclass(frozen=True)
class PrivacyThresholds:
    k: int = 5
    l: int = 2  # noqa: E741


@dataclass(frozen=True)
class ReportDateSpec:
    """Columns feeding the report-date fallback chain."""

    target: str = "cdc_report_dt"
    form_field: str | None = "report_dt"
    first_seen_field: str | None = "first_seen_dt"


@dataclass(frozen=True)
class Schema:
    name: str
    fields: tuple[FieldSpec, ...]
    thresholds: PrivacyThresholds
    release_delay_days: int
    epidemic_epoch: date
    dedup_key: tuple[str, ...]
    qi_order: tuple[str, ...]
    source_fields: tuple[FieldSpec, ...] = ()
    summary_order: tuple[str, ...] = ()
    # None disables report-date derivation and the release window
    report_date: ReportDateSpec | None = field(default_factory=ReportDateSpec)
    description: str = ""

    def field(self, name: str) -> FieldSpec:
        for spec in self.fields + self.source_fields:
            if spec.name == name:
                return spec
        raise KeyError(name)

    @property
    def field_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)

    @property
    def release_fields(self) -> tuple[str, ...]:
        """Columns of a released dataset, in schema order."""
        return tuple(f.name for f in self.fields if f.emitted)

    @property
    def quasi_identifiers(self) -> tuple[str, ...]:
        return self.qi_order

    @property
    def confidential_fields(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields if f.field_class is FieldClass.CONFIDENTIAL)

    @property
    def linked_fields(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields if f.suppress_with)

    @property
    def input_columns(self) -> frozenset[str]:
        return frozenset(f.name for f in self.fields + self.source_fields)

    @property
    def suppressible_fields(self) -> tuple[str, ...]:
        """Summary row order: the configured order, then any other field that
        the engine may suppress."""
        order = list(self.summary_order or self.qi_order)
        for name in self.qi_order + self.confidential_fields + self.linked_fields:
            if name not in order:
                order.append(name)
        return tuple(order)

    def with_thresholds(self, k: int | None = None, l: int | None = None) -> Schema:  # noqa: E741
        from dataclasses import replace

        t = PrivacyThresholds(
            k=self.thresholds.k if k is None else k,
            l=self.thresholds.l if l is None else l,
        )
        return replace(self, thresholds=t)

    def digest(self) -> str:
        """sha256 over the canonical JSON form."""
        payload = json.dumps(schema_to_dict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class ValidationReport:
    findings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings


# ---------------------------------------------------------------------------
# reference domains


@lru_cache(maxsize=None)
def _fips_domains() -> dict[str, tuple[str, ...]]:
    from .recode import FipsTable

    table = FipsTable.bundled()
    return {
        "fips:states": table.states(),
        "fips:counties": table.county_names(),
        "fips:codes": table.codes(),
    }


def resolve_domain_ref(ref: str) -> tuple[str, ...]:
    if ref not in DOMAIN_REFS:
        raise SchemaError(f"unknown domain_ref {ref!r}")
    return _fips_domains()[ref]


# ---------------------------------------------------------------------------
# parsing


def _parse_date(value: Any, what: str) -> date:
    try:
        return date.fromisoformat(str(value))
    except ValueError as exc:
        raise SchemaError(f"{what}: invalid date {value!r}") from exc


def _parse_field(raw: Mapping[str, Any], *, source: bool) -> FieldSpec:
    try:
        name = raw["name"]
    except (KeyError, TypeError) as exc:
        raise SchemaError("field entry without a name") from exc

    cls_raw = raw.get("class")
    if cls_raw is None:
        if not source:
            raise SchemaError(f"field {name!r}: missing class")
        field_class = None
    else:
        try:
            field_class = FieldClass(cls_raw)
        except ValueError as exc:
            raise SchemaError(f"field {name!r}: unknown field class {cls_raw!r}") from exc

    recode = None
    if raw.get("recode") is not None:
        rr = dict(raw["recode"])
        kind = rr.pop("kind", None)
        if kind not in RECODE_PARAMS:
            raise SchemaError(f"field {name!r}: unknown recode kind {kind!r}")
        recode = RecodeRule(kind=kind, params=rr)

    domain_ref = raw.get("domain_ref")
    domain = tuple(raw.get("domain", ()))
    if domain_ref is not None:
        domain = resolve_domain_ref(domain_ref)

    return FieldSpec(
        name=name,
        field_class=field_class,
        value_type=raw.get("type", "category"),
        domain=domain,
        domain_ref=domain_ref,
        recode=recode,
        missing_label=raw.get("missing_label"),
        suppress_with=tuple(raw.get("suppress_with", ())),
        multi_separator=raw.get("multi_separator"),
        description=raw.get("description", ""),
    )


def parse_schema(data: Mapping[str, Any], *, validate: bool = True) -> Schema:
    """Build a :class:`Schema` from its decoded JSON form."""
    if not isinstance(data, Mapping):
        raise SchemaError("schema document must be a JSON object")
    if "thresholds" not in data:
        raise SchemaError("missing thresholds")
    th = data["thresholds"]
    try:
        thresholds = PrivacyThresholds(k=int(th["k"]), l=int(th["l"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError("missing thresholds: both k and l are required") from exc

    fields = tuple(_parse_field(f, source=False) for f in data.get("fields", ()))
    source_fields = tuple(_parse_field(f, source=True) for f in data.get("source_fields", ()))

    qi_order = data.get("qi_order")
    if qi_order is None:
        qi_order = [f.name for f in fields if f.field_class is FieldClass.QUASI_IDENTIFIER]

    rd = data.get("report_date", {})
    report_date = None if rd is None else ReportDateSpec(
        target=rd.get("target", "cdc_report_dt"),
        form_field=rd.get("form_field", "report_dt"),
        first_seen_field=rd.get("first_seen_field", "first_seen_dt"),
    )

    schema = Schema(
        name=data.get("name", "unnamed"),
        description=data.get("description", ""),
        fields=fields,
        source_fields=source_fields,
        thresholds=thresholds,
        release_delay_days=int(data.get("release_delay_days", 14)),
        epidemic_epoch=_parse_date(data.get("epidemic_epoch", "2019-12-01"), "epidemic_epoch"),
        dedup_key=tuple(data.get("dedup_key", ("case_id",))),
        qi_order=tuple(qi_order),
        summary_order=tuple(data.get("summary_order", ())),
        report_date=report_date,
    )
    if validate:
        report = validate_schema(schema)
        if not report.ok:
            raise SchemaError("invalid schema: " + "; ".join(report.findings))
    return schema


def load_schema(path: str | Path, *, validate: bool = True) -> Schema:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read schema {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"cannot parse schema {path}: {exc}") from exc
    return parse_schema(data, validate=validate)


def bundled_schema_path(name: str) -> Path:
    ref = resources.files("caseprivacy") / "schemas" / f"{name}.json"
    return Path(str(ref))


def load_bundled(name: str) -> Schema:
    """Load ``public_use`` or ``scientific_use``."""
    return load_schema(bundled_schema_path(name))


# ---------------------------------------------------------------------------
# serialisation


def _field_to_dict(spec: FieldSpec) -> dict[str, Any]:
    out: dict[str, Any] = {"name": spec.name}
    if spec.field_class is not None:
        out["class"] = spec.field_class.value
    out["type"] = spec.value_type
    if spec.domain_ref is not None:
        out["domain_ref"] = spec.domain_ref
    elif spec.domain:
        out["domain"] = list(spec.domain)
    if spec.missing_label is not None:
        out["missing_label"] = spec.missing_label
    if spec.recode is not None:
        out["recode"] = {"kind": spec.recode.kind, **spec.recode.params}
    if spec.suppress_with:
        out["suppress_with"] = list(spec.suppress_with)
    if spec.multi_separator is not None:
        out["multi_separator"] = spec.multi_separator
    if spec.description:
        out["description"] = spec.description
    return out


def schema_to_dict(schema: Schema) -> dict[str, Any]:
    out: dict[str, Any] = {
        "name": schema.name,
        "description": schema.description,
        "thresholds": {"k": schema.thresholds.k, "l": schema.thresholds.l},
        "release_delay_days": schema.release_delay_days,
        "epidemic_epoch": schema.epidemic_epoch.isoformat(),
        "dedup_key": list(schema.dedup_key),
        "qi_order": list(schema.qi_order),
        "report_date": None if schema.report_date is None else {
            "target": schema.report_date.target,
            "form_field": schema.report_date.form_field,
            "first_seen_field": schema.report_date.first_seen_field,
        },
        "fields": [_field_to_dict(f) for f in schema.fields],
        "source_fields": [_field_to_dict(f) for f in schema.source_fields],
    }
    if schema.summary_order:
        out["summary_order"] = list(schema.summary_order)
    return out


def write_schema(schema: Schema, path: str | Path) -> None:
    text = json.dumps(schema_to_dict(schema), indent=2, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# validation


def _check_recode(spec: FieldSpec, known: set[str]) -> Iterable[str]:
    rule = spec.recode
    if rule is None:
        return
    for key in RECODE_PARAMS[rule.kind]:
        if key not in rule.params:
            yield f"field {spec.name}: recode {rule.kind} missing parameter {key!r}"
    if rule.kind == "age_bin" and "bins" in rule.params:
        bins = rule.params["bins"]
        lows = [b[0] for b in bins]
        if not bins or lows[0] != 0:
            yield f"field {spec.name}: age bins must start at 0"
        if any(b >= a for a, b in zip(lows[1:], lows)):
            yield f"field {spec.name}: bin edges not strictly increasing"
        for (lo, hi, _), nxt in zip(bins, lows[1:] + [None]):
            if nxt is not None and (hi is None or hi + 1 != nxt):
                yield f"field {spec.name}: age bins not contiguous at {lo}"
        if bins and bins[-1][1] is not None:
            yield f"field {spec.name}: final age bin must be unbounded (top-coded)"
        labels = [b[2] for b in bins]
        for label in labels:
            if spec.domain and label not in spec.domain:
                yield f"field {spec.name}: bin label {label!r} not in domain"
    for key, value in rule.params.items():
        if key.endswith("_field") and value not in known:
            yield f"field {spec.name}: recode references undeclared field {value!r}"


def validate_schema(schema: Schema) -> ValidationReport:
    findings: list[str] = []
    t = schema.thresholds
    if t.k < 2:
        findings.append("k below minimum 2")
    if t.l < 1:
        findings.append("l below minimum 1")
    if t.l > t.k:
        findings.append("l exceeds k")
    if schema.release_delay_days < 0:
        findings.append("release_delay_days is negative")

    names = [f.name for f in schema.fields + schema.source_fields]
    seen: set[str] = set()
    for name in names:
        if name in seen:
            findings.append(f"duplicate field name {name!r}")
        seen.add(name)
    known = set(names)

    for spec in schema.fields + schema.source_fields:
        if spec.value_type not in VALUE_TYPES:
            findings.append(f"field {spec.name}: unknown value type {spec.value_type!r}")
        if spec.value_type == "category" and not spec.domain:
            findings.append(f"field {spec.name}: category field has empty domain")
        if NA in spec.domain:
            findings.append(f"field {spec.name}: reserved sentinel in domain")
        if spec.missing_label == NA:
            findings.append(f"field {spec.name}: reserved sentinel used as missing label")
        if spec.value_type == "text" and spec.field_class not in (None, FieldClass.DIRECT_IDENTIFIER):
            findings.append(f"field {spec.name}: free-text fields cannot be released")
        for other in spec.suppress_with:
            if other not in known:
                findings.append(f"field {spec.name}: suppress_with references undeclared field {other!r}")
        findings.extend(_check_recode(spec, known))

    qis = [f.name for f in schema.fields if f.field_class is FieldClass.QUASI_IDENTIFIER]
    if not qis:
        findings.append("no quasi-identifier fields")
    if len(set(schema.qi_order)) != len(schema.qi_order):
        findings.append("duplicate entry in qi_order")
    if set(schema.qi_order) != set(qis):
        findings.append("qi_order does not match the quasi-identifier fields")
    for name in schema.dedup_key:
        if name not in known:
            findings.append(f"dedup_key field {name!r} not declared")
    for name in schema.summary_order:
        if name not in known:
            findings.append(f"summary_order field {name!r} not declared")
    if schema.report_date is not None and schema.report_date.target not in known:
        findings.append(f"report date target {schema.report_date.target!r} not declared")
    return ValidationReport(findings)
