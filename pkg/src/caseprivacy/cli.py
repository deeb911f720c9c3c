"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 schema or data error, 3 privacy
verification failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import date
from pathlib import Path
from typing import Sequence

from . import __version__
from .errors import CasePrivacyError, SchemaError, VerificationError
from .ingest import read_csv_strings
from .pipeline import PRIVACY_REPORT, RunConfig, run_pipeline
from .report import (
    linkage_to_dict,
    link_scan,
    read_catalog,
    read_synonyms,
    schema_summary,
    write_json,
)
from .schema import Schema, bundled_schema_path, load_schema, validate_schema
from .suppress import SuppressionPlan
from .verify import verify_release

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("caseprivacy")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error [usage]: {message}\n")


def _iso_date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date (YYYY-MM-DD): {text!r}") from None


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must not be negative: {value}")
    return value


def _schema_arg(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--schema", required=True,
                     help="schema JSON path, or a bundled name (public_use, scientific_use)")


def _overrides(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--k", type=_positive, help="override the schema's k")
    sub.add_argument("--l", type=_positive, help="override the schema's l")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="caseprivacy", description="Privacy review pipeline for case surveillance microdata.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    subs = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = subs.add_parser("validate-config", help="check a schema file")
    _schema_arg(s)

    s = subs.add_parser("run", help="produce a release")
    _schema_arg(s)
    s.add_argument("--input", action="append", default=[], type=Path, help="input CSV (repeatable)")
    s.add_argument("--manifest", type=Path, help="JSON manifest listing inputs and submission dates")
    s.add_argument("--out", required=True, type=Path, help="output directory")
    s.add_argument("--release-date", type=_iso_date)
    s.add_argument("--processing-date", type=_iso_date, help="defaults to the release date")
    _overrides(s)
    s.add_argument("--delay-days", type=_positive, help="override the release delay")
    s.add_argument("--allow-infeasible", action="store_true",
                   help="fully suppress rows that cannot reach k instead of failing")
    s.add_argument("--audit-plan", action="store_true", help="also write the suppression audit plan")
    s.add_argument("--workers", type=int, default=1, help="parallel file readers")

    s = subs.add_parser("verify", help="re-verify a released dataset")
    _schema_arg(s)
    s.add_argument("--input", required=True, type=Path)
    _overrides(s)
    s.add_argument("--out", type=Path, help="directory for privacy_report.json")

    s = subs.add_parser("report", help="suppression summary from an audit plan")
    _schema_arg(s)
    s.add_argument("--input", required=True, type=Path, help="released CSV (for the row count)")
    s.add_argument("--audit-plan", required=True, type=Path)
    s.add_argument("--out", type=Path, help="directory for the summary files")

    s = subs.add_parser("link-scan", help="quasi-identifier overlap with a dataset catalog")
    _schema_arg(s)
    s.add_argument("--catalog", required=True, type=Path)
    s.add_argument("--synonyms", type=Path, help="synonym map JSON (defaults to the bundled one)")
    s.add_argument("--out", type=Path, help="directory for linkage_report.json")
    return p


def _load(spec: str, validate: bool = True) -> Schema:
    path = Path(spec)
    if not path.exists() and "/" not in spec and not spec.endswith(".json"):
        try:
            path = bundled_schema_path(spec)
        except (KeyError, FileNotFoundError, SchemaError):
            raise SchemaError(f"no schema file or bundled schema named {spec!r}") from None
    return load_schema(path, validate=validate)


def _apply_overrides(schema: Schema, args: argparse.Namespace) -> Schema:
    from dataclasses import replace

    schema = schema.with_thresholds(getattr(args, "k", None), getattr(args, "l", None))
    if getattr(args, "delay_days", None) is not None:
        schema = replace(schema, release_delay_days=args.delay_days)
    report = validate_schema(schema)
    if not report.ok:
        raise UsageError("override out of range: " + "; ".join(report.findings))
    return schema


def cmd_validate(args: argparse.Namespace) -> int:
    schema = _load(args.schema, validate=False)
    report = validate_schema(schema)
    if report.ok:
        print(f"{schema.name}: ok ({len(schema.fields)} fields, {len(schema.qi_order)} quasi-identifiers, "
              f"k={schema.thresholds.k}, l={schema.thresholds.l}, sha256 {schema.digest()[:12]})")
        return EXIT_OK
    for finding in report.findings:
        print(f"{schema.name}: {finding}", file=sys.stderr)
    return EXIT_DATA


def cmd_run(args: argparse.Namespace) -> int:
    schema = _apply_overrides(_load(args.schema), args)
    if not args.input and args.manifest is None:
        raise UsageError("give at least one --input or a --manifest")
    if schema.report_date is not None and args.release_date is None:
        raise UsageError("--release-date is required for this schema")
    config = RunConfig(schema=schema, inputs=args.input, manifest=args.manifest, out=args.out,
                       release_date=args.release_date, processing_date=args.processing_date,
                       allow_infeasible=args.allow_infeasible, audit_plan=args.audit_plan,
                       workers=args.workers)
    result = run_pipeline(config)
    for w in result.warnings:
        print(f"caseprivacy: warning: {w}", file=sys.stderr)
    counts = result.row_counts
    print(f"read {counts['input']:,} rows; {counts['after_dedup']:,} after de-duplication; "
          f"{counts['after_window']:,} in window; released {counts['released']:,}")
    print(result.summary.to_table(f"Suppression summary, {schema.name}"), end="")
    print(f"verification: {result.report.verdict}")
    if result.exit_code:
        _print_failures(result.report.to_dict())
    return result.exit_code


def _print_failures(doc: dict) -> None:
    for v in doc["k_violations"][:20]:
        print(f"  k violation: {v['signature']} frequency {v['frequency']}", file=sys.stderr)
    for v in doc["l_violations"][:20]:
        print(f"  l violation: {v['field']} {v['signature']} distinct {v['distinct']}", file=sys.stderr)
    for f in doc["pii_findings"][:20]:
        where = "" if f["row"] is None else f" row {f['row'] + 1}"
        print(f"  pii: {f['field']}{where}: {f['pattern']}", file=sys.stderr)


def cmd_verify(args: argparse.Namespace) -> int:
    schema = _apply_overrides(_load(args.schema), args)
    df = read_csv_strings(args.input)
    missing = [c for c in schema.qi_order if c not in df.columns]
    if missing:
        raise CasePrivacyError(f"{args.input}: quasi-identifier column(s) missing: {', '.join(missing)}",
                               stage="verify")
    report = verify_release(df, schema)
    doc = report.to_dict()
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        report.write(args.out / PRIVACY_REPORT)
    print(f"rows {report.rows:,}; classes {report.classes:,}; min class size "
          f"{report.k_min_frequency if report.k_min_frequency is not None else '-'}; "
          f"k violations {len(report.k_violations)}; l violations {len(report.l_violations)}; "
          f"pii findings {len(report.pii_findings)}")
    print(f"verification: {report.verdict}")
    if not report.passed:
        _print_failures(doc)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    schema = _load(args.schema)
    df = read_csv_strings(args.input)
    plan = SuppressionPlan.read_audit(args.audit_plan)
    summary = schema_summary(plan, len(df), schema)
    table = summary.to_table(f"Suppression summary, {schema.name}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "suppression_summary.csv").write_text(summary.to_csv(), encoding="utf-8")
        (args.out / "suppression_summary.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return EXIT_OK


def cmd_link_scan(args: argparse.Namespace) -> int:
    schema = _load(args.schema)
    rows = link_scan(schema, read_catalog(args.catalog), read_synonyms(args.synonyms))
    doc = linkage_to_dict(rows, schema)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        write_json(doc, args.out / "linkage_report.json")
    for r in rows:
        shared = ", ".join(r.shared) or "-"
        print(f"{r.rank:>4}  {r.overlap}  {r.dataset}  [{shared}]")
    return EXIT_OK


COMMANDS = {
    "validate-config": cmd_validate,
    "run": cmd_run,
    "verify": cmd_verify,
    "report": cmd_report,
    "link-scan": cmd_link_scan,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="caseprivacy: %(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"caseprivacy: error [usage]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CasePrivacyError as exc:
        print(f"caseprivacy: error [{exc.stage}]: {exc}", file=sys.stderr)
        return EXIT_VERIFY if isinstance(exc, VerificationError) else EXIT_DATA
    except (OSError, json.JSONDecodeError) as exc:
        print(f"caseprivacy: error [io]: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
