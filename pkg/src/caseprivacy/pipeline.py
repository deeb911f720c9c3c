"""End-to-end release run: ingest, de-duplicate, window, recode, suppress,
verify and report."""
from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterator

import pandas as pd

from .errors import CasePrivacyError, DataError
from .ingest import (
    combine_submissions,
    deduplicate,
    derive_report_dates,
    first_submission_dates,
    read_manifest,
    read_submissions,
    window_mask,
    write_dataset,
)
from .recode import QualityLog, recode_dataset
from .report import SuppressionSummary, release_manifest, schema_summary, write_json
from .schema import Schema
from .suppress import SuppressionPlan, suppress
from .verify import PrivacyReport, verify_release

logger = logging.getLogger(__name__)

RELEASE_FILE = "released.csv"
SUMMARY_CSV = "suppression_summary.csv"
SUMMARY_TXT = "suppression_summary.txt"
PRIVACY_REPORT = "privacy_report.json"
QUALITY_REPORT = "data_quality.json"
MANIFEST = "manifest.json"
AUDIT_PLAN = "audit_plan.csv"

EXIT_OK = 0
EXIT_VERIFY = 3


@dataclass
class RunConfig:
    schema: Schema
    inputs: list[Path] = field(default_factory=list)
    manifest: Path | None = None
    out: Path | None = None
    release_date: date | None = None
    processing_date: date | None = None
    allow_infeasible: bool = False
    audit_plan: bool = False
    workers: int = 1


@dataclass
class RunResult:
    released: pd.DataFrame
    plan: SuppressionPlan
    summary: SuppressionSummary
    report: PrivacyReport
    quality: QualityLog
    row_counts: dict[str, int]
    manifest: dict | None
    warnings: list[str]
    exit_code: int


@contextmanager
def _stage(name: str) -> Iterator[None]:
    try:
        yield
    except CasePrivacyError as exc:
        if exc.stage in ("pipeline", "data"):
            exc.stage = name
        raise


def _warn(warnings: list[str], message: str) -> None:
    logger.warning(message)
    warnings.append(message)


def _gather_inputs(config: RunConfig) -> tuple[list[Path], dict[Path, date | None], list[str]]:
    paths = [Path(p) for p in config.inputs]
    dates: dict[Path, date | None] = {}
    if config.manifest is not None:
        for entry in read_manifest(config.manifest):
            dates[entry.path] = entry.submission_date
            if all(entry.path.resolve() != p.resolve() for p in paths):
                paths.append(entry.path)
    if not paths:
        raise DataError("no input files given")
    labels = [str(p) for p in paths]
    return paths, dates, labels


def run_pipeline(config: RunConfig) -> RunResult:
    """Produce a release in memory and, when ``config.out`` is set, write it.

    Raises stage-tagged :class:`CasePrivacyError` subclasses on bad input.
    Privacy verification failure is reported through ``exit_code``; in that
    case only the privacy report is written, unless the infeasibility
    override produced the failure.
    """
    schema = config.schema
    warnings: list[str] = []
    counts: dict[str, int] = {}

    with _stage("ingest"):
        paths, sub_dates, labels = _gather_inputs(config)
        subs = read_submissions(paths, schema, sub_dates, workers=config.workers)
        df, submission = combine_submissions(subs)
        counts["input"] = len(df)

        key = list(schema.dedup_key)
        has_key = bool(key) and all(k in df.columns for k in key)
        first_sub = first_submission_dates(df, key if has_key else [], submission)
        if schema.report_date is not None and len(df):
            df[schema.report_date.target] = derive_report_dates(df, first_sub, schema).to_numpy()
        if has_key:
            df = deduplicate(df, key, submission)
        elif key and len(df):
            _warn(warnings, f"dedup key {', '.join(key)} not present in input; de-duplication skipped")
        counts["after_dedup"] = len(df)

    with _stage("window"):
        if schema.report_date is not None:
            if config.release_date is None:
                raise DataError("a release date is required for this schema")
            mask = window_mask(df, config.release_date, schema.release_delay_days, schema.report_date.target)
            df = df[mask].reset_index(drop=True)
            if counts["after_dedup"] and not len(df):
                _warn(warnings, "release window excludes every record; the release is empty")
        counts["after_window"] = len(df)

    with _stage("recode"):
        processing = config.processing_date or config.release_date or date.max
        quality = QualityLog()
        recoded = recode_dataset(df, schema, processing, quality)

    with _stage("suppress"):
        released, plan = suppress(recoded, schema, allow_infeasible=config.allow_infeasible)
        if plan.infeasible:
            _warn(warnings, "k-anonymity infeasible: every quasi-identifier of the violating rows was "
                            "suppressed and the release does NOT meet the threshold")
        counts["released"] = len(released)

    with _stage("verify"):
        report = verify_release(released, schema)

    summary = schema_summary(plan, len(released), schema)
    exit_code = EXIT_OK if report.passed else EXIT_VERIFY
    publish = report.passed or plan.infeasible
    manifest = None
    if publish:
        manifest = release_manifest(
            schema=schema,
            release_date=config.release_date,
            processing_date=config.processing_date or config.release_date,
            inputs=labels,
            row_counts=counts,
            summary=summary,
            verdicts={"k_anonymity": "pass" if not report.k_violations else "fail",
                      "l_diversity": "pass" if not report.l_violations else "fail",
                      "pii_scan": "pass" if not report.pii_findings else "fail",
                      "overall": report.verdict},
            infeasible=plan.infeasible,
            overridden=not report.passed,
        )

    result = RunResult(released, plan, summary, report, quality, counts, manifest, warnings, exit_code)
    if config.out is not None:
        with _stage("report"):
            write_outputs(result, Path(config.out), config.audit_plan, schema)
    return result


def write_outputs(result: RunResult, out: Path, audit_plan: bool, schema: Schema) -> None:
    out.mkdir(parents=True, exist_ok=True)
    result.report.write(out / PRIVACY_REPORT)
    if result.manifest is None:
        return
    write_dataset(result.released, out / RELEASE_FILE)
    (out / SUMMARY_CSV).write_text(result.summary.to_csv(), encoding="utf-8")
    (out / SUMMARY_TXT).write_text(
        result.summary.to_table(f"Suppression summary, {schema.name}"), encoding="utf-8")
    write_json({"findings": result.quality.records()}, out / QUALITY_REPORT)
    if audit_plan:
        result.plan.write_audit(out / AUDIT_PLAN)
    write_json(result.manifest, out / MANIFEST)
