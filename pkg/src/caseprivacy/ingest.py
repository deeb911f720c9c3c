"""CSV ingestion, report-date derivation, de-duplication and the release window.

A dataset is a :class:`pandas.DataFrame` whose cells are all strings. Dates
stay in ISO ``YYYY-MM-DD`` form (validated on read), which orders correctly
under plain string comparison; the empty string is an absent value and
``"NA"`` marks a suppressed cell.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import DataError
from .schema import NA, Schema

logger = logging.getLogger(__name__)

ISO_DATE = r"\d{4}-\d{2}-\d{2}"


@dataclass
class RawSubmission:
    records: pd.DataFrame
    submission_date: date | None
    source_label: str


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    submission_date: date | None
    label: str


def read_dataset(path: str | Path, schema: Schema) -> pd.DataFrame:
    """Read a UTF-8 CSV file whose header names schema fields.

    Date and numeric columns are validated but kept as strings; empty cells
    stay empty.
    """
    path = Path(path)
    df = read_csv_strings(path)
    unknown = [c for c in df.columns if c not in schema.input_columns]
    if unknown:
        raise DataError(f"{path}: column(s) not in schema: {', '.join(map(str, unknown))}")
    _validate_types(df, schema, str(path))
    return df


def read_csv_strings(path: str | Path) -> pd.DataFrame:
    """Read a CSV file as all-string cells, without any schema checks."""
    path = Path(path)
    try:
        df = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            na_filter=False,
            encoding="utf-8-sig",
            engine="c",
            on_bad_lines="error",
        )
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"{path}: empty file (a header row is required)") from exc
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: malformed CSV: {exc}") from exc
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(df.columns) > 1 and (df.iloc[:, -1] == "").any():
        _check_row_lengths(path, len(df.columns))
    return df.astype(object).reset_index(drop=True)


def _check_row_lengths(path: Path, width: int) -> None:
    # The C parser pads short rows silently; a blank last cell is the only
    # symptom, so rescan the file when one is present.
    with path.open(encoding="utf-8-sig", newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if i and len(row) != width and row:
                raise DataError(f"{path}: malformed CSV: row {i} has {len(row)} fields, expected {width}")


def _validate_types(df: pd.DataFrame, schema: Schema, where: str) -> None:
    # Columns repeat a small set of values, so each distinct value is parsed once.
    for name in df.columns:
        spec = schema.field(name)
        if spec.value_type not in ("date", "numeric"):
            continue
        col = df[name].to_numpy(dtype=object)
        uniq = pd.Series(pd.unique(col), dtype=object)
        uniq = uniq[(uniq != "") & (uniq != NA)]
        if uniq.empty:
            continue
        if spec.value_type == "date":
            shape_ok = uniq.str.fullmatch(ISO_DATE)
            parsed = pd.to_datetime(uniq.where(shape_ok, None), format="%Y-%m-%d", errors="coerce")
            bad = uniq[~shape_ok | parsed.isna()]
            kind = "date"
        else:
            bad = uniq[pd.to_numeric(uniq, errors="coerce").isna()]
            kind = "number"
        if len(bad):
            pos = int(np.flatnonzero(np.isin(col, bad.to_numpy()))[0])
            raise DataError(f"{where}: row {pos + 1}, field {name}: unparseable {kind} {col[pos]!r}")


def write_dataset(df: pd.DataFrame, path: str | Path) -> None:
    """Write a dataset as UTF-8 CSV with LF line endings and minimal quoting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(df.columns)
        writer.writerows(zip(*(df[c].to_numpy(dtype=object) for c in df.columns)))


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    """Read the sidecar manifest mapping input files to submission dates.

    Format::

        {"files": [{"path": "day1.csv", "submission_date": "2020-06-01",
                    "label": "GA daily"}, ...]}

    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        entries = doc["files"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    out = []
    for item in entries:
        p = Path(item["path"])
        if not p.is_absolute():
            p = path.parent / p
        sd = item.get("submission_date")
        try:
            sub = date.fromisoformat(sd) if sd else None
        except ValueError as exc:
            raise DataError(f"manifest {path}: bad submission_date {sd!r}") from exc
        out.append(ManifestEntry(p, sub, item.get("label", p.name)))
    return out


def read_submissions(paths: Sequence[str | Path], schema: Schema,
                     submission_dates: Mapping[Path, date | None] | None = None,
                     workers: int = 1) -> list[RawSubmission]:
    """Read several files, optionally in parallel; output order follows ``paths``."""
    submission_dates = {Path(k).resolve(): v for k, v in (submission_dates or {}).items()}

    def one(p: str | Path) -> RawSubmission:
        p = Path(p)
        return RawSubmission(read_dataset(p, schema), submission_dates.get(p.resolve()), p.name)

    if workers > 1 and len(paths) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, paths))
    return [one(p) for p in paths]


def combine_submissions(subs: Sequence[RawSubmission]) -> tuple[pd.DataFrame, np.ndarray]:
    """Concatenate submissions in order; returns the frame and a per-row array
    of ISO submission dates ("" when unknown)."""
    if not subs:
        return pd.DataFrame(), np.array([], dtype=object)
    columns: list[str] = []
    for s in subs:
        columns.extend(c for c in s.records.columns if c not in columns)
    frames = [s.records.reindex(columns=columns, fill_value="") for s in subs]
    df = pd.concat(frames, ignore_index=True).astype(object)
    dates = np.concatenate([
        np.full(len(s.records), s.submission_date.isoformat() if s.submission_date else "", dtype=object)
        for s in subs
    ])
    return df, dates


# ---------------------------------------------------------------------------
# report date


def _as_date(value: object) -> date | None:
    if value is None or value == "" or value == NA:
        return None
    if isinstance(value, date):
        return value
    return date.fromisoformat(str(value))


def derive_report_date(record: Mapping[str, object], first_submission_date: date | None,
                       first_seen_date: date | None, form_field: str = "report_dt",
                       target: str = "cdc_report_dt") -> date:
    """First submission date, else the form's report date, else the date the
    case was first seen."""
    if first_submission_date is not None:
        return first_submission_date
    form = _as_date(record.get(form_field)) or _as_date(record.get(target))
    if form is not None:
        return form
    if first_seen_date is not None:
        return first_seen_date
    raise DataError("no derivable report date")


def first_submission_dates(df: pd.DataFrame, key: Sequence[str], submission: np.ndarray) -> np.ndarray:
    """Earliest known submission date per case key, broadcast to rows."""
    sub = np.asarray(submission, dtype=object)
    if not key or any(k not in df.columns for k in key) or not (sub != "").any():
        return sub.copy()
    group = df.groupby(list(key), sort=False).ngroup().to_numpy()
    # "~" sorts after every ISO date, so unknown dates never win the minimum.
    ranked = np.where(sub == "", "~", sub).astype(str)
    order = np.lexsort((ranked, group))
    first = np.ones(len(order), dtype=bool)
    first[1:] = group[order][1:] != group[order][:-1]
    earliest = np.empty(group.max() + 1, dtype=object)
    earliest[group[order][first]] = ranked[order][first]
    out = earliest[group]
    out[out == "~"] = ""
    blank = _blank_key(df, key).to_numpy()
    out[blank] = sub[blank]
    return out.astype(object)


def derive_report_dates(df: pd.DataFrame, first_submission: np.ndarray, schema: Schema) -> pd.Series:
    """Vectorised :func:`derive_report_date` over a frame."""
    spec = schema.report_date
    if spec is None:
        raise DataError("schema defines no report date")
    result = pd.Series(first_submission, index=df.index, dtype=object)
    for col in (spec.form_field, spec.target, spec.first_seen_field):
        if col and col in df.columns:
            fill = df[col].where(df[col] != NA, "")
            result = result.where(result != "", fill)
    missing = result == ""
    if missing.any():
        row = int(np.flatnonzero(missing.to_numpy())[0])
        raise DataError(f"row {row + 1}: no derivable report date")
    return result


# ---------------------------------------------------------------------------
# de-duplication


def _blank_key(df: pd.DataFrame, key: Sequence[str]) -> pd.Series:
    blank = pd.Series(True, index=df.index)
    for k in key:
        blank &= df[k] == ""
    return blank


def dedup_positions(df: pd.DataFrame, key: Sequence[str], submission: np.ndarray) -> np.ndarray:
    """Row positions surviving de-duplication, ascending.

    Per key the row with the latest submission date survives; ties go to the
    later row. Rows whose key is entirely blank cannot be matched and are kept.
    """
    missing = [k for k in key if k not in df.columns]
    if missing:
        raise DataError(f"dedup key column(s) missing: {', '.join(missing)}")
    n = len(df)
    if n == 0:
        return np.array([], dtype=np.int64)
    frame = df[list(key)].copy()
    frame["__sub"] = np.asarray(submission, dtype=object)
    frame["__pos"] = np.arange(n)
    blank = _blank_key(df, key).to_numpy()
    keyed = frame[~blank].sort_values(["__sub", "__pos"], kind="mergesort")
    winners = keyed.drop_duplicates(subset=list(key), keep="last")["__pos"].to_numpy()
    keep = np.concatenate([winners, np.flatnonzero(blank)])
    return np.sort(keep).astype(np.int64)


def deduplicate(df: pd.DataFrame, key: Sequence[str], submission: Sequence[str] | np.ndarray) -> pd.DataFrame:
    pos = dedup_positions(df, key, np.asarray(submission, dtype=object))
    return df.iloc[pos].reset_index(drop=True)


# ---------------------------------------------------------------------------
# release window


def window_cutoff(release_date: date, delay_days: int) -> date:
    return release_date - timedelta(days=delay_days)


def window_mask(df: pd.DataFrame, release_date: date, delay_days: int,
                field: str = "cdc_report_dt") -> np.ndarray:
    if len(df) == 0:
        return np.zeros(0, dtype=bool)
    if field not in df.columns:
        raise DataError(f"release window needs column {field}")
    col = df[field]
    missing = (col == "") | (col == NA)
    if missing.any():
        row = int(np.flatnonzero(missing.to_numpy())[0])
        raise DataError(f"row {row + 1}: missing {field}")
    return (col <= window_cutoff(release_date, delay_days).isoformat()).to_numpy()


def apply_release_window(df: pd.DataFrame, release_date: date, delay_days: int,
                         field: str = "cdc_report_dt") -> pd.DataFrame:
    """Keep rows reported on or before ``release_date - delay_days``."""
    mask = window_mask(df, release_date, delay_days, field)
    return df[mask].reset_index(drop=True)
