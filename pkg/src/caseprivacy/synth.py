"""Seeded synthetic raw case data shaped like jurisdiction submissions.

Distributions are skewed (a few large states and counties, many small ones)
so that suppression has real work to do. Nothing here is drawn from real
case records.
"""
from __future__ import annotations

import csv
from datetime import date, timedelta
from importlib import resources

import numpy as np
import pandas as pd

from .schema import Schema

SEXES = ["Female", "Male", "Unknown", "Other", ""]
SEX_P = [0.50, 0.46, 0.025, 0.005, 0.01]
RACES = ["White", "Black", "Asian", "American Indian/Alaska Native",
         "Native Hawaiian/Other Pacific Islander", "Multiple/Other", "Unknown"]
RACE_P = [0.52, 0.16, 0.05, 0.012, 0.003, 0.035, 0.22]
ETHNICITIES = ["Non-Hispanic/Latino", "Hispanic/Latino", "Unknown", ""]
ETH_P = [0.55, 0.22, 0.18, 0.05]
YN = ["Yes", "No", "Unknown", ""]
STATUS = ["Laboratory-confirmed case", "Probable Case"]


def _counties() -> pd.DataFrame:
    ref = resources.files("caseprivacy") / "data" / "county_fips.csv"
    with ref.open("r", encoding="utf-8", newline="") as fh:
        return pd.DataFrame(list(csv.DictReader(fh)))


def _zipf(n: int, s: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** s
    return w / w.sum()


def _dates(rng: np.random.Generator, start: date, days: int, n: int) -> np.ndarray:
    # Epidemic-curve-like: more cases later in the window.
    offs = (days * rng.beta(2.2, 1.3, n)).astype(np.int64)
    base = np.datetime64(start.isoformat())
    return np.datetime_as_string(base + offs.astype("timedelta64[D]"), unit="D").astype(object)


def _choice(rng: np.random.Generator, values: list[str], p: list[float], n: int) -> np.ndarray:
    p_arr = np.asarray(p, dtype=float)
    return np.asarray(values, dtype=object)[rng.choice(len(values), size=n, p=p_arr / p_arr.sum())]


def synthesize(schema: Schema, n: int, seed: int = 0, start: date = date(2020, 3, 1),
               end: date = date(2020, 11, 30), duplicate_rate: float = 0.0) -> pd.DataFrame:
    """``n`` raw rows using the schema's input columns, fully determined by ``seed``.

    With ``duplicate_rate`` > 0 that share of rows re-uses an earlier
    ``case_id`` (an updated record for the same case).
    """
    rng = np.random.default_rng(seed)
    days = (end - start).days
    cols = sorted(schema.input_columns, key=_column_rank(schema))
    out: dict[str, np.ndarray] = {}

    ids = np.arange(1, n + 1)
    if duplicate_rate > 0 and n > 1:
        dup = rng.random(n) < duplicate_rate
        dup[0] = False
        ids[dup] = rng.integers(1, np.maximum(np.flatnonzero(dup), 1) + 1)
    out["case_id"] = np.char.add("C", np.char.zfill(ids.astype(str), 9)).astype(object)

    report = _dates(rng, start, days, n)
    out["report_dt"] = np.where(rng.random(n) < 0.03, "", report).astype(object)
    lag = rng.integers(0, 4, n).astype("timedelta64[D]")
    out["first_seen_dt"] = np.datetime_as_string(report.astype("datetime64[D]") + lag, unit="D").astype(object)
    onset = report.astype("datetime64[D]") - rng.integers(0, 10, n).astype("timedelta64[D]")
    out["onset_dt"] = np.where(rng.random(n) < 0.45, "", np.datetime_as_string(onset, unit="D")).astype(object)
    spec = report.astype("datetime64[D]") - rng.integers(0, 6, n).astype("timedelta64[D]")
    out["pos_spec_dt"] = np.where(rng.random(n) < 0.35, "", np.datetime_as_string(spec, unit="D")).astype(object)
    out["cdc_report_dt"] = np.full(n, "", dtype=object)

    ages = np.clip(rng.gamma(3.2, 13.0, n), 0, 104).astype(np.int64)
    age_s = ages.astype(str).astype(object)
    age_s[rng.random(n) < 0.02] = ""
    out["age_yrs"] = age_s
    out["dob"] = np.full(n, "", dtype=object)

    out["sex"] = _choice(rng, SEXES, SEX_P, n)
    race = _choice(rng, RACES, RACE_P, n)
    multi = rng.random(n) < 0.01
    race[multi] = "White;" + _choice(rng, RACES[1:5], [1, 1, 1, 1], int(multi.sum()))
    race[rng.random(n) < 0.04] = ""
    out["race"] = race
    out["ethnicity"] = _choice(rng, ETHNICITIES, ETH_P, n)
    out["current_status"] = _choice(rng, STATUS, [0.93, 0.07], n)

    for name in cols:
        if name.endswith("_yn") and name not in out:
            p = [0.06, 0.55, 0.24, 0.15] if name != "hc_work_yn" else [0.04, 0.52, 0.30, 0.14]
            out[name] = _choice(rng, YN, p, n)

    if "res_state" in cols or "res_county" in cols:
        table = _counties()
        states = sorted(table["state"].unique())
        state_w = dict(zip(rng.permutation(states), _zipf(len(states), 0.9)))
        w = np.empty(len(table))
        for st, idx in table.groupby("state").indices.items():
            w[idx] = state_w[st] * _zipf(len(idx), 1.1)[rng.permutation(len(idx))]
        pick = rng.choice(len(table), size=n, p=w / w.sum())
        st = table["state"].to_numpy(dtype=object)[pick]
        county = table["census_name"].to_numpy(dtype=object)[pick]
        # Submitted spellings vary in case and suffix.
        style = rng.random(n)
        county = np.where(style < 0.3, np.char.upper(county.astype(str)), county).astype(object)
        bare = style > 0.85
        county[bare] = table["county"].to_numpy(dtype=object)[pick][bare]
        county[rng.random(n) < 0.06] = ""
        out["jurisdiction"] = st.copy()
        st = st.copy()
        st[rng.random(n) < 0.02] = ""
        out["res_state"] = st
        out["res_county"] = county

    frame = pd.DataFrame({name: out[name] for name in sorted(cols, key=_column_rank(schema)) if name in out})
    return frame


def _column_rank(schema: Schema):
    order = {name: i for i, name in enumerate(f.name for f in schema.source_fields + schema.fields)}
    return lambda name: order.get(name, len(order))


def write_submissions(schema: Schema, directory, days: int, rows_per_day: int, seed: int = 0,
                      first_day: date = date(2020, 11, 1), duplicate_rate: float = 0.05) -> list[dict]:
    """Write one CSV per submission day plus ``manifest.json`` entries; later
    files repeat some earlier case ids as updates."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    pool = synthesize(schema, days * rows_per_day, seed=seed, duplicate_rate=0.0)
    rng = np.random.default_rng(seed + 1)
    for d in range(days):
        part = pool.iloc[d * rows_per_day:(d + 1) * rows_per_day].copy()
        if d and duplicate_rate > 0 and "case_id" in part.columns:
            redo = rng.random(len(part)) < duplicate_rate
            earlier = pool["case_id"].to_numpy()[: d * rows_per_day]
            part.loc[redo, "case_id"] = rng.choice(earlier, int(redo.sum()))
        name = f"submission_{d + 1:03d}.csv"
        part.to_csv(directory / name, index=False, lineterminator="\n")
        entries.append({"path": name, "submission_date": (first_day + timedelta(days=d)).isoformat(),
                        "label": f"day {d + 1}"})
    return entries
