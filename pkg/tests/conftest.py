from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from caseprivacy.ingest import read_dataset
from caseprivacy.schema import load_bundled, load_schema, parse_schema

DATA = Path(__file__).parent / "data"
sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def public():
    return load_bundled("public_use")


@pytest.fixture(scope="session")
def scientific():
    return load_bundled("scientific_use")


@pytest.fixture(scope="session")
def figure_k_schema():
    return load_schema(DATA / "figure_k_schema.json")


@pytest.fixture(scope="session")
def figure_l_schema():
    return load_schema(DATA / "figure_l_schema.json")


@pytest.fixture
def figure_k(figure_k_schema):
    return (read_dataset(DATA / "figure_k_raw.csv", figure_k_schema),
            read_dataset(DATA / "figure_k_suppressed.csv", figure_k_schema))


@pytest.fixture
def figure_l(figure_l_schema):
    return (read_dataset(DATA / "figure_l_raw.csv", figure_l_schema),
            read_dataset(DATA / "figure_l_suppressed.csv", figure_l_schema))


def make_schema(domains, k=5, l=2, confidential=True):  # noqa: E741
    """Schema with QIs q0..q{n-1} over values v0..v{d-1}, plus date field c."""
    fields = [
        {"name": f"q{i}", "class": "quasi_identifier", "type": "category",
         "domain": [f"v{j}" for j in range(d)]}
        for i, d in enumerate(domains)
    ]
    if confidential:
        fields.append({"name": "c", "class": "confidential", "type": "date"})
    return parse_schema({"name": "random", "thresholds": {"k": k, "l": l}, "dedup_key": [],
                         "report_date": None, "fields": fields})


CONF_VALUES = ["2020-03-01", "2020-03-02", "2020-03-03", "2020-03-04", ""]


def random_dataset(rng: np.random.Generator, n: int, domains, skew: float = 1.0,
                   confidential: bool = True) -> pd.DataFrame:
    cols = {}
    for i, d in enumerate(domains):
        w = 1.0 / np.arange(1, d + 1) ** skew
        cols[f"q{i}"] = np.array([f"v{j}" for j in range(d)], dtype=object)[rng.choice(d, n, p=w / w.sum())]
    if confidential:
        cols["c"] = np.array(CONF_VALUES, dtype=object)[rng.choice(len(CONF_VALUES), n)]
    return pd.DataFrame(cols)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
