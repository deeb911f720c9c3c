"""k-anonymity and l-diversity local cell suppression.

Cells are replaced by ``NA``; rows are never removed. ``NA`` is an ordinary
category when grouping, so a suppressed row only shares a class with rows
carrying the same values and the same suppressed pattern.

The k-phase uses a retained-projection greedy search. Rows in classes
smaller than k form a pool. Suppression subsets S of the quasi-identifiers
are tried by increasing size (ties: later-listed fields first). For each S,
pooled rows are grouped on the fields they keep; a group is committed when
it has at least k rows, or when its suppressed signature already names a
class of rows outside the pool (which has at least k members). Anything left
after suppressing every quasi-identifier is topped up from committed rows,
or the instance is infeasible.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import pandas as pd

from ..errors import InfeasibleError
from ..schema import NA, Schema
from . import kernels

logger = logging.getLogger(__name__)

K_ANONYMITY = "k_anonymity"
L_DIVERSITY = "l_diversity"

_RADIX_LIMIT = 1 << 62


@dataclass(frozen=True)
class EquivalenceClass:
    signature: tuple[str, ...]
    members: np.ndarray
    frequency: int


@dataclass(frozen=True)
class SuppressionAction:
    row: int
    field: str
    reason: str
    prior_value: str | None = None


@dataclass
class SuppressionPlan:
    """Column-oriented list of suppression actions.

    ``prior`` keeps the replaced values for in-process reporting; it is never
    written to disk.
    """

    rows: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    fields: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=object))
    reasons: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=object))
    prior: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=object))
    infeasible: bool = False

    def __post_init__(self) -> None:
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.fields = np.asarray(self.fields, dtype=object)
        self.reasons = np.asarray(self.reasons, dtype=object)
        if len(self.prior) != len(self.rows):
            self.prior = np.full(len(self.rows), None, dtype=object)
        self.prior = np.asarray(self.prior, dtype=object)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[SuppressionAction]:
        for r, f, why, p in zip(self.rows, self.fields, self.reasons, self.prior):
            yield SuppressionAction(int(r), str(f), str(why), p)

    @classmethod
    def from_actions(cls, actions: Sequence[SuppressionAction]) -> SuppressionPlan:
        return cls(
            rows=np.array([a.row for a in actions], dtype=np.int64),
            fields=np.array([a.field for a in actions], dtype=object),
            reasons=np.array([a.reason for a in actions], dtype=object),
            prior=np.array([a.prior_value for a in actions], dtype=object),
        )

    def cells(self) -> set[tuple[int, str]]:
        return set(zip(self.rows.tolist(), self.fields.tolist()))

    def counts_by_field(self) -> dict[str, int]:
        if len(self) == 0:
            return {}
        names, counts = np.unique(self.fields.astype(str), return_counts=True)
        return dict(zip(names.tolist(), counts.tolist()))

    def __add__(self, other: SuppressionPlan) -> SuppressionPlan:
        plan = SuppressionPlan(
            rows=np.concatenate([self.rows, other.rows]),
            fields=np.concatenate([self.fields, other.fields]),
            reasons=np.concatenate([self.reasons, other.reasons]),
            prior=np.concatenate([self.prior, other.prior]),
            infeasible=self.infeasible or other.infeasible,
        )
        if len(plan.cells()) != len(plan):
            raise ValueError("plans overlap: duplicate (row, field) actions")
        return plan

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"row": self.rows, "field": self.fields.astype(str), "reason": self.reasons.astype(str)})

    def write_audit(self, path: str | Path) -> None:
        """Audit file: one line per action (row, field, reason). Prior values are
        not written."""
        self.to_frame().to_csv(path, index=False, lineterminator="\n")

    @classmethod
    def read_audit(cls, path: str | Path) -> SuppressionPlan:
        df = pd.read_csv(path, dtype={"row": np.int64, "field": str, "reason": str}, keep_default_na=False)
        return cls(rows=df["row"].to_numpy(), fields=df["field"].to_numpy(object),
                   reasons=df["reason"].to_numpy(object))


# ---------------------------------------------------------------------------
# encoding


@dataclass
class _Encoded:
    codes: np.ndarray          # (n, q) int64
    uniques: list[np.ndarray]  # per column, code -> value
    na_codes: np.ndarray       # (q,) code of NA per column
    cards: np.ndarray          # (q,) number of codes per column


def _encode(df: pd.DataFrame, columns: Sequence[str]) -> _Encoded:
    n, q = len(df), len(columns)
    codes = np.empty((n, q), dtype=np.int64)
    uniques: list[np.ndarray] = []
    na_codes = np.empty(q, dtype=np.int64)
    for j, col in enumerate(columns):
        c, u = pd.factorize(df[col].to_numpy(dtype=object), sort=False)
        u = np.asarray(u, dtype=object)
        hit = np.flatnonzero(u == NA)
        if hit.size:
            na_codes[j] = hit[0]
        else:
            na_codes[j] = len(u)
            u = np.append(u, NA).astype(object)
        codes[:, j] = c
        uniques.append(u)
    cards = np.array([len(u) for u in uniques], dtype=np.int64)
    return _Encoded(codes, uniques, na_codes, cards)


def _row_keys(codes: np.ndarray, cards: np.ndarray) -> np.ndarray:
    """One int64 per row, equal iff the code rows are equal."""
    n, q = codes.shape
    if q == 0:
        return np.zeros(n, dtype=np.int64)
    key = codes[:, 0].astype(np.int64, copy=True)
    span = int(cards[0])
    for j in range(1, q):
        if span * int(cards[j]) >= _RADIX_LIMIT:
            key, counts = kernels.group_first_seen(key)
            span = len(counts)
        key = key * int(cards[j]) + codes[:, j]
        span *= int(cards[j])
    return key


def class_ids(df: pd.DataFrame, qi_order: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Hash-partition rows by signature: (class id per row, class sizes).
    Ids are numbered by first appearance."""
    if len(df) == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    enc = _encode(df, qi_order)
    return kernels.group_first_seen(_row_keys(enc.codes, enc.cards))


def compute_classes(df: pd.DataFrame, qi_order: Sequence[str]) -> list[EquivalenceClass]:
    """Partition rows by quasi-identifier signature, in lexicographic signature order."""
    if len(df) == 0:
        return []
    ids, counts = class_ids(df, qi_order)
    order = np.argsort(ids, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(counts)])
    reps = order[bounds[:-1]]
    sigs = [tuple(df[c].iloc[reps].tolist()) for c in qi_order]
    signatures = list(zip(*sigs)) if sigs else [()] * len(counts)
    classes = [
        EquivalenceClass(tuple(signatures[g]), order[bounds[g]:bounds[g + 1]], int(counts[g]))
        for g in range(len(counts))
    ]
    classes.sort(key=lambda c: c.signature)
    return classes


# ---------------------------------------------------------------------------
# k-phase


def suppression_subsets(q: int) -> list[tuple[int, ...]]:
    """Non-empty subsets of range(q): by size, then later-listed fields first."""
    out: list[tuple[int, ...]] = []
    for size in range(1, q + 1):
        subs = [tuple(sorted(c, reverse=True)) for c in combinations(range(q), size)]
        subs.sort(reverse=True)
        out.extend(subs)
    return out


def _greedy(enc: _Encoded, pool: np.ndarray, outside: np.ndarray, k: int) -> tuple[np.ndarray, bool]:
    """Suppression bitmask per pooled row. Returns (masks, feasible)."""
    q = enc.codes.shape[1]
    pool_codes = enc.codes[pool]
    masks = np.zeros(len(pool), dtype=np.int64)
    remaining = np.arange(len(pool))

    # Distinct signatures of rows outside the pool; all have >= k members.
    if outside.size:
        out_ids, _ = kernels.group_first_seen(_row_keys(enc.codes[outside], enc.cards))
        _, first = np.unique(out_ids, return_index=True)
        sigs = enc.codes[outside][first]
    else:
        sigs = np.empty((0, q), dtype=np.int64)

    # (mask, pooled positions, target group id) per round, for backfill
    rounds: list[tuple[int, np.ndarray, np.ndarray]] = []
    all_mask = (1 << q) - 1
    for subset in suppression_subsets(q):
        if remaining.size == 0:
            break
        bit = sum(1 << j for j in subset)
        cols = list(subset)
        targets = pool_codes[remaining]
        targets[:, cols] = enc.na_codes[cols]
        m = len(sigs)
        ids, counts = kernels.group_first_seen(_row_keys(np.vstack([sigs, targets]), enc.cards))
        tid = ids[m:]
        joined = tid < m
        take = joined | (counts[tid] >= k)
        if not take.any():
            continue
        masks[remaining[take]] = bit
        rounds.append((bit, remaining[take], tid[take]))
        new = take & ~joined
        if new.any():
            _, first_idx = np.unique(tid[new], return_index=True)
            sigs = np.vstack([sigs, targets[new][first_idx]])
        remaining = remaining[~take]
        if bit == all_mask:
            break

    if remaining.size == 0:
        return masks, True

    # Leftovers can only take the all-NA signature, whose class is too small.
    masks[remaining] = all_mask
    feasible = _backfill(enc, pool, masks, rounds, remaining.size, k)
    return masks, feasible


def _backfill(enc: _Encoded, pool: np.ndarray, masks: np.ndarray,
              rounds: list[tuple[int, np.ndarray, np.ndarray]], leftover: int, k: int) -> bool:
    """Move committed pooled rows into the all-NA class until it reaches k,
    then sweep any class that fell below k into it as well."""
    q = enc.codes.shape[1]
    all_mask = (1 << q) - 1
    groups: list[tuple[int, int, np.ndarray]] = []  # (extra cells per row, -round, rows)
    for i, (bit, rows, tid) in enumerate(rounds):
        if bit == all_mask:
            continue
        order = np.argsort(tid, kind="stable")
        splits = np.flatnonzero(np.diff(tid[order])) + 1
        for part in np.split(rows[order], splits):
            groups.append((q - bin(bit).count("1"), -i, part))
    groups.sort(key=lambda g: (g[0], g[1]))

    need = k - leftover
    for _, _, rows in groups:
        if need <= 0:
            break
        take = rows[-need:] if need < len(rows) else rows
        masks[take] = all_mask
        need -= len(take)

    codes = enc.codes.copy()
    for _ in range(len(pool) + 1):
        codes[pool] = _apply_masks(enc.codes[pool], masks, enc.na_codes)
        ids, counts = kernels.group_first_seen(_row_keys(codes, enc.cards))
        broken = (counts[ids[pool]] < k) & (masks != all_mask)
        if not broken.any():
            break
        masks[broken] = all_mask
    codes[pool] = _apply_masks(enc.codes[pool], masks, enc.na_codes)
    ids, counts = kernels.group_first_seen(_row_keys(codes, enc.cards))
    return bool((counts >= k).all())


def _apply_masks(codes: np.ndarray, masks: np.ndarray, na_codes: np.ndarray) -> np.ndarray:
    out = codes.copy()
    for j in range(codes.shape[1]):
        hit = (masks >> j) & 1 == 1
        out[hit, j] = na_codes[j]
    return out


def plan_k_suppression(df: pd.DataFrame, schema: Schema, allow_infeasible: bool = False) -> SuppressionPlan:
    """Cells to suppress so every quasi-identifier class has at least k rows.

    Only rows in classes smaller than k receive actions. Fields configured
    with ``suppress_with`` are suppressed alongside their sources.
    """
    k = schema.thresholds.k
    qi = list(schema.qi_order)
    if len(df) == 0:
        return SuppressionPlan()
    enc = _encode(df, qi)
    ids, counts = kernels.group_first_seen(_row_keys(enc.codes, enc.cards))
    violating = counts[ids] < k
    pool = np.flatnonzero(violating)
    if pool.size == 0:
        return SuppressionPlan()
    outside = np.flatnonzero(~violating)

    masks, feasible = _greedy(enc, pool, outside, k)
    infeasible = False
    if not feasible:
        if not allow_infeasible:
            raise InfeasibleError(
                f"insufficient records for k-anonymity: {pool.size} row(s) violate k={k} "
                "and cannot be grouped even with every quasi-identifier suppressed"
            )
        logger.warning("k-anonymity is infeasible; releasing %d row(s) with every quasi-identifier "
                       "suppressed. The output will FAIL verification.", pool.size)
        masks[:] = (1 << len(qi)) - 1
        infeasible = True

    rows_l: list[np.ndarray] = []
    fields_l: list[np.ndarray] = []
    prior_l: list[np.ndarray] = []
    for j, name in enumerate(qi):
        hit = (masks >> j) & 1 == 1
        r = pool[hit]
        vals = df[name].to_numpy(dtype=object)[r]
        live = vals != NA
        rows_l.append(r[live])
        fields_l.append(np.full(int(live.sum()), name, dtype=object))
        prior_l.append(vals[live])
    plan = _assemble(rows_l, fields_l, prior_l, K_ANONYMITY, schema)
    plan = plan + _linked_actions(df, schema, plan)
    plan.infeasible = infeasible
    return plan


def _assemble(rows_l: list[np.ndarray], fields_l: list[np.ndarray], prior_l: list[np.ndarray],
              reason: str, schema: Schema) -> SuppressionPlan:
    if not rows_l:
        return SuppressionPlan()
    rows = np.concatenate(rows_l)
    fields = np.concatenate(fields_l)
    prior = np.concatenate(prior_l)
    pos = {name: i for i, name in enumerate(schema.field_names)}
    fpos = np.array([pos.get(f, len(pos)) for f in fields], dtype=np.int64)
    order = np.lexsort((fpos, rows))
    return SuppressionPlan(rows[order], fields[order], np.full(len(rows), reason, dtype=object), prior[order])


def _linked_actions(df: pd.DataFrame, schema: Schema, plan: SuppressionPlan) -> SuppressionPlan:
    """Actions for derived fields whose sources were suppressed."""
    rows_l, fields_l, prior_l = [], [], []
    for spec in schema.fields:
        if not spec.suppress_with or spec.name not in df.columns:
            continue
        src = np.isin(plan.fields, list(spec.suppress_with))
        r = np.unique(plan.rows[src])
        vals = df[spec.name].to_numpy(dtype=object)[r]
        live = vals != NA
        rows_l.append(r[live])
        fields_l.append(np.full(int(live.sum()), spec.name, dtype=object))
        prior_l.append(vals[live])
    return _assemble(rows_l, fields_l, prior_l, K_ANONYMITY, schema)


def apply_plan(df: pd.DataFrame, plan: SuppressionPlan) -> pd.DataFrame:
    """Set every targeted cell to NA; nothing else changes."""
    out = df.copy()
    if len(plan) == 0:
        return out
    n = len(df)
    if plan.rows.min() < 0 or plan.rows.max() >= n:
        raise IndexError(f"suppression plan targets a row outside 0..{n - 1}")
    for name in pd.unique(plan.fields):
        if name not in out.columns:
            raise KeyError(f"suppression plan targets unknown field {name!r}")
        rows = plan.rows[plan.fields == name]
        col = out[name].to_numpy(dtype=object).copy()
        col[rows] = NA
        out[name] = col
    return out


# ---------------------------------------------------------------------------
# l-phase


def concrete_mask(values: np.ndarray, missing_label: str | None) -> np.ndarray:
    """True where a confidential value discloses something (not blank, not
    NA, not the missing label)."""
    bad = (values == "") | (values == NA)
    if missing_label:
        bad |= values == missing_label
    return ~bad


def plan_l_suppression(df: pd.DataFrame, schema: Schema) -> SuppressionPlan:
    """Suppress a confidential field for a whole class when the class shows
    fewer than l distinct concrete values of it. Classes with no concrete
    value are left alone."""
    l_req = schema.thresholds.l
    if len(df) == 0 or l_req <= 1:
        return SuppressionPlan()
    ids, counts = class_ids(df, schema.qi_order)
    rows_l, fields_l, prior_l = [], [], []
    for name in schema.confidential_fields:
        if name not in df.columns:
            continue
        spec = schema.field(name)
        vals = df[name].to_numpy(dtype=object)
        live = concrete_mask(vals, spec.missing_label)
        codes, _ = pd.factorize(vals, sort=False)
        codes = np.where(live, codes, -1).astype(np.int64)
        distinct = kernels.count_distinct(ids, codes, len(counts))
        weak = (distinct > 0) & (distinct < l_req)
        hit = weak[ids] & live
        r = np.flatnonzero(hit)
        rows_l.append(r)
        fields_l.append(np.full(len(r), name, dtype=object))
        prior_l.append(vals[r])
    return _assemble(rows_l, fields_l, prior_l, L_DIVERSITY, schema)


def suppress(df: pd.DataFrame, schema: Schema, allow_infeasible: bool = False) -> tuple[pd.DataFrame, SuppressionPlan]:
    """Run the k-phase then the l-phase; returns the released frame and the
    combined plan."""
    k_plan = plan_k_suppression(df, schema, allow_infeasible=allow_infeasible)
    after_k = apply_plan(df, k_plan)
    l_plan = plan_l_suppression(after_k, schema)
    return apply_plan(after_k, l_plan), k_plan + l_plan
