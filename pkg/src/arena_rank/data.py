"""Pairwise comparison count data: parsing, validation, transforms and splits.

A dataset stores one record per compared unordered pair ``{i, j}`` with
``i < j``: the number of times ``i`` beat ``j``, the number of times ``j``
beat ``i``, and the number of ties.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt

FIELDS = ("model_a", "model_b", "wins_a", "wins_b", "ties")


class DataError(ValueError):
    """Raised for malformed or invalid comparison data."""


class DisconnectedError(DataError):
    """Raised when the comparison graph is not connected."""

    def __init__(self, components: list[list[str]]):
        self.components = components
        listing = "; ".join("{" + ", ".join(c) + "}" for c in components)
        super().__init__(f"comparison graph is disconnected: {len(components)} components: {listing}")


@dataclass(frozen=True)
class ComparisonDataset:
    """Competitor roster plus per-pair win/loss/tie counts.

    ``i[k] < j[k]`` index into ``competitors``; ``wins_i[k]`` counts wins of
    ``i[k]`` over ``j[k]``, ``wins_j[k]`` the reverse, ``ties[k]`` the ties.
    """

    competitors: tuple[str, ...]
    i: npt.NDArray[np.int64]
    j: npt.NDArray[np.int64]
    wins_i: npt.NDArray[np.float64]
    wins_j: npt.NDArray[np.float64]
    ties: npt.NDArray[np.float64]

    @property
    def m(self) -> int:
        return len(self.competitors)

    @property
    def n_pairs(self) -> int:
        return int(self.i.shape[0])

    @property
    def n_ij(self) -> npt.NDArray[np.float64]:
        return self.wins_i + self.wins_j + self.ties

    @property
    def total(self) -> float:
        return float(self.n_ij.sum())

    def index(self, name: str) -> int:
        try:
            return self.competitors.index(name)
        except ValueError:
            raise KeyError(name) from None

    def win_matrix(self) -> npt.NDArray[np.float64]:
        """Dense ``W`` with ``W[i, j]`` the wins of ``i`` over ``j``."""
        w = np.zeros((self.m, self.m))
        w[self.i, self.j] = self.wins_i
        w[self.j, self.i] = self.wins_j
        return w

    def tie_matrix(self) -> npt.NDArray[np.float64]:
        t = np.zeros((self.m, self.m))
        t[self.i, self.j] = self.ties
        t[self.j, self.i] = self.ties
        return t

    def records(self) -> list[dict[str, object]]:
        out = []
        for a, b, wa, wb, t in zip(self.i, self.j, self.wins_i, self.wins_j, self.ties):
            out.append({
                "model_a": self.competitors[a],
                "model_b": self.competitors[b],
                "wins_a": _plain_number(wa),
                "wins_b": _plain_number(wb),
                "ties": _plain_number(t),
            })
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ComparisonDataset):
            return NotImplemented
        return (
            self.competitors == other.competitors
            and np.array_equal(self.i, other.i)
            and np.array_equal(self.j, other.j)
            and np.array_equal(self.wins_i, other.wins_i)
            and np.array_equal(self.wins_j, other.wins_j)
            and np.array_equal(self.ties, other.ties)
        )

    __hash__ = None  # type: ignore[assignment]


def _plain_number(x: float) -> int | float:
    x = float(x)
    return int(x) if x.is_integer() else x


def from_arrays(competitors: Sequence[str], i, j, wins_i, wins_j, ties) -> ComparisonDataset:
    """Build a dataset from parallel arrays, sorting pairs by ``(i, j)``.

    Each pair must satisfy ``i < j``; use :func:`parse_dataset` for raw rows.
    """
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    order = np.lexsort((j, i))
    return ComparisonDataset(
        competitors=tuple(competitors),
        i=i[order],
        j=j[order],
        wins_i=np.asarray(wins_i, dtype=np.float64)[order],
        wins_j=np.asarray(wins_j, dtype=np.float64)[order],
        ties=np.asarray(ties, dtype=np.float64)[order],
    )


def _count(value: object, row: int, field: str) -> float:
    if isinstance(value, bool):
        raise DataError(f"row {row}: non-numeric {field}: {value!r}")
    try:
        x = float(value)  # type: ignore[arg-type]
    except (TypeError, ValueError):
        raise DataError(f"row {row}: non-numeric {field}: {value!r}") from None
    if not math.isfinite(x):
        raise DataError(f"row {row}: non-finite {field}: {value!r}")
    if x < 0:
        raise DataError(f"row {row}: negative {field}: {value!r}")
    return x


def parse_dataset(rows: Iterable[Sequence[object] | Mapping[str, object]]) -> ComparisonDataset:
    """Parse ``(model_a, model_b, wins_a, wins_b, ties)`` rows.

    Rows may be 5-sequences or mappings with the five keys. The roster is
    kept in first-appearance order. Rows naming the same unordered pair are
    merged by summing counts (swapping wins when the orientation is
    reversed), and pairs with no comparisons are dropped.
    """
    names: dict[str, int] = {}
    merged: dict[tuple[int, int], list[float]] = {}

    for r, row in enumerate(rows):
        if isinstance(row, Mapping):
            missing = [f for f in FIELDS if f not in row]
            if missing:
                raise DataError(f"row {r}: missing fields {missing}")
            values = [row[f] for f in FIELDS]
        else:
            values = list(row)
            if len(values) != 5:
                raise DataError(f"row {r}: expected 5 fields, got {len(values)}")

        a, b = str(values[0]).strip(), str(values[1]).strip()
        if not a or not b:
            raise DataError(f"row {r}: empty competitor name")
        if a == b:
            raise DataError(f"row {r}: self-comparison of {a!r}")
        wa = _count(values[2], r, "wins_a")
        wb = _count(values[3], r, "wins_b")
        t = _count(values[4], r, "ties")

        ia = names.setdefault(a, len(names))
        ib = names.setdefault(b, len(names))
        if ia > ib:
            ia, ib, wa, wb = ib, ia, wb, wa
        acc = merged.setdefault((ia, ib), [0.0, 0.0, 0.0])
        acc[0] += wa
        acc[1] += wb
        acc[2] += t

    keys = [k for k, c in merged.items() if sum(c) > 0]
    return from_arrays(
        list(names),
        [k[0] for k in keys],
        [k[1] for k in keys],
        [merged[k][0] for k in keys],
        [merged[k][1] for k in keys],
        [merged[k][2] for k in keys],
    )


def parse_csv(text: str) -> ComparisonDataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("empty CSV input") from None
    if tuple(header) != FIELDS:
        raise DataError(f"CSV header must be {','.join(FIELDS)}, got {','.join(header)}")
    return parse_dataset(row for row in reader if row)


def parse_json(text: str) -> ComparisonDataset:
    try:
        rows = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON: {exc}") from None
    if not isinstance(rows, list) or not all(isinstance(r, dict) for r in rows):
        raise DataError("JSON input must be an array of objects")
    return parse_dataset(rows)


def read_dataset(path: str | Path) -> ComparisonDataset:
    """Read a CSV or JSON count file; JSON is detected by a leading ``[``."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("["):
        return parse_json(text)
    return parse_csv(text)


def to_csv(data: ComparisonDataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FIELDS)
    for rec in data.records():
        writer.writerow([rec[f] for f in FIELDS])
    return buf.getvalue()


def to_json(data: ComparisonDataset) -> str:
    return json.dumps(data.records(), indent=1)


def write_dataset(data: ComparisonDataset, path: str | Path) -> None:
    path = Path(path)
    text = to_json(data) if path.suffix.lower() == ".json" else to_csv(data)
    path.write_text(text, encoding="utf-8")


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    errors: tuple[str, ...]
    components: tuple[tuple[str, ...], ...]

    def raise_for_errors(self) -> None:
        if self.ok:
            return
        if len(self.components) > 1:
            raise DisconnectedError([list(c) for c in self.components])
        raise DataError("; ".join(self.errors))


def components(data: ComparisonDataset) -> list[list[int]]:
    """Connected components of the pair graph, each sorted, in order of smallest member."""
    parent = list(range(data.m))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in zip(data.i.tolist(), data.j.tolist()):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    groups: dict[int, list[int]] = {}
    for v in range(data.m):
        groups.setdefault(find(v), []).append(v)
    return sorted(groups.values(), key=lambda g: g[0])


def validate(data: ComparisonDataset) -> ValidationReport:
    """Check the dataset invariants, including connectivity of the pair graph."""
    errors = []
    if len(set(data.competitors)) != data.m:
        errors.append("duplicate competitor names")
    if data.m < 2:
        errors.append("at least two competitors are required")
    if data.n_pairs:
        if data.i.min() < 0 or data.j.max() >= data.m:
            errors.append("pair index out of range")
        if np.any(data.i >= data.j):
            errors.append("pair records must satisfy i < j")
        keys = set(zip(data.i.tolist(), data.j.tolist()))
        if len(keys) != data.n_pairs:
            errors.append("duplicate pair records")
    for name in ("wins_i", "wins_j", "ties"):
        arr = getattr(data, name)
        if np.any(~np.isfinite(arr)):
            errors.append(f"non-finite {name} count")
        elif np.any(arr < 0):
            errors.append(f"negative {name} count")
    if data.n_pairs and np.any(data.n_ij <= 0):
        errors.append("pair with zero comparisons")

    comps: tuple[tuple[str, ...], ...] = ()
    if not errors:
        groups = components(data)
        comps = tuple(tuple(data.competitors[v] for v in g) for g in groups)
        if len(groups) > 1:
            errors.append("comparison graph is disconnected")
    return ValidationReport(ok=not errors, errors=tuple(errors), components=comps)


def collapse_ties(data: ComparisonDataset) -> ComparisonDataset:
    """Count each tie as half a win for both sides."""
    half = data.ties / 2.0
    return ComparisonDataset(
        competitors=data.competitors,
        i=data.i.copy(),
        j=data.j.copy(),
        wins_i=data.wins_i + half,
        wins_j=data.wins_j + half,
        ties=np.zeros_like(data.ties),
    )


def drop_ties(data: ComparisonDataset) -> ComparisonDataset:
    """Discard tie counts, removing pairs left with no decisive outcomes."""
    keep = (data.wins_i + data.wins_j) > 0
    return ComparisonDataset(
        competitors=data.competitors,
        i=data.i[keep],
        j=data.j[keep],
        wins_i=data.wins_i[keep],
        wins_j=data.wins_j[keep],
        ties=np.zeros(int(keep.sum())),
    )


def _subset(data: ComparisonDataset, wi, wj, t) -> ComparisonDataset:
    keep = (wi + wj + t) > 0
    return ComparisonDataset(
        competitors=data.competitors,
        i=data.i[keep],
        j=data.j[keep],
        wins_i=wi[keep].astype(np.float64),
        wins_j=wj[keep].astype(np.float64),
        ties=t[keep].astype(np.float64),
    )


def split(data: ComparisonDataset, test_fraction: float, seed: int) -> tuple[ComparisonDataset, ComparisonDataset]:
    """Randomly assign every individual vote to the test set with probability ``test_fraction``.

    Per pair and outcome, the number of test votes is binomial, which is the
    same law as independent per-vote assignment. Raises
    :class:`DisconnectedError` if the training graph loses connectivity.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    counts = np.stack([data.wins_i, data.wins_j, data.ties])
    if np.any(counts != np.round(counts)):
        raise DataError("split requires integer counts; split before collapsing ties")

    rng = np.random.default_rng(seed)
    counts = counts.astype(np.int64)
    test = rng.binomial(counts, test_fraction)
    train = counts - test

    train_ds = _subset(data, *train)
    test_ds = _subset(data, *test)
    groups = components(train_ds)
    if len(groups) > 1:
        raise DisconnectedError([[data.competitors[v] for v in g] for g in groups])
    return train_ds, test_ds
