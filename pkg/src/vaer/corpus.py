"""Tables, records, and labeled pair sets.

Input tables are RFC-4180 CSV files with a mandatory header row. Records are
immutable after load, so tables can be shared freely across workers. Missing
cells are kept as empty strings rather than dropped; downstream vectorizers
map them to zero vectors.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class TableFormatError(ValueError):
    """Raised when an input file violates the table or pair-set format."""


@dataclass(frozen=True)
class Record:
    """One tuple: a stable id plus an ordered list of attribute values."""

    id: str
    values: tuple[str, ...]


@dataclass(frozen=True)
class Table:
    """An immutable collection of records sharing one arity.

    ``columns`` keeps the header names so a loaded table can be re-serialized;
    generated names are used for padded columns.
    """

    name: str
    arity: int
    records: tuple[Record, ...]
    columns: tuple[str, ...] = ()

    def __post_init__(self):
        if self.arity < 1:
            raise TableFormatError(f"table {self.name!r}: arity must be >= 1")
        cols = self.columns or tuple(f"col_{i}" for i in range(self.arity))
        object.__setattr__(self, "columns", cols)
        if len(self.columns) != self.arity:
            raise TableFormatError(
                f"table {self.name!r}: {len(self.columns)} column names for arity {self.arity}"
            )
        seen: set[str] = set()
        for rec in self.records:
            if len(rec.values) != self.arity:
                raise TableFormatError(
                    f"table {self.name!r}: record {rec.id!r} has {len(rec.values)} "
                    f"values, expected {self.arity}"
                )
            if rec.id in seen:
                raise TableFormatError(f"table {self.name!r}: duplicate record id {rec.id!r}")
            seen.add(rec.id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Record]:
        return iter(self.records)

    @cached_property
    def _by_id(self) -> dict[str, Record]:
        return {rec.id: rec for rec in self.records}

    def record(self, record_id: str) -> Record:
        try:
            return self._by_id[record_id]
        except KeyError:
            raise KeyError(f"table {self.name!r}: no record with id {record_id!r}") from None


@dataclass(frozen=True)
class PairSet:
    """Labeled record pairs: (left id, right id, label in {0, 1})."""

    pairs: tuple[tuple[str, str, int], ...]

    def __post_init__(self):
        seen: set[tuple[str, str]] = set()
        for left, right, label in self.pairs:
            if label not in (0, 1):
                raise TableFormatError(f"pair ({left!r}, {right!r}): label {label!r} not in {{0, 1}}")
            if (left, right) in seen:
                raise TableFormatError(f"duplicate pair ({left!r}, {right!r})")
            seen.add((left, right))

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[tuple[str, str, int]]:
        return iter(self.pairs)

    @property
    def positives(self) -> tuple[tuple[str, str], ...]:
        return tuple((l, r) for l, r, y in self.pairs if y == 1)

    @property
    def negatives(self) -> tuple[tuple[str, str], ...]:
        return tuple((l, r) for l, r, y in self.pairs if y == 0)

    def validate_against(self, left: Table, right: Table) -> None:
        """Check that every id resolves in its table."""
        for l, r, _ in self.pairs:
            if l not in left._by_id:
                raise TableFormatError(f"pair id {l!r} not found in table {left.name!r}")
            if r not in right._by_id:
                raise TableFormatError(f"pair id {r!r} not found in table {right.name!r}")


def load_table(
    path: str | Path,
    delimiter: str = ",",
    name: str | None = None,
    id_column: str | None = None,
) -> Table:
    """Load a delimited text file with a header row into a Table.

    Every data row must have exactly as many cells as the header; a narrower
    or wider row is a hard error naming the offending row. Row numbers count
    the header as row 1. When ``id_column`` names a header field, that column
    supplies record ids and is removed from the attribute values; otherwise
    ids are the 0-based source row index.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise TableFormatError(f"{path}: empty file, header row required") from None
        id_idx: int | None = None
        if id_column is not None:
            if id_column not in header:
                raise TableFormatError(f"{path}: id column {id_column!r} not in header {header}")
            id_idx = header.index(id_column)
        records = []
        for rownum, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise TableFormatError(
                    f"{path}: row {rownum}: expected {len(header)} fields, got {len(row)}"
                )
            if id_idx is None:
                rec_id = str(rownum - 2)
                values = tuple(row)
            else:
                rec_id = row[id_idx]
                values = tuple(v for i, v in enumerate(row) if i != id_idx)
            records.append(Record(id=rec_id, values=values))
    columns = tuple(c for i, c in enumerate(header) if i != id_idx)
    return Table(
        name=name if name is not None else path.stem,
        arity=len(columns),
        records=tuple(records),
        columns=columns,
    )


def save_table(table: Table, path: str | Path, delimiter: str = ",") -> None:
    """Write a table back to RFC-4180 CSV (header row, no id column)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(table.columns)
        for rec in table.records:
            writer.writerow(rec.values)


def load_pairs(path: str | Path, delimiter: str = ",") -> PairSet:
    """Load a pair set from CSV with columns left_id,right_id,label."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise TableFormatError(f"{path}: empty file, header row required") from None
        if [h.strip() for h in header[:3]] != ["left_id", "right_id", "label"]:
            raise TableFormatError(
                f"{path}: expected header left_id,right_id,label, got {','.join(header)}"
            )
        pairs = []
        for rownum, row in enumerate(reader, start=2):
            if len(row) < 3:
                raise TableFormatError(f"{path}: row {rownum}: expected 3 fields, got {len(row)}")
            try:
                label = int(row[2])
            except ValueError:
                raise TableFormatError(
                    f"{path}: row {rownum}: label {row[2]!r} is not an integer"
                ) from None
            pairs.append((row[0], row[1], label))
    return PairSet(pairs=tuple(pairs))


def save_pairs(pairs: Iterable[tuple[str, str, int]], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["left_id", "right_id", "label"])
        for left, right, label in pairs:
            writer.writerow([left, right, label])


def tokenize_value(text: str) -> list[str]:
    """Lowercase and split on Unicode whitespace/punctuation; empty input gives []."""
    return _TOKEN_RE.findall(text.lower())


def align_arity(table: Table, target_arity: int) -> Table:
    """Truncate or pad a table to ``target_arity`` columns.

    Wider tables keep their first ``target_arity`` columns; narrower ones gain
    empty-string columns on the right. Record ids are preserved and the
    operation is idempotent.
    """
    if target_arity < 1:
        raise ValueError(f"target arity must be >= 1, got {target_arity}")
    if table.arity == target_arity:
        return table
    if table.arity > target_arity:
        records = tuple(
            Record(id=r.id, values=r.values[:target_arity]) for r in table.records
        )
        columns = table.columns[:target_arity]
    else:
        pad = target_arity - table.arity
        records = tuple(
            Record(id=r.id, values=r.values + ("",) * pad) for r in table.records
        )
        columns = table.columns + tuple(
            f"pad_{i}" for i in range(table.arity, target_arity)
        )
    return Table(name=table.name, arity=target_arity, records=records, columns=columns)


def attribute_sentences(*tables: Table) -> list[str]:
    """All attribute values of the given tables, one sentence per value."""
    out: list[str] = []
    for table in tables:
        for rec in table.records:
            out.extend(rec.values)
    return out
