"""Tabular dataset model and CSV ingestion.

Cells are kept verbatim as strings; numeric interpretation happens only
inside predicate and score evaluation. This keeps ingestion lossless, so
an audit can always be traced back to the exact bytes the data provider
shipped.
"""

from __future__ import annotations

import csv
from collections.abc import Callable, Iterator, Mapping
from dataclasses import dataclass
from pathlib import Path


class DatasetError(Exception):
    """Raised for unreadable files, malformed CSV, or failed row predicates."""


class Row(Mapping[str, str]):
    """One record: an immutable mapping from column name to raw cell text."""

    __slots__ = ("_cells",)

    def __init__(self, cells: Mapping[str, str]):
        for key in cells:
            if not isinstance(key, str) or not key:
                raise ValueError(f"row keys must be nonempty strings, got {key!r}")
        self._cells: dict[str, str] = dict(cells)

    def __getitem__(self, key: str) -> str:
        return self._cells[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._cells)

    def __len__(self) -> int:
        return len(self._cells)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Row):
            return self._cells == other._cells
        if isinstance(other, Mapping):
            return self._cells == dict(other)
        return NotImplemented

    __hash__ = None  # type: ignore[assignment]  # mutable-mapping semantics are off the table, but so is hashing

    def __repr__(self) -> str:
        return f"Row({self._cells!r})"


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of rows sharing one header."""

    header: tuple[str, ...]
    rows: tuple[Row, ...]

    def __post_init__(self) -> None:
        columns = set(self.header)
        if len(columns) != len(self.header):
            raise ValueError("header contains duplicate column names")
        for i, row in enumerate(self.rows):
            if set(row) != columns:
                raise ValueError(f"row {i} keys do not match the header")

    @property
    def row_count(self) -> int:
        return len(self.rows)

    def filter(self, predicate: Callable[[Row], bool]) -> "Dataset":
        return filter_rows(self, predicate)


def load_csv(path: str | Path) -> Dataset:
    """Load a CSV file (RFC 4180 quoting, UTF-8) into a :class:`Dataset`.

    The first record is the header. Duplicate header names are an error
    unless every row carries identical values under all duplicates, in
    which case they merge into a single column; a duplicate with
    conflicting values is ambiguous and rejected.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            try:
                raw_header = next(reader)
            except StopIteration:
                raise DatasetError(f"{path}: file is empty, expected a header record") from None
            except UnicodeDecodeError as exc:
                raise DatasetError(f"{path}: not valid UTF-8 ({exc})") from exc
            header, positions = _resolve_header(path, raw_header)
            rows = []
            try:
                for record in reader:
                    if len(record) != len(raw_header):
                        raise DatasetError(
                            f"{path}: line {reader.line_num}: expected "
                            f"{len(raw_header)} fields, got {len(record)}"
                        )
                    cells = {}
                    for name, cols in positions.items():
                        value = record[cols[0]]
                        for extra in cols[1:]:
                            if record[extra] != value:
                                raise DatasetError(
                                    f"{path}: line {reader.line_num}: duplicate column "
                                    f"{name!r} has conflicting values "
                                    f"{value!r} and {record[extra]!r}"
                                )
                        cells[name] = value
                    rows.append(Row(cells))
            except UnicodeDecodeError as exc:
                raise DatasetError(f"{path}: not valid UTF-8 ({exc})") from exc
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    return Dataset(header=header, rows=tuple(rows))


def _resolve_header(path: Path, raw_header: list[str]) -> tuple[tuple[str, ...], dict[str, list[int]]]:
    positions: dict[str, list[int]] = {}
    for i, name in enumerate(raw_header):
        if not name:
            raise DatasetError(f"{path}: header column {i + 1} is empty")
        positions.setdefault(name, []).append(i)
    return tuple(positions), positions


def filter_rows(dataset: Dataset, predicate: Callable[[Row], bool]) -> Dataset:
    """Return the sub-dataset of rows where ``predicate`` holds, order preserved."""
    kept = []
    for i, row in enumerate(dataset.rows):
        try:
            if predicate(row):
                kept.append(row)
        except Exception as exc:
            raise DatasetError(f"predicate failed on row {i}: {exc}") from exc
    return Dataset(header=dataset.header, rows=tuple(kept))
