"""Datasets, variable metadata, categorical coding and origin shifts.

A :class:`Dataset` holds named real-valued columns of equal length plus one
:class:`VariableMeta` per variable. Loading never applies shifts; call
:func:`prepare` (or :func:`expand_categorical` then :func:`apply_shifts`)
before handing data to the FP machinery.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, MissingColumn, MissingValue, NonNumericCell, SingleLevel

logger = logging.getLogger(__name__)

KINDS = ("continuous", "binary", "ordinal", "nominal")
ROLES = ("outcome", "predictor")
MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", ".", "?"})


@dataclass(frozen=True)
class VariableMeta:
    name: str
    kind: str = "continuous"
    role: str = "predictor"
    shift: float | None = None  # None: decided by compute_shift at prepare time
    max_degree: int = 2
    forced_in: bool = False
    parent: str | None = None  # source categorical for generated dummies

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"{self.name}: kind must be one of {KINDS}, got {self.kind!r}")
        if self.role not in ROLES:
            raise DataError(f"{self.name}: role must be one of {ROLES}, got {self.role!r}")
        if self.max_degree not in (1, 2):
            raise DataError(f"{self.name}: max_degree must be 1 or 2")
        if self.shift is not None and self.shift < 0:
            raise DataError(f"{self.name}: shift must be >= 0")

    @property
    def is_continuous(self) -> bool:
        return self.kind == "continuous"


@dataclass(frozen=True)
class Dataset:
    columns: Mapping[str, np.ndarray]
    meta: tuple[VariableMeta, ...]
    provenance: str = ""
    # 1-based row labels from the source file; survive subsetting so that
    # influential points can be reported by their original observation number
    row_ids: np.ndarray | None = None
    shifted: bool = False  # origin shifts already added to continuous predictors

    def __post_init__(self):
        cols = {}
        lengths = set()
        for name, values in self.columns.items():
            arr = np.array(values, dtype=float)
            arr.setflags(write=False)
            cols[name] = arr
            lengths.add(arr.shape[0])
        if len(lengths) > 1:
            raise DataError(f"columns differ in length: {sorted(lengths)}")
        n = lengths.pop() if lengths else 0
        meta = tuple(self.meta)
        names = [m.name for m in meta]
        for name in names:
            if name not in cols:
                raise MissingColumn(name)
        outcomes = [m.name for m in meta if m.role == "outcome"]
        if len(outcomes) > 1:
            raise DataError(f"at most one outcome variable allowed, found {outcomes}")
        for name in names:
            bad = np.flatnonzero(~np.isfinite(cols[name]))
            if bad.size:
                raise MissingValue(int(bad[0]) + 1, name)
        ids = np.arange(1, n + 1) if self.row_ids is None else np.asarray(self.row_ids, dtype=int)
        if ids.shape[0] != n:
            raise DataError("row_ids length does not match the data")
        ids = ids.copy()
        ids.setflags(write=False)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "meta", meta)
        object.__setattr__(self, "row_ids", ids)

    @property
    def n(self) -> int:
        return int(self.row_ids.shape[0])

    @property
    def outcome(self) -> str:
        for m in self.meta:
            if m.role == "outcome":
                return m.name
        raise DataError("dataset has no outcome variable")

    @property
    def y(self) -> np.ndarray:
        return self.columns[self.outcome]

    @property
    def predictors(self) -> list[VariableMeta]:
        return [m for m in self.meta if m.role == "predictor"]

    def get_meta(self, name: str) -> VariableMeta:
        for m in self.meta:
            if m.name == name:
                return m
        raise MissingColumn(name)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise MissingColumn(name) from None

    def take(self, rows: Sequence[int] | np.ndarray, provenance: str | None = None) -> "Dataset":
        """Subset by 0-based positions, keeping the original row ids."""
        rows = np.asarray(rows, dtype=int)
        return Dataset(
            {k: v[rows] for k, v in self.columns.items()},
            self.meta,
            self.provenance if provenance is None else provenance,
            self.row_ids[rows],
            self.shifted,
        )

    def drop_ids(self, ids: Iterable[int], provenance: str | None = None) -> "Dataset":
        """Remove observations by their row id (1-based observation number)."""
        ids = set(int(i) for i in ids)
        keep = np.array([i not in ids for i in self.row_ids], dtype=bool)
        label = provenance
        if label is None:
            label = f"{self.provenance} minus obs {sorted(ids)}" if ids else self.provenance
        return self.take(np.flatnonzero(keep), label)


# --------------------------------------------------------------------------
# Delimited text
# --------------------------------------------------------------------------


def _sniff_delimiter(header_line: str) -> str:
    return "\t" if header_line.count("\t") > header_line.count(",") else ","


def read_table(path: str | os.PathLike) -> tuple[list[str], list[list[str]], list[str]]:
    """Read a delimited file into (header, rows, comment lines).

    Leading lines starting with ``#`` are returned separately. The delimiter
    (comma or tab) is detected from the header line.
    """
    comments = []
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    start = 0
    while start < len(lines) and lines[start].startswith("#"):
        comments.append(lines[start][1:].strip())
        start += 1
    if start >= len(lines):
        raise DataError(f"{path}: no header row")
    delim = _sniff_delimiter(lines[start])
    reader = csv.reader(lines[start:], delimiter=delim)
    header = [h.strip() for h in next(reader)]
    rows = [row for row in reader if row and any(c.strip() for c in row)]
    return header, rows, comments


def read_numeric_table(path: str | os.PathLike, columns: Sequence[str] | None = None) -> dict[str, np.ndarray]:
    """Read columns as float (all of them unless ``columns`` is given); blank or NA cells become NaN."""
    header, rows, _ = read_table(path)
    wanted = header if columns is None else list(columns)
    for name in wanted:
        if name not in header:
            raise MissingColumn(name)
    out = {h: np.empty(len(rows)) for h in wanted}
    for r, row in enumerate(rows, start=1):
        for c, name in enumerate(header):
            if name not in out:
                continue
            cell = row[c].strip() if c < len(row) else ""
            if cell.lower() in MISSING_TOKENS:
                out[name][r - 1] = np.nan
                continue
            try:
                out[name][r - 1] = float(cell)
            except ValueError:
                raise NonNumericCell(r, name, cell) from None
    return out


def format_number(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    v = float(value)
    if math.isnan(v):
        return ""
    return f"{v:.9g}"


def write_table(
    path: str | os.PathLike | None,
    header: Sequence[str],
    rows: Iterable[Sequence],
    comments: Sequence[str] = (),
    delimiter: str = ",",
) -> str:
    """Write rows as delimited text (9 significant digits).

    With ``path=None`` the text is returned instead. Files are written to a
    temporary sibling and renamed into place.
    """
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_number(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        atomic_write(path, text)
    return text


def atomic_write(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# Schema and loading
# --------------------------------------------------------------------------


def load_schema(path: str | os.PathLike) -> list[VariableMeta]:
    """Read a JSON schema: a list of variable objects, or ``{"variables": [...]}``."""
    with open(path) as fh:
        raw = json.load(fh)
    if isinstance(raw, dict):
        raw = raw.get("variables", [])
    return [VariableMeta(**entry) for entry in raw]


def schema_to_json(schema: Sequence[VariableMeta]) -> str:
    entries = []
    for m in schema:
        d = {"name": m.name, "kind": m.kind, "role": m.role}
        if m.shift is not None:
            d["shift"] = m.shift
        if m.max_degree != 2:
            d["max_degree"] = m.max_degree
        if m.forced_in:
            d["forced_in"] = True
        entries.append(d)
    return json.dumps({"variables": entries}, indent=2) + "\n"


def load_dataset(path: str | os.PathLike, schema: Sequence[VariableMeta], provenance: str | None = None) -> Dataset:
    outcomes = [m.name for m in schema if m.role == "outcome"]
    if len(outcomes) != 1:
        raise DataError(f"schema must declare exactly one outcome, found {outcomes}")
    header, rows, _ = read_table(path)
    index = {h: i for i, h in enumerate(header)}
    for m in schema:
        if m.name not in index:
            raise MissingColumn(m.name)
    columns = {}
    for m in schema:
        c = index[m.name]
        values = np.empty(len(rows))
        for r, row in enumerate(rows, start=1):
            cell = row[c].strip() if c < len(row) else ""
            if cell.lower() in MISSING_TOKENS:
                raise MissingValue(r, m.name)
            try:
                values[r - 1] = float(cell)
            except ValueError:
                raise NonNumericCell(r, m.name, cell) from None
        columns[m.name] = values
    return Dataset(columns, tuple(schema), provenance or str(path))


def write_dataset(path: str | os.PathLike | None, ds: Dataset, comments: Sequence[str] = ()) -> str:
    names = [m.name for m in ds.meta]
    rows = zip(*(ds[name] for name in names))
    return write_table(path, names, rows, comments)


# --------------------------------------------------------------------------
# Transformations
# --------------------------------------------------------------------------


def compute_shift(x) -> float:
    """Origin shift making every value positive: 0 if min(x) > 0, else 1 - min(x)."""
    lo = float(np.min(x))
    if lo > 0:
        return 0.0
    return 1.0 - lo


def apply_shifts(ds: Dataset) -> Dataset:
    """Add each continuous predictor's origin shift and record it in the meta.

    A shift already present in the meta (user override) is used as given.
    Datasets that were shifted before are returned unchanged.
    """
    if ds.shifted:
        return ds
    cols = dict(ds.columns)
    meta = []
    for m in ds.meta:
        if m.role == "predictor" and m.is_continuous:
            shift = m.shift if m.shift is not None else compute_shift(cols[m.name])
            if m.shift is None and np.min(cols[m.name]) < 0:
                logger.warning("%s has negative values; shifted by %g so the minimum is 1 (convention)", m.name, shift)
            x = cols[m.name] + shift
            if np.min(x) <= 0:
                raise DataError(f"{m.name}: shift {shift} leaves non-positive values")
            cols[m.name] = x
            m = replace(m, shift=shift)
        meta.append(m)
    return Dataset(cols, tuple(meta), ds.provenance, ds.row_ids, shifted=True)


def _dummy_suffix(k: int) -> str:
    return "abcdefghijklmnopqrstuvwxyz"[k]


def expand_categorical(ds: Dataset) -> Dataset:
    """Replace each k-level ordinal/nominal predictor by k-1 binary dummies.

    Ordinal variables get cumulative indicators ``[level >= l2]``,
    ``[level >= l3]`` ...; nominal variables get reference-cell indicators
    against the lowest observed code. Dummies are named ``<name>a``,
    ``<name>b`` ... Binary and continuous variables pass through.
    """
    cols = {}
    meta = []
    for m in ds.meta:
        x = ds[m.name]
        if m.role != "predictor" or m.kind not in ("ordinal", "nominal"):
            cols[m.name] = x
            meta.append(m)
            continue
        levels = np.unique(x)
        if levels.size < 2:
            raise SingleLevel(m.name)
        for k, level in enumerate(levels[1:]):
            name = f"{m.name}{_dummy_suffix(k)}"
            if m.kind == "ordinal":
                cols[name] = (x >= level).astype(float)
            else:
                cols[name] = (x == level).astype(float)
            meta.append(VariableMeta(name, "binary", "predictor", forced_in=m.forced_in, parent=m.name))
    return Dataset(cols, tuple(meta), ds.provenance, ds.row_ids, ds.shifted)


def prepare(ds: Dataset) -> Dataset:
    """Expand categoricals and apply origin shifts; idempotent."""
    return apply_shifts(expand_categorical(ds))
