"""CSV feature files, report tables and the text format for trained heads.

Feature CSVs have one header row naming the feature columns plus a
``label`` column. An optional ``conflict_view`` column carries the
injected-conflict metadata written by :func:`export_features`; it is not
treated as a feature. Rows are aligned across views by position.

Trained heads are stored as plain text::

    EVHEADS 1
    layout <hybrid|flat>
    n_classes <K>
    mapping <strategy> <15 row-major entries of the 3x5 matrix>
    heads <H>
    head <name> <coarse 0|1> <rows> <cols> <input view indices, comma separated>
    <rows lines of cols weights>
    <one line of cols biases>
    ... repeated H times

Numbers are written with ``repr`` so a save/load cycle is exact.
"""

from __future__ import annotations

import csv
import math
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .mapping import MappingMatrix, MappingStrategy
from .toymodel import N_FINE, EvidenceHead, MultiViewDataset, Pipeline

__all__ = [
    "fmt",
    "write_csv",
    "ingest_features",
    "export_features",
    "save_heads",
    "load_heads",
    "HEADS_MAGIC",
]

HEADS_MAGIC = "EVHEADS"
HEADS_VERSION = 1
LABEL = "label"
CONFLICT = "conflict_view"


def fmt(x) -> str:
    """Report formatting: 9 significant digits, integers stay integers."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.9g}"


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else fmt(c) for c in row])


def _read_view(path) -> tuple[tuple[str, ...], np.ndarray, np.ndarray, np.ndarray | None]:
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataError(f"{path}: empty file, expected a header row")
        header = [h.strip() for h in header]
        if LABEL not in header:
            raise DataError(f"{path}: no '{LABEL}' column in header")
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names in header")
        label_col = header.index(LABEL)
        conflict_col = header.index(CONFLICT) if CONFLICT in header else None
        feat_cols = [i for i, h in enumerate(header) if i not in (label_col, conflict_col)]
        if not feat_cols:
            raise DataError(f"{path}: no feature columns")
        feats, labels, conflicts = [], [], []
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {row_no} has {len(row)} cells, header has {len(header)}")
            values = []
            for i in feat_cols:
                try:
                    v = float(row[i])
                except ValueError:
                    raise DataError(f"{path}: row {row_no}, column '{header[i]}': non-numeric cell {row[i]!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {row_no}, column '{header[i]}': non-finite value")
                values.append(v)
            feats.append(values)
            labels.append(_int_cell(path, row_no, LABEL, row[label_col]))
            if conflict_col is not None:
                conflicts.append(_int_cell(path, row_no, CONFLICT, row[conflict_col]))
    names = tuple(header[i] for i in feat_cols)
    x = np.asarray(feats, dtype=np.float64).reshape(len(feats), len(feat_cols))
    cv = np.asarray(conflicts, dtype=np.int64) if conflict_col is not None else None
    return names, x, np.asarray(labels, dtype=np.int64), cv


def _int_cell(path, row_no, column, cell) -> int:
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"{path}: row {row_no}, column '{column}': non-numeric cell {cell!r}") from None
    if not v.is_integer():
        raise DataError(f"{path}: row {row_no}, column '{column}': expected an integer, got {cell!r}")
    return int(v)


def ingest_features(paths: Sequence, n_classes: int = N_FINE) -> MultiViewDataset:
    """Load one CSV per view into a validated dataset."""
    if not paths:
        raise DataError("at least one view file is required")
    loaded = [_read_view(p) for p in paths]
    first = Path(paths[0])
    n0 = loaded[0][1].shape[0]
    for p, (_, x, _, _) in zip(paths[1:], loaded[1:]):
        if x.shape[0] != n0:
            raise DataError(f"row count mismatch: {first} has {n0} rows, {Path(p)} has {x.shape[0]}")
    labels = loaded[0][2]
    for p, (_, _, lab, _) in zip(paths[1:], loaded[1:]):
        if not np.array_equal(lab, labels):
            row = int(np.flatnonzero(lab != labels)[0]) + 2
            raise DataError(f"label disagreement between {first} and {Path(p)} at row {row}")
    bad = np.flatnonzero((labels < 0) | (labels >= n_classes))
    if bad.size:
        raise DataError(f"{first}: row {int(bad[0]) + 2}, column '{LABEL}': label {int(labels[bad[0]])} outside [0, {n_classes})")
    conflict = next((cv for *_, cv in loaded if cv is not None), None)
    return MultiViewDataset(
        tuple(x for _, x, _, _ in loaded),
        labels,
        n_classes,
        conflict,
        tuple(names for names, *_ in loaded),
    )


def export_features(ds: MultiViewDataset, paths: Sequence) -> list[Path]:
    """Write one CSV per view; values use ``repr`` so ingesting them back is exact."""
    if len(paths) != len(ds.views):
        raise DataError(f"{len(ds.views)} views but {len(paths)} output paths")
    out = []
    for path, names, x in zip(paths, ds.feature_names, ds.views):
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*names, LABEL, CONFLICT])
            for row, y, c in zip(x, ds.labels, ds.conflict_view):
                w.writerow([*(repr(float(v)) for v in row), int(y), int(c)])
        out.append(path)
    return out


def _line(values) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def save_heads(pipeline: Pipeline, path) -> None:
    lines = [
        f"{HEADS_MAGIC} {HEADS_VERSION}",
        f"layout {pipeline.layout}",
        f"n_classes {pipeline.n_classes}",
        f"mapping {pipeline.mapping.strategy.value} {_line(pipeline.mapping.entries)}",
        f"heads {len(pipeline.heads)}",
    ]
    for h in pipeline.heads:
        inputs = ",".join(str(i) for i in h.inputs)
        lines.append(f"head {h.name} {int(h.coarse)} {h.weights.shape[0]} {h.weights.shape[1]} {inputs}")
        lines.extend(_line(row) for row in h.weights)
        lines.append(_line(h.bias))
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def load_heads(path) -> Pipeline:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from exc
    pos = 0

    def take(key: str) -> list[str]:
        nonlocal pos
        if pos >= len(lines):
            raise DataError(f"{path}: unexpected end of file, expected '{key}'")
        parts = lines[pos].split()
        if not parts or parts[0] != key:
            raise DataError(f"{path}: line {pos + 1}: expected '{key}'")
        pos += 1
        return parts[1:]

    def floats(n: int) -> np.ndarray:
        nonlocal pos
        if pos >= len(lines):
            raise DataError(f"{path}: unexpected end of file")
        try:
            vals = [float(t) for t in lines[pos].split()]
        except ValueError:
            raise DataError(f"{path}: line {pos + 1}: non-numeric value") from None
        if len(vals) != n:
            raise DataError(f"{path}: line {pos + 1}: expected {n} numbers, got {len(vals)}")
        pos += 1
        return np.asarray(vals)

    try:
        version = take(HEADS_MAGIC)
        if version != [str(HEADS_VERSION)]:
            raise DataError(f"{path}: unsupported version {' '.join(version)}")
        (layout,) = take("layout")
        n_classes = int(take("n_classes")[0])
        mparts = take("mapping")
        mapping = MappingMatrix(np.asarray([float(t) for t in mparts[1:]]).reshape(3, N_FINE), MappingStrategy(mparts[0]))
        n_heads = int(take("heads")[0])
        heads = []
        for _ in range(n_heads):
            name, coarse, rows, cols, inputs = take("head")
            rows, cols = int(rows), int(cols)
            w = np.stack([floats(cols) for _ in range(rows)])
            b = floats(cols)
            heads.append(EvidenceHead(w, b, name, tuple(int(i) for i in inputs.split(",")), bool(int(coarse))))
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{path}: malformed heads file near line {pos + 1}: {exc}") from exc
    return Pipeline(heads, mapping, n_classes, layout)
