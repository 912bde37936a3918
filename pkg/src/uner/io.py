"""CSV readers/writers and run manifests.

Unit data: header ``area_id,y,x1,...,xq``; rows may be grouped or not.
Population spec: header ``area_id,N,xbar1,...,xbarq``.
Floats are written with ``repr`` (shortest round-trip form, locale-free).
"""

from __future__ import annotations

import csv
import json
import math
import platform
from dataclasses import asdict, dataclass, field, is_dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DataError
from .model import UnitDataset
from .prediction import FinitePopulationSpec


class CsvFormatError(DataError):
    def __init__(self, path, line, column, message):
        where = f"{path}:{line}" + (f", column {column!r}" if column else "")
        super().__init__(f"{where}: {message}")
        self.line = line
        self.column = column


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return repr(x)
    if x is None:
        return ""
    return str(x)


def _rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            yield reader.line_num, row


def _header(path):
    with open(path, newline="") as fh:
        line = fh.readline()
    if not line.strip():
        raise CsvFormatError(path, 1, None, "empty file")
    return [h.strip() for h in next(csv.reader([line]))]


def _float(path, line, col, text):
    try:
        val = float(text)
    except ValueError:
        raise CsvFormatError(path, line, col, f"cannot parse {text!r} as a number") from None
    if not math.isfinite(val):
        raise CsvFormatError(path, line, col, f"non-finite value {text!r}")
    return val


def read_unit_csv(path, intercept: bool = False) -> UnitDataset:
    header = _header(path)
    if len(header) < 3 or header[0] != "area_id" or header[1] != "y":
        raise CsvFormatError(path, 1, None, "header must be area_id,y,x1,...,xq")
    ids, ys, xs = [], [], []
    for line, row in _rows(path):
        if len(row) != len(header):
            raise CsvFormatError(path, line, None, f"expected {len(header)} fields, got {len(row)}")
        ids.append(row[0].strip())
        ys.append(_float(path, line, "y", row[1]))
        xs.append([_float(path, line, header[k], row[k]) for k in range(2, len(header))])
    if not ys:
        raise CsvFormatError(path, 2, None, "no data rows")
    X = np.array(xs, dtype=float)
    if intercept:
        X = np.column_stack([np.ones(len(ys)), X])
    return UnitDataset.from_arrays(np.array(ys), X, ids)


def read_population_csv(path, intercept: bool = False) -> FinitePopulationSpec:
    header = _header(path)
    if len(header) < 2 or header[0] != "area_id" or header[1] != "N":
        raise CsvFormatError(path, 1, None, "header must be area_id,N,xbar1,...,xbarq")
    sizes, xbar = {}, {}
    for line, row in _rows(path):
        if len(row) != len(header):
            raise CsvFormatError(path, line, None, f"expected {len(header)} fields, got {len(row)}")
        a = row[0].strip()
        if a in sizes:
            raise CsvFormatError(path, line, "area_id", f"duplicate area {a!r}")
        try:
            sizes[a] = int(row[1])
        except ValueError:
            raise CsvFormatError(path, line, "N", f"cannot parse {row[1]!r} as an integer") from None
        vals = [_float(path, line, header[k], row[k]) for k in range(2, len(header))]
        xbar[a] = np.array(([1.0] if intercept else []) + vals)
    return FinitePopulationSpec(sizes, xbar)


def write_unit_csv(path, data: UnitDataset) -> None:
    q = data.q
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["area_id", "y"] + [f"x{k + 1}" for k in range(q)])
        for a in data.areas:
            for j in range(a.n):
                w.writerow([fmt(a.area_id), fmt(a.y[j])] + [fmt(x) for x in a.X[j]])


def write_table(path, fieldnames, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fieldnames)
        for row in rows:
            w.writerow([fmt(row.get(k)) for k in fieldnames])


def _jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    dataset_fingerprint: str = ""
    version: str = ""
    duration_s: float = 0.0
    outputs: list = field(default_factory=list)
    rng_algorithm: str = ""
    python: str = field(default_factory=platform.python_version)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(_jsonable(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
