"""Dataset, ISD, model and metric file formats.

ISD files are comma-separated text with two comment lines and a header::

    # csdsurv-isd v1
    # mode=time interpolation=linear extrapolation=linear
    time,0.0,0.5,1.0
    1.0,0.9,0.7
    ...

In ``mode=time`` the header lists the shared knot times and each row holds
one subject's survival probabilities (non-increasing). In
``mode=percentile`` the header lists survival levels in decreasing order
and each row holds percentile times (non-decreasing). Numbers are written
with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .baseline import WeibullAftModel
from .conformal import PctMatrix
from .core import SurvivalCurve, SurvivalDataError, SurvivalDataset
from .km import KmCurve

ISD_MAGIC = "# csdsurv-isd v1"
MODEL_FORMAT = "csdsurv-model"
MODEL_VERSION = 1

_TRUE = {"1", "true", "t", "yes"}
_FALSE = {"0", "false", "f", "no"}


class DataParseError(SurvivalDataError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.row = row
        self.column = column


class MissingColumnError(SurvivalDataError):
    pass


class IsdFormatError(SurvivalDataError):
    pass


class ShapeMismatchError(IsdFormatError):
    pass


class MonotonicityViolationError(IsdFormatError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


def _num(x: float) -> str:
    return repr(float(x))


# -- datasets -----------------------------------------------------------------

def load_dataset(
    path,
    time_col: str = "time",
    event_col: str = "event",
    feature_cols: Sequence[str] | None = None,
    delimiter: str = ",",
) -> SurvivalDataset:
    """Read a delimited file with a header row.

    Row numbers in errors count the header as row 1. Rows with a
    non-positive time are rejected.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataParseError("empty file") from None
        for col in (time_col, event_col):
            if col not in header:
                raise MissingColumnError(f"column {col!r} not found in {header}")
        if feature_cols is None:
            feature_cols = [h for h in header if h not in (time_col, event_col)]
        missing = [c for c in feature_cols if c not in header]
        if missing:
            raise MissingColumnError(f"feature columns not found: {missing}")
        ti, ei = header.index(time_col), header.index(event_col)
        fi = [header.index(c) for c in feature_cols]

        times, events, feats, bad_rows = [], [], [], []
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataParseError(f"expected {len(header)} fields, got {len(row)}", rowno)
            t = _parse_float(row[ti], rowno, time_col)
            if t <= 0:
                bad_rows.append(rowno)
            ev = row[ei].strip().lower()
            if ev in _TRUE:
                events.append(True)
            elif ev in _FALSE:
                events.append(False)
            else:
                raise DataParseError(f"event value {row[ei]!r} is not 0/1/true/false", rowno, event_col)
            times.append(t)
            feats.append([_parse_float(row[j], rowno, header[j]) for j in fi])
    if bad_rows:
        raise DataParseError(f"non-positive time in rows {bad_rows}", bad_rows[0], time_col)
    if not times:
        raise DataParseError("no data rows")
    return SurvivalDataset(
        np.array(feats, dtype=float).reshape(len(times), len(fi)),
        np.array(times),
        np.array(events),
        tuple(feature_cols),
    )


def _parse_float(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataParseError(f"cannot parse {text!r} as a number", row, column) from None
    if not np.isfinite(value):
        raise DataParseError(f"non-finite value {text!r}", row, column)
    return value


def save_dataset(path, ds: SurvivalDataset) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "event", *ds.feature_names])
        for t, e, x in zip(ds.times, ds.events, ds.features):
            w.writerow([_num(t), int(e), *(_num(v) for v in x)])


# -- ISD files ----------------------------------------------------------------

def write_isd(path, isd: Sequence[SurvivalCurve] | PctMatrix) -> None:
    lines = [ISD_MAGIC]
    if isinstance(isd, PctMatrix):
        lines.append("# mode=percentile")
        lines.append(",".join(["level", *(_num(v) for v in isd.levels)]))
        rows = isd.times
    else:
        if not isd:
            raise ShapeMismatchError("no curves to write")
        first = isd[0]
        for i, c in enumerate(isd):
            if (
                c.times.shape != first.times.shape
                or not np.array_equal(c.times, first.times)
                or c.interpolation != first.interpolation
                or c.extrapolation != first.extrapolation
            ):
                raise ShapeMismatchError(f"curve {i} does not share the knot grid of curve 0")
        lines.append(
            f"# mode=time interpolation={first.interpolation} extrapolation={first.extrapolation}"
        )
        lines.append(",".join(["time", *(_num(v) for v in first.times)]))
        rows = np.vstack([c.probs for c in isd])
    lines.extend(",".join(_num(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def read_isd(path) -> list[SurvivalCurve] | PctMatrix:
    text = Path(path).read_text().splitlines()
    if len(text) < 3 or text[0].strip() != ISD_MAGIC:
        raise IsdFormatError(f"{path}: not an ISD file (missing {ISD_MAGIC!r})")
    meta = dict(item.split("=", 1) for item in text[1].lstrip("# ").split())
    mode = meta.get("mode")
    header = text[2].split(",")
    try:
        grid = np.array([float(v) for v in header[1:]])
        rows = [np.array([float(v) for v in line.split(",")]) for line in text[3:] if line.strip()]
    except ValueError as exc:
        raise IsdFormatError(f"{path}: {exc}") from None
    for i, row in enumerate(rows):
        if row.shape != grid.shape:
            raise ShapeMismatchError(f"row {i}: {row.size} values for {grid.size} grid points")
    mat = np.vstack(rows) if rows else np.empty((0, grid.size))

    if mode == "percentile":
        if header[0] != "level":
            raise IsdFormatError("percentile-form header must start with 'level'")
        _check_rows(mat, increasing=True)
        return PctMatrix(grid, mat)
    if mode == "time":
        if header[0] != "time":
            raise IsdFormatError("time-form header must start with 'time'")
        _check_rows(mat, increasing=False)
        interp = meta.get("interpolation", "linear")
        extrap = meta.get("extrapolation", "linear")
        return [SurvivalCurve(grid, row, interp, extrap) for row in mat]
    raise IsdFormatError(f"unknown ISD mode {mode!r}")


def _check_rows(mat: np.ndarray, increasing: bool) -> None:
    diffs = np.diff(mat, axis=1)
    bad = np.any(diffs < 0 if increasing else diffs > 0, axis=1)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        direction = "non-decreasing" if increasing else "non-increasing"
        raise MonotonicityViolationError(row, f"values must be {direction}")


# -- models -------------------------------------------------------------------

def save_model(path, model: WeibullAftModel | KmCurve, feature_names: Sequence[str] = ()) -> None:
    if isinstance(model, WeibullAftModel):
        body = {
            "model": "weibull_aft",
            "beta": model.beta.tolist(),
            "log_sigma": model.log_sigma,
            "l2_penalty": model.l2_penalty,
            "feature_mean": np.asarray(model.feature_mean).tolist(),
            "feature_scale": np.asarray(model.feature_scale).tolist(),
            "grid_max": model.grid_max,
        }
    else:
        body = {
            "model": "km_dummy",
            "times": model.curve.times.tolist(),
            "probs": model.curve.probs.tolist(),
            "event_times": model.event_times.tolist(),
            "at_risk": model.at_risk.tolist(),
            "events": model.events.tolist(),
        }
    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION, "feature_names": list(feature_names), **body}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_model(path) -> tuple[WeibullAftModel | KmCurve, list[str]]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
        raise IsdFormatError(f"{path}: unsupported model file")
    names = doc.get("feature_names", [])
    if doc["model"] == "weibull_aft":
        model = WeibullAftModel(
            np.array(doc["beta"]),
            float(doc["log_sigma"]),
            float(doc["l2_penalty"]),
            np.array(doc["feature_mean"]),
            np.array(doc["feature_scale"]),
            float(doc["grid_max"]),
        )
        return model, names
    if doc["model"] == "km_dummy":
        curve = SurvivalCurve(np.array(doc["times"]), np.array(doc["probs"]), "step", "linear")
        km = KmCurve(
            curve, np.array(doc["event_times"]), np.array(doc["at_risk"]), np.array(doc["events"])
        )
        return km, names
    raise IsdFormatError(f"{path}: unknown model kind {doc['model']!r}")


# -- metrics ------------------------------------------------------------------

def write_metrics(path, values: dict[str, float]) -> None:
    Path(path).write_text(format_metrics(values))


def format_metrics(values: dict[str, float]) -> str:
    return "".join(f"{k}={_num(v)}\n" for k, v in values.items())


def read_metrics(path) -> dict[str, float]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataParseError(f"{path}: expected key=value", lineno)
        try:
            out[key.strip()] = float(value)
        except ValueError:
            raise DataParseError(f"{path}: bad number {value!r}", lineno, key.strip()) from None
    return out


def write_pp_points(path, points: np.ndarray) -> None:
    lines = ["expected,observed"] + [f"{_num(a)},{_num(b)}" for a, b in points]
    Path(path).write_text("\n".join(lines) + "\n")
