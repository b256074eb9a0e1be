"""File formats: embeddings (binary / CSV), predictions, plans, masks, reports.

Binary embedding layout (little-endian)::

    b"EMB1" | uint32 n_rows | uint32 n_cols | float32[n_rows * n_cols] row-major
    | n_rows newline-terminated UTF-8 ids
"""

import csv
import io
import json
import os
import struct

import numpy as np

from ._validation import DataError
from .fairness import FairnessReport, PredictionRecord
from .graph import EmbeddingSet

MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sII")
PREDICTION_HEADER = ["sample_id", "group", "true_label", "pred_label"]
REPORT_KEYS = (
    "per_group_accuracy",
    "pqd",
    "dpm",
    "eom",
    "dpm_skipped_classes",
    "eom_skipped_classes",
    "n_records",
)


def _g9(x):
    return format(float(x), ".9g")


def _round12(x):
    return float(format(float(x), ".12g"))


def infer_format(path):
    return "csv" if str(path).lower().endswith(".csv") else "binary"


def _write_text(path, text):
    # newline="" keeps "\n" line endings on every platform
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# embeddings ---------------------------------------------------------------

def write_embeddings(e, path, format=None):
    format = format or infer_format(path)
    if format == "binary":
        for i in e.ids:
            if "\n" in i or "\r" in i:
                raise DataError(f"id {i!r} contains a line break")
        n, d = e.vectors.shape
        payload = e.vectors.astype("<f4").tobytes(order="C")
        ids = "".join(f"{i}\n" for i in e.ids).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, n, d) + payload + ids)
    elif format == "csv":
        header = ["id"] + [f"dim{k}" for k in range(e.dim)]
        rows = ([i] + [_g9(x) for x in row] for i, row in zip(e.ids, e.vectors))
        _write_text(path, _csv_text(header, rows))
    else:
        raise ValueError(f"unknown embedding format {format!r}")


def _read_binary(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, n, d = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if n < 1 or d < 1:
        raise DataError(f"{path}: empty matrix ({n} x {d})")
    end = _HEADER.size + 4 * n * d
    if len(data) < end:
        raise DataError(f"{path}: truncated payload ({len(data)} bytes, need > {end})")
    X = np.frombuffer(data, dtype="<f4", count=n * d, offset=_HEADER.size).reshape(n, d)
    try:
        tail = data[end:].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: ids are not valid UTF-8") from exc
    if not tail.endswith("\n"):
        raise DataError(f"{path}: truncated id block")
    ids = tail[:-1].split("\n")
    if len(ids) != n:
        raise DataError(f"{path}: {len(ids)} ids for {n} rows")
    return EmbeddingSet(ids, X.astype(np.float64))


def _read_csv_embeddings(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    d = len(header) - 1
    if d < 1 or header != ["id"] + [f"dim{k}" for k in range(d)]:
        raise DataError(f"{path}: header must be id,dim0,...,dimK")
    if len(rows) < 2:
        raise DataError(f"{path}: no embedding rows")
    ids, vals = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != d + 1:
            raise DataError(f"{path}:{lineno}: expected {d + 1} fields, got {len(row)}")
        try:
            vals.append([float(x) for x in row[1:]])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        ids.append(row[0])
    return EmbeddingSet(ids, np.array(vals))


def read_embeddings(path, format=None):
    format = format or infer_format(path)
    try:
        if format == "binary":
            return _read_binary(path)
        if format == "csv":
            return _read_csv_embeddings(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    raise ValueError(f"unknown embedding format {format!r}")


# predictions --------------------------------------------------------------

def read_predictions(path):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file")
    if rows[0] != PREDICTION_HEADER:
        raise DataError(f"{path}: header must be {','.join(PREDICTION_HEADER)}")
    if len(rows) == 1:
        raise DataError(f"{path}: empty file (header only)")
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise DataError(f"{path}: row {lineno}: expected 4 fields, got {len(row)}")
        for name, value in zip(PREDICTION_HEADER, row):
            if not value:
                raise DataError(f"{path}: row {lineno}: empty {name}")
        records.append(PredictionRecord(*row))
    return records


def write_predictions(records, path):
    rows = ([r.sample_id, r.group, r.true_label, r.pred_label] for r in records)
    _write_text(path, _csv_text(PREDICTION_HEADER, rows))


# reports ------------------------------------------------------------------

def report_to_dict(r):
    return {
        "per_group_accuracy": {g: _round12(a) for g, a in sorted(r.per_group_accuracy.items())},
        "pqd": _round12(r.pqd),
        "dpm": _round12(r.dpm),
        "eom": _round12(r.eom),
        "dpm_skipped_classes": list(r.dpm_skipped_classes),
        "eom_skipped_classes": list(r.eom_skipped_classes),
        "n_records": int(r.n_records),
    }


def write_report(r, path):
    _write_text(path, json.dumps(report_to_dict(r), indent=2) + "\n")


def read_report(path):
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if tuple(obj) != REPORT_KEYS:
        raise DataError(f"{path}: report keys must be {REPORT_KEYS}")
    return FairnessReport(**obj)


# plans, masks, traces ------------------------------------------------------

def write_plan(plan, src_ids, dst_ids, path):
    """Write a plan as ``src_id,dst_id,mass`` rows sorted by (src_id, dst_id)."""
    T = getattr(plan, "values", plan)
    if T.shape != (len(src_ids), len(dst_ids)):
        raise ValueError("plan shape does not match the id lists")
    rows = sorted(
        (s, d, T[i, j]) for i, s in enumerate(src_ids) for j, d in enumerate(dst_ids)
    )
    _write_text(path, _csv_text(["src_id", "dst_id", "mass"], ((s, d, format(x, ".12g")) for s, d, x in rows)))


def read_plan(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["src_id", "dst_id", "mass"]:
        raise DataError(f"{path}: header must be src_id,dst_id,mass")
    return [(s, d, float(x)) for s, d, x in rows[1:]]


def write_mask(ids, weights, path):
    _write_text(path, _csv_text(["id", "weight"], ((i, _g9(w)) for i, w in zip(ids, weights))))


def read_weights(path, ids=None):
    """Read an ``id,weight`` CSV; with ``ids`` the result follows that order."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows or rows[0] != ["id", "weight"]:
        raise DataError(f"{path}: header must be id,weight")
    table = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise DataError(f"{path}: row {lineno}: expected 2 fields")
        try:
            table[row[0]] = float(row[1])
        except ValueError as exc:
            raise DataError(f"{path}: row {lineno}: {exc}") from exc
    if ids is None:
        return list(table), np.array(list(table.values()))
    missing = [i for i in ids if i not in table]
    if missing:
        raise DataError(f"{path}: no weight for id {missing[0]!r}")
    return list(ids), np.array([table[i] for i in ids])


def write_trace(trace, path):
    _write_text(path, _csv_text(["epoch", "objective"], ((k, format(x, ".12g")) for k, x in enumerate(trace))))


def write_truth(truth, path):
    _write_text(path, _csv_text(["id", "source"], truth))


def write_json(obj, path):
    _write_text(path, json.dumps(obj, indent=2) + "\n")


def remove_quietly(path):
    try:
        os.remove(path)
    except OSError:
        pass
