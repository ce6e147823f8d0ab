"""JSON-lines datasets with a sidecar manifest, and a plain CSV point reader."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import LabeledPoints, PairSet


def _floats(row) -> list[float]:
    return [float(v) for v in np.asarray(row).ravel()]


def pair_records(pairs: PairSet, split: str):
    for a, b, t in zip(pairs.a, pairs.b, pairs.target):
        yield {"a": _floats(a), "b": _floats(b), "target": float(t), "split": split}


def point_records(points: LabeledPoints, split: str):
    for x, lab in zip(points.x, points.labels):
        yield {"x": _floats(x), "label": int(lab), "split": split}


def write_jsonl(records, path) -> str:
    """Writes one JSON object per line; returns the sha256 of the file."""
    h = hashlib.sha256()
    with open(path, "w") as fh:
        for rec in records:
            line = json.dumps(rec, separators=(",", ":")) + "\n"
            fh.write(line)
            h.update(line.encode())
    return h.hexdigest()


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, spec: dict, seed: int, sha256: str, count: int, extra: dict | None = None) -> None:
    doc = {"spec": spec, "seed": seed, "sha256": sha256, "records": count}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def load_pairs(records: list[dict], split: str) -> PairSet:
    rows = [r for r in records if r.get("split") == split]
    if not rows:
        return PairSet(np.zeros((0, 0)), np.zeros((0, 0)), np.zeros(0))
    return PairSet([r["a"] for r in rows], [r["b"] for r in rows], [r["target"] for r in rows])


def load_points(records: list[dict], split: str) -> LabeledPoints:
    rows = [r for r in records if r.get("split") == split]
    if not rows:
        return LabeledPoints(np.zeros((0, 0)), np.zeros(0, dtype=int))
    return LabeledPoints([r["x"] for r in rows], np.array([r["label"] for r in rows]))


def read_labeled_csv(path, label_column: int = -1, header: bool = False) -> LabeledPoints:
    """Numeric features with one integer label column (last by default)."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if header:
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.array(rows, dtype=np.float64)
    labels = data[:, label_column].astype(int)
    x = np.delete(data, label_column % data.shape[1], axis=1)
    return LabeledPoints(x, labels)
