"""Writers and readers for run artifacts (metrics.jsonl, scores.csv, report.json, masks.json)."""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .trainer import EpochScores, TrainResult

SCORE_COLUMNS = ["epoch", "sample_id", "raw_score", "normalized_score", "in_subset", "in_bin"]


def fmt(x: float) -> str:
    return f"{x:.9g}"


def write_metrics(path: str, result: TrainResult) -> None:
    with open(path, "w", newline="\n") as fh:
        for tr in result.traces:
            fh.write(json.dumps({
                "epoch": tr.epoch,
                "loss": tr.loss,
                "subset_size": tr.subset_size,
                "keep_fraction": tr.keep_fraction,
                "seconds": tr.seconds,
                "class_counts": tr.class_counts,
            }) + "\n")


def write_scores(path: str, result: TrainResult) -> None:
    """One row per (epoch, training sample); unscored samples carry -1 scores."""
    train_ids = result.train_ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_COLUMNS)
        for rec in result.scores:
            raw = dict(zip(rec.ids.tolist(), rec.raw.tolist()))
            norm = dict(zip(rec.ids.tolist(), rec.normalized.tolist()))
            active = set(rec.active.tolist())
            for sid in train_ids.tolist():
                inside = sid in active
                w.writerow([
                    rec.epoch,
                    sid,
                    fmt(raw[sid]) if sid in raw else "-1",
                    fmt(norm[sid]) if sid in norm else "-1",
                    int(inside),
                    int(not inside),
                ])


def read_scores(path: str) -> list:
    """Rebuild per-epoch :class:`EpochScores` records from ``scores.csv``."""
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SCORE_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        for row in reader:
            rows.setdefault(int(row["epoch"]), []).append(row)
    records = []
    for epoch in sorted(rows):
        rs = rows[epoch]
        scored = [r for r in rs if float(r["raw_score"]) >= 0]
        records.append(EpochScores(
            epoch=epoch,
            ids=np.array([int(r["sample_id"]) for r in scored], dtype=np.int64),
            raw=np.array([float(r["raw_score"]) for r in scored]),
            normalized=np.array([float(r["normalized_score"]) for r in scored]),
            active=np.array([int(r["sample_id"]) for r in rs if r["in_subset"] == "1"], dtype=np.int64),
        ))
    return records


def write_json(path: str, obj) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_masks(path: str, result: TrainResult) -> None:
    write_json(path, {"masks": [m.to_json() for m in result.masks]})


def write_matrix_csv(path: str, matrix: np.ndarray, sample_ids, epochs) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch"] + [str(s) for s in sample_ids])
        for e, row in zip(epochs, matrix):
            w.writerow([e] + [fmt(v) for v in row])


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
