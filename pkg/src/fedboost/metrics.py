"""Run metrics: macro F1 and the per-round metric records."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import LengthMismatch

GLOBAL = "global"


@dataclass(frozen=True)
class MetricRecord:
    round: int
    collaborator: str  # collaborator id, or "global"
    name: str          # f1_macro | error | norm
    value: float


def f1_macro(predictions, labels, num_classes: int) -> float:
    """Unweighted mean of per-class F1.

    A class absent from both predictions and labels counts as 1.0 (it was
    classified perfectly by doing nothing); a class with no true positives
    but present on either side counts as 0.0.
    """
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise LengthMismatch(f"predictions {p.shape} vs labels {y.shape}")
    scores = []
    for k in range(num_classes):
        tp = int(np.sum((p == k) & (y == k)))
        fp = int(np.sum((p == k) & (y != k)))
        fn = int(np.sum((p != k) & (y == k)))
        if tp == 0 and fp == 0 and fn == 0:
            scores.append(1.0)
        elif tp == 0:
            scores.append(0.0)
        else:
            scores.append(2.0 * tp / (2.0 * tp + fp + fn))
    return float(np.mean(scores))


def write_report(path, records, summary: dict) -> None:
    """Line-delimited metric records followed by one summary line."""
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(asdict(rec)) + "\n")
        f.write(json.dumps({"summary": summary}) + "\n")


def read_report(path) -> tuple[list[MetricRecord], dict]:
    records = []
    summary = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            obj = json.loads(line)
            if "summary" in obj:
                summary = obj["summary"]
            else:
                records.append(MetricRecord(**obj))
    return records, summary
