#!/usr/bin/env python3
"""Download and preprocess the UCI benchmark datasets into data/*.csv.

Needs internet access to archive.ics.uci.edu. Produces CSVs in the format
the ingestion code expects (header row, numeric features, label last):

    data/kr_vs_kp.csv   3196 rows, one-hot encoded chess features, 2 classes
    data/splice.csv     3190 rows, per-position ordinal DNA encoding, 3 classes
    data/vehicle.csv     846 rows, 18 numeric silhouette features, 4 classes

Encodings:
  * kr-vs-kp: each of the 36 categorical attributes is one-hot encoded over
    its observed value alphabet (sorted), giving 73 binary columns.
  * splice: each of the 60 sequence positions becomes the index of its
    letter in the sorted alphabet observed at ingestion (A,C,D,G,N,R,S,T).
  * vehicle: the nine statlog partition files are concatenated; features
    are already numeric.

Run: python scripts/fetch_datasets.py [--out data/]
"""
from __future__ import annotations

import argparse
import csv
import sys
import urllib.request
from pathlib import Path

UCI = "https://archive.ics.uci.edu/ml/machine-learning-databases"
KR_VS_KP_URL = f"{UCI}/chess/king-rook-vs-king-pawn/kr-vs-kp.data"
SPLICE_URL = f"{UCI}/molecular-biology/splice-junction-gene-sequences/splice.data"
VEHICLE_URLS = [f"{UCI}/statlog/vehicle/xa{c}.dat" for c in "abcdefghi"]


def fetch(url: str) -> list[str]:
    print(f"fetching {url}")
    with urllib.request.urlopen(url, timeout=60) as response:
        text = response.read().decode("utf-8", errors="strict")
    return [line.strip() for line in text.splitlines() if line.strip()]


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows, {len(header) - 1} features)")


def prepare_kr_vs_kp(out_dir: Path) -> None:
    lines = fetch(KR_VS_KP_URL)
    records = [line.split(",") for line in lines]
    n_attrs = len(records[0]) - 1
    alphabets = [sorted({rec[i] for rec in records}) for i in range(n_attrs)]
    header = [f"a{i}_{v}" for i in range(n_attrs) for v in alphabets[i]] + ["label"]
    rows = []
    for rec in records:
        row: list = []
        for i in range(n_attrs):
            row.extend(1.0 if rec[i] == v else 0.0 for v in alphabets[i])
        row.append(rec[-1])
        rows.append(row)
    write_csv(out_dir / "kr_vs_kp.csv", header, rows)


def prepare_splice(out_dir: Path) -> None:
    lines = fetch(SPLICE_URL)
    records = []
    for line in lines:
        label, _name, seq = (part.strip() for part in line.split(","))
        records.append((label, seq))
    length = len(records[0][1])
    alphabet = sorted({ch for _, seq in records for ch in seq})
    index = {ch: float(i) for i, ch in enumerate(alphabet)}
    header = [f"p{i}" for i in range(length)] + ["label"]
    rows = [[index[ch] for ch in seq] + [label] for label, seq in records]
    write_csv(out_dir / "splice.csv", header, rows)


def prepare_vehicle(out_dir: Path) -> None:
    rows = []
    for url in VEHICLE_URLS:
        for line in fetch(url):
            parts = line.split()
            rows.append([float(x) for x in parts[:-1]] + [parts[-1]])
    header = [f"f{i}" for i in range(len(rows[0]) - 1)] + ["label"]
    write_csv(out_dir / "vehicle.csv", header, rows)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data", help="output directory")
    parser.add_argument("--only", choices=["kr_vs_kp", "splice", "vehicle"],
                        help="prepare a single dataset")
    args = parser.parse_args()
    out_dir = Path(args.out)
    jobs = {
        "kr_vs_kp": prepare_kr_vs_kp,
        "splice": prepare_splice,
        "vehicle": prepare_vehicle,
    }
    selected = [args.only] if args.only else list(jobs)
    for name in selected:
        jobs[name](out_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
