#!/usr/bin/env python3
"""Materialize the benchmark datasets under data/.

Wine ships with scikit-learn and is written offline. Sonar, Ionosphere and
Abalone are downloaded from the UCI repository, which needs network access;
in an offline sandbox those three are skipped with a notice and their schema
files are still written so configs stay valid. Labels are normalized to
0-based integer classes here so the loader can stay strict. Abalone's ring
count is binned into 3 classes (<=8, 9-10, >=11).

Usage: python scripts/fetch_datasets.py [--data-dir data]
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import urllib.request
from pathlib import Path

UCI = "https://archive.ics.uci.edu/ml/machine-learning-databases"
SOURCES = {
    "sonar": f"{UCI}/undocumented/connectionist-bench/sonar/sonar.all-data",
    "ionosphere": f"{UCI}/ionosphere/ionosphere.data",
    "abalone": f"{UCI}/abalone/abalone.data",
}

SCHEMAS = {
    "wine": {"label": "class", "categorical": []},
    "sonar": {"label": "class", "categorical": []},
    "ionosphere": {"label": "class", "categorical": ["a01", "a02"]},
    "abalone": {"label": "class", "categorical": ["sex"]},
}


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows, {len(header)} columns)")


def write_wine(data_dir: Path) -> None:
    from sklearn.datasets import load_wine

    bundle = load_wine()
    header = list(bundle.feature_names) + ["class"]
    rows = [list(x) + [int(y)] for x, y in zip(bundle.data, bundle.target)]
    write_csv(data_dir / "wine.csv", header, rows)


def fetch(url: str) -> list[list[str]]:
    with urllib.request.urlopen(url, timeout=60) as response:
        text = response.read().decode("utf-8")
    return [row for row in csv.reader(io.StringIO(text)) if row]


def write_sonar(data_dir: Path) -> None:
    rows = fetch(SOURCES["sonar"])
    header = [f"a{i + 1:02d}" for i in range(60)] + ["class"]
    label = {"R": 0, "M": 1}
    out = [row[:60] + [label[row[60].strip()]] for row in rows]
    write_csv(data_dir / "sonar.csv", header, out)


def write_ionosphere(data_dir: Path) -> None:
    rows = fetch(SOURCES["ionosphere"])
    header = [f"a{i + 1:02d}" for i in range(34)] + ["class"]
    label = {"b": 0, "g": 1}
    out = [row[:34] + [label[row[34].strip()]] for row in rows]
    write_csv(data_dir / "ionosphere.csv", header, out)


def write_abalone(data_dir: Path) -> None:
    rows = fetch(SOURCES["abalone"])
    header = ["sex", "length", "diameter", "height", "whole_weight",
              "shucked_weight", "viscera_weight", "shell_weight", "class"]

    def ring_class(rings: int) -> int:
        if rings <= 8:
            return 0
        if rings <= 10:
            return 1
        return 2

    out = [row[:8] + [ring_class(int(row[8]))] for row in rows]
    write_csv(data_dir / "abalone.csv", header, out)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data-dir", default=Path(__file__).resolve().parent.parent / "data",
                        type=Path)
    args = parser.parse_args(argv)
    args.data_dir.mkdir(parents=True, exist_ok=True)

    for name, schema in SCHEMAS.items():
        schema_path = args.data_dir / f"{name}.schema.json"
        schema_path.write_text(json.dumps(schema, indent=2) + "\n")
        print(f"wrote {schema_path}")

    write_wine(args.data_dir)

    failed = []
    for name, writer in (("sonar", write_sonar),
                         ("ionosphere", write_ionosphere),
                         ("abalone", write_abalone)):
        try:
            writer(args.data_dir)
        except OSError as exc:
            failed.append(name)
            print(f"SKIPPED {name}: {exc} (needs network access to {SOURCES[name]})")

    if failed:
        print(f"\n{len(failed)} dataset(s) unavailable offline: {', '.join(failed)}. "
              "Re-run this script with network access to materialize them.")
    return 0


if __name__ == "__main__":
    sys.exit(main())
