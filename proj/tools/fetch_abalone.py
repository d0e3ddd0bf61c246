#!/usr/bin/env python3
"""Write the UCI Abalone table (4177 rows) to data/abalone.csv.

The copy comes from the scikit-lego wheel on PyPI, which bundles the
original table. Header names follow the UCI attribute list and values are
rounded back to the 4 decimals of the original file.
"""
import argparse
import csv
import glob
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

HEADER = ["Sex", "Length", "Diameter", "Height", "Whole_weight", "Shucked_weight",
          "Viscera_weight", "Shell_weight", "Rings"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "abalone.csv"))
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp,
                        "scikit-lego==0.9.10"], check=True)
        wheel = zipfile.ZipFile(glob.glob(f"{tmp}/scikit_lego-*.whl")[0])
        inner = zipfile.ZipFile(io.BytesIO(wheel.read("sklego/data/abalone.zip")))
        text = inner.read(inner.namelist()[0]).decode()

    rows = list(csv.reader(io.StringIO(text)))[1:]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(HEADER)
        for r in rows:
            w.writerow([r[0]] + [repr(round(float(v), 4)) for v in r[1:8]] + [str(int(float(r[8])))])
    print(f"{out}: {len(rows)} rows")


if __name__ == "__main__":
    main()
