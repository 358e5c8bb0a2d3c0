"""Build the CSV files under data/ used by the shipped experiment configs.

The raw UCI / KEEL files are taken from two PyPI wheels that bundle them
(``responsibly`` for Adult, ``keel-ds`` for the benchmark sets), fetched with
``pip download``. Waveform is not bundled anywhere and is generated with
Breiman's generator instead. Image is de-duplicated and Splice loses the
sequences with ambiguous nucleotide letters (then de-duplicated), which gives
the usual benchmark sizes of 2,086 and 2,991 rows.

    python scripts/prepare_data.py [--out data] [--wheels DIR]
"""

import argparse
import csv
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
]
GERMAN_COLUMNS = [f"A{k}" for k in range(1, 21)] + ["class"]


def fetch_wheel(name, dest):
    found = sorted(Path(dest).glob(name.replace("-", "_") + "-*.whl"))
    if found:
        return found[-1]
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-d", str(dest), name],
        check=True,
    )
    return sorted(Path(dest).glob(name.replace("-", "_") + "-*.whl"))[-1]


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows)")


def split_fields(line, sep=","):
    return [f.strip() for f in line.split(sep)] if sep else line.split()


def adult(wheel, out):
    z = zipfile.ZipFile(wheel)
    rows = []
    for member in ("adult.data", "adult.test"):
        text = z.read(f"responsibly/dataset/adult/{member}").decode()
        for line in text.splitlines():
            if not line.strip() or line.startswith("|"):
                continue
            rows.append(split_fields(line))
    write_rows(out / "adult.csv", ADULT_COLUMNS, rows)


def german(wheel, out):
    text = zipfile.ZipFile(wheel).read("responsibly/dataset/german/german.data").decode()
    rows = [line.split() for line in text.splitlines() if line.strip()]
    write_rows(out / "german.csv", GERMAN_COLUMNS, rows)


def dedup(rows):
    seen = set()
    out = []
    for r in rows:
        key = tuple(r)
        if key not in seen:
            seen.add(key)
            out.append(r)
    return out


def keel_rows(wheel, name):
    text = zipfile.ZipFile(wheel).read(f"keel_ds/data/balanced/raw/{name}.dat").decode()
    return [split_fields(line) for line in text.splitlines() if line.strip() and not line.startswith("@")]


def keel(wheel, name, out, target, width_name="x", unique=False):
    rows = keel_rows(wheel, name)
    if unique:
        rows = dedup(rows)
    d = len(rows[0]) - 1
    write_rows(out / f"{target}.csv", [f"{width_name}{k}" for k in range(d)] + ["class"], rows)


NUCLEOTIDE_CODE = {"A": "1", "C": "2", "G": "3", "T": "4"}


def splice(wheel, out):
    """Sequences with ambiguous letters dropped, duplicates removed, A/C/G/T coded 1..4."""
    rows = []
    for r in keel_rows(wheel, "splice"):
        if all(c in NUCLEOTIDE_CODE for c in r[:-1]):
            rows.append([NUCLEOTIDE_CODE[c] for c in r[:-1]] + [r[-1]])
    rows = dedup(rows)
    write_rows(out / "splice.csv", [f"p{k}" for k in range(len(rows[0]) - 1)] + ["class"], rows)


def waveform(out, m=5000, seed=0):
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
    from pdml.synthetic import waveform as gen

    data = gen(m, seed=seed)
    rows = [[f"{v:.6f}" for v in x] + [int(y)] for x, y in zip(data.X, data.y_true)]
    write_rows(out / "waveform.csv", [f"x{k}" for k in range(21)] + ["class"], rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data"))
    ap.add_argument("--wheels", default=None, help="directory holding (or receiving) the wheels")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        wdir = Path(args.wheels or tmp)
        resp = fetch_wheel("responsibly", wdir)
        kds = fetch_wheel("keel-ds", wdir)
        adult(resp, out)
        german(resp, out)
        keel(kds, "banana", out, "banana")
        keel(kds, "ring", out, "ringnorm")
        keel(kds, "twonorm", out, "twonorm")
        keel(kds, "segment", out, "image", unique=True)
        splice(kds, out)
    waveform(out)


if __name__ == "__main__":
    main()
