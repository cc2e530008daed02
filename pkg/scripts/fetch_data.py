"""Fetch the two benchmark data sets into ``data/``.

* ``data/ais.csv``: Australian Institute of Sport athletes, 202 rows, the
  11 continuous variables rcc, wcc, hc, hg, ferr, bmi, ssf, pcBfat, lbm, ht,
  wt and the label column ``sex`` (f/m).  Source: the ``rdatasets`` package
  (DAAG::ais), or the Rdatasets CSV mirror.
* ``data/sonar.csv``: sonar returns, 208 rows, 60 band energies
  ``band01..band60`` and the label column ``class`` (metal/rock).  Source: the
  UCI file when reachable, else the KEEL copy shipped in the ``keel_ds``
  wheel (values rounded to 3 decimals).

Usage::

    python3 scripts/fetch_data.py [--out data]
"""

import argparse
import csv
import io
import subprocess
import sys
import tempfile
import urllib.request
import zipfile
from pathlib import Path

AIS_COLUMNS = ["rcc", "wcc", "hc", "hg", "ferr", "bmi", "ssf", "pcBfat", "lbm", "ht", "wt"]
AIS_URL = "https://raw.githubusercontent.com/vincentarelbundock/Rdatasets/master/csv/DAAG/ais.csv"
SONAR_URL = (
    "https://archive.ics.uci.edu/ml/machine-learning-databases/"
    "undocumented/connectionist-bench/sonar/sonar.all-data"
)
KEEL_WHEEL = "keel_ds==0.2.5"
KEEL_MEMBER = "keel_ds/data/balanced/raw/sonar.dat"
SONAR_CLASSES = {"M": "metal", "R": "rock"}


def _download(url, timeout=30):
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        return resp.read().decode()


def ais_rows():
    try:
        import rdatasets

        frame = rdatasets.data("DAAG", "ais")
        records = frame[AIS_COLUMNS + ["sex"]].astype(str).values.tolist()
        return records
    except ImportError:
        reader = csv.DictReader(io.StringIO(_download(AIS_URL)))
        return [[row[c] for c in AIS_COLUMNS + ["sex"]] for row in reader]


def _sonar_lines_from_keel():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", KEEL_WHEEL, "--no-deps", "-q", "-d", tmp],
            check=True,
        )
        wheel = next(Path(tmp).glob("keel_ds-*.whl"))
        text = zipfile.ZipFile(wheel).read(KEEL_MEMBER).decode()
    return [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("@")]


def sonar_rows():
    try:
        lines = _download(SONAR_URL).splitlines()
    except OSError:
        lines = _sonar_lines_from_keel()
    rows = []
    for ln in lines:
        fields = [f.strip() for f in ln.split(",")]
        if len(fields) != 61:
            continue
        rows.append([repr(float(v)) for v in fields[:60]] + [SONAR_CLASSES[fields[60]]])
    return rows


def write(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows)")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data"))
    args = parser.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write(out / "ais.csv", AIS_COLUMNS + ["sex"], ais_rows())
    write(out / "sonar.csv", [f"band{j:02d}" for j in range(1, 61)] + ["class"], sonar_rows())


if __name__ == "__main__":
    main()
