#!/usr/bin/env python3
"""Build data/cars.csv from the Auto data (392 complete cases).

Usage: prep_cars.py SOURCE [OUT]

SOURCE is either Auto.csv or a wheel/zip that contains it (for example the
ISLP wheel, member ISLP/data/Auto.csv). Rows with a missing horsepower ("?")
are dropped. The car name is discarded and origin (1 = American,
2 = European, 3 = Japanese) becomes two indicators, origin_us and origin_eu.
Predictors are written unstandardized; pass --standardize to the CLI.
"""

import csv
import io
import sys
import zipfile

COLUMNS = ["mpg", "cylinders", "displacement", "horsepower", "weight", "acceleration", "year"]


def read_source(path):
    if zipfile.is_zipfile(path):
        with zipfile.ZipFile(path) as z:
            member = next(n for n in z.namelist() if n.endswith("/Auto.csv") or n == "Auto.csv")
            return z.read(member).decode("utf-8")
    with open(path, encoding="utf-8") as f:
        return f.read()


def main():
    if len(sys.argv) not in (2, 3):
        sys.exit(__doc__)
    out = sys.argv[2] if len(sys.argv) == 3 else "data/cars.csv"
    rows = list(csv.DictReader(io.StringIO(read_source(sys.argv[1]))))
    kept = [r for r in rows if all(r[c].strip() not in ("", "?") for c in COLUMNS + ["origin"])]
    with open(out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(COLUMNS + ["origin_us", "origin_eu"])
        for r in kept:
            origin = int(r["origin"])
            w.writerow([r[c].strip() for c in COLUMNS] + [int(origin == 1), int(origin == 2)])
    print(f"wrote {len(kept)} rows to {out}", file=sys.stderr)


if __name__ == "__main__":
    main()
