"""Build the benchmark CSVs in data/ from UCI copies bundled in PyPI wheels.

The wheels are fetched with ``pip download`` (no install); only files inside them
are read.  Outputs follow the ODDS/ADBench anomaly constructions:

glass       9 oxide features (Id dropped); class 6 (tableware, 9 rows) is the outlier class.
ionosphere  33 features (the constant second attribute already removed); 'b' is outlier.
satellite   36 features, sat.trn + sat.tst; classes 2, 4, 5 are outliers (2036 rows).
musk        Musk v2; bags NON-MUSK j146/j147/252 are inliers, MUSK 211/213 outliers.
            The wheel lists bags by numeric id in file order, so the bags are picked
            by position: 1 (MUSK-211, 19 rows), 3 (MUSK-213, 78 rows) and the three
            largest non-musk bags (1044 + 1010 + 911 = 2965 rows).
letter      letters A, B, C as the normal class; pairs of normal rows are concatenated
            into 32 features (1500 rows); 100 outliers concatenate a row of another
            letter with a normal row, in random order.

Usage: python scripts/prepare_datasets.py [--out data] [--cache /tmp/wheels]
"""

import argparse
import csv
import io
import os
import subprocess
import sys
import zipfile

import numpy as np

WHEELS = {
    "imbalanced-databases==0.1.1": "imbalanced_databases-0.1.1-py3-none-any.whl",
    "keel-ds==0.2.5": "keel_ds-0.2.5-py3-none-any.whl",
    "mil==1.0.5": "mil-1.0.5-py3-none-any.whl",
}
LETTER_SEED = 20230616


def fetch(cache):
    os.makedirs(cache, exist_ok=True)
    paths = {}
    for req, fname in WHEELS.items():
        path = os.path.join(cache, fname)
        if not os.path.exists(path):
            subprocess.run([sys.executable, "-m", "pip", "download", req, "--no-deps",
                            "-d", cache, "-q"], check=True)
        paths[req.split("==")[0]] = path
    return paths


def read_member(whl, member):
    with zipfile.ZipFile(whl) as z:
        return z.read(member).decode("utf-8")


def keel_rows(text):
    return [line.split(",") for line in text.splitlines()
            if line.strip() and not line.startswith("@")]


def write(path, X, y, prefix="x"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"{prefix}{j}" for j in range(X.shape[1])] + ["label"])
        for row, lab in zip(X, y):
            w.writerow([repr(float(v)) if not float(v).is_integer() else str(int(v)) for v in row]
                       + [int(lab)])
    print(f"{path}: n={len(y)} d={X.shape[1]} outliers={int(np.sum(y))} "
          f"({100 * np.mean(y):.2f}%)")


def glass(w):
    rows = [r.split(",") for r in read_member(
        w["imbalanced-databases"], "imbalanced_databases/data/glass/glass.data.txt").split()]
    arr = np.array(rows, dtype=float)
    return arr[:, 1:10], (arr[:, 10] == 6).astype(int)


def ionosphere(w):
    rows = keel_rows(read_member(w["keel-ds"], "keel_ds/data/balanced/raw/ionosphere.dat"))
    X = np.array([[float(v) for v in r[:-1]] for r in rows])
    y = np.array([r[-1].strip() == "b" for r in rows], dtype=int)
    return X, y


def satellite(w):
    base = "imbalanced_databases/data/satimage/"
    text = read_member(w["imbalanced-databases"], base + "sat.trn.txt") + "\n" + \
        read_member(w["imbalanced-databases"], base + "sat.tst.txt")
    arr = np.loadtxt(io.StringIO(text))
    return arr[:, :36], np.isin(arr[:, 36], [2, 4, 5]).astype(int)


def musk(w):
    arr = np.loadtxt(io.StringIO(read_member(w["mil"], "mil/data/datasets/csv/musk2.csv")),
                     delimiter=",")
    label, bag, X = arr[:, 0], arr[:, 1].astype(int), arr[:, 2:]
    order = list(dict.fromkeys(bag.tolist()))
    musk_bags = [b for b in order if label[bag == b][0] == 1]
    non_musk = [b for b in order if label[bag == b][0] == 0]
    outlier_bags = [musk_bags[0], musk_bags[2]]  # MUSK-211, MUSK-213
    inlier_bags = sorted(non_musk, key=lambda b: -np.sum(bag == b))[:3]
    keep = np.isin(bag, outlier_bags + inlier_bags)
    return X[keep], np.isin(bag[keep], outlier_bags).astype(int)


def letter(w):
    rows = keel_rows(read_member(w["keel-ds"], "keel_ds/data/balanced/raw/letter.dat"))
    X = np.array([[float(v) for v in r[:-1]] for r in rows])
    cls = np.array([r[-1].strip() for r in rows])
    rng = np.random.default_rng(LETTER_SEED)
    normal = np.flatnonzero(np.isin(cls, ["A", "B", "C"]))
    other = np.flatnonzero(~np.isin(cls, ["A", "B", "C"]))
    pairs = rng.choice(normal, size=(1500, 2), replace=True)
    inliers = np.hstack([X[pairs[:, 0]], X[pairs[:, 1]]])
    odd = X[rng.choice(other, size=100, replace=False)]
    partner = X[rng.choice(normal, size=100, replace=True)]
    first = rng.random(100) < 0.5
    outliers = np.where(first[:, None], np.hstack([odd, partner]), np.hstack([partner, odd]))
    Xo = np.vstack([inliers, outliers])
    y = np.r_[np.zeros(1500, int), np.ones(100, int)]
    perm = rng.permutation(len(y))
    return Xo[perm], y[perm]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    ap.add_argument("--cache", default="/tmp/tabadm-wheels")
    args = ap.parse_args()
    w = fetch(args.cache)
    os.makedirs(args.out, exist_ok=True)
    for name, fn in [("glass", glass), ("ionosphere", ionosphere), ("satellite", satellite),
                     ("musk", musk), ("letter", letter)]:
        X, y = fn(w)
        write(os.path.join(args.out, f"{name}.csv"), X, y)


if __name__ == "__main__":
    main()
