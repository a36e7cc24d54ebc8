"""Rebuild the bundled LIBSVM benchmark files from public wheels.

Sources (fetched with ``pip download --no-deps``):

* ``keel_ds`` 0.2.5: Pima Indians diabetes and Statlog Australian credit.
* ``Orange3``: Johns Hopkins ionosphere (test fixture ``ionosphere.tab``).

Every feature is scaled linearly to [-1, 1] (constant features become 0)
and zero entries are omitted, matching the ``*_scale`` convention of the
LIBSVM dataset collection.

The KEEL copy of the Australian set lost the decimal point in three
continuous columns. Column 2 is restored exactly by its known range
[13.75, 80.25]; columns 3 and 7 are restored heuristically from the digit
count, so that file is an approximation of the original.

Usage::

    python scripts/make_datasets.py WHEEL_DIR OUT_DIR
"""

import glob
import io
import os
import sys
import zipfile

import numpy as np


def _wheel(directory, pattern):
    hits = sorted(glob.glob(os.path.join(directory, "**", pattern), recursive=True))
    if not hits:
        raise SystemExit(f"no wheel matching {pattern} under {directory}")
    return zipfile.ZipFile(hits[0])


def scale(x):
    lo, hi = x.min(axis=0), x.max(axis=0)
    out = np.zeros_like(x)
    ok = hi > lo
    out[:, ok] = -1.0 + 2.0 * (x[:, ok] - lo[ok]) / (hi[ok] - lo[ok])
    return out


def _restore_range(v, lo, hi):
    out = v.copy()
    for i, val in enumerate(v):
        for k in range(5):
            if lo - 1e-9 <= val / 10**k <= hi + 1e-9:
                out[i] = val / 10**k
                break
    return out


def _restore_digits(v):
    return np.where(v >= 1000, v / 1000, np.where(v >= 100, v / 100, np.where(v >= 10, v / 10, v)))


def keel_table(zf, name):
    text = zf.read(f"keel_ds/data/balanced/raw/{name}.dat").decode()
    rows = [ln.split(",") for ln in text.splitlines() if ln.strip() and not ln.startswith("@")]
    x = np.array([[float(t) for t in r[:-1]] for r in rows])
    y = np.array([r[-1].strip() for r in rows])
    return x, y


def ionosphere(zf):
    text = zf.read("Orange/tests/datasets/ionosphere.tab").decode()
    rows = [ln.split("\t") for ln in text.splitlines()[3:] if ln.strip()]
    x = np.array([[float(t) for t in r[:-1]] for r in rows])
    y = np.array([r[-1].strip() for r in rows])
    return x, y


def write(path, x, y, positive):
    buf = io.StringIO()
    for row, label in zip(x, y):
        feats = " ".join(f"{j + 1}:{v:.17g}" for j, v in enumerate(row) if v != 0.0)
        buf.write(f"{'+1' if label == positive else '-1'} {feats}".rstrip() + "\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def main(argv):
    wheels, out = argv[1], argv[2]
    os.makedirs(out, exist_ok=True)
    keel = _wheel(wheels, "keel_ds-*.whl")
    orange = _wheel(wheels, "orange3-*.whl")

    x, y = keel_table(keel, "pima")
    write(os.path.join(out, "diabetes_scale.libsvm"), scale(x), y, "tested_positive")

    x, y = ionosphere(orange)
    write(os.path.join(out, "ionosphere_scale.libsvm"), scale(x), y, "g")

    x, y = keel_table(keel, "australian")
    x[:, 1] = _restore_range(x[:, 1], 13.75, 80.25)
    x[:, 2] = _restore_digits(x[:, 2])
    x[:, 6] = _restore_digits(x[:, 6])
    write(os.path.join(out, "australian_scale.libsvm"), scale(x), y, "1")


if __name__ == "__main__":
    main(sys.argv)
