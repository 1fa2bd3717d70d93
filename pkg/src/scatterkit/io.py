"""Operator files, report writers and plot-ready CSV.

Matrix JSON format (``format = "scatterkit-matrix"``, ``version = 1``)::

    {"format": "scatterkit-matrix", "version": 1, "dim": n,
     "data": [[[re, im], ...], ...]}   # row-major, n rows of n pairs

Floats are written with Python's shortest round-trip repr (at most 17
significant digits), so save/load is bit-exact.  ``.npz`` files hold a single
complex128 array ``matrix``.

CSV files are UTF-8 with LF line endings, a header row and ``.`` decimals.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .operator_core import SpectralResolution

MATRIX_FORMAT = "scatterkit-matrix"
MATRIX_VERSION = 1

#: column headers of every plot-data kind
PLOT_KINDS = {
    "spectrum": ("index", "eigenvalue"),
    "density": ("lambda", "density"),
    "stationary": ("eps", "distance_to_limit"),
    "residual": ("t", "residual"),
    "gamma_spread": ("N", "spread"),
}


def matrix_to_json(A) -> str:
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError("only square matrices can be saved")
    data = [[[float(z.real), float(z.imag)] for z in row] for row in A]
    doc = {"format": MATRIX_FORMAT, "version": MATRIX_VERSION, "dim": A.shape[0], "data": data}
    return json.dumps(doc, separators=(",", ":")) + "\n"


def matrix_from_json(text: str) -> np.ndarray:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"unreadable matrix file: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != MATRIX_FORMAT:
        raise ValidationError("not a scatterkit-matrix document")
    if doc.get("version") != MATRIX_VERSION:
        raise ValidationError(f"unsupported matrix version {doc.get('version')!r}")
    n = doc.get("dim")
    arr = np.asarray(doc.get("data"), dtype=float)
    if not isinstance(n, int) or arr.shape != (n, n, 2):
        raise ValidationError("matrix data does not match dim")
    return arr[..., 0] + 1j * arr[..., 1]


def save_operator(A, path) -> Path:
    """Write ``A`` as JSON (``.json``) or binary (``.npz``)."""
    path = Path(path)
    M = np.asarray(getattr(A, "matrix", A), dtype=np.complex128)
    if path.suffix == ".npz":
        with open(path, "wb") as fh:
            np.savez(fh, matrix=M)
    else:
        path.write_text(matrix_to_json(M), encoding="utf-8", newline="\n")
    return path


def load_operator(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path, allow_pickle=False) as z:
            if "matrix" not in z:
                raise ValidationError("npz file has no 'matrix' array")
            return np.asarray(z["matrix"], dtype=np.complex128)
    return matrix_from_json(path.read_text(encoding="utf-8"))


def fmt(x) -> str:
    """Shortest round-trip text for a real number."""
    return repr(float(x))


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_text(path, text: str) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def write_json(path, doc) -> Path:
    return write_text(path, json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")


def density_histogram(S: SpectralResolution, lo: float, hi: float, bins: int):
    """Normalized eigenvalue histogram: ``(centers, counts / (dim * width))``."""
    counts, edges = np.histogram(S.eigenvalues, bins=bins, range=(lo, hi))
    width = edges[1] - edges[0]
    return 0.5 * (edges[1:] + edges[:-1]), counts / (S.dim * width)


def plot_rows(data, kind: str):
    """Rows for a plot-data kind.

    ``data`` by kind: ``spectrum`` a :class:`SpectralResolution` or eigenvalue
    array; ``density`` a pair ``(centers, values)``; ``stationary`` and
    ``residual`` a ``WaveResult`` (its ``samples``) or a list of pairs;
    ``gamma_spread`` a list of ``(N, SmoothnessReport or spread)``.
    """
    if kind not in PLOT_KINDS:
        raise ValidationError(f"unknown plot kind {kind!r}")
    if kind == "spectrum":
        lam = data.eigenvalues if isinstance(data, SpectralResolution) else np.asarray(data, dtype=float)
        return [(i, float(v)) for i, v in enumerate(lam)]
    if kind == "density":
        x, y = data
        return [(float(a), float(b)) for a, b in zip(x, y)]
    if kind in ("stationary", "residual"):
        pairs = getattr(data, "samples", data)
        return [(float(a), float(b)) for a, b in pairs]
    return [(int(n), float(getattr(r, "spread", r))) for n, r in data]


def emit_plotdata(data, kind: str, path) -> Path:
    """Write one plot-ready CSV with the documented header for ``kind``."""
    rows = plot_rows(data, kind)
    return write_csv(path, PLOT_KINDS[kind], rows)
