"""Matrix and patch-set files.

Binary matrix format::

    b"NLDM1\\n"
    b"<rows> <cols> f8le\\n"
    rows * cols little-endian IEEE-754 doubles, row-major (C order)

Text format: a ``# NLDM1 <rows> <cols>`` comment line followed by one CSV
row per matrix row, each value printed with 17 significant digits so the
round trip is exact. Files ending in ``.csv`` use the text format.

A patch set is a directory holding ``manifest.json`` plus matrix files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, MatrixHeaderError, TruncatedPayloadError
from .simpqr import PatchSet

__all__ = ["save_matrix", "load_matrix", "save_patchset", "load_patchset", "MAGIC"]

MAGIC = b"NLDM1\n"
DTYPE_TAG = "f8le"
SCHEMA_VERSION = 1


def _is_text(path):
    return Path(path).suffix.lower() == ".csv"


def save_matrix(path, m, text=None):
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-D matrix, got shape {m.shape}")
    text = _is_text(path) if text is None else text
    rows, cols = m.shape
    path = Path(path)
    if text:
        lines = [f"# NLDM1 {rows} {cols}"]
        lines += [",".join(f"{v:.17g}" for v in row) for row in m]
        path.write_text("\n".join(lines) + "\n")
    else:
        header = MAGIC + f"{rows} {cols} {DTYPE_TAG}\n".encode("ascii")
        path.write_bytes(header + np.ascontiguousarray(m, dtype="<f8").tobytes())
    return path


def _load_text(raw):
    lines = raw.decode("utf-8").splitlines()
    if not lines or not lines[0].startswith("# NLDM1"):
        raise MatrixHeaderError("missing '# NLDM1 rows cols' header line")
    try:
        _, _, rs, cs = lines[0].split()
        rows, cols = int(rs), int(cs)
    except ValueError as exc:
        raise MatrixHeaderError(f"bad header {lines[0]!r}") from exc
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) < rows:
        raise TruncatedPayloadError(f"expected {rows} rows, found {len(body)}")
    if len(body) > rows:
        raise DimensionMismatchError(f"expected {rows} rows, found {len(body)}")
    out = np.empty((rows, cols))
    for i, ln in enumerate(body):
        vals = ln.split(",")
        if len(vals) != cols:
            raise DimensionMismatchError(f"row {i} has {len(vals)} values, expected {cols}")
        out[i] = [float(v) for v in vals]
    return out


def load_matrix(path):
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        if raw.startswith(b"# NLDM1"):
            return _load_text(raw)
        raise MatrixHeaderError(f"{path}: not an NLDM1 matrix file")
    end = raw.find(b"\n", len(MAGIC))
    if end < 0:
        raise MatrixHeaderError(f"{path}: unterminated header")
    parts = raw[len(MAGIC):end].decode("ascii", errors="replace").split()
    if len(parts) != 3 or parts[2] != DTYPE_TAG:
        raise MatrixHeaderError(f"{path}: bad header {raw[len(MAGIC):end]!r}")
    try:
        rows, cols = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise MatrixHeaderError(f"{path}: bad dimensions") from exc
    if rows < 0 or cols < 0:
        raise MatrixHeaderError(f"{path}: negative dimensions")
    payload = raw[end + 1:]
    need = rows * cols * 8
    if len(payload) < need:
        raise TruncatedPayloadError(f"{path}: payload has {len(payload)} bytes, need {need}")
    if len(payload) > need:
        raise DimensionMismatchError(f"{path}: payload has {len(payload)} bytes, header implies {need}")
    return np.frombuffer(payload, dtype="<f8").astype(float).reshape(rows, cols)


def save_patchset(directory, patches: PatchSet, extra=None):
    """Write bases stacked as a ``(K*n) x r`` matrix plus optional base points."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_matrix(d / "bases.nldm", patches.stacked().reshape(-1, patches.r))
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "n": patches.n,
        "r": patches.r,
        "K": patches.K,
        "bases": "bases.nldm",
        "base_points": None,
    }
    if patches.base_points is not None:
        save_matrix(d / "base_points.nldm", patches.base_points)
        manifest["base_points"] = "base_points.nldm"
    if extra:
        manifest.update(extra)
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return d


def load_patchset(directory):
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    n, r, K = manifest["n"], manifest["r"], manifest["K"]
    stacked = load_matrix(d / manifest["bases"])
    if stacked.shape != (K * n, r):
        raise DimensionMismatchError(f"bases file has shape {stacked.shape}, manifest says {(K * n, r)}")
    bp = None
    if manifest.get("base_points"):
        bp = load_matrix(d / manifest["base_points"])
    return PatchSet.from_array(stacked.reshape(K, n, r), bp)
