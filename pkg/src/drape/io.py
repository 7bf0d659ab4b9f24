"""Field container, JSON sidecars and CSV export of energy breakdowns.

Binary layout (little-endian): ``nx`` and ``ny`` as int64, ``L`` as float64,
then ``ux``, ``uy`` and ``xi`` as row-major ``(ny, nx)`` float64 arrays.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .energy import DeformationField, Grid
from .params import params_from_dict

_HEADER = struct.Struct("<qqd")

BREAKDOWN_COLUMNS = ["e_xx", "e_shear", "e_yy", "bending", "gravity", "total", "bulk", "excess"]


def write_field(field: DeformationField, path, params=None):
    """Write the binary container; with ``params`` also write ``<path>.json``."""
    g = field.grid
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(g.nx, g.ny, float(g.L)))
        for a in (field.ux, field.uy, field.xi):
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    if params is not None:
        write_json(params.to_dict(), sidecar_path(path))
    return path


def read_field(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    nx, ny, L = _HEADER.unpack_from(data)
    n = nx * ny
    expect = _HEADER.size + 3 * 8 * n
    if nx < 4 or ny < 4 or len(data) != expect:
        raise ValueError(f"{path}: size {len(data)} does not match header {nx}x{ny} (expected {expect})")
    arr = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(3, ny, nx).astype(np.float64)
    return DeformationField.from_stacked(Grid(nx=int(nx), ny=int(ny), L=float(L)), arr)


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def read_sidecar(path):
    return params_from_dict(json.loads(sidecar_path(path).read_text()))


def write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "to_dict"):
        return o.to_dict()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_breakdowns_csv(records, path, extra_columns=()):
    """One row per evaluation. ``records`` holds ``(labels, EnergyBreakdown)``
    pairs where ``labels`` is a dict for ``extra_columns``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(extra_columns) + BREAKDOWN_COLUMNS)
        for labels, b in records:
            d = b.to_dict()
            w.writerow([labels.get(c, "") for c in extra_columns] + [repr(float(d[c])) for c in BREAKDOWN_COLUMNS])


def write_trace_csv(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["start", "iteration", "energy", "grad_norm", "step"])
        for s in trace:
            for it, e, gn, a in s.history:
                w.writerow([s.label, it, repr(float(e)), repr(float(gn)), repr(float(a))])
