"""Artifact writers: CSV tables, legacy VTK meshes, MatrixMarket matrices.

All writers go through :func:`atomic_write` so an interrupted run never
leaves a truncated file behind.
"""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from pathlib import Path

import numpy as np
import scipy.io

__all__ = [
    "SPECTRUM_HEADER",
    "atomic_write",
    "fmt",
    "write_csv",
    "write_dispersion_csv",
    "write_matrix_market",
    "write_perturbation_csv",
    "write_spectrum_csv",
    "write_sweep_csv",
    "write_vtk_surface",
    "write_vtk_volume",
]

SPECTRUM_HEADER = ["mode_index", "omega", "omega_squared", "D_energy", "S_energy", "coupling"]
DISPERSION_HEADER = ["n", "m", "z_nm", "h_over_a", "Bo", "lambda_sq", "omega_sq"]
SWEEP_HEADER = ["Bo", "mode_index", "omega", "tracking_overlap"]
PERTURBATION_HEADER = ["mode_index", "omega0", "slope_formula", "slope_fd", "rel_error"]


def fmt(x):
    """17 significant digits, enough for a lossless double round trip."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def atomic_write(path, data, mode="w"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return atomic_write(path, buf.getvalue())


def write_spectrum_csv(path, spectrum, ops):
    rows = []
    for j, m in enumerate(spectrum):
        rows.append([j, m.omega, m.omega_squared, ops.dirichlet_energy(m.phi),
                     ops.surface_energy(m.xi), ops.coupling(m.phi, m.xi)])
    return write_csv(path, SPECTRUM_HEADER, rows)


def write_dispersion_csv(path, points):
    return write_csv(path, DISPERSION_HEADER,
                     [[p.n, p.m, p.z_nm, p.h_over_a, p.Bo, p.lambda_sq, p.omega_sq] for p in points])


def write_sweep_csv(path, table):
    return write_csv(path, SWEEP_HEADER, table.rows())


def write_perturbation_csv(path, reports):
    return write_csv(path, PERTURBATION_HEADER,
                     [[r.mode_index, r.omega0, r.slope_formula, r.slope_fd, r.rel_error] for r in reports])


def _vtk(title, points, cells, cell_type, fields):
    out = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    out.append(f"POINTS {len(points)} double")
    out.extend(" ".join(fmt(c) for c in p) for p in points)
    nv = cells.shape[1]
    out.append(f"CELLS {len(cells)} {len(cells) * (nv + 1)}")
    out.extend(f"{nv} " + " ".join(str(int(i)) for i in c) for c in cells)
    out.append(f"CELL_TYPES {len(cells)}")
    out.extend([str(cell_type)] * len(cells))
    if fields:
        out.append(f"POINT_DATA {len(points)}")
        for name, values in fields.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (len(points),):
                raise ValueError(f"field {name!r} has shape {values.shape}, expected ({len(points)},)")
            out.append(f"SCALARS {name} double 1")
            out.append("LOOKUP_TABLE default")
            out.extend(fmt(v) for v in values)
    return "\n".join(out) + "\n"


def write_vtk_volume(path, mesh, phi, title="sloshing potential"):
    """Tetrahedral mesh (VTK cell type 10) with point field ``phi``."""
    return atomic_write(path, _vtk(title, mesh.nodes, mesh.tets, 10, {"phi": phi}))


def write_vtk_surface(path, surface, xi, title="free-surface elevation"):
    """Free-surface triangles (VTK cell type 5) at z = 0 with point field ``xi``."""
    pts = np.column_stack([surface.nodes, np.zeros(surface.n_nodes)])
    return atomic_write(path, _vtk(title, pts, surface.triangles, 5, {"xi": xi}))


def write_matrix_market(path, matrix, comment=""):
    buf = io.BytesIO()
    scipy.io.mmwrite(buf, matrix, comment=comment, symmetry="symmetric", precision=17)
    return atomic_write(path, buf.getvalue(), mode="wb")
