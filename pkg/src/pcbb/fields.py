"""Export of cell fields on a :class:`~pcbb.heat_fvm.Grid`.

CSV files carry one row per cell with integer indices ``i, j[, k]`` (``i``
along x) and the value; VTK files are legacy ASCII ``STRUCTURED_POINTS``
with the field stored as cell data.
"""

from __future__ import annotations

import os

import numpy as np

from .heat_fvm import Grid


def _check(grid: Grid, values) -> np.ndarray:
    values = np.asarray(values, dtype=float).ravel()
    if values.size != grid.n:
        raise ValueError(f"field has {values.size} values, grid has {grid.n} cells")
    return values


def write_field_csv(path: str | os.PathLike, grid: Grid, values, name: str = "value") -> None:
    values = _check(grid, values)
    idx = np.indices(grid.shape).reshape(grid.dim, -1).T
    cols = "ijk"[: grid.dim]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(cols) + f",{name}\n")
        for ijk, v in zip(idx, values):
            fh.write(",".join(map(str, ijk)) + f",{float(v)!r}\n")


def read_field_csv(path: str | os.PathLike, grid: Grid) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    idx = data[:, : grid.dim].astype(int)
    out = np.empty(grid.shape)
    out[tuple(idx.T)] = data[:, grid.dim]
    return out.ravel()


def write_field_vtk(path: str | os.PathLike, grid: Grid, values, name: str = "value") -> None:
    values = _check(grid, values)
    dims = [grid.N + 1] * grid.dim + [1] * (3 - grid.dim)
    spacing = [grid.h] * grid.dim + [1.0] * (3 - grid.dim)
    # VTK runs x fastest; cells are stored with the last axis fastest
    ordered = values.reshape(grid.shape).ravel(order="F")
    with open(path, "w", newline="\n") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{name}\n")
        fh.write("ASCII\n")
        fh.write("DATASET STRUCTURED_POINTS\n")
        fh.write("DIMENSIONS {} {} {}\n".format(*dims))
        fh.write("ORIGIN 0 0 0\n")
        fh.write("SPACING {!r} {!r} {!r}\n".format(*spacing))
        fh.write(f"CELL_DATA {grid.n}\n")
        fh.write(f"SCALARS {name} double 1\n")
        fh.write("LOOKUP_TABLE default\n")
        for v in ordered:
            fh.write(f"{float(v)!r}\n")
