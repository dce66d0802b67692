"""Field and metrics writers. All outputs are byte-deterministic."""

from __future__ import annotations

import json
import os

import numpy as np

from mgar_topopt.metrics import CSV_HEADER

FORMATS = ("graymap", "csv", "vtk-legacy")
EXTENSIONS = {"graymap": ".pgm", "csv": ".csv", "vtk-legacy": ".vtk"}


def _checked(field, nel) -> np.ndarray:
    values = np.asarray(field, dtype=float).ravel()
    if values.size != int(np.prod(nel)):
        raise ValueError(f"field has {values.size} values, mesh has {int(np.prod(nel))} elements")
    if not np.all(np.isfinite(values)):
        raise ValueError("field contains NaN or infinite values")
    return values


def write_graymap(field, nel, path) -> None:
    """8-bit binary PGM, solid black, top row first. 2D only."""
    if len(nel) != 2:
        raise ValueError("graymap export is only defined for 2D fields")
    values = _checked(field, nel)
    nx, ny = nel
    img = np.rint(255 * (1 - np.clip(values, 0, 1))).astype(np.uint8).reshape(ny, nx)[::-1]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def write_csv_field(field, nel, path) -> None:
    """One line per mesh row (x varies along a line), rows by increasing y then z."""
    values = _checked(field, nel)
    rows = values.reshape(-1, nel[0])
    with open(path, "w") as fh:
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_csv_field(path, nel=None) -> np.ndarray:
    with open(path) as fh:
        rows = [line.strip() for line in fh if line.strip()]
    values = np.array([float(v) for row in rows for v in row.split(",")])
    if nel is not None and values.size != int(np.prod(nel)):
        raise ValueError(f"{path}: {values.size} values, expected {int(np.prod(nel))}")
    return values


def write_vtk_field(field, nel, path, name: str = "density") -> None:
    """ASCII legacy VTK structured points with the field as cell data."""
    values = _checked(field, nel)
    dims = list(n + 1 for n in nel) + [1] * (3 - len(nel))
    lines = [
        "# vtk DataFile Version 3.0",
        name,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS {} {} {}".format(*dims),
        "ORIGIN 0 0 0",
        "SPACING 1 1 1",
        f"CELL_DATA {values.size}",
        f"SCALARS {name} double 1",
        "LOOKUP_TABLE default",
    ]
    lines.extend(repr(float(v)) for v in values)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def export_field(field, nel, path, fmt: str) -> None:
    if fmt == "graymap":
        write_graymap(field, nel, path)
    elif fmt == "csv":
        write_csv_field(field, nel, path)
    elif fmt == "vtk-legacy":
        write_vtk_field(field, nel, path)
    else:
        raise ValueError(f"unknown format {fmt!r}; choose from {', '.join(FORMATS)}")


def export_all(field, nel, directory, stem: str) -> list[str]:
    """Write every format that applies to the field's dimension; returns the paths."""
    written = []
    for fmt in FORMATS:
        if fmt == "graymap" and len(nel) != 2:
            continue
        path = os.path.join(directory, stem + EXTENSIONS[fmt])
        export_field(field, nel, path, fmt)
        written.append(path)
    return written


def write_metrics(history, path, include_wall: bool = False) -> None:
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for rec in history:
            fh.write(rec.csv_row(include_wall) + "\n")


def write_json(data, path) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
