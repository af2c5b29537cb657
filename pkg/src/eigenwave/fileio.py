"""Bit-exact field persistence and simple export formats.

Field files ("EWF1") carry one ASCII header line followed by the raw
little-endian float64 payload in node-index order, so the round trip
write -> read reproduces every value bit for bit.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .grid import Grid2D, ScalarField

MAGIC = "EWF1"


class FieldFileError(ValueError):
    """Malformed field file header or payload."""


def write_field(path: str | os.PathLike, field: ScalarField) -> None:
    g = field.grid
    header = f"{MAGIC} {g.nx} {g.nz} {g.hx!r} {g.hz!r} {g.x0!r} {g.z0!r}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(field.values.astype("<f8").tobytes())


def read_field(path: str | os.PathLike) -> ScalarField:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").strip()
        parts = header.split()
        if len(parts) != 7 or parts[0] != MAGIC:
            raise FieldFileError(f"bad header {header!r} in {path}")
        try:
            nx, nz = int(parts[1]), int(parts[2])
            hx, hz, x0, z0 = (float(p) for p in parts[3:7])
        except ValueError as exc:
            raise FieldFileError(f"unparsable header {header!r} in {path}") from exc
        grid = Grid2D(nx=nx, nz=nz, hx=hx, hz=hz, x0=x0, z0=z0)
        payload = fh.read()
    expected = grid.n_nodes * 8
    if len(payload) != expected:
        raise FieldFileError(
            f"payload size mismatch in {path}: header promises {expected} bytes, "
            f"found {len(payload)}"
        )
    values = np.frombuffer(payload, dtype="<f8")
    return ScalarField(grid, values)


def write_field_csv(path: str | os.PathLike, field: ScalarField) -> None:
    """Export as x,z,value rows with 17 significant digits (lossless floats)."""
    g = field.grid
    with open(path, "w", encoding="ascii") as fh:
        fh.write("x,z,value\n")
        vals = field.values
        for iz in range(g.nz):
            z = g.node_z(iz)
            base = iz * g.nx
            for ix in range(g.nx):
                fh.write(f"{g.node_x(ix):.17g},{z:.17g},{vals[base + ix]:.17g}\n")


def write_pgm(path: str | os.PathLike, field: ScalarField) -> None:
    """8-bit binary PGM quick-look, linear min-max scaling."""
    img = field.as_2d()
    lo, hi = float(img.min()), float(img.max())
    if hi > lo:
        scaled = np.round((img - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(img)
    data = scaled.astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{field.grid.nx} {field.grid.nz}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def ensure_dir(path: str | os.PathLike) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
