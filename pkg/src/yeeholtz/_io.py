# vim:set et sw=4 ts=4:
# SPDX-FileCopyrightText: 2024-present Atri Bhattacharya <atrib@duck.com>
#
# SPDX-License-Identifier: MIT
#

"""
Writers for field files (VTK legacy, raw binary with a text header), CSV
tables and JSON summaries
"""

import csv
import json
import logging as log
from pathlib import Path

import numpy as np


class NumpyEncoder(json.JSONEncoder):
    """A class to allow JSONEncoder to interpret numpy scalars and arrays"""

    def default(self, o):
        """
        Convert numpy types, sets and paths into plain JSON types

        :o: object not serializable by the default encoder
        :return: JSON serializable equivalent
        """
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, (set, frozenset)):
            return sorted(o)
        if isinstance(o, Path):
            return o.as_posix()
        return super().default(o)


def write_json(path, data):
    """Write `data` as indented JSON"""
    Path(path).write_text(
        json.dumps(data, cls=NumpyEncoder, indent=2) + "\n", encoding="utf-8"
    )
    log.debug("Wrote %s", path)


def write_csv(path, header, rows):
    """Write a header line and rows to a CSV file"""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    log.debug("Wrote %s", path)


def _geometry(grid, component):
    origin = tuple(
        lo + off * d
        for lo, off, d in zip(
            grid.domain.lower, grid.STAGGER[component], grid.spacing
        )
    )
    dims = grid.shape(component)
    spacing = tuple(grid.spacing)
    if grid.dim == 2:  # noqa: PLR2004
        return dims + (1,), origin + (0.0,), spacing + (1.0,)
    return dims, origin, spacing


def write_vtk(path, grid, component, data, name=None):
    """
    Write one field component as VTK legacy ASCII STRUCTURED_POINTS, x index
    fastest
    """
    dims, origin, spacing = _geometry(grid, component)
    values = np.asarray(data, dtype=float).ravel(order="F")
    lines = [
        "# vtk DataFile Version 3.0",
        f"{name or component}",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS " + " ".join(str(n) for n in dims),
        "ORIGIN " + " ".join(f"{x:.17g}" for x in origin),
        "SPACING " + " ".join(f"{x:.17g}" for x in spacing),
        f"POINT_DATA {values.size}",
        f"SCALARS {name or component} double 1",
        "LOOKUP_TABLE default",
    ]
    body = "\n".join(f"{v:.17g}" for v in values)
    text = "\n".join([*lines, body]) + "\n"
    Path(path).write_text(text, encoding="utf-8")
    log.debug("Wrote %s", path)


def write_raw(path, grid, component, data):
    """
    Write one field component as little endian float64 (x index fastest) to
    `path` with a `key: value` text sidecar next to it (suffix .hdr)
    """
    path = Path(path)
    dims, origin, spacing = _geometry(grid, component)
    values = np.asarray(data, dtype="<f8")
    path.write_bytes(values.ravel(order="F").tobytes())
    header = {
        "component": component,
        "dtype": "float64",
        "byte_order": "little",
        "order": "x-fastest",
        "dims": " ".join(str(n) for n in dims[: grid.dim]),
        "origin": " ".join(f"{x:.17g}" for x in origin[: grid.dim]),
        "spacing": " ".join(f"{x:.17g}" for x in spacing[: grid.dim]),
    }
    path.with_suffix(".hdr").write_text(
        "".join(f"{k}: {v}\n" for k, v in header.items()), encoding="utf-8"
    )
    log.debug("Wrote %s", path)


def read_raw(path):
    """Read a raw field written by write_raw back into an array"""
    path = Path(path)
    header = {}
    text = path.with_suffix(".hdr").read_text(encoding="utf-8")
    for line in text.splitlines():
        key, _, val = line.partition(":")
        header[key.strip()] = val.strip()
    dims = tuple(int(n) for n in header["dims"].split())
    values = np.frombuffer(path.read_bytes(), dtype="<f8")
    return values.reshape(dims, order="F"), header
