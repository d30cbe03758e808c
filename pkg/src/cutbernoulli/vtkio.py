"""Legacy ASCII VTK unstructured-grid files for triangle meshes with point data."""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgument

VTK_TRIANGLE = 5
FIELD_NAMES = ("phi", "u", "p", "beta_x", "beta_y")


def atomic_write(path, text: str) -> None:
    """Write to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


@dataclass
class Snapshot:
    points: np.ndarray                    # (nv, 2)
    triangles: np.ndarray                 # (nt, 3)
    fields: dict[str, np.ndarray] = field(default_factory=dict)
    title: str = "cutbernoulli"

    def to_text(self) -> str:
        nv, nt = len(self.points), len(self.triangles)
        out = ["# vtk DataFile Version 3.0", self.title.replace("\n", " ")[:255], "ASCII",
               "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
        out += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in self.points]
        out.append(f"CELLS {nt} {4 * nt}")
        out += [f"3 {a} {b} {c}" for a, b, c in self.triangles]
        out.append(f"CELL_TYPES {nt}")
        out += [str(VTK_TRIANGLE)] * nt
        if self.fields:
            out.append(f"POINT_DATA {nv}")
            for name, values in self.fields.items():
                values = np.asarray(values, dtype=float)
                if values.shape != (nv,):
                    raise InvalidArgument(f"field {name!r} has shape {values.shape}, expected ({nv},)")
                out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                out += [_fmt(v) for v in values]
        return "\n".join(out) + "\n"

    def write(self, path) -> None:
        atomic_write(path, self.to_text())


def parse_snapshot(text: str) -> Snapshot:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# vtk DataFile"):
        raise InvalidArgument("not a legacy VTK file")
    title = lines[1]
    if lines[2].strip() != "ASCII" or lines[3].strip() != "DATASET UNSTRUCTURED_GRID":
        raise InvalidArgument("only ASCII unstructured grids are supported")
    i = 4
    head = lines[i].split()
    nv = int(head[1])
    pts = np.array([ln.split()[:2] for ln in lines[i + 1:i + 1 + nv]], dtype=float).reshape(nv, 2)
    i += 1 + nv
    nt = int(lines[i].split()[1])
    cells = np.array([ln.split() for ln in lines[i + 1:i + 1 + nt]], dtype=np.int64).reshape(nt, 4)
    if np.any(cells[:, 0] != 3):
        raise InvalidArgument("only triangle cells are supported")
    i += 1 + nt
    i += 1 + nt  # CELL_TYPES block
    fields = {}
    if i < len(lines) and lines[i].startswith("POINT_DATA"):
        i += 1
        while i < len(lines):
            parts = lines[i].split()
            if not parts:
                i += 1
                continue
            if parts[0] != "SCALARS":
                raise InvalidArgument(f"unexpected line {i + 1}: {lines[i]!r}")
            name = parts[1]
            fields[name] = np.array(lines[i + 2:i + 2 + nv], dtype=float)
            i += 2 + nv
    return Snapshot(pts, cells[:, 1:], fields, title)


def read_snapshot(path) -> Snapshot:
    return parse_snapshot(Path(path).read_text())
