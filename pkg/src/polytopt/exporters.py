"""Exporters: legacy ASCII VTK with polyhedron cells, and convergence history CSV.

VTK layout (legacy 4.2, ``UNSTRUCTURED_GRID``): each ``CELLS`` row is the
face stream of one polyhedron,

    count n_faces  k_1 i_1 ... i_k1  k_2 ...

where ``count`` is the number of integers after it.  Cell type 42
(``VTK_POLYHEDRON``).  Per-cell scalars are written as ``CELL_DATA``
field ``density``.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from polytopt.topopt import HistoryRow
from polytopt.voromesh import PolyMesh

VTK_POLYHEDRON = 42
HISTORY_HEADER = ("iteration", "objective", "volume_fraction", "max_density_change")


def export_vtk(mesh: PolyMesh, densities, path, title: str = "polyhedral mesh") -> None:
    rho = None
    if densities is not None:
        rho = np.asarray(densities, float).ravel()
        if len(rho) != mesh.n_elements:
            raise ValueError(f"got {len(rho)} densities for {mesh.n_elements} elements")
    streams = []
    for el in mesh.elements:
        s = [len(el)]
        for f in el:
            s.append(len(f))
            s.extend(int(i) for i in f)
        streams.append(s)
    size = sum(len(s) + 1 for s in streams)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 4.2\n")
        fh.write(title.replace("\n", " ")[:255] + "\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_vertices} double\n")
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")
        fh.write(f"CELLS {mesh.n_elements} {size}\n")
        for s in streams:
            fh.write(" ".join(map(str, [len(s)] + s)) + "\n")
        fh.write(f"CELL_TYPES {mesh.n_elements}\n")
        fh.write(f"{VTK_POLYHEDRON}\n" * mesh.n_elements)
        if rho is not None:
            fh.write(f"CELL_DATA {mesh.n_elements}\nSCALARS density double 1\nLOOKUP_TABLE default\n")
            for r in rho.tolist():
                fh.write(f"{r!r}\n")


def read_vtk(path):
    """Parse a file written by :func:`export_vtk`.

    Returns ``(vertices, elements, densities)``; ``densities`` is None when
    the file carries no cell data.
    """
    tokens = Path(path).read_text().split("\n", 2)[2].split()
    pos = 0

    def expect(word):
        nonlocal pos
        if tokens[pos] != word:
            raise ValueError(f"{path}: expected {word!r}, found {tokens[pos]!r}")
        pos += 1

    expect("ASCII")
    expect("DATASET")
    expect("UNSTRUCTURED_GRID")
    expect("POINTS")
    nv = int(tokens[pos])
    pos += 2
    verts = np.array(tokens[pos:pos + 3 * nv], dtype=float).reshape(nv, 3)
    pos += 3 * nv
    expect("CELLS")
    nc, size = int(tokens[pos]), int(tokens[pos + 1])
    pos += 2
    ints = np.array(tokens[pos:pos + size], dtype=np.int64)
    pos += size
    elements = []
    k = 0
    for _ in range(nc):
        count = ints[k]
        s = ints[k + 1:k + 1 + count]
        k += count + 1
        nf, j, faces = s[0], 1, []
        for _ in range(nf):
            faces.append(s[j + 1:j + 1 + s[j]].copy())
            j += s[j] + 1
        elements.append(faces)
    expect("CELL_TYPES")
    pos += 1
    types = np.array(tokens[pos:pos + nc], dtype=int)
    pos += nc
    if np.any(types != VTK_POLYHEDRON):
        raise ValueError(f"{path}: non-polyhedron cell types present")
    rho = None
    if pos < len(tokens):
        expect("CELL_DATA")
        pos += 1
        expect("SCALARS")
        pos += 3
        expect("LOOKUP_TABLE")
        pos += 1
        rho = np.array(tokens[pos:pos + nc], dtype=float)
    return verts, elements, rho


def export_history(history: Sequence[HistoryRow], path) -> None:
    if not history:
        raise ValueError("history is empty")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for h in history:
            w.writerow([int(h.iteration), repr(float(h.objective)), repr(float(h.volume_fraction)),
                        repr(float(h.max_density_change))])


def read_history(path) -> list[HistoryRow]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != HISTORY_HEADER:
        raise ValueError(f"{path}: not a history file")
    return [HistoryRow(int(r[0]), float(r[1]), float(r[2]), float(r[3])) for r in rows[1:]]
