"""CSV/JSON artifact writers and the PGM heatmap renderer.

Floats are written with ``repr`` (shortest round-trip form), rows in a
fixed order, so identical inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .graph import MetricGraph


class RenderError(ValueError):
    pass


def fmt(value) -> str | int:
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    return repr(float(value))


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path: str | Path, data) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_plain(data), indent=2, sort_keys=True) + "\n")
    return path


# -- graph artifacts ------------------------------------------------------------------


def write_vertex_vectors(path, graph: MetricGraph, vectors: Sequence[np.ndarray]) -> Path:
    """Real eigenvectors on interior vertices: one row per (mode, vertex)."""
    ids = graph.interior_ids
    pos = graph.positions
    rows = []
    for mode, vec in enumerate(vectors):
        vec = np.asarray(vec)
        for idx, vid in enumerate(ids):
            rows.append((mode, int(vid), *pos[vid][:2], float(np.real(vec[idx]))))
    return write_csv(path, ["mode", "id", "x", "y", "value"], rows)


def write_vertex_field(path, solution) -> Path:
    """Scattering amplitudes and vector-summed currents at every vertex."""
    graph = solution.graph
    values = solution.full_values()
    field = solution.vertex_current_field
    pos = graph.positions
    rows = []
    for vid in range(len(graph.vertices)):
        psi = complex(values[vid])
        rows.append((vid, *pos[vid][:2], abs(psi), math.atan2(psi.imag, psi.real), *field[vid][:2]))
    return write_csv(path, ["id", "x", "y", "abs", "arg", "jx", "jy"], rows)


def write_edge_currents(path, solution) -> Path:
    graph = solution.graph
    rows = [(idx, e.j, e.n, solution.edge_currents[idx]) for idx, e in enumerate(graph.edges)]
    return write_csv(path, ["edge", "j", "n", "current"], rows)


def write_nodal(path, graph: MetricGraph, partitions: Sequence) -> Path:
    pos = graph.positions
    rows = []
    for mode, part in enumerate(partitions):
        for vid in graph.interior_ids:
            rows.append((mode, int(vid), *pos[vid][:2], int(part.sign_map[vid]), int(part.labels[vid])))
    return write_csv(path, ["mode", "id", "x", "y", "sign", "domain"], rows)


def write_lattice_grid(path, graph: MetricGraph, per_vertex: np.ndarray) -> Path:
    """Per-vertex values on the full square lattice box (ix, iy, value).

    Lattice points without an interior vertex (boundary, removed disc) get 0,
    so the grid is always rectangular.
    """
    if graph.spacing is None or graph.dimension != 2:
        raise RenderError("grid output needs a planar lattice with uniform spacing")
    pos = graph.positions
    coords = np.rint(pos / graph.spacing).astype(int)
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    grid = np.zeros(hi - lo + 1)
    for vid in graph.interior_ids:
        c = coords[vid] - lo
        grid[c[0], c[1]] = per_vertex[vid]
    rows = [(ix, iy, grid[ix, iy]) for iy in range(grid.shape[1]) for ix in range(grid.shape[0])]
    return write_csv(path, ["ix", "iy", "value"], rows)


# -- billiard artifacts ---------------------------------------------------------------


def write_billiard_field(path, grid, current) -> Path:
    psi = grid.values
    rows = []
    for iy in range(psi.shape[1]):
        for ix in range(psi.shape[0]):
            z = complex(psi[ix, iy])
            rows.append((ix, iy, grid.x[ix], grid.y[iy], z.real, z.imag, abs(z) ** 2, current.jx[ix, iy], current.jy[ix, iy]))
    return write_csv(path, ["ix", "iy", "x", "y", "re", "im", "abs2", "jx", "jy"], rows)


def write_billiard_grid(path, values: np.ndarray) -> Path:
    rows = [(ix, iy, values[ix, iy]) for iy in range(values.shape[1]) for ix in range(values.shape[0])]
    return write_csv(path, ["ix", "iy", "value"], rows)


# -- heatmaps -------------------------------------------------------------------------


def read_field_grid(path: str | Path) -> np.ndarray:
    """Field CSV with integer ``ix``, ``iy`` columns -> array [iy, ix].

    The plotted quantity is the ``value`` column if present, otherwise the
    last column. Missing or repeated cells make the grid ragged.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise RenderError("empty field file") from None
        if "ix" not in header or "iy" not in header:
            raise RenderError("field file needs ix and iy columns")
        ci, cj = header.index("ix"), header.index("iy")
        cv = header.index("value") if "value" in header else len(header) - 1
        cells: dict[tuple[int, int], float] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise RenderError(f"line {lineno}: expected {len(header)} fields, found {len(row)}")
            try:
                key = (int(row[ci]), int(row[cj]))
                val = float(row[cv])
            except ValueError as exc:
                raise RenderError(f"line {lineno}: {exc}") from None
            if key in cells:
                raise RenderError(f"line {lineno}: duplicate cell {key}")
            if not math.isfinite(val):
                raise RenderError(f"line {lineno}: non-finite value")
            cells[key] = val
    if not cells:
        raise RenderError("field file has no cells")
    ix = sorted({k[0] for k in cells})
    iy = sorted({k[1] for k in cells})
    if len(cells) != len(ix) * len(iy) or ix != list(range(ix[0], ix[-1] + 1)) or iy != list(range(iy[0], iy[-1] + 1)):
        raise RenderError("ragged grid: cells do not fill a rectangle")
    out = np.empty((len(iy), len(ix)))
    for (i, j), v in cells.items():
        out[j - iy[0], i - ix[0]] = v
    return out


def to_gray(values: np.ndarray) -> np.ndarray:
    """Linear ramp from the minimum (0) to the maximum (255); constant -> 128."""
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.full(values.shape, 128, dtype=np.uint8)
    return np.rint((values - lo) / (hi - lo) * 255.0).astype(np.uint8)


def write_pgm(path: str | Path, pixels: np.ndarray) -> Path:
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    rows, cols = pixels.shape
    path = Path(path)
    path.write_bytes(f"P5\n{cols} {rows}\n255\n".encode("ascii") + pixels.tobytes())
    return path


def render_heatmap(field_csv: str | Path, out_pgm: str | Path) -> Path:
    """Pixel row = iy, column = ix."""
    return write_pgm(out_pgm, to_gray(read_field_grid(field_csv)))
