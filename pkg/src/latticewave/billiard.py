"""Finite-difference Helmholtz reference for the continuum billiard.

5-point Laplacian on a uniform grid over the rectangle [0, width] x [0, height].
Dirichlet walls: the rectangle perimeter and the removed disc. Grid links
cut by the disc use the distance to the circle in place of h (symmetric
diagonal correction). Leads are small circles carrying the radiation
condition  d psi/dn + i K psi = 2 i K (incoming) or 0 (outgoing), with n
pointing away from the circle centre and K = sqrt(E). A circle smaller than
h collapses onto its nearest node; the ring of nodes around it carries the
condition, one face per link.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse import linalg as spla

from .graph import INCOMING, OUTGOING

OUTSIDE, INTERIOR, WALL, RAD_IN, RAD_OUT = 0, 1, 2, 3, 4
MASK_NAMES = {OUTSIDE: "outside", INTERIOR: "interior", WALL: "wall", RAD_IN: "radiation-in", RAD_OUT: "radiation-out"}
MAX_KH = 0.5


class BilliardError(ValueError):
    pass


@dataclass(frozen=True)
class LeadCircle:
    center: tuple[float, float]
    direction: str


@dataclass(frozen=True)
class BilliardGeometry:
    width: float
    height: float
    disc_center: tuple[float, float] | None = None
    disc_radius: float | None = None
    leads: tuple[LeadCircle, ...] = ()
    lead_radius: float = 0.01

    @classmethod
    def from_lattice(
        cls,
        n: int,
        spacing: float,
        disc_center: Sequence[float] | None,
        disc_radius: float | None,
        leads: Sequence[tuple[Sequence[int], str]] = (),
        lead_radius: float = 0.01,
    ) -> "BilliardGeometry":
        """Billiard matching an ``n x n`` lattice: vertex (i, j) maps to (i l, j l)."""
        side = (n - 1) * spacing
        circles = tuple(LeadCircle((c[0] * spacing, c[1] * spacing), d) for c, d in leads)
        center = None if disc_center is None else (float(disc_center[0]), float(disc_center[1]))
        return cls(side, side, center, disc_radius, circles, lead_radius)

    def closed(self) -> "BilliardGeometry":
        return BilliardGeometry(self.width, self.height, self.disc_center, self.disc_radius)

    def in_disc(self, x, y):
        if self.disc_center is None:
            return np.zeros(np.broadcast(x, y).shape, dtype=bool)
        cx, cy = self.disc_center
        return (np.asarray(x) - cx) ** 2 + (np.asarray(y) - cy) ** 2 < self.disc_radius**2


@dataclass
class BilliardGrid:
    h: float
    x: np.ndarray
    y: np.ndarray
    mask: np.ndarray  # [ix, iy]
    values: np.ndarray  # [ix, iy], complex
    energy: float
    geometry: BilliardGeometry
    faces: dict = field(default_factory=dict, repr=False)  # ring node -> number of circle links

    @property
    def k(self) -> float:
        return math.sqrt(self.energy)

    @property
    def domain(self) -> np.ndarray:
        return np.isin(self.mask, (INTERIOR, RAD_IN, RAD_OUT))

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Bilinear interpolation of the field at ``points`` (shape (m, 2))."""
        interp_re = RegularGridInterpolator((self.x, self.y), self.values.real, bounds_error=False, fill_value=0.0)
        interp_im = RegularGridInterpolator((self.x, self.y), self.values.imag, bounds_error=False, fill_value=0.0)
        return interp_re(points) + 1j * interp_im(points)


@dataclass
class ContinuumCurrent:
    jx: np.ndarray
    jy: np.ndarray
    grid: BilliardGrid

    def sample(self, points: np.ndarray) -> np.ndarray:
        g = self.grid
        out = np.empty((len(points), 2))
        for col, comp in enumerate((self.jx, self.jy)):
            out[:, col] = RegularGridInterpolator((g.x, g.y), comp, bounds_error=False, fill_value=0.0)(points)
        return out


def _grid_axes(geometry: BilliardGeometry, h: float):
    mx = round(geometry.width / h)
    my = round(geometry.height / h)
    if abs(mx * h - geometry.width) > 1e-9 * geometry.width or abs(my * h - geometry.height) > 1e-9 * geometry.height:
        raise BilliardError(f"h = {h} does not divide the billiard extent")
    return np.linspace(0.0, geometry.width, mx + 1), np.linspace(0.0, geometry.height, my + 1)


def _cut_fraction(geometry: BilliardGeometry, px: float, py: float, qx: float, qy: float) -> float:
    """Fraction of the segment P->Q (P outside the disc, Q inside) before the circle."""
    cx, cy = geometry.disc_center
    dx, dy = qx - px, qy - py
    fx, fy = px - cx, py - cy
    a = dx * dx + dy * dy
    b = 2 * (fx * dx + fy * dy)
    c = fx * fx + fy * fy - geometry.disc_radius**2
    disc = max(b * b - 4 * a * c, 0.0)
    t = (-b - math.sqrt(disc)) / (2 * a)
    return min(max(t, 0.0), 1.0)


def build_mask(geometry: BilliardGeometry, h: float):
    x, y = _grid_axes(geometry, h)
    X, Y = np.meshgrid(x, y, indexing="ij")
    mask = np.full(X.shape, INTERIOR, dtype=np.int8)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = WALL
    mask[geometry.in_disc(X, Y)] = WALL
    ring_faces: dict[tuple[int, int], int] = {}
    r = geometry.lead_radius
    for lead in geometry.leads:
        cx, cy = lead.center
        if geometry.in_disc(cx, cy) or not (r < cx < geometry.width - r and r < cy < geometry.height - r):
            raise BilliardError(f"lead circle at {lead.center} overlaps a wall")
        if geometry.disc_center is not None:
            if math.hypot(cx - geometry.disc_center[0], cy - geometry.disc_center[1]) <= geometry.disc_radius + r:
                raise BilliardError(f"lead circle at {lead.center} overlaps the disc")
        inside = (X - cx) ** 2 + (Y - cy) ** 2 < r * r
        inside[round(cx / h), round(cy / h)] = True
        if np.any(mask[inside] != INTERIOR):
            raise BilliardError(f"lead circle at {lead.center} touches a wall node")
        mask[inside] = OUTSIDE
        code = RAD_IN if lead.direction == INCOMING else RAD_OUT
        for ix, iy in zip(*np.nonzero(inside)):
            for jx, jy in ((ix + 1, iy), (ix - 1, iy), (ix, iy + 1), (ix, iy - 1)):
                if inside[jx, jy]:
                    continue
                if mask[jx, jy] not in (INTERIOR, code):
                    raise BilliardError("lead circles are too close to each other or to a wall")
                mask[jx, jy] = code
                ring_faces[(jx, jy)] = ring_faces.get((jx, jy), 0) + 1
    return x, y, mask, ring_faces


def _operator(geometry: BilliardGeometry, x, y, mask, ring_faces, K: float | None):
    """-Laplacian (plus radiation terms when K is given) on domain nodes and its right side."""
    h = x[1] - x[0]
    domain = np.isin(mask, (INTERIOR, RAD_IN, RAD_OUT))
    index = -np.ones(mask.shape, dtype=int)
    nodes = np.argwhere(domain)
    index[domain] = np.arange(len(nodes))
    inv_h2 = 1.0 / (h * h)
    rows, cols, vals = [], [], []
    diag = np.zeros(len(nodes), dtype=complex)
    rhs = np.zeros(len(nodes), dtype=complex)
    for row, (ix, iy) in enumerate(nodes):
        for jx, jy in ((ix + 1, iy), (ix - 1, iy), (ix, iy + 1), (ix, iy - 1)):
            m = mask[jx, jy]
            if m == OUTSIDE:
                # radiation face: (psi_q - psi_c)/h^2 becomes (2iKs - iK psi_q)/h
                if K is not None:
                    diag[row] -= 1j * K / h
                    if mask[ix, iy] == RAD_IN:
                        rhs[row] -= 2j * K / h
                continue
            if m == WALL:
                theta = 1.0
                if geometry.disc_center is not None and geometry.in_disc(x[jx], y[jy]):
                    theta = _cut_fraction(geometry, x[ix], y[iy], x[jx], y[jy])
                    theta = max(theta, 1e-3)
                diag[row] += inv_h2 / theta
                continue
            diag[row] += inv_h2
            rows.append(row)
            cols.append(index[jx, jy])
            vals.append(-inv_h2)
    n = len(nodes)
    rows.extend(range(n))
    cols.extend(range(n))
    vals.extend(diag)
    op = sparse.csr_matrix((np.asarray(vals, dtype=complex), (rows, cols)), shape=(n, n))
    return op, rhs, nodes


def _check_resolution(K: float, h: float) -> None:
    if K * h >= MAX_KH:
        raise BilliardError(f"grid too coarse: k h = {K * h:.3f} (must stay below {MAX_KH})")


def solve_closed_modes(geometry: BilliardGeometry, count: int, h: float) -> list[tuple[float, BilliardGrid]]:
    """Lowest ``count`` Dirichlet eigenpairs (E_m, mode) of the closed billiard."""
    if geometry.leads:
        raise BilliardError("closed modes need a geometry without lead circles")
    x, y, mask, faces = build_mask(geometry, h)
    op, _, nodes = _operator(geometry, x, y, mask, faces, None)
    op = op.real.tocsc()
    n = op.shape[0]
    v0 = np.ones(n) / math.sqrt(n)
    if n <= 400:
        energies, vecs = np.linalg.eigh(op.toarray())
        energies, vecs = energies[:count], vecs[:, :count]
    else:
        energies, vecs = spla.eigsh(op, k=count, sigma=0.0, which="LM", v0=v0)
    order = np.argsort(energies)
    _check_resolution(math.sqrt(max(energies[order[-1]], 0.0)), h)
    modes = []
    for i in order:
        values = np.zeros(mask.shape, dtype=complex)
        vec = vecs[:, i]
        vec = vec / np.linalg.norm(vec) / h  # unit L2 norm over the domain
        if vec[int(np.argmax(np.abs(vec)))] < 0:
            vec = -vec
        values[nodes[:, 0], nodes[:, 1]] = vec
        modes.append((float(energies[i]), BilliardGrid(h, x, y, mask, values, float(energies[i]), geometry.closed())))
    return modes


def solve_open_field(geometry: BilliardGeometry, energy: float, h: float) -> BilliardGrid:
    """Field driven through the incoming lead circle at energy ``energy``."""
    if not energy > 0:
        raise BilliardError("energy must be positive")
    if sum(lead.direction == INCOMING for lead in geometry.leads) != 1:
        raise BilliardError("need exactly one incoming lead circle")
    if any(lead.direction not in (INCOMING, OUTGOING) for lead in geometry.leads):
        raise BilliardError("lead direction must be incoming or outgoing")
    K = math.sqrt(energy)
    _check_resolution(K, h)
    x, y, mask, faces = build_mask(geometry, h)
    op, rhs, nodes = _operator(geometry, x, y, mask, faces, K)
    system = sparse.csc_matrix(op - energy * sparse.eye(op.shape[0]))
    try:
        sol = spla.splu(system).solve(rhs)
    except RuntimeError as exc:
        raise BilliardError(f"singular open system at E = {energy} (closed-cavity resonance)") from exc
    if not np.all(np.isfinite(sol)):
        raise BilliardError(f"singular open system at E = {energy} (closed-cavity resonance)")
    values = np.zeros(mask.shape, dtype=complex)
    values[nodes[:, 0], nodes[:, 1]] = sol
    # collapsed circle nodes: show the mean of their ring for display
    for ix, iy in np.argwhere(mask == OUTSIDE):
        ring = [values[jx, jy] for jx, jy in ((ix + 1, iy), (ix - 1, iy), (ix, iy + 1), (ix, iy - 1)) if mask[jx, jy] in (RAD_IN, RAD_OUT)]
        if ring:
            values[ix, iy] = np.mean(ring)
    return BilliardGrid(h, x, y, mask, values, float(energy), geometry, faces)


def flux_balance(grid: BilliardGrid) -> dict[str, float]:
    """Flux entering through the incoming circle, leaving through outgoing
    circles and leaking into walls, from the discrete face fluxes."""
    K, h = grid.k, grid.h
    incoming = outgoing = 0.0
    for (ix, iy), nfaces in grid.faces.items():
        psi = grid.values[ix, iy]
        if grid.mask[ix, iy] == RAD_IN:
            incoming += nfaces * h * float((np.conj(psi) * (2j * K - 1j * K * psi)).imag)
        else:
            outgoing += nfaces * h * K * abs(psi) ** 2
    wall = 0.0
    domain = grid.domain
    for ix, iy in np.argwhere(domain):
        for jx, jy in ((ix + 1, iy), (ix - 1, iy), (ix, iy + 1), (ix, iy - 1)):
            if grid.mask[jx, jy] == WALL:
                wall += float((np.conj(grid.values[ix, iy]) * (grid.values[jx, jy] - grid.values[ix, iy])).imag)
    total = max(abs(incoming), abs(outgoing), 1e-300)
    return {
        "incoming": incoming,
        "outgoing": outgoing,
        "wall": wall,
        "error": abs(incoming - outgoing - wall) / total,
    }


def continuum_current(grid: BilliardGrid) -> ContinuumCurrent:
    """Central-difference Im(conj(psi) grad psi) on domain nodes, zero elsewhere."""
    psi = grid.values
    jx = np.zeros(psi.shape)
    jy = np.zeros(psi.shape)
    core = (slice(1, -1), slice(1, -1))
    dx = (psi[2:, 1:-1] - psi[:-2, 1:-1]) / (2 * grid.h)
    dy = (psi[1:-1, 2:] - psi[1:-1, :-2]) / (2 * grid.h)
    jx[core] = (np.conj(psi[core]) * dx).imag
    jy[core] = (np.conj(psi[core]) * dy).imag
    outside = ~grid.domain
    jx[outside] = 0.0
    jy[outside] = 0.0
    return ContinuumCurrent(jx, jy, grid)
