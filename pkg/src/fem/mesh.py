"""
Conforming triangulations of the unit square and of an inscribed regular polygon.

Meshes are immutable once built. Edges are stored as sorted vertex pairs in
lexicographic order so every derived numbering is deterministic.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from ..models.pydanticmodels import Domain, ValidationReport, Violation
from ..util import error

logger = logging.getLogger(__name__)

# Local edge k is opposite local vertex k
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])

AREA_TOL = 1e-14
LOCATE_TOL = 1e-12
QUASI_UNIFORMITY_BOUND = 16.0


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: NDArray[np.float64]
    triangles: NDArray[np.int64]
    domain: Domain = Domain.SQUARE
    # child -> parent triangle of the mesh this one was refined from
    parents: NDArray[np.int64] | None = field(default=None, repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    def __str__(self):
        return f"{self.domain.value} mesh with {self.n_vertices} vertices and {self.n_triangles} triangles"

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def _edge_maps(self) -> tuple[NDArray, NDArray, NDArray]:
        all_edges = np.sort(self.triangles[:, LOCAL_EDGES].reshape(-1, 2), axis=1)
        edges, inverse = np.unique(all_edges, axis=0, return_inverse=True)
        tri_edges = inverse.reshape(-1, 3)

        edge_triangles = np.full((edges.shape[0], 2), -1, dtype=np.int64)
        owners = np.repeat(np.arange(self.n_triangles), 3)
        order = np.argsort(inverse.ravel(), kind="stable")
        sorted_edges = inverse.ravel()[order]
        first = np.ones(order.size, dtype=bool)
        first[1:] = sorted_edges[1:] != sorted_edges[:-1]
        edge_triangles[sorted_edges[first], 0] = owners[order[first]]
        edge_triangles[sorted_edges[~first], 1] = owners[order[~first]]

        counts = np.bincount(inverse.ravel(), minlength=edges.shape[0])
        if np.any(counts > 2):
            edge_triangles[counts > 2, :] = -2
        return edges, tri_edges, edge_triangles

    @property
    def edges(self) -> NDArray[np.int64]:
        return self._edge_maps[0]

    @property
    def triangle_edges(self) -> NDArray[np.int64]:
        """(T, 3) global edge index of each local edge (opposite vertex k)."""
        return self._edge_maps[1]

    @property
    def edge_triangles(self) -> NDArray[np.int64]:
        """(E, 2) adjacent triangles, -1 where the edge is on the boundary."""
        return self._edge_maps[2]

    @cached_property
    def edge_multiplicity(self) -> NDArray[np.int64]:
        all_edges = self.triangle_edges.ravel()
        return np.bincount(all_edges, minlength=self.n_edges)

    @cached_property
    def boundary_edge_mask(self) -> NDArray[np.bool_]:
        return self.edge_multiplicity == 1

    @cached_property
    def boundary_vertex_mask(self) -> NDArray[np.bool_]:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.boundary_edge_mask].ravel()] = True
        return mask

    @cached_property
    def signed_areas(self) -> NDArray[np.float64]:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def diameters(self) -> NDArray[np.float64]:
        p = self.vertices[self.triangles]
        lengths = np.linalg.norm(p[:, LOCAL_EDGES[:, 1]] - p[:, LOCAL_EDGES[:, 0]], axis=2)
        return lengths.max(axis=1)

    @cached_property
    def inradii(self) -> NDArray[np.float64]:
        p = self.vertices[self.triangles]
        lengths = np.linalg.norm(p[:, LOCAL_EDGES[:, 1]] - p[:, LOCAL_EDGES[:, 0]], axis=2)
        return 2.0 * np.abs(self.signed_areas) / lengths.sum(axis=1)

    @property
    def h(self) -> float:
        """Largest triangle diameter. On the cross-split square this is the cell side 1/n, not the half diagonal."""
        return float(self.diameters.max())

    @property
    def quasi_uniformity_ratio(self) -> float:
        return float(self.h / self.inradii.min())

    @property
    def area(self) -> float:
        return float(self.signed_areas.sum())

    @cached_property
    def centroids(self) -> NDArray[np.float64]:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def _digest(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.vertices.tobytes())
        digest.update(self.triangles.tobytes())
        return digest.hexdigest()

    def hash(self) -> str:
        """SHA-256 of vertex coordinates and connectivity."""
        return self._digest

    @cached_property
    def _centroid_tree(self) -> cKDTree:
        return cKDTree(self.centroids)

    def barycentric(self, tri: NDArray[np.int64], points: NDArray[np.float64]) -> NDArray[np.float64]:
        """Barycentric coordinates of points[i] with respect to triangle tri[i]."""
        p = self.vertices[self.triangles[tri]]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        r = points - p[:, 0]
        l1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
        l2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
        return np.column_stack((1.0 - l1 - l2, l1, l2))

    def locate_points(
        self, points: NDArray[np.float64], tol: float = LOCATE_TOL
    ) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        """
        Find a containing triangle for every point.

        Candidates come from the nearest centroids; unresolved points fall back to
        a scan over all triangles. Points on shared edges get the first match,
        which is fine for conforming fields.

        Raises:
            PointOutsideDomainError: if a point is outside every triangle by more than tol
        """
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        n_points = points.shape[0]
        found = np.full(n_points, -1, dtype=np.int64)
        bary = np.zeros((n_points, 3))

        k = min(self.n_triangles, 12)
        _, candidates = self._centroid_tree.query(points, k=k)
        candidates = candidates.reshape(n_points, k)
        scale = tol * max(1.0, self.h)
        for c in range(k):
            todo = np.flatnonzero(found < 0)
            if todo.size == 0:
                break
            tri = candidates[todo, c]
            lam = self.barycentric(tri, points[todo])
            hit = lam.min(axis=1) >= -scale
            found[todo[hit]] = tri[hit]
            bary[todo[hit]] = lam[hit]

        for i in np.flatnonzero(found < 0):
            tri = np.arange(self.n_triangles)
            lam = self.barycentric(tri, np.broadcast_to(points[i], (self.n_triangles, 2)))
            best = int(np.argmax(lam.min(axis=1)))
            if lam[best].min() < -scale:
                raise error.PointOutsideDomainError(points[i].tolist())
            found[i] = best
            bary[i] = lam[best]
        return found, bary


# === Construction ===


def build_unit_square_mesh(n: int) -> Mesh:
    """Cross-split square mesh: each of the n*n cells gets a center vertex and 4 triangles."""
    if n < 1:
        raise error.ValidationError("square mesh needs n >= 1", {"n": n})

    grid = np.linspace(0.0, 1.0, n + 1)
    gx, gy = np.meshgrid(grid, grid, indexing="xy")
    corners = np.column_stack((gx.ravel(), gy.ravel()))
    mids = (np.arange(n) + 0.5) / n
    cx, cy = np.meshgrid(mids, mids, indexing="xy")
    centers = np.column_stack((cx.ravel(), cy.ravel()))
    vertices = np.vstack((corners, centers))

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i, j = i.ravel(), j.ravel()
    sw = j * (n + 1) + i
    se = sw + 1
    nw = sw + (n + 1)
    ne = nw + 1
    c = (n + 1) ** 2 + j * n + i

    # Counterclockwise around each cell center: bottom, right, top, left
    triangles = np.stack(
        (
            np.column_stack((sw, se, c)),
            np.column_stack((se, ne, c)),
            np.column_stack((ne, nw, c)),
            np.column_stack((nw, sw, c)),
        ),
        axis=1,
    ).reshape(-1, 3)
    return Mesh(vertices, triangles, Domain.SQUARE)


def _ring_counts(n: int, layers: int) -> list[int]:
    counts = [max(6, int(round(n * k / layers))) for k in range(1, layers)]
    return [min(c, n) for c in counts] + [n]


def _stitch_rings(inner: NDArray[np.int64], outer: NDArray[np.int64]) -> list[tuple[int, int, int]]:
    # Merge the two rings by angle fraction; both rings start at angle 0
    n_in, n_out = inner.size, outer.size
    tris = []
    i = j = 0
    while i < n_out or j < n_in:
        advance_outer = j >= n_in or (i < n_out and (i + 1) / n_out <= (j + 1) / n_in)
        if advance_outer:
            tris.append((inner[j % n_in], outer[i % n_out], outer[(i + 1) % n_out]))
            i += 1
        else:
            tris.append((inner[j % n_in], outer[i % n_out], inner[(j + 1) % n_in]))
            j += 1
    return tris


def build_polygon_disk_mesh(n: int) -> Mesh:
    """
    Triangulate the regular n-gon inscribed in the unit disk.

    Concentric rings of vertices at radii k/L are stitched together; the
    center is the only vertex of the innermost fan, so every triangle keeps
    an interior vertex.
    """
    if n < 8:
        raise error.ValidationError("polygon disk needs n >= 8", {"n": n})

    layers = max(2, int(round(n / (2.0 * math.pi))))
    counts = _ring_counts(n, layers)

    vertices = [np.zeros((1, 2))]
    rings = []
    offset = 1
    for k, count in enumerate(counts, start=1):
        angles = 2.0 * np.pi * np.arange(count) / count
        radius = k / layers
        vertices.append(radius * np.column_stack((np.cos(angles), np.sin(angles))))
        rings.append(np.arange(offset, offset + count))
        offset += count
    vertices = np.vstack(vertices)

    first = rings[0]
    triangles = [(0, first[i], first[(i + 1) % first.size]) for i in range(first.size)]
    for inner, outer in zip(rings, rings[1:]):
        triangles.extend(_stitch_rings(inner, outer))

    mesh = Mesh(vertices, np.asarray(triangles, dtype=np.int64), Domain.POLYGON_DISK)
    if mesh.signed_areas.min() <= AREA_TOL * mesh.h**2:
        raise error.ValidationError(
            "polygon disk triangulation is degenerate",
            {"n": n, "min_area": float(mesh.signed_areas.min())},
        )
    return mesh


def refine_uniform(m: Mesh) -> Mesh:
    """Split every triangle into four through its edge midpoints."""
    midpoints = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
    vertices = np.vstack((m.vertices, midpoints))
    t = m.triangles
    e = m.triangle_edges + m.n_vertices  # midpoint of the edge opposite vertex k
    triangles = np.stack(
        (
            np.column_stack((t[:, 0], e[:, 2], e[:, 1])),
            np.column_stack((t[:, 1], e[:, 0], e[:, 2])),
            np.column_stack((t[:, 2], e[:, 1], e[:, 0])),
            np.column_stack((e[:, 0], e[:, 1], e[:, 2])),
        ),
        axis=1,
    ).reshape(-1, 3)
    parents = np.repeat(np.arange(m.n_triangles), 4)
    return Mesh(vertices, triangles, m.domain, parents=parents)


def refine(m: Mesh, times: int) -> Mesh:
    for _ in range(times):
        m = refine_uniform(m)
    return m


def build_mesh(domain: Domain, n: int, level: int = 0) -> Mesh:
    if domain == Domain.SQUARE:
        base = build_unit_square_mesh(n)
    else:
        base = build_polygon_disk_mesh(n)
    return refine(base, level)


def domain_area(domain: Domain, n: int) -> float:
    if domain == Domain.SQUARE:
        return 1.0
    return 0.5 * n * math.sin(2.0 * math.pi / n)


# === Validation ===


def validate(m: Mesh, quasi_uniformity_bound: float = QUASI_UNIFORMITY_BOUND) -> ValidationReport:
    violations: list[Violation] = []

    if m.n_triangles == 0:
        return ValidationReport(violations=[Violation(rule="empty", detail="no triangles")])

    tri = m.triangles
    if tri.min() < 0 or tri.max() >= m.n_vertices:
        violations.append(Violation(rule="indices", detail="vertex index out of range"))
        return ValidationReport(violations=violations)

    repeated = (tri[:, 0] == tri[:, 1]) | (tri[:, 1] == tri[:, 2]) | (tri[:, 0] == tri[:, 2])
    if repeated.any():
        violations.append(
            Violation(
                rule="degenerate",
                detail="triangle repeats a vertex",
                triangles=np.flatnonzero(repeated).tolist(),
            )
        )

    flipped = m.signed_areas <= 0.0
    if flipped.any():
        violations.append(
            Violation(
                rule="orientation",
                detail="non-positive signed area (clockwise or degenerate)",
                triangles=np.flatnonzero(flipped).tolist(),
            )
        )

    if np.any(m.edge_multiplicity > 2):
        violations.append(
            Violation(rule="edges", detail="edge shared by more than two triangles")
        )

    all_boundary = m.boundary_vertex_mask[tri].all(axis=1)
    if all_boundary.any():
        violations.append(
            Violation(
                rule="interior-vertex condition",
                detail="triangle has no interior vertex",
                triangles=np.flatnonzero(all_boundary).tolist(),
            )
        )

    if not flipped.any() and m.quasi_uniformity_ratio > quasi_uniformity_bound:
        violations.append(
            Violation(
                rule="quasi-uniformity",
                detail=f"h / min inradius = {m.quasi_uniformity_ratio:.3f} exceeds {quasi_uniformity_bound}",
            )
        )

    if violations:
        logger.debug("mesh validation found %d violations", len(violations))
    return ValidationReport(violations=violations)


# === Text format ===


def write_mesh(m: Mesh, path: str | Path) -> None:
    lines = [f"domain {m.domain.value}", f"vertices {m.n_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in m.vertices.tolist()]
    lines.append(f"triangles {m.n_triangles}")
    lines += [f"{a} {b} {c}" for a, b, c in m.triangles.tolist()]
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise error.ResultWriteError(str(path), str(exc))


def read_mesh(path: str | Path) -> Mesh:
    try:
        rows = Path(path).read_text().splitlines()
    except OSError:
        raise error.NotFoundError("mesh file", path)

    try:
        pos = 0
        domain = Domain.SQUARE
        if rows[pos].startswith("domain"):
            domain = Domain(rows[pos].split()[1])
            pos += 1
        n_vertices = int(rows[pos].split()[1])
        vertices = np.array([[float(v) for v in r.split()] for r in rows[pos + 1 : pos + 1 + n_vertices]])
        pos += 1 + n_vertices
        n_triangles = int(rows[pos].split()[1])
        triangles = np.array(
            [[int(v) for v in r.split()] for r in rows[pos + 1 : pos + 1 + n_triangles]],
            dtype=np.int64,
        )
    except (IndexError, ValueError) as exc:
        raise error.ValidationError("malformed mesh file", {"path": str(path), "error": str(exc)})

    return Mesh(vertices.reshape(-1, 2), triangles.reshape(-1, 3), domain)
