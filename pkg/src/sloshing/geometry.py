"""Meshes for vertical-walled containers ``F x (-h, 0)``.

The free surface ``F`` is a disk or a rectangle, triangulated in the
plane ``z = 0``.  The volume mesh is obtained by extruding that
triangulation downwards in layers and splitting every prism into three
tetrahedra.  Surface node ``i`` is volume node ``i`` (the top layer is
numbered first), so the trace map is the identity on the first block.
"""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMesh, InvalidSpec

__all__ = [
    "ContainerSpec",
    "FacetTag",
    "MeshPair",
    "SurfaceMesh",
    "VolumeMesh",
    "build_mesh",
    "extrude",
    "mesh_surface",
    "refine",
    "refine_surface",
]


@dataclass(frozen=True)
class ContainerSpec:
    """Nondimensional container geometry.

    ``shape`` is ``"disk"`` (uses ``radius``) or ``"rectangle"`` (uses
    ``Lx`` and ``Ly``).  ``resolution`` is the number of edge
    subdivisions across the largest extent (rings for a disk).
    """

    shape: str
    depth: float
    resolution: int
    radius: float = 1.0
    Lx: float = 1.0
    Ly: float = 1.0

    @classmethod
    def disk(cls, radius, depth, resolution):
        spec = cls("disk", float(depth), int(resolution), radius=float(radius))
        spec.validate()
        return spec

    @classmethod
    def rectangle(cls, Lx, Ly, depth, resolution):
        spec = cls("rectangle", float(depth), int(resolution), Lx=float(Lx), Ly=float(Ly))
        spec.validate()
        return spec

    def validate(self):
        if self.shape not in ("disk", "rectangle"):
            raise InvalidSpec(f"unknown shape {self.shape!r}")
        dims = [self.radius] if self.shape == "disk" else [self.Lx, self.Ly]
        if any(not np.isfinite(d) or d <= 0 for d in dims + [self.depth]):
            raise InvalidSpec(f"container dimensions must be positive: {self}")
        if self.resolution < 2:
            raise InvalidSpec("resolution must be at least 2")
        return self

    def with_depth(self, depth):
        return ContainerSpec(self.shape, float(depth), self.resolution,
                             self.radius, self.Lx, self.Ly).validate()

    @property
    def extent(self):
        return 2.0 * self.radius if self.shape == "disk" else max(self.Lx, self.Ly)

    @property
    def area(self):
        """Exact area of the free surface."""
        if self.shape == "disk":
            return np.pi * self.radius**2
        return self.Lx * self.Ly


class FacetTag(enum.IntEnum):
    FREE_SURFACE = 0
    WALL = 1
    BOTTOM = 2


def _signed_areas(nodes, tris):
    p0, p1, p2 = nodes[tris[:, 0]], nodes[tris[:, 1]], nodes[tris[:, 2]]
    e1, e2 = p1 - p0, p2 - p0
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _signed_volumes(nodes, tets):
    p0 = nodes[tets[:, 0]]
    e1 = nodes[tets[:, 1]] - p0
    e2 = nodes[tets[:, 2]] - p0
    e3 = nodes[tets[:, 3]] - p0
    return np.einsum("ij,ij->i", np.cross(e1, e2), e3) / 6.0


def _edges(tris):
    """Unique sorted edges and, per edge, the number of adjacent triangles."""
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0, return_counts=True)


@dataclass
class SurfaceMesh:
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray = field(init=False)
    areas: np.ndarray = field(init=False)
    # radius of the exact circular boundary; None for polygonal F
    circle_radius: float | None = None

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64)
        area = _signed_areas(self.nodes, tris)
        flip = area < 0
        tris[flip] = tris[flip][:, [0, 2, 1]]
        self.triangles = tris
        self.areas = np.abs(area)
        scale = self.areas.mean() if len(self.areas) else 1.0
        if np.any(self.areas <= 1e-12 * scale):
            raise DegenerateMesh("surface triangle with zero area")
        edges, counts = _edges(tris)
        if np.any(counts > 2):
            raise DegenerateMesh("non-manifold surface edge")
        self.boundary_edges = edges[counts == 1]

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def boundary_nodes(self):
        return np.unique(self.boundary_edges)

    @property
    def total_area(self):
        return float(self.areas.sum())


@dataclass
class VolumeMesh:
    nodes: np.ndarray
    tets: np.ndarray
    surface_trace: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    volumes: np.ndarray
    depth: float
    layers: int

    @property
    def n_nodes(self):
        return len(self.nodes)

    def facet_normals(self):
        """Unnormalized facet normals (cross product of two edges)."""
        p0 = self.nodes[self.facets[:, 0]]
        return np.cross(self.nodes[self.facets[:, 1]] - p0, self.nodes[self.facets[:, 2]] - p0)


@dataclass
class MeshPair:
    surface: SurfaceMesh
    volume: VolumeMesh
    spec: ContainerSpec | None = None

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(self.volume.nodes.tobytes())
        h.update(self.volume.tets.tobytes())
        h.update(self.surface.nodes.tobytes())
        return h.hexdigest()[:16]


def _disk_surface(radius, rings):
    nodes = [(0.0, 0.0)]
    start = [0]  # index of the first node on each ring
    for k in range(1, rings + 1):
        start.append(len(nodes))
        r = radius * k / rings
        for j in range(6 * k):
            t = 2.0 * np.pi * j / (6 * k)
            nodes.append((r * np.cos(t), r * np.sin(t)))
    # the outermost ring must sit on the circle exactly
    nodes = np.array(nodes)

    tris = []
    for j in range(6):
        tris.append((0, 1 + j, 1 + (j + 1) % 6))
    for k in range(2, rings + 1):
        n_in, n_out = 6 * (k - 1), 6 * k
        s_in, s_out = start[k - 1], start[k]
        for sector in range(6):
            i, j = sector * (k - 1), sector * k
            i_end, j_end = i + (k - 1), j + k
            while i < i_end or j < j_end:
                # compare angles (i+1)/n_in and (j+1)/n_out exactly in integers
                advance_outer = i == i_end or (j < j_end and (j + 1) * n_in <= (i + 1) * n_out)
                a = s_in + i % n_in
                b = s_out + j % n_out
                if advance_outer:
                    tris.append((a, b, s_out + (j + 1) % n_out))
                    j += 1
                else:
                    tris.append((a, b, s_in + (i + 1) % n_in))
                    i += 1
    return nodes, np.array(tris, dtype=np.int64)


def _rectangle_surface(Lx, Ly, resolution):
    longest = max(Lx, Ly)
    nx = max(1, int(round(resolution * Lx / longest)))
    ny = max(1, int(round(resolution * Ly / longest)))
    xs = np.linspace(0.0, Lx, nx + 1)
    ys = np.linspace(0.0, Ly, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    a = (j * (nx + 1) + i).ravel()
    b, c, d = a + 1, a + nx + 2, a + nx + 1
    tris = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return nodes, tris


def mesh_surface(spec: ContainerSpec) -> SurfaceMesh:
    """Structured triangulation of the free surface of ``spec``."""
    spec.validate()
    if spec.shape == "disk":
        nodes, tris = _disk_surface(spec.radius, spec.resolution)
        return SurfaceMesh(nodes, tris, circle_radius=spec.radius)
    nodes, tris = _rectangle_surface(spec.Lx, spec.Ly, spec.resolution)
    return SurfaceMesh(nodes, tris)


def extrude(surface: SurfaceMesh, h: float, layers: int) -> VolumeMesh:
    """Extrude ``surface`` to depth ``h`` with ``layers`` prism layers.

    Each prism is cut into three tets.  The diagonal of every quadrilateral
    side face joins the top of the lower-indexed vertex to the bottom of the
    higher-indexed one, i.e. it passes through the smallest volume index of
    the face, so neighbouring prisms always agree.
    """
    if layers < 1:
        raise DegenerateMesh("layers must be >= 1")
    if not h > 0:
        raise DegenerateMesh("depth must be positive")
    ns = surface.n_nodes
    z = -h * np.arange(layers + 1) / layers
    z[0] = 0.0
    nodes = np.empty(((layers + 1) * ns, 3))
    for ell in range(layers + 1):
        nodes[ell * ns:(ell + 1) * ns, :2] = surface.nodes
        nodes[ell * ns:(ell + 1) * ns, 2] = z[ell]

    srt = np.sort(surface.triangles, axis=1)
    blocks = []
    for ell in range(layers):
        a = srt + ell * ns
        b = a + ns
        blocks.append(np.column_stack([a[:, 0], a[:, 1], a[:, 2], b[:, 2]]))
        blocks.append(np.column_stack([a[:, 0], a[:, 1], b[:, 1], b[:, 2]]))
        blocks.append(np.column_stack([a[:, 0], b[:, 0], b[:, 1], b[:, 2]]))
    tets = np.concatenate(blocks)
    vol = _signed_volumes(nodes, tets)
    neg = vol < 0
    tets[neg] = tets[neg][:, [0, 1, 3, 2]]
    vol = np.abs(vol)
    if np.any(vol <= 1e-12 * vol.mean()):
        raise DegenerateMesh("tetrahedron with non-positive volume")

    top = surface.triangles
    bottom = surface.triangles[:, [0, 2, 1]] + layers * ns
    walls = []
    for p, q in np.sort(surface.boundary_edges, axis=1):
        for ell in range(layers):
            ap, aq = p + ell * ns, q + ell * ns
            bp, bq = ap + ns, aq + ns
            walls.append((ap, aq, bq))
            walls.append((ap, bq, bp))
    walls = np.array(walls, dtype=np.int64).reshape(-1, 3)
    # orient wall facets outward (away from the surface centroid)
    centre = surface.nodes.mean(axis=0)
    p0 = nodes[walls[:, 0]]
    nrm = np.cross(nodes[walls[:, 1]] - p0, nodes[walls[:, 2]] - p0)
    inward = np.einsum("ij,ij->i", nrm[:, :2], p0[:, :2] - centre) < 0
    walls[inward] = walls[inward][:, [0, 2, 1]]

    facets = np.concatenate([top, walls, bottom])
    tags = np.concatenate([
        np.full(len(top), FacetTag.FREE_SURFACE),
        np.full(len(walls), FacetTag.WALL),
        np.full(len(bottom), FacetTag.BOTTOM),
    ]).astype(np.int8)
    return VolumeMesh(nodes, tets, np.arange(ns), facets, tags, vol, float(h), int(layers))


def refine_surface(surface: SurfaceMesh) -> SurfaceMesh:
    """Uniform 1-to-4 split; new boundary nodes are pushed back onto the circle."""
    tris = surface.triangles
    edges, counts = _edges(tris)
    ns = surface.n_nodes
    mid = 0.5 * (surface.nodes[edges[:, 0]] + surface.nodes[edges[:, 1]])
    if surface.circle_radius is not None:
        on_bnd = counts == 1
        r = np.hypot(mid[on_bnd, 0], mid[on_bnd, 1])
        mid[on_bnd] *= (surface.circle_radius / r)[:, None]
    nodes = np.vstack([surface.nodes, mid])

    lookup = {(int(p), int(q)): ns + k for k, (p, q) in enumerate(edges)}

    def m(u, v):
        return lookup[(u, v) if u < v else (v, u)]

    new = []
    for v0, v1, v2 in tris.tolist():
        m01, m12, m20 = m(v0, v1), m(v1, v2), m(v2, v0)
        new += [(v0, m01, m20), (v1, m12, m01), (v2, m20, m12), (m01, m12, m20)]
    return SurfaceMesh(nodes, np.array(new, dtype=np.int64), circle_radius=surface.circle_radius)


def build_mesh(spec: ContainerSpec, layers: int | None = None) -> MeshPair:
    """Surface and volume mesh for ``spec``; ``layers`` defaults to ``resolution``."""
    surface = mesh_surface(spec)
    if layers is None:
        layers = spec.resolution
    return MeshPair(surface, extrude(surface, spec.depth, layers), spec)


def refine(pair: MeshPair) -> MeshPair:
    """Refine the surface uniformly and re-extrude with twice as many layers."""
    surface = refine_surface(pair.surface)
    volume = extrude(surface, pair.volume.depth, 2 * pair.volume.layers)
    return MeshPair(surface, volume, pair.spec)
