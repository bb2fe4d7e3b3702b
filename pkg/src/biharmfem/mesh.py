"""Conforming triangulations with nested uniform refinement.

The initial mesh tiles the domain with unit grid squares, each split into
two triangles (or one, for squares cut in half by a diagonal domain edge).
Uniform refinement is 4-way (red): every triangle is split at its edge
midpoints, so the coarse nodes are a prefix of the fine nodes and piecewise
linear prolongation between levels is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import BCType, PolygonDomain


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class TriMesh:
    """Triangulation of a polygon.

    ``boundary_edges`` rows are (node_a, node_b, domain_edge_index); the BC
    tag of a boundary edge is the tag of its domain edge.  For a refined
    mesh, node ``k < parent.n_nodes`` coincides with parent node ``k`` and
    ``edge_parents[k - parent.n_nodes]`` gives the two parent nodes whose
    midpoint is node ``k``.
    """

    domain: PolygonDomain
    nodes: np.ndarray          # (N, 2)
    triangles: np.ndarray      # (T, 3) counterclockwise
    boundary_edges: np.ndarray  # (B, 3)
    level: int = 0
    parent: "TriMesh | None" = None
    edge_parents: np.ndarray | None = None
    dirichlet_nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "dirichlet_nodes", self._dirichlet_mask())

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def max_edge_length(self) -> float:
        p = self.nodes[self.triangles]
        lengths = [np.linalg.norm(p[:, i] - p[:, (i + 1) % 3], axis=1) for i in range(3)]
        return float(np.max(lengths))

    def _dirichlet_mask(self) -> np.ndarray:
        """Nodes on the closure of any Dirichlet edge (junction nodes are
        Dirichlet)."""
        mask = np.zeros(self.n_nodes, dtype=bool)
        for a, b, edge_idx in self.boundary_edges:
            if self.domain.tags[edge_idx] == BCType.DIRICHLET:
                mask[a] = True
                mask[b] = True
        return mask

    def check_conforming(self) -> None:
        """Raise unless every interior edge is shared by exactly two
        triangles and every boundary edge by one, with positive areas."""
        if np.any(self.areas() <= 0):
            raise MeshError("triangle with non-positive area")
        counts: dict[tuple[int, int], int] = {}
        for tri in self.triangles:
            for i in range(3):
                key = tuple(sorted((tri[i], tri[(i + 1) % 3])))
                counts[key] = counts.get(key, 0) + 1
        boundary = {tuple(sorted((a, b))) for a, b, _ in self.boundary_edges}
        for key, c in counts.items():
            expected = 1 if key in boundary else 2
            if c != expected:
                raise MeshError(f"edge {key} shared by {c} triangles, expected {expected}")
        if boundary - set(counts):
            raise MeshError("boundary edge not present in triangulation")

    def node_index(self, point) -> int:
        """Index of the mesh node at the given coordinates."""
        d = np.linalg.norm(self.nodes - np.asarray(point, dtype=float), axis=1)
        i = int(np.argmin(d))
        if d[i] > 1e-10:
            raise MeshError(f"no mesh node at {point}")
        return i


def _point_on_segment(p, a, b, tol=1e-10) -> bool:
    ab = b - a
    ap = p - a
    cross = ab[0] * ap[1] - ab[1] * ap[0]
    if abs(cross) > tol * max(1.0, np.linalg.norm(ab)):
        return False
    t = np.dot(ap, ab) / np.dot(ab, ab)
    return -tol <= t <= 1 + tol


def initial_mesh(domain: PolygonDomain) -> TriMesh:
    """Tile the domain with unit grid cells, two triangles per full cell.

    Cells with their center in the quadrant where x*y > 0 use the diagonal
    of slope +1, the rest slope -1; this aligns cell diagonals with the
    slanted cuts of the built-in domains, so a cut cell contributes exactly
    one of its two candidate triangles.  Requires all domain vertices on the
    integer grid with edges horizontal, vertical, or along cell diagonals.
    """
    verts = domain.vertices
    if not np.allclose(verts, np.round(verts), atol=1e-12):
        raise MeshError("domain vertices must lie on the integer unit grid")
    xmin, ymin = np.floor(verts.min(axis=0)).astype(int)
    xmax, ymax = np.ceil(verts.max(axis=0)).astype(int)

    node_ids: dict[tuple[int, int], int] = {}
    nodes: list[tuple[float, float]] = []

    def nid(ix, iy):
        key = (ix, iy)
        if key not in node_ids:
            node_ids[key] = len(nodes)
            nodes.append((float(ix), float(iy)))
        return node_ids[key]

    triangles = []
    centroids = []
    for ix in range(xmin, xmax):
        for iy in range(ymin, ymax):
            cx, cy = ix + 0.5, iy + 0.5
            if cx * cy > 0:
                cand = [((ix, iy), (ix + 1, iy), (ix + 1, iy + 1)),
                        ((ix, iy), (ix + 1, iy + 1), (ix, iy + 1))]
            else:
                cand = [((ix, iy), (ix + 1, iy), (ix, iy + 1)),
                        ((ix + 1, iy), (ix + 1, iy + 1), (ix, iy + 1))]
            for tri in cand:
                c = np.mean(np.array(tri, dtype=float), axis=0)
                triangles.append(tri)
                centroids.append(c)
    keep = domain.contains(np.array(centroids))
    tri_nodes = []
    for tri, k in zip(triangles, keep):
        if k:
            tri_nodes.append([nid(*v) for v in tri])
    if not tri_nodes:
        raise MeshError("no triangles inside the domain")
    nodes_arr = np.array(nodes, dtype=float)
    tris_arr = np.array(tri_nodes, dtype=np.int64)

    covered = 0.5 * len(tris_arr)
    if abs(covered - domain.area()) > 1e-9:
        raise MeshError(
            "domain is not representable on the unit grid with the supported "
            f"diagonal cuts (covered area {covered}, domain area {domain.area()})"
        )

    boundary = _find_boundary_edges(domain, nodes_arr, tris_arr)
    mesh = TriMesh(domain, nodes_arr, tris_arr, boundary, level=0)
    mesh.check_conforming()
    return mesh


def _find_boundary_edges(domain, nodes, triangles) -> np.ndarray:
    counts: dict[tuple[int, int], int] = {}
    for tri in triangles:
        for i in range(3):
            key = tuple(sorted((int(tri[i]), int(tri[(i + 1) % 3]))))
            counts[key] = counts.get(key, 0) + 1
    rows = []
    for (a, b), c in counts.items():
        if c != 1:
            continue
        mid = 0.5 * (nodes[a] + nodes[b])
        for j in range(domain.n_vertices):
            p, q, _ = domain.edge(j)
            if _point_on_segment(mid, p, q):
                rows.append((a, b, j))
                break
        else:
            raise MeshError(f"boundary edge ({a}, {b}) lies on no domain edge")
    rows.sort()
    return np.array(rows, dtype=np.int64)


def refine_uniform(mesh: TriMesh) -> TriMesh:
    """Red refinement: split every triangle into 4 via edge midpoints."""
    n0 = mesh.n_nodes
    edge_ids: dict[tuple[int, int], int] = {}
    new_points = []

    def mid(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in edge_ids:
            edge_ids[key] = n0 + len(new_points)
            new_points.append(0.5 * (mesh.nodes[key[0]] + mesh.nodes[key[1]]))
        return edge_ids[key]

    tris = []
    for a, b, c in mesh.triangles:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        tris.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])

    bedges = []
    for a, b, j in mesh.boundary_edges:
        m = mid(int(a), int(b))
        bedges.append((int(a), m, int(j)))
        bedges.append((m, int(b), int(j)))
    bedges.sort()

    nodes = np.vstack([mesh.nodes, np.array(new_points)])
    edge_parents = np.array(sorted(edge_ids, key=edge_ids.get), dtype=np.int64)
    return TriMesh(
        mesh.domain,
        nodes,
        np.array(tris, dtype=np.int64),
        np.array(bedges, dtype=np.int64),
        level=mesh.level + 1,
        parent=mesh,
        edge_parents=edge_parents,
    )


def prolongate(fine: TriMesh, coarse_values: np.ndarray) -> np.ndarray:
    """Interpolate a coarse nodal vector onto the fine mesh (exact for
    functions piecewise linear on the coarse mesh)."""
    if fine.parent is None or fine.edge_parents is None:
        raise MeshError("mesh has no parent level")
    v = np.asarray(coarse_values, dtype=float)
    if len(v) != fine.parent.n_nodes:
        raise MeshError(
            f"expected {fine.parent.n_nodes} coarse values, got {len(v)}"
        )
    out = np.empty(fine.n_nodes)
    out[: len(v)] = v
    out[len(v):] = 0.5 * (v[fine.edge_parents[:, 0]] + v[fine.edge_parents[:, 1]])
    return out


def write_mesh(mesh: TriMesh, path) -> None:
    """Plain-text export: header, node lines, triangle lines, boundary-edge
    lines with the domain tag letter."""
    with open(path, "w") as fh:
        fh.write(
            f"nodes {mesh.n_nodes} triangles {mesh.n_triangles} "
            f"bedges {len(mesh.boundary_edges)}\n"
        )
        for x, y in mesh.nodes:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")
        for a, b, j in mesh.boundary_edges:
            fh.write(f"{a} {b} {mesh.domain.tags[j].value}\n")


def read_mesh(path) -> tuple[np.ndarray, np.ndarray, list[tuple[int, int, str]]]:
    """Parse the plain-text mesh format; returns raw arrays (the domain is
    not reconstructed)."""
    with open(path) as fh:
        header = fh.readline().split()
        n, t, b = int(header[1]), int(header[3]), int(header[5])
        nodes = np.array([[float(v) for v in fh.readline().split()] for _ in range(n)])
        tris = np.array(
            [[int(v) for v in fh.readline().split()] for _ in range(t)], dtype=np.int64
        )
        bedges = []
        for _ in range(b):
            parts = fh.readline().split()
            bedges.append((int(parts[0]), int(parts[1]), parts[2]))
    return nodes, tris, bedges
