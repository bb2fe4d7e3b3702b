"""Polygonal domains with per-edge boundary-condition tags.

Vertices are stored counterclockwise.  Edge ``j`` runs from vertex ``j`` to
vertex ``j+1 (mod n)``, so the edge arriving at vertex ``j`` is edge ``j-1``
and the edge leaving it is edge ``j``.  A vertex is classified by the
Dirichlet/Neumann types of its arriving and leaving edges, which together
with the interior angle determines how many corrective singular functions
the corner contributes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

ANGLE_TOL = 1e-12

# Interval breakpoints for the singular-exponent table.
_BREAKPOINTS = (0.5 * math.pi, math.pi, 1.5 * math.pi, 2.0 * math.pi)


class BCType(Enum):
    DIRICHLET = "D"
    NEUMANN = "N"


class VertexClass(Enum):
    """Boundary-condition pattern of the two edges meeting at a vertex."""

    D2 = "D2"                 # Dirichlet / Dirichlet
    N2 = "N2"                 # Neumann / Neumann
    M_PRIME = "Mprime"        # arriving Neumann, leaving Dirichlet
    M_DPRIME = "Mdoubleprime"  # arriving Dirichlet, leaving Neumann


class DomainError(ValueError):
    """Invalid polygon or boundary tagging."""


def _snap_angle(omega: float) -> float:
    """Snap an interior angle to a table breakpoint within ANGLE_TOL."""
    for bp in _BREAKPOINTS:
        if abs(omega - bp) < ANGLE_TOL:
            return bp
    return omega


def _segments_intersect(p1, p2, q1, q2) -> bool:
    """Proper intersection test for open segments (shared endpoints ignored)."""

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(v) < 1e-14:
            return 0
        return 1 if v > 0 else -1

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


@dataclass(frozen=True)
class PolygonDomain:
    """Simple counterclockwise polygon with Dirichlet/Neumann edge tags."""

    vertices: np.ndarray                 # (n, 2)
    tags: tuple[BCType, ...]             # tags[j] tags edge vertex j -> j+1
    name: str = ""
    angles: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 3:
            raise DomainError("vertices must be an (n, 2) array with n >= 3")
        object.__setattr__(self, "vertices", verts)
        if len(self.tags) != len(verts):
            raise DomainError("need one edge tag per vertex")
        object.__setattr__(self, "tags", tuple(BCType(t) for t in self.tags))
        if self.signed_area() <= 0:
            raise DomainError("vertices must be ordered counterclockwise")
        self._check_simple()
        object.__setattr__(self, "angles", self._interior_angles())
        self._check_angles()

    # -- construction checks ------------------------------------------------

    def _check_simple(self):
        n = len(self.vertices)
        for i in range(n):
            p1, p2 = self.vertices[i], self.vertices[(i + 1) % n]
            if np.allclose(p1, p2):
                raise DomainError(f"degenerate edge {i}")
            for j in range(i + 1, n):
                if j == i or (j + 1) % n == i or (i + 1) % n == j:
                    continue
                q1, q2 = self.vertices[j], self.vertices[(j + 1) % n]
                if _segments_intersect(p1, p2, q1, q2):
                    raise DomainError(f"edges {i} and {j} intersect")

    def _interior_angles(self) -> np.ndarray:
        n = len(self.vertices)
        angles = np.empty(n)
        for j in range(n):
            d_out = self.vertices[(j + 1) % n] - self.vertices[j]
            d_in = self.vertices[j] - self.vertices[j - 1]
            # interior angle: counterclockwise turn from the leaving edge
            # direction to the reversed arriving edge direction
            a = math.atan2(-d_in[1], -d_in[0]) - math.atan2(d_out[1], d_out[0])
            a = a % (2.0 * math.pi)
            angles[j] = _snap_angle(a)
        return angles

    def _check_angles(self):
        for j, omega in enumerate(self.angles):
            if not 0.0 < omega < 2.0 * math.pi:
                raise DomainError(f"interior angle at vertex {j} out of (0, 2pi)")
            if omega == math.pi and self.tags[j - 1] == self.tags[j]:
                raise DomainError(
                    f"straight angle at vertex {j} requires a boundary-condition "
                    "change across the vertex"
                )

    # -- basic queries -------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def signed_area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def area(self) -> float:
        return self.signed_area()

    def edge(self, j: int) -> tuple[np.ndarray, np.ndarray, BCType]:
        n = self.n_vertices
        return self.vertices[j % n], self.vertices[(j + 1) % n], self.tags[j % n]

    def has_dirichlet(self) -> bool:
        return any(t == BCType.DIRICHLET for t in self.tags)

    def all_neumann(self) -> bool:
        return all(t == BCType.NEUMANN for t in self.tags)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Even-odd point-in-polygon test (vectorized, strict interior only
        reliable away from the boundary)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        inside = np.zeros(len(pts), dtype=bool)
        n = self.n_vertices
        for i in range(n):
            x1, y1 = self.vertices[i]
            x2, y2 = self.vertices[(i + 1) % n]
            crosses = (y1 > y) != (y2 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            inside ^= crosses & (x < np.where(crosses, xc, np.inf))
        return inside


def classify_vertex(domain: PolygonDomain, j: int) -> VertexClass:
    """Classify vertex ``j`` by the BC types of its two adjacent edges."""
    t_in = domain.tags[(j - 1) % domain.n_vertices]
    t_out = domain.tags[j % domain.n_vertices]
    if t_in == BCType.DIRICHLET and t_out == BCType.DIRICHLET:
        return VertexClass.D2
    if t_in == BCType.NEUMANN and t_out == BCType.NEUMANN:
        return VertexClass.N2
    if t_in == BCType.NEUMANN:
        return VertexClass.M_PRIME
    return VertexClass.M_DPRIME


def singular_exponents(vclass: VertexClass, omega: float) -> list[tuple[float, str]]:
    """Exponent/trig rows for the corrective singular functions at a corner.

    Returns (beta, trig) pairs with ``s = r**(-beta) * trig(beta * theta)``;
    only exponents in (0, 1) appear.  Interval membership at the breakpoints
    follows the exponent table exactly: (pi, 2pi) open for D2/N2, and
    (pi/2, 3pi/2] right-closed for the mixed classes.
    """
    if not 0.0 < omega < 2.0 * math.pi:
        raise ValueError("omega must lie in (0, 2pi)")
    omega = _snap_angle(omega)
    half, pi, three_half = _BREAKPOINTS[:3]
    if vclass in (VertexClass.D2, VertexClass.N2):
        trig = "sin" if vclass == VertexClass.D2 else "cos"
        if pi < omega < 2.0 * math.pi:
            return [(math.pi / omega, trig)]
        return []
    trig = "sin" if vclass == VertexClass.M_PRIME else "cos"
    if half < omega <= three_half:
        return [(math.pi / (2.0 * omega), trig)]
    if three_half < omega < 2.0 * math.pi:
        return [((2 * m - 1) * math.pi / (2.0 * omega), trig) for m in (1, 2)]
    return []


@dataclass(frozen=True)
class SingularSpec:
    """Singular functions contributed by one corner, in its local polar frame.

    The frame places the corner at the origin with the leaving edge along
    the positive horizontal axis, so theta in (0, omega) is the interior.
    """

    vertex_index: int
    omega: float
    exponents: tuple[tuple[float, str], ...]
    origin: np.ndarray        # corner coordinates
    frame_angle: float        # angle of the leaving edge direction

    def __post_init__(self):
        for beta, _ in self.exponents:
            if not 0.0 < beta < 1.0:
                raise ValueError("exponents must lie in (0, 1)")
        if len(self.exponents) > 2:
            raise ValueError("at most two exponents per corner")


def singular_spec(domain: PolygonDomain, j: int) -> SingularSpec:
    """Build the singular-function spec for vertex ``j`` (may be empty)."""
    omega = float(domain.angles[j])
    exps = singular_exponents(classify_vertex(domain, j), omega)
    d_out = domain.vertices[(j + 1) % domain.n_vertices] - domain.vertices[j]
    return SingularSpec(
        vertex_index=j,
        omega=omega,
        exponents=tuple(exps),
        origin=domain.vertices[j].copy(),
        frame_angle=math.atan2(d_out[1], d_out[0]),
    )


def perp_dimension(domain: PolygonDomain) -> tuple[int, list[int]]:
    """Dimension of the corrective space and the contributing vertex indices.

    Counts +1 per D2/N2 vertex with omega in (pi, 2pi), +1 per mixed vertex
    with omega in (pi/2, 3pi/2], and +2 per mixed vertex with omega in
    (3pi/2, 2pi).
    """
    total = 0
    contributing = []
    for j in range(domain.n_vertices):
        k = len(singular_exponents(classify_vertex(domain, j), float(domain.angles[j])))
        if k:
            total += k
            contributing.append(j)
    return total, contributing


# -- built-in experiment domains ---------------------------------------------

_BUILTIN_VERTICES = {
    # Square of side 4 centered at the corner Q = origin, with a sector
    # removed; Q is vertex 0 and its leaving edge runs along +x.
    "I": [(0, 0), (2, 0), (2, 2), (-2, 2), (-2, 0)],
    "II": [(0, 0), (2, 0), (2, 2), (-2, 2), (-2, -2)],
    "III": [(0, 0), (2, 0), (2, 2), (-2, 2), (-2, -2), (0, -2)],
    "IV": [(0, 0), (2, 0), (2, 2), (-2, 2), (-2, -2), (2, -2)],
}

BC_TYPES = ("B1", "B2", "B3", "B4", "B5")
BUILTIN_NAMES = tuple(_BUILTIN_VERTICES)


def builtin_domain(name: str, bc_type: str) -> PolygonDomain:
    """One of the four experiment domains with a standard boundary tagging.

    B1: all Dirichlet.  B2: the two edges at Q Neumann, rest Dirichlet.
    B3: arriving edge at Q Neumann, leaving edge Dirichlet (mixed M').
    B4: arriving edge Dirichlet, leaving edge Neumann (mixed M'').
    B5: all Neumann.
    """
    if name not in _BUILTIN_VERTICES:
        raise DomainError(f"unknown domain {name!r}; choose from I, II, III, IV")
    if bc_type not in BC_TYPES:
        raise DomainError(f"unknown boundary type {bc_type!r}; choose B1..B5")
    verts = np.array(_BUILTIN_VERTICES[name], dtype=float)
    n = len(verts)
    D, N = BCType.DIRICHLET, BCType.NEUMANN
    if bc_type == "B1":
        tags = [D] * n
    elif bc_type == "B5":
        tags = [N] * n
    else:
        tags = [D] * n
        if bc_type == "B2":
            tags[n - 1] = N  # arriving edge at Q
            tags[0] = N      # leaving edge at Q
        elif bc_type == "B3":
            tags[n - 1] = N
        else:  # B4
            tags[0] = N
    try:
        return PolygonDomain(verts, tuple(tags), name=f"{name}/{bc_type}")
    except DomainError as exc:
        raise DomainError(
            f"domain {name} with boundary type {bc_type} is inconsistent: {exc}"
        ) from exc


def read_domain_file(path) -> PolygonDomain:
    """Parse the plain-text domain format: vertex lines 'x y', then one
    'D'/'N' tag line per edge."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    verts, tags = [], []
    for ln in lines:
        parts = ln.split()
        if len(parts) == 2 and parts[0] not in ("D", "N"):
            if tags:
                raise DomainError("vertex lines must precede tag lines")
            verts.append((float(parts[0]), float(parts[1])))
        elif len(parts) == 1 and parts[0] in ("D", "N"):
            tags.append(BCType(parts[0]))
        else:
            raise DomainError(f"unparsable domain line: {ln!r}")
    if len(tags) != len(verts):
        raise DomainError(
            f"got {len(verts)} vertices but {len(tags)} edge tags; need one tag per edge"
        )
    return PolygonDomain(np.array(verts), tuple(tags), name="file")
