"""Corner singular functions, the radial cutoff, and singular quadrature.

A corner with interior angle omega contributes harmonic functions
``s = r**(-beta) * trig(beta*theta)`` in the local polar frame of the
corner.  They are localized by a radial quintic cutoff ``chi`` equal to 1
inside r = tau*R and 0 beyond r = R.  Products of chi*s with P1 hat
functions are integrated by a graded scheme: triangles with a vertex at
the corner get a radially exact Gauss-Jacobi rule through a Duffy map,
and nearby triangles are subdivided until the integrand is resolved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .geometry import SingularSpec
from .mesh import TriMesh


class QuadratureError(RuntimeError):
    """Graded quadrature failed to reach its accuracy target."""

    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class CutoffSpec:
    """Radial cutoff parameters: 1 on [0, tau*R], 0 on [R, inf)."""

    tau: float = 0.125
    R: float = 1.8

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.R <= 0:
            raise ValueError("R must be positive")

    @property
    def inner(self) -> float:
        return self.tau * self.R


def chi(r, spec: CutoffSpec):
    """Quintic cutoff: 1 below tau*R, 0 above R, C^2 transition between."""
    return chi_derivs(r, spec)[0]


def chi_derivs(r, spec: CutoffSpec):
    """(chi, chi', chi'') of the piecewise quintic cutoff."""
    r = np.asarray(r, dtype=float)
    scale = 2.0 / (spec.R * (1.0 - spec.tau))
    t = scale * r - (1.0 + spec.tau) / (1.0 - spec.tau)
    c = -3 / 16 * t**5 + 5 / 8 * t**3 - 15 / 16 * t + 0.5
    c1 = (-15 / 16 * t**4 + 15 / 8 * t**2 - 15 / 16) * scale
    c2 = (-15 / 4 * t**3 + 15 / 4 * t) * scale**2
    below = r <= spec.inner
    above = r >= spec.R
    c = np.where(below, 1.0, np.where(above, 0.0, c))
    c1 = np.where(below | above, 0.0, c1)
    c2 = np.where(below | above, 0.0, c2)
    if c.ndim == 0:
        return float(c), float(c1), float(c2)
    return c, c1, c2


@dataclass(frozen=True)
class SingularBasis:
    """One localized singular function chi(r) * r**(-beta) * trig(beta*theta)."""

    beta: float
    trig: str                  # "sin" or "cos"
    origin: np.ndarray
    frame_angle: float         # rotation aligning the corner's leaving edge with +x
    omega: float
    cutoff: CutoffSpec = field(default_factory=CutoffSpec)

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.trig not in ("sin", "cos"):
            raise ValueError("trig must be 'sin' or 'cos'")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))

    def local_polar(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        dx = pts[:, 0] - self.origin[0]
        dy = pts[:, 1] - self.origin[1]
        r = np.hypot(dx, dy)
        theta = np.mod(np.arctan2(dy, dx) - self.frame_angle, 2.0 * math.pi)
        # fold roundoff on the theta = 0 edge back to a small negative angle
        slack = 0.5 * (2.0 * math.pi - self.omega)
        theta = np.where(theta > self.omega + slack, theta - 2.0 * math.pi, theta)
        return r, theta

    def angular(self, theta):
        arg = self.beta * np.asarray(theta, dtype=float)
        return np.sin(arg) if self.trig == "sin" else np.cos(arg)

    def eval_s(self, points):
        """The raw singular function r**(-beta)*Phi; undefined at the corner."""
        r, theta = self.local_polar(points)
        if np.any(r == 0):
            raise ValueError("singular function evaluated at the corner")
        return r ** (-self.beta) * self.angular(theta)

    def eval_chi_s(self, points):
        r, theta = self.local_polar(points)
        out = np.zeros_like(r)
        inside = (r > 0) & (r < self.cutoff.R)
        c = chi(r[inside], self.cutoff)
        out[inside] = c * r[inside] ** (-self.beta) * self.angular(theta[inside])
        return out

    def eval_laplacian_chi_s(self, points):
        """Closed form: since s is harmonic,
        lap(chi*s) = (chi'' + (1 - 2*beta)*chi'/r) * r**(-beta) * Phi(theta),
        supported on the cutoff transition annulus only."""
        r, theta = self.local_polar(points)
        out = np.zeros_like(r)
        band = (r > self.cutoff.inner) & (r < self.cutoff.R)
        rb = r[band]
        _, c1, c2 = chi_derivs(rb, self.cutoff)
        out[band] = (c2 + (1.0 - 2.0 * self.beta) * c1 / rb) \
            * rb ** (-self.beta) * self.angular(theta[band])
        return out


def bases_from_spec(spec: SingularSpec, cutoff: CutoffSpec | None = None) -> list[SingularBasis]:
    cutoff = cutoff or CutoffSpec()
    return [
        SingularBasis(beta, trig, spec.origin, spec.frame_angle, spec.omega, cutoff)
        for beta, trig in spec.exponents
    ]


@dataclass
class HybridField:
    """P1 nodal part plus scaled analytic singular parts.

    The analytic parts are never sampled into nodal values (they are
    unbounded at the corner); inner products against them go through the
    graded quadrature loads.
    """

    nodal: np.ndarray
    analytic_parts: list[tuple[SingularBasis, float]] = field(default_factory=list)

    def evaluate(self, points, nodal_values):
        out = np.asarray(nodal_values, dtype=float).copy()
        for basis, coeff in self.analytic_parts:
            out = out + coeff * basis.eval_chi_s(points)
        return out


# -- graded quadrature ---------------------------------------------------------


def _collapsed_rule(n: int):
    """Gauss rule on the reference triangle via the square-collapse map;
    exact for polynomials of total degree 2n-2.  Barycentric points and
    weights normalized to sum to 1."""
    x, w = roots_legendre(n)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    U, V = np.meshgrid(u, u, indexing="ij")
    WU, WV = np.meshgrid(wu, wu, indexing="ij")
    lam = np.stack([1.0 - U, U * (1.0 - V), U * V], axis=-1).reshape(-1, 3)
    weights = (2.0 * WU * WV * U).reshape(-1)
    return lam, weights


def _subdivision_templates(depth: int) -> np.ndarray:
    """Barycentric corner coordinates of the 4**depth red-refinement children."""
    tris = np.eye(3)[None, :, :]
    for _ in range(depth):
        c0, c1, c2 = tris[:, 0], tris[:, 1], tris[:, 2]
        m01, m12, m20 = 0.5 * (c0 + c1), 0.5 * (c1 + c2), 0.5 * (c2 + c0)
        tris = np.concatenate([
            np.stack([c0, m01, m20], axis=1),
            np.stack([m01, c1, m12], axis=1),
            np.stack([m20, m12, c2], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ], axis=0)
    return tris


_RULE_CACHE: dict = {}


def _refined_rule(n: int, depth: int):
    key = (n, depth)
    if key not in _RULE_CACHE:
        lam, w = _collapsed_rule(n)
        sub = _subdivision_templates(depth)          # (4^d, 3, 3)
        pts = np.einsum("qi,sij->sqj", lam, sub).reshape(-1, 3)
        weights = np.tile(w / 4.0**depth, len(sub))
        _RULE_CACHE[key] = (pts, weights)
    return _RULE_CACHE[key]


def _dist_to_corner(tri_pts: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Distance from the corner to each triangle (min over the 3 edges)."""
    d = np.full(len(tri_pts), np.inf)
    for i in range(3):
        a = tri_pts[:, i]
        b = tri_pts[:, (i + 1) % 3]
        ab = b - a
        t = np.einsum("td,td->t", q - a, ab) / np.einsum("td,td->t", ab, ab)
        t = np.clip(t, 0.0, 1.0)
        proj = a + t[:, None] * ab
        d = np.minimum(d, np.linalg.norm(proj - q, axis=1))
    return d


@dataclass(frozen=True)
class GradedQuadratureOptions:
    n_gauss: int = 6          # collapsed rule order (degree 2n-2 exact)
    near_ratio: float = 6.0   # subdivide until child diameter <= dist/near_ratio
    n_feature: int = 10       # resolve the cutoff band to (R - tau*R)/n_feature
    max_depth: int = 8
    n_radial: int = 24        # corner-triangle radial nodes per segment
    n_angular: int = 24       # corner-triangle angular nodes
    kink_resolve: float = 1e-3  # cell size at which kink-circle straddle stops


def _corner_rule(q, p1, p2, gamma, breakpoints, opts: GradedQuadratureOptions):
    """Points/weights integrating r**(-gamma)*smooth over triangle (q,p1,p2).

    Duffy map x = q + u*((1-v)(p1-q) + v(p2-q)); the radial integral is
    split at the cutoff breakpoints, with a Gauss-Jacobi rule absorbing the
    u**(1-gamma) factor on the segment containing the corner.
    """
    e1, e2 = p1 - q, p2 - q
    two_area = e1[0] * e2[1] - e1[1] * e2[0]
    xv, wv = roots_legendre(opts.n_angular)
    v = 0.5 * (xv + 1.0)
    wv = 0.5 * wv
    xj, wj = roots_jacobi(opts.n_radial, 0.0, 1.0 - gamma)
    tj = 0.5 * (xj + 1.0)
    wj = wj * 2.0 ** (-(2.0 - gamma))     # maps the [-1,1] weight to [0,1]
    xl, wl = roots_legendre(opts.n_radial)
    tl = 0.5 * (xl + 1.0)
    wl = 0.5 * wl

    pts, wts = [], []
    for vj, wvj in zip(v, wv):
        edge = (1.0 - vj) * e1 + vj * e2
        rho = math.hypot(edge[0], edge[1])
        cuts = sorted({bp / rho for bp in breakpoints if 0.0 < bp / rho < 1.0})
        segs = [0.0] + cuts + [1.0]
        # corner segment: Gauss-Jacobi in the scaled variable
        a = segs[1]
        upts = a * tj
        uw = a**2 * wj * tj**gamma
        for lo, hi in zip(segs[1:], segs[2:]):
            upts = np.concatenate([upts, lo + (hi - lo) * tl])
            uw = np.concatenate([uw, (hi - lo) * wl * (lo + (hi - lo) * tl)])
        pts.append(q[None, :] + upts[:, None] * edge[None, :])
        wts.append(two_area * wvj * uw)
    return np.vstack(pts), np.concatenate(wts)


def _select_support(mesh: TriMesh, q, r_hi, r_lo=0.0):
    """Triangle indices intersecting the radial band [r_lo, r_hi] about q,
    split into (corner, other), plus distances and diameters."""
    tri_pts = mesh.nodes[mesh.triangles]
    vert_d = np.linalg.norm(tri_pts - q[None, None, :], axis=2)
    corner = np.any(vert_d < 1e-12, axis=1)
    dist = _dist_to_corner(tri_pts, q)
    r_max = vert_d.max(axis=1)
    keep = (dist < r_hi) & (r_max > r_lo)
    diam = np.zeros(len(tri_pts))
    for i in range(3):
        diam = np.maximum(
            diam, np.linalg.norm(tri_pts[:, i] - tri_pts[:, (i + 1) % 3], axis=1)
        )
    return tri_pts, corner & keep, (~corner) & keep, dist, diam, r_max


def _cell_bary(pts, tri_a, e1, e2, det):
    """Barycentric coordinates of points w.r.t. per-point triangles."""
    d = pts - tri_a
    l2 = (d[:, 0] * e2[:, 1] - d[:, 1] * e2[:, 0]) / det
    l3 = (e1[:, 0] * d[:, 1] - e1[:, 1] * d[:, 0]) / det
    return np.column_stack([1.0 - l2 - l3, l2, l3])


def _graded_integrate(mesh: TriMesh, basis: SingularBasis, gfun, gamma,
                      r_lo, r_hi, nodal: bool,
                      opts: GradedQuadratureOptions, depth_bump: int = 0,
                      kink_radii: tuple = ()):
    """Integrate gfun (singularity r**(-gamma) at the corner, supported in
    the band [r_lo, r_hi]) against all P1 hats (nodal=True) or 1.

    ``kink_radii`` marks circles about the corner where the integrand has
    reduced smoothness; cells straddling them are subdivided down to the
    ``kink_resolve`` size.
    """
    q = basis.origin
    spec = basis.cutoff
    tri_pts, corner_sel, other_sel, dist, diam, _ = _select_support(mesh, q, r_hi, r_lo)
    out = np.zeros(mesh.n_nodes) if nodal else 0.0
    breakpoints = (spec.inner, spec.R)
    feat = (spec.R - spec.inner) / opts.n_feature

    # corner triangles: radially exact rule
    for ti in np.flatnonzero(corner_sel):
        nodes = mesh.triangles[ti]
        order = np.argsort(np.linalg.norm(mesh.nodes[nodes] - q, axis=1))
        nq, n1, n2 = nodes[order]
        pts, wts = _corner_rule(q, mesh.nodes[n1], mesh.nodes[n2], gamma,
                                breakpoints, opts)
        wts = np.abs(wts)  # vertex order may flip orientation
        if nodal:
            bary = _barycentric(pts, mesh.nodes[nodes[order]])
            vals = wts * gfun(pts)
            np.add.at(out, nodes[order], (vals[:, None] * bary).sum(axis=0))
        else:
            out += float(np.sum(wts * gfun(pts)))

    # remaining triangles: base depth chosen from corner distance and cutoff
    # band, then a worklist keeps splitting cells that straddle kink circles
    idx = np.flatnonzero(other_sel)
    if not len(idx):
        return out
    d, h = dist[idx], diam[idx]
    depth = np.zeros(len(idx), dtype=int)
    if gamma > 0:
        with np.errstate(divide="ignore"):
            depth = np.maximum(
                depth, np.ceil(np.log2(opts.near_ratio * h / d)).astype(int)
            )
    in_band = (d < spec.R + h) & (d + h > spec.inner - h)
    depth = np.maximum(depth, np.where(in_band & (h > feat),
                                       np.ceil(np.log2(h / feat)).astype(int), 0))
    depth = np.clip(depth + depth_bump, 0, opts.max_depth)

    lam, w = _collapsed_rule(opts.n_gauss)
    cells_list, orig_list = [], []
    for k in np.unique(depth):
        sel = idx[depth == k]
        sub = _subdivision_templates(int(k))                # (S, 3, 3)
        cells = np.einsum("sij,tjd->tsid", sub, tri_pts[sel])
        cells_list.append(cells.reshape(-1, 3, 2))
        orig_list.append(np.repeat(sel, len(sub)))
    cells = np.vstack(cells_list)
    orig = np.concatenate(orig_list)
    tri_a = tri_pts[:, 0]
    tri_e1 = tri_pts[:, 1] - tri_pts[:, 0]
    tri_e2 = tri_pts[:, 2] - tri_pts[:, 0]
    tri_det = tri_e1[:, 0] * tri_e2[:, 1] - tri_e1[:, 1] * tri_e2[:, 0]

    for _ in range(40):
        if not len(cells):
            break
        if kink_radii:
            vr = np.linalg.norm(cells - q[None, None, :], axis=2)
            r_min = _dist_to_corner(cells, q)
            r_max = vr.max(axis=1)
            size = np.max(
                [np.linalg.norm(cells[:, i] - cells[:, (i + 1) % 3], axis=1)
                 for i in range(3)], axis=0)
            straddle = np.zeros(len(cells), dtype=bool)
            for kr in kink_radii:
                straddle |= (r_min < kr) & (r_max > kr)
            split = straddle & (size > opts.kink_resolve)
        else:
            split = np.zeros(len(cells), dtype=bool)

        ready, ready_orig = cells[~split], orig[~split]
        if len(ready):
            pts = np.einsum("qi,cid->cqd", lam, ready)       # (C, Q, 2)
            d1 = ready[:, 1] - ready[:, 0]
            d2 = ready[:, 2] - ready[:, 0]
            areas = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
            vals = gfun(pts.reshape(-1, 2)).reshape(len(ready), -1)
            vals = vals * w[None, :] * areas[:, None]
            if nodal:
                flat = pts.reshape(-1, 2)
                rep = np.repeat(ready_orig, len(lam))
                bary = _cell_bary(flat, tri_a[rep], tri_e1[rep], tri_e2[rep],
                                  tri_det[rep])
                contrib = vals.reshape(-1)[:, None] * bary
                out += np.bincount(mesh.triangles[rep].ravel(),
                                   weights=contrib.ravel(),
                                   minlength=mesh.n_nodes)
            else:
                out += float(vals.sum())

        if not np.any(split):
            break
        parents, porig = cells[split], orig[split]
        c0, c1, c2 = parents[:, 0], parents[:, 1], parents[:, 2]
        m01, m12, m20 = 0.5 * (c0 + c1), 0.5 * (c1 + c2), 0.5 * (c2 + c0)
        cells = np.concatenate([
            np.stack([c0, m01, m20], axis=1),
            np.stack([m01, c1, m12], axis=1),
            np.stack([m20, m12, c2], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ], axis=0)
        orig = np.tile(porig, 4)
    return out


def _barycentric(pts, tri):
    T = np.array([tri[1] - tri[0], tri[2] - tri[0]]).T
    lam12 = np.linalg.solve(T, (pts - tri[0]).T).T
    return np.column_stack([1.0 - lam12.sum(axis=1), lam12])


def load_singular(mesh: TriMesh, basis: SingularBasis,
                  opts: GradedQuadratureOptions | None = None) -> np.ndarray:
    """Load vector of lap(chi*s) against the P1 hats (annulus-supported)."""
    opts = opts or GradedQuadratureOptions()
    # the cutoff is C^2, so its second derivative has kinks on the two
    # transition circles; resolve cells straddling them
    return _graded_integrate(mesh, basis, basis.eval_laplacian_chi_s, 0.0,
                             basis.cutoff.inner, basis.cutoff.R, True, opts,
                             kink_radii=(basis.cutoff.inner, basis.cutoff.R))


def load_chi_s(mesh: TriMesh, basis: SingularBasis,
               opts: GradedQuadratureOptions | None = None) -> np.ndarray:
    """Load vector of chi*s against the P1 hats (graded at the corner)."""
    opts = opts or GradedQuadratureOptions()
    return _graded_integrate(mesh, basis, basis.eval_chi_s, basis.beta,
                             0.0, basis.cutoff.R, True, opts)


def inner_chi_s_pair(mesh: TriMesh, basis_a: SingularBasis, basis_b: SingularBasis,
                     opts: GradedQuadratureOptions | None = None,
                     target: float = 1e-8) -> float:
    """Integral of (chi*s_a)(chi*s_b) over the mesh, with an internal
    refinement check against the accuracy target."""
    opts = opts or GradedQuadratureOptions()
    gamma = basis_a.beta + basis_b.beta

    def gfun(pts):
        return basis_a.eval_chi_s(pts) * basis_b.eval_chi_s(pts)

    r_hi = min(basis_a.cutoff.R, basis_b.cutoff.R)
    coarse = _graded_integrate(mesh, basis_a, gfun, gamma, 0.0, r_hi, False, opts)
    fine = _graded_integrate(mesh, basis_a, gfun, gamma, 0.0, r_hi, False, opts,
                             depth_bump=1)
    # absolute floor of 1: distinct angular modes are orthogonal over the
    # sector, so entries can vanish identically while the natural scale of
    # the quadrature stays O(1)
    scale = max(abs(fine), 1.0)
    if abs(fine - coarse) > 10 * target * scale:
        raise QuadratureError(
            f"pair quadrature disagreement {abs(fine - coarse) / scale:.3e} "
            f"exceeds target {target:.1e}", fine)
    return float(fine)


def inner_singular(nodal_or_field, basis: SingularBasis, mesh: TriMesh,
                   mass=None, chi_s_load=None,
                   opts: GradedQuadratureOptions | None = None) -> float:
    """L2 inner product of a P1 field (or HybridField) with chi*s.

    P1-vs-P1 parts go through the mass matrix; any term with an analytic
    factor goes through the graded quadrature loads.
    """
    if chi_s_load is None:
        chi_s_load = load_chi_s(mesh, basis, opts)
    if isinstance(nodal_or_field, HybridField):
        total = float(nodal_or_field.nodal @ chi_s_load)
        for other, coeff in nodal_or_field.analytic_parts:
            total += coeff * inner_chi_s_pair(mesh, other, basis, opts)
        return total
    return float(np.asarray(nodal_or_field, dtype=float) @ chi_s_load)
