"""Multi-level convergence studies with Cauchy rates and report export.

Meshes are nested under uniform refinement, so the difference between
consecutive solutions is measured exactly by prolongating the coarse
solution to the fine mesh and taking the discrete H1 seminorm there.  The
Cauchy rate is

    R(j) = log2(|v_j - v_{j-1}|_1 / |v_{j+1} - v_j|_1).

Published error tables for these benchmark problems compare against an
independent high-resolution reference solution; that reference is out of
scope here, so reports instead record the nodal L-infinity discrepancy
between two formulations run on the same meshes (see README).
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .fem import LinearSolveOptions
from .geometry import PolygonDomain, builtin_domain, read_domain_file
from .mesh import TriMesh, initial_mesh, prolongate, refine_uniform
from .singular import CutoffSpec, GradedQuadratureOptions
from .solver import (LevelContext, solve_modified, solve_modified_neumann,
                     solve_naive)
from .sources import get_source

FORMULATIONS = ("naive", "modified", "modified-truncated", "neumann-modified")

CSV_COLUMNS = ("level", "nodes", "diff_h1_u", "rate_u", "diff_h1_w", "rate_w",
               "c1", "c2", "linf_vs_other")


@dataclass(frozen=True)
class StudyConfig:
    domain: str = "III"                 # built-in name or path to a domain file
    bc_type: str = "B1"
    formulation: str = "modified"
    source: str = "const1"
    max_level: int = 6
    cutoff: CutoffSpec = field(default_factory=CutoffSpec)
    solver_options: LinearSolveOptions = field(default_factory=LinearSolveOptions)
    quad_options: GradedQuadratureOptions | None = None
    compare_formulation: str | None = None
    csv_path: str | None = None
    field_levels: tuple[int, ...] = ()
    field_dir: str | None = None

    def __post_init__(self):
        if self.max_level < 2:
            raise ValueError("max_level must be at least 2 to compute a rate")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}; "
                             f"choose from {FORMULATIONS}")
        if self.compare_formulation is not None \
                and self.compare_formulation not in FORMULATIONS:
            raise ValueError(
                f"unknown formulation {self.compare_formulation!r}")

    def resolve_domain(self) -> PolygonDomain:
        if os.path.exists(self.domain):
            return read_domain_file(self.domain)
        return builtin_domain(self.domain, self.bc_type)


@dataclass
class RateTable:
    """Per-level study results.  Index 0 is refinement level 0; ``diff_*[j]``
    is the seminorm of the level-j minus level-(j-1) difference (nan at
    j=0) and ``rate_*[j]`` is R(j) (nan at j=0 and j=J)."""

    nodes: list[int]
    diff_u: list[float]
    rate_u: list[float]
    diff_w: list[float]
    rate_w: list[float]
    coefficients: list[np.ndarray]
    linf_vs_other: list[float]


@dataclass
class StudyReport:
    config: StudyConfig
    table: RateTable
    meshes: list[TriMesh]
    solutions: list
    other_solutions: list


def cauchy_rate(seminorms) -> list[float]:
    """R(j) = log2(d_j / d_{j+1}) for consecutive difference seminorms."""
    d = [float(v) for v in seminorms]
    if any(v <= 0 for v in d):
        raise ValueError("difference seminorms must be positive")
    return [math.log2(d[j] / d[j + 1]) for j in range(len(d) - 1)]


def _run_formulation(name: str, mesh: TriMesh, f, config: StudyConfig,
                     ctx: LevelContext):
    if name == "naive":
        return solve_naive(mesh, f, ctx=ctx)
    if name == "modified":
        return solve_modified(mesh, f, cutoff=config.cutoff,
                              quad_opts=config.quad_options, ctx=ctx)
    if name == "modified-truncated":
        return solve_modified(mesh, f, cutoff=config.cutoff,
                              quad_opts=config.quad_options, ctx=ctx,
                              truncate_basis=1)
    if name == "neumann-modified":
        return solve_modified_neumann(mesh, f, cutoff=config.cutoff,
                                      quad_opts=config.quad_options, ctx=ctx)
    raise ValueError(f"unknown formulation {name!r}")


def run_study(config: StudyConfig) -> StudyReport:
    domain = config.resolve_domain()
    f = get_source(config.source)
    mesh = initial_mesh(domain)
    meshes = [mesh]
    for _ in range(config.max_level):
        mesh = refine_uniform(mesh)
        meshes.append(mesh)

    solutions, others = [], []
    nodes, diff_u, diff_w, coeffs, linfs = [], [], [], [], []
    for j, m in enumerate(meshes):
        ctx = LevelContext(m, config.solver_options)
        res = _run_formulation(config.formulation, m, f, config, ctx)
        solutions.append(res)
        nodes.append(m.n_nodes)
        coeffs.append(np.asarray(getattr(res, "coefficients", np.zeros(0))))
        if j == 0:
            diff_u.append(math.nan)
            diff_w.append(math.nan)
        else:
            A = ctx.stiffness
            prev = solutions[j - 1]
            diff_u.append(fem.h1_seminorm_diff(res.u_h, prolongate(m, prev.u_h), A))
            diff_w.append(fem.h1_seminorm_diff(res.w_h, prolongate(m, prev.w_h), A))
        if config.compare_formulation is not None:
            other = _run_formulation(config.compare_formulation, m, f, config, ctx)
            others.append(other)
            linfs.append(fem.linf_diff(res.u_h, other.u_h))
        else:
            linfs.append(math.nan)

    def rates(diffs):
        out = [math.nan] * len(diffs)
        r = cauchy_rate(diffs[1:])
        out[1:len(r) + 1] = r
        return out

    table = RateTable(nodes, diff_u, rates(diff_u), diff_w, rates(diff_w),
                      coeffs, linfs)
    report = StudyReport(config, table, meshes, solutions, others)
    if config.csv_path:
        export_csv(report, config.csv_path)
    if config.field_dir:
        os.makedirs(config.field_dir, exist_ok=True)
        for j in config.field_levels:
            export_field(solutions[j].u_h, meshes[j],
                         os.path.join(config.field_dir, f"u_level{j}.vtk"))
    return report


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def _atomic_write(path: str, writer) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def export_csv(report: StudyReport, path: str) -> None:
    """Write the rate table; one row per level, atomic replace on success."""
    t = report.table

    def write(fh):
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for j in range(len(t.nodes)):
            c = t.coefficients[j]
            w.writerow([
                j, t.nodes[j],
                _fmt(t.diff_u[j]), _fmt(t.rate_u[j]),
                _fmt(t.diff_w[j]), _fmt(t.rate_w[j]),
                _fmt(c[0]) if len(c) > 0 else "",
                _fmt(c[1]) if len(c) > 1 else "",
                _fmt(t.linf_vs_other[j]),
            ])

    _atomic_write(path, write)


def read_csv(path: str) -> list[dict]:
    """Parse a study CSV back into rows of floats (empty cells -> nan)."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append({
                k: (math.nan if v == "" else float(v)) for k, v in rec.items()
            })
    return rows


def export_field(u_h: np.ndarray, mesh: TriMesh, path: str,
                 name: str = "u") -> None:
    """Dump a nodal field as a legacy-VTK ASCII unstructured grid."""
    u_h = np.asarray(u_h, dtype=float)
    if len(u_h) != mesh.n_nodes:
        raise ValueError("field length does not match mesh")

    def write(fh):
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("nodal field\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_nodes} double\n")
        for x, y in mesh.nodes:
            fh.write(f"{float(x)!r} {float(y)!r} 0.0\n")
        nt = mesh.n_triangles
        fh.write(f"CELLS {nt} {4 * nt}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"3 {a} {b} {c}\n")
        fh.write(f"CELL_TYPES {nt}\n")
        fh.write("5\n" * nt)
        fh.write(f"POINT_DATA {mesh.n_nodes}\n")
        fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        for v in u_h:
            fh.write(f"{float(v)!r}\n")

    _atomic_write(path, write)
