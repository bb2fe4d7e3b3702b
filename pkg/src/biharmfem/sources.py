"""Built-in source terms for the experiments."""

from __future__ import annotations

import math

import numpy as np


def const1(points):
    return np.ones(len(np.atleast_2d(points)))


def zero(points):
    return np.zeros(len(np.atleast_2d(points)))


def quadrant_step(points):
    """Piecewise source: 1 in the first quadrant, 0 in the second, -1 in the
    lower half-plane.  Constant on every triangle of the integer-grid
    meshes, and mean-zero on the L-shaped domain."""
    p = np.atleast_2d(points)
    return np.where(p[:, 1] < 0, -1.0, np.where(p[:, 0] >= 0, 1.0, 0.0))


def square_eigen(points):
    """4*pi^4 * sin(pi x) * sin(pi y): the biharmonic right-hand side whose
    solution on the unit square with hinged edges is sin(pi x) sin(pi y)."""
    p = np.atleast_2d(points)
    return 4.0 * math.pi**4 * np.sin(math.pi * p[:, 0]) * np.sin(math.pi * p[:, 1])


SOURCES = {
    "const1": const1,
    "zero": zero,
    "quadrant-step": quadrant_step,
    "square-eigen": square_eigen,
}


def get_source(name_or_callable):
    if callable(name_or_callable):
        return name_or_callable
    try:
        return SOURCES[name_or_callable]
    except KeyError:
        raise ValueError(
            f"unknown source {name_or_callable!r}; choose from {sorted(SOURCES)}"
        ) from None
