import numpy as np
import pytest

from biharmfem.geometry import BCType, PolygonDomain, builtin_domain
from biharmfem.mesh import initial_mesh, refine_uniform


def mesh_hierarchy(domain, levels):
    """Meshes at refinement levels 0..levels (inclusive)."""
    meshes = [initial_mesh(domain)]
    for _ in range(levels):
        meshes.append(refine_uniform(meshes[-1]))
    return meshes


def unit_square(tag=BCType.DIRICHLET):
    return PolygonDomain(
        np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
        (tag,) * 4,
    )


@pytest.fixture(scope="session")
def lshape_b1():
    return builtin_domain("III", "B1")


@pytest.fixture(scope="session")
def lshape_b1_meshes(lshape_b1):
    return mesh_hierarchy(lshape_b1, 4)
