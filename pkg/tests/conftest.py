import numpy as np
import pytest

from common.log import set_verbose
from march.transfer_function import TransferFunction
from mesh.cells import Kind
from mesh.mesh_core import Cluster, Mesh

UNIT_POINTS = {
    Kind.TET: [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)],
    Kind.PYR: [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0.5, 0.5, 1)],
    Kind.WED: [(0, 0, 0), (0, 1, 0), (1, 0, 0), (0, 0, 1), (0, 1, 1), (1, 0, 1)],
    Kind.HEX: [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)],
}


@pytest.fixture(autouse=True)
def quiet_logs():
    set_verbose(False)
    yield
    set_verbose(False)


def single_element_cluster(kind: Kind, points=None, scalars=None, cluster_id: int = 0) -> Cluster:
    pts = np.asarray(points if points is not None else UNIT_POINTS[kind], dtype=np.float64)
    n = len(pts)
    values = None if scalars is None else np.asarray(scalars, dtype=np.float32).reshape(1, 1, n)
    mesh = Mesh(positions=pts, elements={kind: np.arange(n).reshape(1, n)}, scalars=values)
    return Cluster(cluster_id=cluster_id, mesh=mesh)


def glued_tets_cluster() -> Cluster:
    """Two unit tets sharing the triangle (1, 2, 3)."""
    pts = np.array([(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1)], dtype=np.float64)
    mesh = Mesh(positions=pts, elements={Kind.TET: np.array([[0, 1, 2, 3], [1, 4, 2, 3]])})
    return Cluster(cluster_id=0, mesh=mesh)


def constant_tf(rgb, alpha) -> TransferFunction:
    c = [*rgb, alpha]
    return TransferFunction([0.0, 1.0], [c, c], (0.0, 1.0))


@pytest.fixture
def unit_tet():
    return single_element_cluster(Kind.TET)


@pytest.fixture
def unit_hex():
    return single_element_cluster(Kind.HEX)


@pytest.fixture
def glued_tets():
    return glued_tets_cluster()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
