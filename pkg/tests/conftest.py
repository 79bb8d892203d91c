import numpy as np
import pytest

from interlace.lattice import Ball, RngStream, SiteSet
from interlace.potential import equilibrium_variational, get_green_table
from interlace.sampler import resolve_anchors


@pytest.fixture(scope="session")
def g0_d5():
    return get_green_table(5).zero()


@pytest.fixture(scope="session")
def g0_d3():
    return get_green_table(3).zero()


@pytest.fixture(scope="session")
def ball2_model_d5():
    """Exact anchor model for B(0,2) at d=5 (shared: the dense solve is slow)."""
    return resolve_anchors(Ball(np.zeros(5, dtype=np.int64), 2))


@pytest.fixture(scope="session")
def small_anchor_model_d5():
    """A small irregular anchor set with an exact equilibrium measure."""
    pts = np.array(
        [[0, 0, 0, 0, 0], [1, 0, 0, 0, 0], [0, 1, 0, 0, 0], [2, 1, 0, 0, 0], [-1, 0, 1, 0, 0]]
    )
    return resolve_anchors(SiteSet.from_points(pts, d=5))
