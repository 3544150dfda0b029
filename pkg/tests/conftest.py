import numpy as np
import pytest

from trendseek.corpus import series_viz


@pytest.fixture
def triangle_viz():
    """y = [0,1,2,1,0]: the canonical rise/fall example."""
    return series_viz([0.0, 1.0, 2.0, 1.0, 0.0])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_viz(y, zid="a", normalize=False):
    return series_viz(y, zid=zid, normalize=normalize)
