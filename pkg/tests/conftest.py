import numpy as np
import pytest

from ekmantopo.cutoffs import CutoffChi, CutoffK
from ekmantopo.geometry import ConvexShore, DepthProfile, Topography
from ekmantopo.profiles import AnsatzParams, InitialSwirl


@pytest.fixture(scope="session")
def cutoff_k():
    return CutoffK()


@pytest.fixture(scope="session")
def disk_topo():
    shore = ConvexShore.disk(1.0)
    depth = DepthProfile("exp", 0.2, 1.5, 0.8)
    return Topography(shore, depth, 0.5)


@pytest.fixture(scope="session")
def tanh_topo():
    shore = ConvexShore.disk(1.0)
    depth = DepthProfile("tanh", 0.2, 1.5, 0.8)
    return Topography(shore, depth, 0.5)


@pytest.fixture(scope="session")
def swirl():
    return InitialSwirl("gaussian", 1.0, 3.4, 0.5)


@pytest.fixture(scope="session")
def params(disk_topo, swirl, cutoff_k):
    return AnsatzParams(topo=disk_topo, eps=0.1, a=0.75, data=swirl, k=cutoff_k)


@pytest.fixture(scope="session")
def params_tanh(tanh_topo, swirl, cutoff_k):
    return AnsatzParams(topo=tanh_topo, eps=0.1, a=0.75, data=swirl, k=cutoff_k)


@pytest.fixture(scope="session")
def curve_shore():
    h = lambda th: 1.0 + 0.12 * np.cos(2 * th) + 0.04 * np.sin(3 * th)
    dh = lambda th: -0.24 * np.sin(2 * th) + 0.12 * np.cos(3 * th)
    d2h = lambda th: -0.48 * np.cos(2 * th) - 0.36 * np.sin(3 * th)
    return ConvexShore.from_support(h, dh, d2h, n=16384)
