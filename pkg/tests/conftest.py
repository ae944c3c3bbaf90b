from __future__ import annotations

import numpy as np
import pytest

from graphflow.manifolds import ModelManifold
from graphflow.mesh import build_mesh

S2 = ModelManifold.sphere(2)
T2 = ModelManifold.torus(2)


@pytest.fixture(scope="session")
def sphere():
    return S2


@pytest.fixture(scope="session")
def torus():
    return T2


@pytest.fixture(scope="session")
def sphere_meshes():
    cache = {}

    def get(res):
        if res not in cache:
            cache[res] = build_mesh(S2, res)
        return cache[res]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
