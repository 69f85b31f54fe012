import numpy as np
import pytest

from app.models.kernelSpec import CompositeKernelSpec, SpatialFamily, SpatialKernelSpec, TemporalKernelSpec
from config.settings import settings


def pytest_collection_modifyitems(config, items):
    if settings.run_slow:
        return
    skip_slow = pytest.mark.skip(reason="set TVBO_RUN_SLOW=1 to run slow suites")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def matern_kernel():
    """Matern 3/2 space kernel with a small forgetting rate"""
    return CompositeKernelSpec(spatial=SpatialKernelSpec(family=SpatialFamily.MATERN32, lengthscale=0.2),
                               temporal=TemporalKernelSpec(epsilon=0.05))


@pytest.fixture
def small_grid():
    return np.linspace(0.0, 1.0, 40).reshape(-1, 1)


@pytest.fixture
def small_bo_tree(tmp_path):
    """Three TvGp agents on a 40-point grid; small enough for unit tests"""
    return {
        "experiment": "synth-bo",
        "trials": 3,
        "horizon": 25,
        "base_seed": 5,
        "workers": 1,
        "output_dir": str(tmp_path / "out"),
        "environment": {"grid_size": 40, "epsilon": [0.05]},
        "agents": [
            {"name": "TV-GP-UCB", "kind": "TvGp", "policy": {"kind": "Always"}},
            {"name": "CE-GP-UCB", "kind": "TvGp", "policy": {"kind": "ConfidenceRule", "kappa": 0.9}},
            {"name": "TV-GP-UCB Ber", "kind": "TvGp", "policy": {"kind": "Bernoulli", "rate": [0.2, 0.5]}},
        ],
    }


@pytest.fixture
def small_bo_config(small_bo_tree):
    from app.service.configService.normalizeConfig import NormalizeConfig

    return NormalizeConfig(small_bo_tree).normalize()
