"""
공통 fixture
"""

import numpy as np
import pytest

from gpinn.network import MlpParams, init_mlp
from gpinn.problems import Networks, build_problem, init_networks

TINY_SIZES = (1, 8, 8, 1)
TINY_SIZES_2D = (2, 8, 8, 1)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="느린 학습 테스트까지 실행")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="--runslow 옵션이 필요합니다")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def gpinn_home(tmp_path, monkeypatch):
    """사용자 설정을 테스트 디렉토리로 격리"""
    home = tmp_path / "home"
    monkeypatch.setenv("GPINN_HOME", str(home))
    return home


@pytest.fixture
def cache_dir(tmp_path):
    path = tmp_path / "cache"
    path.mkdir()
    return path


@pytest.fixture
def poisson():
    return build_problem("poisson-1d")


@pytest.fixture
def brinkman():
    return build_problem("brinkman")


@pytest.fixture
def tiny_networks(poisson):
    return init_networks(poisson, TINY_SIZES, seed=0)


@pytest.fixture
def zero_networks():
    """출력이 항상 0 인 네트워크"""
    return Networks(MlpParams.zeros(TINY_SIZES))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_mlp(seed: int = 0, sizes=TINY_SIZES) -> MlpParams:
    return init_mlp(sizes, seed)
