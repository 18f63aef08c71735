import numpy as np
import pytest

from miaudit.models import TrainConfig, train
from miaudit.shadow import train_shadow_pool
from miaudit.synth import SbmSpec, gen_iid_dataset, gen_sbm_graph

TINY = SbmSpec(n=8, num_classes=2, p_in=0.6, p_out=0.1, dim=4, seed=0)
SMALL = SbmSpec(n=40, num_classes=2, p_in=0.3, p_out=0.05, dim=6, seed=1)
FAST = TrainConfig(lr=0.05, epochs=60, hidden=8, seed=0)


@pytest.fixture(scope="session")
def tiny_graph():
    return gen_sbm_graph(TINY)


@pytest.fixture(scope="session")
def small_graph():
    return gen_sbm_graph(SMALL)


@pytest.fixture(scope="session")
def small_iid():
    return gen_iid_dataset(SMALL)


@pytest.fixture(scope="session")
def tiny_setup(tiny_graph):
    """Target trained on even nodes plus a K=4 GCN pool on an n=8 SBM."""
    mask = np.arange(8) % 2 == 0
    target = train("gcn2", tiny_graph, mask, FAST)
    pool = train_shadow_pool(tiny_graph, "gcn2", FAST, 4, seed=7)
    return tiny_graph, mask, target, pool


@pytest.fixture(scope="session")
def small_setup(small_graph):
    mask = np.arange(small_graph.n) % 2 == 1
    target = train("gcn2", small_graph, mask, FAST)
    pool = train_shadow_pool(small_graph, "gcn2", FAST, 4, seed=3)
    return small_graph, mask, target, pool


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SESSION_START = {}


def pytest_sessionstart(session):
    import time

    SESSION_START["t"] = time.perf_counter()


def pytest_collection_modifyitems(session, config, items):
    # the wall-clock criterion has to observe every other test
    last = [it for it in items if it.get_closest_marker("runs_last")]
    items[:] = [it for it in items if not it.get_closest_marker("runs_last")] + last


def pytest_configure(config):
    config.addinivalue_line("markers", "runs_last: execute after every other collected test")
