import numpy as np
import pytest
import scipy.sparse as sp

from ssnmf.graph import NeighborGraph


def random_graph(n, rng, density=0.3):
    """Symmetric nonnegative weights with a zero diagonal."""
    W = sp.random(n, n, density=density, random_state=rng, format="csr")
    W = W.maximum(W.T).tolil()
    W.setdiag(0)
    return NeighborGraph.from_weights(W.tocsr())


def dense_graph(W):
    return NeighborGraph.from_weights(sp.csr_matrix(np.asarray(W, dtype=float)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
