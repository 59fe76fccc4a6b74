import numpy as np
import pytest

from vbqc import qcore


@pytest.fixture(autouse=True)
def _structural_checks(request):
    """Assert state invariants after every qcore call, except in bulk runs."""
    enabled = request.node.get_closest_marker("bulk") is None
    old = qcore.DEBUG_CHECKS
    qcore.DEBUG_CHECKS = enabled
    yield
    qcore.DEBUG_CHECKS = old


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_density(rng, n, rank=None):
    d = 2**n
    rank = rank or d
    a = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = a @ a.conj().T
    return qcore.QuantumState(m / np.trace(m))


def random_unitary(rng, d):
    q, r = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return q * (np.diag(r) / np.abs(np.diag(r)))
