import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def fd_grad(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central finite differences of scalar f() w.r.t. the array x in place."""
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def assert_grads_close(analytic, numeric, rtol=1e-4, atol=1e-7):
    analytic = np.zeros_like(numeric) if analytic is None else analytic
    np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol)
