import numpy as np
import pytest

from canyonguard.numcore import Rng


@pytest.fixture
def rng():
    return Rng.from_seed(0xDECAF)


def finite_difference(fn, x, h=1e-3):
    """Central finite differences of scalar fn w.r.t. array x (64-bit)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(x)
        flat[i] = orig - h
        fm = fn(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def assert_grads_close(analytic, numeric, rtol=1e-4, atol=1e-6, label=""):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    assert analytic.shape == numeric.shape, label
    np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol,
                               err_msg=f"gradient mismatch {label}")


def random_array(rng, shape, scale=1.0, dtype=np.float64):
    n = int(np.prod(shape))
    vals, rng = rng.normal(n)
    return (vals.reshape(shape) * scale).astype(dtype), rng
