import numpy as np
import pytest

from artifact import _fallback, kernels

compiled = pytest.importorskip("artifact._kernels")


def _case(rng, n=40, m=300):
    t = rng.uniform(0, 1, (n, 2))
    s = rng.uniform(0, 1, (m, 2))
    return t[:, 0], t[:, 1], s[:, 0], s[:, 1], rng.normal(size=m)


def test_far_sum_backends_agree(rng):
    args = _case(rng)
    a = kernels.far_sum(*args, 0.5, 0.2, impl=_fallback)
    b = kernels.far_sum(*args, 0.5, 0.2, impl=compiled)
    np.testing.assert_allclose(a[0], b[0], rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("npts", [4, 6])
def test_interp_backends_bitwise(rng, npts):
    vals = rng.normal(size=(20, 30))
    p1 = rng.uniform(-1, 21, 500)
    p2 = rng.uniform(-1, 31, 500)
    for zo in (False, True):
        a = kernels.interp_lagrange(vals, p1, p2, npts, zo, impl=_fallback)
        b = kernels.interp_lagrange(vals, p1, p2, npts, zo, impl=compiled)
        assert np.array_equal(a, b)


def test_interp_reproduces_cubics():
    i, j = np.meshgrid(np.arange(12.0), np.arange(9.0), indexing="ij")
    vals = i ** 3 - 2 * j ** 2 + i * j
    p1, p2 = np.array([3.3, 7.9]), np.array([2.2, 4.5])
    out = kernels.interp_cubic(vals, p1, p2)
    np.testing.assert_allclose(out, p1 ** 3 - 2 * p2 ** 2 + p1 * p2, atol=1e-11)


def test_lagrange_weights_sum_to_one():
    u = np.linspace(0, 1, 7)
    np.testing.assert_allclose(_fallback.lagrange4(u).sum(axis=1), 1.0, atol=1e-15)
    np.testing.assert_allclose(_fallback.lagrange_n(u, 6).sum(axis=1), 1.0, atol=1e-15)


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")
