"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy
fallback takes over. Set ``ARTIFACT_BACKEND=python`` to force the fallback.
"""

import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback
if os.environ.get("ARTIFACT_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def far_sum(tx1, tx2, sy1, sy2, sq, alpha, rho, impl=None):
    """Smoothed far-zone sum; returns (u1, u2) at the targets."""
    impl = impl or _impl
    tx1, tx2 = _c(tx1), _c(tx2)
    out1 = np.zeros(tx1.shape[0])
    out2 = np.zeros(tx1.shape[0])
    impl.far_sum(tx1, tx2, _c(sy1), _c(sy2), _c(sq), float(alpha), float(rho), out1, out2)
    return out1, out2


def interp_cubic(values, p1, p2, zero_outside=False, impl=None):
    """Cubic Lagrange interpolation at fractional index coordinates."""
    impl = impl or _impl
    p1 = _c(p1).ravel()
    p2 = _c(p2).ravel()
    out = np.empty(p1.shape[0])
    impl.interp_cubic(_c(values), p1, p2, out, bool(zero_outside))
    return out


def interp_lagrange(values, p1, p2, npts=4, zero_outside=False, impl=None):
    """Tensor Lagrange interpolation with npts points per direction."""
    if npts == 4:
        return interp_cubic(values, p1, p2, zero_outside, impl)
    impl = impl or _impl
    p1 = _c(p1).ravel()
    p2 = _c(p2).ravel()
    out = np.empty(p1.shape[0])
    impl.interp_lagrange(_c(values), p1, p2, out, bool(zero_outside), int(npts))
    return out
