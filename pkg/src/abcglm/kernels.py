"""Backend selection for the hot loops.

The Cython extension is used when it has been built; otherwise the numpy
twin is imported. Set ``ABCGLM_PURE_PYTHON=1`` to force the numpy path.
"""

import os

import numpy as np

from . import _pykernels

if os.environ.get("ABCGLM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = _impl.BACKEND
philox4x32 = _impl.philox4x32
uniforms = _impl.uniforms
coalescent_segsites = _impl.coalescent_segsites
poisson_counts = _impl.poisson_counts
mixture_logsumexp = _impl.mixture_logsumexp
windowed_logsumexp_1d = _impl.windowed_logsumexp_1d

# components beyond this many standard deviations weigh < 3e-18 of a
# component at zero distance
GAUSS_REACH = 9.0


def gaussian_logsum_1d(points, centers, log_weights, sd):
    """log sum_j w_j exp(-(x - c_j)^2 / (2 sd^2)) at ascending ``points``.

    Same value as ``mixture_logsumexp`` on scaled inputs, but components
    more than ``GAUSS_REACH`` standard deviations away are skipped.
    """
    centers = np.asarray(centers, dtype=np.float64).ravel()
    order = np.argsort(centers, kind="stable")
    return _impl.windowed_logsumexp_1d(
        np.asarray(points, dtype=np.float64).ravel() / sd, centers[order] / sd,
        np.asarray(log_weights, dtype=np.float64)[order], GAUSS_REACH)


def available_backends():
    """Map backend name -> kernel module for every importable backend."""
    found = {"numpy": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        found["cython"] = _ckernels
    return found
