"""Hot message-passing kernels.

The compiled Cython module ``_core`` is used when it imports; otherwise the
numpy implementation in ``_fallback`` is selected. Setting the environment
variable ``IMITATE_PURE_PYTHON=1`` forces the fallback.
"""
import os

import numpy as np

from . import _fallback

try:
    if os.environ.get("IMITATE_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("fallback forced by IMITATE_PURE_PYTHON")
    from . import _core as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _fallback
    BACKEND = "python"


def available_backends():
    names = ["python"]
    try:
        from . import _core  # noqa: F401

        names.append("cython")
    except ImportError:
        pass
    return names


def get_backend(name=None):
    """Return the kernel module for ``name`` ("cython" or "python"); default is the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _core

        return _core
    raise ValueError(f"unknown kernel backend {name!r}")


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def forward_backward(pi, trans, log_b, backend=None):
    return get_backend(backend).forward_backward(_c(pi), _c(trans), _c(log_b))


def viterbi(log_pi, log_trans, log_b, backend=None):
    return get_backend(backend).viterbi(_c(log_pi), _c(log_trans), _c(log_b))


def hsmm_messages(log_pi, log_trans, log_pd, log_surv, log_b, backend=None):
    return get_backend(backend).hsmm_messages(
        _c(log_pi), _c(log_trans), _c(log_pd), _c(log_surv), _c(log_b)
    )
