"""Kernel backend selection.

The hot loops (Bessel recurrences, far-field sums, derivative-polynomial
chains) exist twice: numba ``@njit`` kernels and vectorised numpy kernels.
``POLYEMBED_BACKEND=numpy`` forces the numpy path; the default is numba when
it imports cleanly.
"""

import logging
import os

logger = logging.getLogger(__name__)

ENV_FLAG = "POLYEMBED_BACKEND"


def _want_numba() -> bool:
    choice = os.environ.get(ENV_FLAG, "numba").strip().lower()
    if choice not in ("numba", "numpy"):
        raise ValueError(f"{ENV_FLAG} must be 'numba' or 'numpy', got {choice!r}")
    return choice == "numba"


def _load():
    if _want_numba():
        try:
            from ._kernels import numba_kernels as mod

            return mod
        except ImportError:  # pragma: no cover - numba missing
            logger.warning("numba unavailable, falling back to numpy kernels")
    from ._kernels import numpy_kernels as mod

    return mod


kernels = _load()
NAME = kernels.NAME


def get(name: str):
    """Return the kernel module for ``name`` ('numba' or 'numpy')."""
    if name == "numba":
        from ._kernels import numba_kernels as mod
    elif name == "numpy":
        from ._kernels import numpy_kernels as mod
    else:
        raise ValueError(name)
    return mod
