"""Integer-order Bessel and Hankel functions of real positive argument.

J_n comes from Miller's downward recurrence normalised by
J_0 + 2 Σ J_2k = 1 (or upward recurrence from the Hankel asymptotic
series when x is large and exceeds the order); Y_0, Y_1 come from the
Neumann series over the same sequence, and Y_n from upward recurrence.
"""

import numpy as np

from . import _backend
from .errors import PolyembedError

MAX_ORDER = 200


class SpecialFunctionDomainError(PolyembedError, ValueError):
    """Raised for non-positive arguments or unsupported orders."""


def _prepare(n, x):
    n = int(n)
    if n < 0 or n > MAX_ORDER:
        raise SpecialFunctionDomainError(f"order must be in [0, {MAX_ORDER}], got {n}")
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0)):
        raise SpecialFunctionDomainError("argument must be strictly positive")
    return n, xa


def jy_table(nmax, x):
    """Tables of J_0..J_nmax and Y_0..Y_nmax.

    Parameters
    ----------
    nmax : int
        Highest order required.
    x : array_like
        Positive arguments, any shape.

    Returns
    -------
    J, Y : ndarray
        Shape ``x.shape + (nmax + 1,)``.
    """
    nmax, xa = _prepare(nmax, x)
    J, Y = _backend.kernels.jy_table(nmax, xa.ravel())
    shape = xa.shape + (nmax + 1,)
    return J.reshape(shape), Y.reshape(shape)


def bessel_j(n, x):
    """Bessel function of the first kind J_n(x), x > 0."""
    n, xa = _prepare(n, x)
    J, _ = _backend.kernels.jy_table(n, xa.ravel())
    out = J[:, n].reshape(xa.shape)
    return out[()] if out.ndim == 0 else out


def bessel_y(n, x):
    """Bessel function of the second kind Y_n(x), x > 0."""
    n, xa = _prepare(n, x)
    _, Y = _backend.kernels.jy_table(n, xa.ravel())
    out = Y[:, n].reshape(xa.shape)
    return out[()] if out.ndim == 0 else out


def hankel1(n, x):
    """Hankel function of the first kind H^(1)_n(x) = J_n(x) + i Y_n(x)."""
    n, xa = _prepare(n, x)
    J, Y = _backend.kernels.jy_table(n, xa.ravel())
    out = (J[:, n] + 1j * Y[:, n]).reshape(xa.shape)
    return out[()] if out.ndim == 0 else out


def hankel1_table(nmax, x):
    """H^(1)_0..H^(1)_nmax on the trailing axis."""
    J, Y = jy_table(nmax, x)
    return J + 1j * Y
