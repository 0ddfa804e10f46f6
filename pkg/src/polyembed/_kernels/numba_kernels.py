"""numba ``@njit`` kernels (default backend).

Same signatures and conventions as ``numpy_kernels``; see there for the
meaning of each table.
"""

import math

import numpy as np
from numba import njit

from ._common import ASYMPTOTIC_X, EULER_GAMMA, RESCALE_AT, RESCALE_BY, miller_start

NAME = "numba"


@njit(cache=True)
def _miller_point(nmax, x, start, seq):
    for i in range(start + 2):
        seq[i] = 0.0
    seq[start] = 1e-300
    norm = 0.0
    for n in range(start, 0, -1):
        seq[n - 1] = (2.0 * n / x) * seq[n] - seq[n + 1]
        if (n - 1) % 2 == 0 and n - 1 > 0:
            norm += 2.0 * seq[n - 1]
        if abs(seq[n - 1]) > RESCALE_AT:
            for i in range(n - 1, start + 2):
                seq[i] *= RESCALE_BY
            norm *= RESCALE_BY
    norm += seq[0]
    for i in range(start + 2):
        seq[i] /= norm


@njit(cache=True)
def _hankel_asym_point(nu, x):
    mu = 4.0 * nu * nu
    total = 1.0 + 0.0j
    term = 1.0 + 0.0j
    for k in range(1, 60):
        term = term * (mu - (2 * k - 1) ** 2) / (8.0 * k) * (1j / x)
        total += term
        if abs(term) < 1e-17:
            break
    # exp(i x) separately: libm reduces the exact argument
    shift = -(0.5 * nu + 0.25) * math.pi
    phase = complex(math.cos(x), math.sin(x)) * complex(math.cos(shift), math.sin(shift))
    return math.sqrt(2.0 / (math.pi * x)) * phase * total


@njit(cache=True)
def _jy_point(nmax, x, J, Y, seq, start):
    if x < ASYMPTOTIC_X or nmax > x:
        _miller_point(max(nmax, 1), x, start, seq)
        for n in range(nmax + 1):
            J[n] = seq[n]
    if x < ASYMPTOTIC_X:
        lg = math.log(0.5 * x) + EULER_GAMMA
        s0 = 0.0
        s1 = 0.0
        sign = -1.0
        for k in range(1, start // 2):
            s0 += sign * seq[2 * k] / k
            s1 += sign * (seq[2 * k - 1] - seq[2 * k + 1]) / k
            sign = -sign
        y0 = (2.0 / math.pi) * (lg * seq[0] - 2.0 * s0)
        y1 = (2.0 / math.pi) * (lg * seq[1] - seq[0] / x + s1)
    else:
        h0 = _hankel_asym_point(0.0, x)
        h1 = _hankel_asym_point(1.0, x)
        y0 = h0.imag
        y1 = h1.imag
        if nmax <= x:
            J[0] = h0.real
            if nmax >= 1:
                J[1] = h1.real
            for n in range(1, nmax):
                J[n + 1] = (2.0 * n / x) * J[n] - J[n - 1]
    Y[0] = y0
    if nmax >= 1:
        Y[1] = y1
    for n in range(1, nmax):
        if math.isinf(Y[n]):
            # overflowed to -inf; keep it rather than forming inf - inf
            Y[n + 1] = Y[n]
        else:
            Y[n + 1] = (2.0 * n / x) * Y[n] - Y[n - 1]


@njit(cache=True)
def _jy_loop(nmax, x, J, Y, start):
    seq = np.empty(start + 2)
    for i in range(x.size):
        _jy_point(nmax, x[i], J[i], Y[i], seq, start)


def jy_table(nmax, x):
    x = np.ascontiguousarray(np.asarray(x, dtype=float).ravel())
    J = np.empty((x.size, nmax + 1))
    Y = np.empty((x.size, nmax + 1))
    if x.size == 0:
        return J, Y
    start = miller_start(max(nmax, 1), float(x.max()))
    _jy_loop(nmax, x, J, Y, start)
    return J, Y


@njit(cache=True)
def _h_table(k, ys, n0, max_order, out):
    width = 2 * max_order + 1
    for j in range(ys.shape[0]):
        cm = -1j * k * (ys[j, 1] - 1j * ys[j, 0]) / 2.0
        cp = -1j * k * (ys[j, 1] + 1j * ys[j, 0]) / 2.0
        out[j, 0, max_order] = 1.0
        for m in range(1, max_order + 1):
            for f in range(width):
                v = 1j * (n0[j] + f - max_order) * out[j, m - 1, f]
                if f + 1 < width:
                    v += cm * out[j, m - 1, f + 1]
                if f >= 1:
                    v += cp * out[j, m - 1, f - 1]
                out[j, m, f] = v


def h_table(k, ys, n0, max_order):
    ys = np.ascontiguousarray(np.asarray(ys, dtype=float).reshape(-1, 2))
    n0 = np.ascontiguousarray(np.asarray(n0, dtype=np.int64).ravel())
    out = np.zeros((ys.shape[0], max_order + 1, 2 * max_order + 1), dtype=complex)
    _h_table(float(k), ys, n0, max_order, out)
    return out


@njit(cache=True)
def _phases(theta, k, ys, F, E, P):
    for t in range(theta.size):
        th = theta[t]
        c = math.cos(th)
        s = math.sin(th)
        for j in range(ys.shape[0]):
            ph = -k * (ys[j, 0] * c + ys[j, 1] * s)
            E[t, j] = complex(math.cos(ph), math.sin(ph))
        for f in range(P.shape[1]):
            P[t, f] = complex(math.cos((f - F) * th), math.sin((f - F) * th))


@njit(cache=True)
def _contract(G, P, out):
    T, R, nm, width = G.shape
    for t in range(T):
        for r in range(R):
            for m in range(nm):
                acc = 0.0 + 0.0j
                for f in range(width):
                    acc += G[t, r, m, f] * P[t, f]
                out[t, r, m] = acc


def ff_sum(theta, k, ys, lo, hi, W, chunk=2048):
    """out[t, r, m] = Σ_u K(θ_t, y_u) Σ_f W[u, r, m, f] e^{i (f - F) θ_t}.

    The sum over centres goes through BLAS; a scalar loop over the banded
    slots was measured several times slower. ``lo``/``hi`` are accepted for
    interface parity.
    """
    theta = np.ascontiguousarray(np.asarray(theta, dtype=float).ravel())
    ys = np.ascontiguousarray(np.asarray(ys, dtype=float).reshape(-1, 2))
    W = np.ascontiguousarray(W, dtype=np.complex128)
    U, R, nm, width = W.shape
    F = (width - 1) // 2
    Wf = W.reshape(U, R * nm * width)
    out = np.empty((theta.size, R, nm), dtype=np.complex128)
    for a in range(0, theta.size, chunk):
        th = theta[a : a + chunk]
        E = np.empty((th.size, U), dtype=np.complex128)
        P = np.empty((th.size, width), dtype=np.complex128)
        _phases(th, float(k), ys, F, E, P)
        _contract((E @ Wf).reshape(th.size, R, nm, width), P, out[a : a + chunk])
    return out
