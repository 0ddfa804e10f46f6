"""Vectorised numpy kernels (fallback backend).

Every function here has a twin with the same signature in
``numba_kernels``; the two are cross-checked in the test-suite.
"""

import numpy as np

from ._common import ASYMPTOTIC_X, EULER_GAMMA, RESCALE_AT, RESCALE_BY, miller_start

NAME = "numpy"


def _miller(nmax, x):
    """J_0..J_nmax (and the raw downward sequence) by Miller's algorithm."""
    start = miller_start(nmax, float(x.max()))
    seq = np.zeros((start + 2, x.size))
    seq[start] = 1e-300
    norm = np.zeros(x.size)
    for n in range(start, 0, -1):
        seq[n - 1] = (2.0 * n / x) * seq[n] - seq[n + 1]
        if (n - 1) % 2 == 0 and n - 1 > 0:
            norm += 2.0 * seq[n - 1]
        big = np.abs(seq[n - 1]) > RESCALE_AT
        if big.any():
            seq[:, big] *= RESCALE_BY
            norm[big] *= RESCALE_BY
    norm += seq[0]
    return seq / norm, start


def _neumann_y01(seq, start, x):
    """Y0 and Y1 from the Neumann series over the normalised J sequence."""
    lg = np.log(0.5 * x) + EULER_GAMMA
    s0 = np.zeros(x.size)
    s1 = np.zeros(x.size)
    sign = -1.0
    for k in range(1, start // 2):
        s0 += sign * seq[2 * k] / k
        s1 += sign * (seq[2 * k - 1] - seq[2 * k + 1]) / k
        sign = -sign
    y0 = (2.0 / np.pi) * (lg * seq[0] - 2.0 * s0)
    y1 = (2.0 / np.pi) * (lg * seq[1] - seq[0] / x + s1)
    return y0, y1


def _hankel_asymptotic(nu, x):
    """H^(1)_nu(x) for nu in {0, 1} and large x."""
    mu = 4.0 * nu * nu
    total = np.ones(x.size, dtype=complex)
    term = np.ones(x.size, dtype=complex)
    for k in range(1, 60):
        term = term * (mu - (2 * k - 1) ** 2) / (8.0 * k) * (1j / x)
        total += term
        if np.all(np.abs(term) < 1e-17):
            break
    # exp(i x) separately: libm reduces the exact argument
    phase = np.exp(1j * x) * np.exp(-1j * (0.5 * nu + 0.25) * np.pi)
    return np.sqrt(2.0 / (np.pi * x)) * phase * total


def jy_table(nmax, x):
    """Return ``(J, Y)`` with shape ``(x.size, nmax + 1)`` for orders 0..nmax.

    ``x`` must be a 1-D array of positive floats.
    """
    x = np.asarray(x, dtype=float).ravel()
    J = np.empty((x.size, nmax + 1))
    Y = np.empty((x.size, nmax + 1))
    if x.size == 0:
        return J, Y
    small = x < ASYMPTOTIC_X
    if small.any():
        xs = x[small]
        seq, start = _miller(max(nmax, 1), xs)
        J[small] = seq[: nmax + 1].T
        y0, y1 = _neumann_y01(seq, start, xs)
        Y[small] = _upward_y(nmax, xs, y0, y1)
    large = ~small
    if large.any():
        xl = x[large]
        h0 = _hankel_asymptotic(0, xl)
        h1 = _hankel_asymptotic(1, xl)
        Y[large] = _upward_y(nmax, xl, h0.imag, h1.imag)
        if nmax <= xl.min():
            Jl = np.empty((xl.size, nmax + 1))
            Jl[:, 0] = h0.real
            if nmax >= 1:
                Jl[:, 1] = h1.real
            for n in range(1, nmax):
                Jl[:, n + 1] = (2.0 * n / xl) * Jl[:, n] - Jl[:, n - 1]
            J[large] = Jl
        else:
            seq, _ = _miller(max(nmax, 1), xl)
            J[large] = seq[: nmax + 1].T
    return J, Y


def _upward_y(nmax, x, y0, y1):
    out = np.empty((x.size, nmax + 1))
    out[:, 0] = y0
    if nmax >= 1:
        out[:, 1] = y1
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, nmax):
            nxt = (2.0 * n / x) * out[:, n] - out[:, n - 1]
            # once overflowed to -inf, stay there rather than forming inf - inf
            out[:, n + 1] = np.where(np.isinf(out[:, n]), out[:, n], nxt)
    return out


def h_table(k, ys, n0, max_order):
    """Fourier coefficients of h_m with d^m/dθ^m [e^{i n0 θ} K] = h_m K.

    Returns ``(S, max_order + 1, 2 * max_order + 1)``; slot ``f`` holds the
    coefficient of ``exp(i (n0 + f - max_order) θ)``.
    """
    ys = np.asarray(ys, dtype=float).reshape(-1, 2)
    n0 = np.asarray(n0, dtype=np.int64).ravel()
    S = ys.shape[0]
    width = 2 * max_order + 1
    out = np.zeros((S, max_order + 1, width), dtype=complex)
    cm = -1j * k * (ys[:, 1] - 1j * ys[:, 0]) / 2.0
    cp = -1j * k * (ys[:, 1] + 1j * ys[:, 0]) / 2.0
    freq = n0[:, None] + np.arange(width)[None, :] - max_order
    out[:, 0, max_order] = 1.0
    for m in range(1, max_order + 1):
        prev = out[:, m - 1]
        cur = 1j * freq * prev
        cur[:, :-1] += cm[:, None] * prev[:, 1:]
        cur[:, 1:] += cp[:, None] * prev[:, :-1]
        out[:, m] = cur
    return out


def ff_sum(theta, k, ys, lo, hi, W, chunk=2048):
    """out[t, r, m] = Σ_u K(θ_t, y_u) Σ_f W[u, r, m, f] e^{i (f - F) θ_t}.

    ``lo``/``hi`` are unused: slots outside the band are zero, so the dense
    product gives the same sums.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).reshape(-1, 2)
    U, R, nm, width = W.shape
    F = (width - 1) // 2
    out = np.empty((theta.size, R, nm), dtype=complex)
    Wf = W.reshape(U, R * nm * width)
    fr = np.arange(width) - F
    for a in range(0, theta.size, chunk):
        th = theta[a : a + chunk]
        E = np.exp(-1j * k * (np.cos(th)[:, None] * ys[None, :, 0] + np.sin(th)[:, None] * ys[None, :, 1]))
        P = np.exp(1j * th[:, None] * fr[None, :])
        out[a : a + chunk] = np.einsum("trmf,tf->trm", (E @ Wf).reshape(th.size, R, nm, width), P)
    return out
