import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyembed.errors import DerivativeOrderError
from polyembed.kernel_derivs import (
    MAX_ORDER,
    FourierPoly,
    g1_coeffs,
    gn_coeffs,
    gn_matrix,
    kernel,
    kernel_deriv,
)

finite = st.floats(-3.0, 3.0, allow_nan=False)


def test_g1_examples():
    cm, cp = g1_coeffs(1.0, (1.0, 0.0))
    assert cm == pytest.approx(-0.5) and cp == pytest.approx(0.5)
    assert g1_coeffs(2.0, (0.0, 0.0)) == (0, 0)


def test_g1_direct_formula(rng):
    th = rng.uniform(0, 2 * math.pi, 1000)
    for _ in range(5):
        k, y = rng.uniform(0.1, 10), rng.normal(size=2)
        cm, cp = g1_coeffs(k, y)
        g1 = cm * np.exp(-1j * th) + cp * np.exp(1j * th)
        np.testing.assert_allclose(g1, -1j * k * (-y[0] * np.sin(th) + y[1] * np.cos(th)), atol=1e-13 * k)


def test_g2_symbolic():
    # (i sin θ)² + i cos θ = -1/2 + (e^{2iθ} + e^{-2iθ})/4 + i(e^{iθ} + e^{-iθ})/2
    np.testing.assert_allclose(gn_coeffs(2, 1.0, (1.0, 0.0)).coeffs, [0.25, 0.5j, -0.5, 0.5j, 0.25], atol=1e-15)


def test_gn_matrix_structure():
    G = gn_matrix(3, 0.0, 0.0)
    assert G.shape == (7, 5)
    np.testing.assert_array_equal(np.diag(G, -1), 1j * np.arange(-2, 3))
    assert np.count_nonzero(G) == 4  # zero frequency drops out
    # constant with g1 = 0 maps to zero
    assert not np.any(gn_matrix(1, 0.0, 0.0) @ np.ones(1))
    with pytest.raises(ValueError):
        gn_matrix(0, 1.0, 1.0)


def test_gn_matrix_applied_to_g1(rng):
    cm, cp = g1_coeffs(1.3, (0.4, -0.2))
    g1 = FourierPoly(np.array([cm, 0, cp]))
    g2 = FourierPoly(gn_matrix(2, cm, cp) @ g1.coeffs)
    th = rng.uniform(0, 2 * math.pi, 50)
    dg1 = 1j * (-cm * np.exp(-1j * th) + cp * np.exp(1j * th))
    np.testing.assert_allclose(g2(th), g1(th) ** 2 + dg1, atol=1e-14)


def test_matrix_chain_linearity(rng):
    k, y = 2.5, rng.normal(size=2)
    cm, cp = g1_coeffs(k, y)
    np.testing.assert_allclose(gn_coeffs(1, k, y).coeffs, [cm, 0, cp])
    for n in range(2, MAX_ORDER + 1):
        np.testing.assert_allclose(gn_coeffs(n, k, y).coeffs, gn_matrix(n, cm, cp) @ gn_coeffs(n - 1, k, y).coeffs)
        assert gn_coeffs(n, k, y).degree == n


def test_gn_recursion_finite_difference(rng):
    # gₙ = gₙ₋₁ g₁ + gₙ₋₁′, with the derivative from a central difference
    k, y, h = 1.7, (0.3, 0.8), 1e-5
    th = rng.uniform(0, 2 * math.pi, 20)
    g1 = gn_coeffs(1, k, y)
    for n in range(2, 7):
        prev = gn_coeffs(n - 1, k, y)
        fd = (prev(th + h) - prev(th - h)) / (2 * h)
        want = prev(th) * g1(th) + fd
        got = gn_coeffs(n, k, y)(th)
        assert np.all(np.abs(got - want) <= 1e-6 * np.maximum(np.abs(want), 1))


def test_kernel_deriv_zero_order():
    k, y, th = 1.3, (0.2, -0.7), 0.9
    assert kernel_deriv(0, k, y, th) == pytest.approx(np.exp(-1j * k * (0.2 * math.cos(th) - 0.7 * math.sin(th))))


def test_kernel_deriv_mpmath(rng):
    """High-precision numerical differentiation as an independent oracle."""
    mpmath.mp.dps = 30
    for _ in range(40):
        k, y, th = rng.uniform(0.1, 10), rng.uniform(-1, 1, 2), rng.uniform(0, 2 * math.pi)
        f = lambda t: mpmath.exp(-1j * k * (y[0] * mpmath.cos(t) + y[1] * mpmath.sin(t)))  # noqa: E731
        for n in range(0, 7):
            want = complex(mpmath.diff(f, th, n))
            got = complex(kernel_deriv(n, k, y, th))
            assert abs(got - want) <= 1e-11 * max(abs(want), 1.0), (n, k)


def test_kernel_deriv_central_difference(rng):
    k, y, h = 3.0, (0.5, 0.25), 1e-3
    th = rng.uniform(0, 2 * math.pi, 100)
    fd = (kernel(k, y, th + h) - kernel(k, y, th - h)) / (2 * h)
    np.testing.assert_allclose(kernel_deriv(1, k, y, th), fd, rtol=1e-5)


def test_origin_source_has_flat_kernel():
    th = np.linspace(0, 6, 7)
    for n in range(1, MAX_ORDER + 1):
        assert not np.any(kernel_deriv(n, 4.0, (0.0, 0.0), th))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, MAX_ORDER), st.floats(0.1, 10), finite, finite, st.floats(-10, 10))
def test_periodicity(n, k, y1, y2, th):
    # exact only when θ+2π rounds to the same cosines, so compare closely
    a = kernel_deriv(n, k, (y1, y2), th)
    b = kernel_deriv(n, k, (y1, y2), th + 2 * math.pi)
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a)) * (1 + k * (abs(y1) + abs(y2))) ** (n + 1)


def test_axis_parity():
    # y on the x2-axis: K(π - θ) = K(θ), so ∂ⁿK has parity (-1)ⁿ about π/2
    k, y = 2.0, (0.0, 0.6)
    t = np.linspace(0.1, 1.4, 9)
    for n in range(0, 8):
        np.testing.assert_allclose(
            kernel_deriv(n, k, y, math.pi - t), (-1) ** n * kernel_deriv(n, k, y, t), rtol=1e-12, atol=1e-14
        )


def test_order_errors():
    with pytest.raises(DerivativeOrderError):
        kernel_deriv(MAX_ORDER + 1, 1.0, (1.0, 0.0), 0.0)
    with pytest.raises(DerivativeOrderError):
        gn_coeffs(-1, 1.0, (1.0, 0.0))
    assert gn_coeffs(15, 1.0, (1.0, 0.0), max_order=20).degree == 15


def test_fourier_poly_validation():
    with pytest.raises(ValueError):
        FourierPoly(np.ones(4))
