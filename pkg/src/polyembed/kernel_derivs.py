"""θ-derivatives of the far-field kernel K(θ, y) = exp(-ik(y₁cos θ + y₂sin θ)).

Every derivative has the form ∂ⁿK = gₙ K with gₙ a trigonometric polynomial
of degree n. Writing g₁ = c₋₁e^{-iθ} + c₁e^{iθ}, the recursion
gₙ = g₁gₙ₋₁ + gₙ₋₁' acts on Fourier coefficients as a banded rectangular
matrix, so gₙ is a product of small matrices applied to g₀ = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DerivativeOrderError

MAX_ORDER = 12


@dataclass(frozen=True)
class FourierPoly:
    """Trigonometric polynomial Σ_{ℓ=-n}^{n} b_ℓ e^{iℓθ}; ``coeffs[j]`` holds b_{j-n}."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 1 or c.size % 2 == 0:
            raise ValueError("coefficient vector must have odd length 2n+1")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return (self.coeffs.size - 1) // 2

    @property
    def frequencies(self) -> np.ndarray:
        n = self.degree
        return np.arange(-n, n + 1)

    def __call__(self, theta):
        th = np.asarray(theta, dtype=float)
        return np.exp(1j * th[..., None] * self.frequencies) @ self.coeffs


def g1_coeffs(k: float, y) -> tuple[complex, complex]:
    """Coefficients (c₋₁, c₁) of g₁ = ∂K/∂θ / K."""
    y1, y2 = float(y[0]), float(y[1])
    return -0.5j * k * complex(y2, -y1), -0.5j * k * complex(y2, y1)


def gn_matrix(n: int, c_minus1: complex, c_plus1: complex) -> np.ndarray:
    """Dense (2n+1)×(2n-1) matrix of φ ↦ g₁φ + φ' on degree n-1 polynomials."""
    if n < 1:
        raise ValueError("n must be at least 1")
    G = np.zeros((2 * n + 1, 2 * n - 1), dtype=complex)
    cols = np.arange(2 * n - 1)
    G[cols, cols] = c_minus1
    G[cols + 1, cols] = 1j * (cols - (n - 1))
    G[cols + 2, cols] = c_plus1
    return G


def _check_order(n: int, max_order: int) -> None:
    if n < 0:
        raise DerivativeOrderError("derivative order must be non-negative")
    if n > max_order:
        raise DerivativeOrderError(f"derivative order {n} exceeds maximum {max_order}")


def gn_coeffs(n: int, k: float, y, max_order: int = MAX_ORDER) -> FourierPoly:
    """Fourier coefficients of gₙ via Gₙ⋯G₁ applied to g₀ = 1."""
    _check_order(n, max_order)
    cm, cp = g1_coeffs(k, y)
    g = np.ones(1, dtype=complex)
    for m in range(1, n + 1):
        g = gn_matrix(m, cm, cp) @ g
    return FourierPoly(g)


def kernel(k: float, y, theta):
    y1, y2 = float(y[0]), float(y[1])
    th = np.asarray(theta, dtype=float)
    return np.exp(-1j * k * (y1 * np.cos(th) + y2 * np.sin(th)))


def kernel_deriv(n: int, k: float, y, theta, max_order: int = MAX_ORDER):
    """∂ⁿK/∂θⁿ at ``theta`` (scalar or array)."""
    _check_order(n, max_order)
    K = kernel(k, y, theta)
    if n == 0:
        return K
    return gn_coeffs(n, k, y, max_order)(theta) * K
