"""Single-scatterer T-matrix from embedding-computed far fields.

Column ℓ of T holds the radiating-wavefunction coefficients of the field
scattered by the regular wavefunction ψ_ℓ. Its far field F_ℓ comes from
the Herglotz quadrature over the embedding formula, so only the M
canonical plane-wave solves are needed whatever the wavenumber. Since the
radiating wavefunction H_{|ℓ|}(k|x|)e^{iℓθ} has far-field coefficient
ρ_ℓ e^{iℓθ} with ρ_ℓ = 2(-i)^{|ℓ|+1},

    T_{ℓ'ℓ} = (2πρ_{ℓ'})^{-1} ∫ F_ℓ(θ) e^{-iℓ'θ} dθ.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingContext, build_context
from .errors import CacheFormatError, OutOfValidityError, SolverDomainError
from .geometry import Polygon
from .herglotz import QuadratureRule, build_quadrature, fourier_bessel_kernel, herglotz_far_fields
from .solver import DEFAULT_DOFS, MFSSolver, regular_wave_field
from .special import hankel1_table

logger = logging.getLogger(__name__)

DEFECT_THRESHOLD = 1e-3


def truncation_order(k: float, R: float) -> int:
    """⌈kR + 4(kR)^{1/3} + 5⌉."""
    if not (k > 0 and R > 0):
        raise SolverDomainError("k and R must be positive")
    kr = k * R
    # guard against 10.000000000000002 style rounding at integer kR
    return int(math.ceil(round(kr + 4.0 * kr ** (1.0 / 3.0) + 5.0, 12)))


def radiating_far_field_constant(ell: int) -> complex:
    """ρ_ℓ = 2(-i)^{|ℓ|+1}."""
    return 2 * (-1j) ** ((abs(int(ell)) + 1) % 4)


def plane_wave_coefficients(alpha: float, m_trunc: int) -> np.ndarray:
    """a_ℓ with exp(-ik(x₁cos α + x₂sin α)) = Σ a_ℓ ψ_ℓ, ℓ = -m_trunc..m_trunc."""
    ell = np.arange(-m_trunc, m_trunc + 1)
    return (-1j) ** (np.abs(ell) % 4) * np.exp(-1j * ell * alpha)


def energy_defect(T: np.ndarray) -> float:
    """‖T + T† + 2T†T‖₂, zero for a lossless scatterer (S = I + 2T unitary)."""
    Th = T.conj().T
    return float(np.linalg.norm(T + Th + 2 * Th @ T, 2))


@dataclass(frozen=True)
class TMatrix:
    """Truncated T-matrix, rows and columns indexed by ℓ = -M_trunc..M_trunc."""

    k: float
    R: float
    m_trunc: int
    entries: np.ndarray
    energy_defect: float = float("nan")
    flagged: bool = False

    @property
    def orders(self) -> np.ndarray:
        return np.arange(-self.m_trunc, self.m_trunc + 1)

    @property
    def radiating_norm(self) -> np.ndarray:
        return np.array([radiating_far_field_constant(l) for l in self.orders])

    def entry(self, lp: int, l: int) -> complex:
        return complex(self.entries[lp + self.m_trunc, l + self.m_trunc])


def apply(T: TMatrix, a) -> np.ndarray:
    """Radiating coefficients b = T a."""
    return T.entries @ np.asarray(a, dtype=complex)


def scattered_field(T: TMatrix, a, x) -> np.ndarray | complex:
    """Σ b_ℓ' H_{|ℓ'|}(k|x|) e^{iℓ'θ_x}, valid only outside the enclosing ball."""
    xa = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.hypot(xa[:, 0], xa[:, 1])
    if np.any(r <= T.R):
        raise OutOfValidityError("T-matrix field is only valid outside the enclosing ball")
    b = apply(T, a)
    H = hankel1_table(T.m_trunc, T.k * r)
    ell = T.orders
    out = (H[:, np.abs(ell)] * np.exp(1j * np.outer(np.arctan2(xa[:, 1], xa[:, 0]), ell))) @ b
    return complex(out[0]) if np.ndim(x) == 1 else out


def project(F: np.ndarray, theta: np.ndarray, m_trunc: int) -> np.ndarray:
    """T_{ℓ'ℓ} from far-field samples F[:, ℓ] on an equispaced θ grid."""
    ell = np.arange(-m_trunc, m_trunc + 1)
    rho = np.array([radiating_far_field_constant(l) for l in ell])
    modes = np.exp(-1j * np.outer(ell, theta)) / theta.size  # trapezoid / (2π)
    return (modes @ F) / rho[:, None]


def _finish(k, R, m, entries, threshold) -> TMatrix:
    defect = energy_defect(entries)
    flagged = defect > threshold
    if flagged:
        logger.warning("T-matrix energy defect %.2e exceeds %.1e", defect, threshold)
    return TMatrix(k, R, m, entries, defect, flagged)


def projection_grid(m_trunc: int) -> np.ndarray:
    n = 8 * m_trunc
    return 2 * np.pi * np.arange(n) / n


def assemble_t_matrix(
    ctx: EmbeddingContext,
    k: float,
    R: float | None = None,
    quad: QuadratureRule | None = None,
    defect_threshold: float = DEFECT_THRESHOLD,
) -> TMatrix:
    """T-matrix from the embedding context; performs no new PDE solves."""
    if abs(ctx.solutions.k - k) > 1e-12 * k:
        raise SolverDomainError("context was built at a different wavenumber")
    R = ctx.polygon.radius if R is None else float(R)
    m = truncation_order(k, R)
    if quad is None:
        quad = build_quadrature(k, m, ctx.p)
    theta = projection_grid(m)
    kernels = [fourier_bessel_kernel(l) for l in range(-m, m + 1)]
    F = herglotz_far_fields(ctx, kernels, quad, theta)
    return _finish(k, R, m, project(F, theta, m), defect_threshold)


def t_matrix_from_polygon(polygon: Polygon, k: float, dofs_per_side: int = DEFAULT_DOFS, seed: int = 0, **options) -> TMatrix:
    """Build the canonical context (M solves) and assemble the T-matrix."""
    ctx = build_context(polygon, k, dofs_per_side, seed=seed, **options)
    return assemble_t_matrix(ctx, k)


def direct_t_matrix(
    polygon: Polygon,
    k: float,
    dofs_per_side: int = DEFAULT_DOFS,
    R: float | None = None,
    solver: MFSSolver | None = None,
    defect_threshold: float = DEFECT_THRESHOLD,
) -> TMatrix:
    """Reference T-matrix from 2M_trunc + 1 regular-wavefunction solves."""
    R = polygon.radius if R is None else float(R)
    m = truncation_order(k, R)
    if solver is None:
        solver = MFSSolver(polygon, k, dofs_per_side)
    sols = solver.solve_many([regular_wave_field(l, k) for l in range(-m, m + 1)])
    theta = projection_grid(m)
    return _finish(k, R, m, project(sols.far_field_matrix(theta), theta, m), defect_threshold)


def write_tmatrix(path, T: TMatrix) -> None:
    """Text format: header ``TMAT1 k R M_trunc`` then rows ``lp,l,re,im``."""
    with open(path, "w") as fh:
        fh.write(f"TMAT1 {float(T.k)!r} {float(T.R)!r} {int(T.m_trunc)}\n")
        for i, lp in enumerate(T.orders):
            for j, l in enumerate(T.orders):
                v = T.entries[i, j]
                fh.write(f"{int(lp)},{int(l)},{float(v.real)!r},{float(v.imag)!r}\n")


def read_tmatrix(path) -> TMatrix:
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 4 or head[0] != "TMAT1":
            raise CacheFormatError(f"{path}: missing TMAT1 header")
        k, R, m = float(head[1]), float(head[2]), int(head[3])
        E = np.full((2 * m + 1, 2 * m + 1), np.nan, dtype=complex)
        for line in fh:
            if not line.strip():
                continue
            lp, l, re, im = line.split(",")
            E[int(lp) + m, int(l) + m] = complex(float(re), float(im))
    if np.isnan(E).any():
        raise CacheFormatError(f"{path}: incomplete T-matrix")
    return TMatrix(k, R, m, E, energy_defect(E))
