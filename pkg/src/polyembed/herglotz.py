"""Far fields for Herglotz-wave incidence by quadrature over plane-wave far fields.

A Herglotz wave ∫ g(α) exp(-ik(x₁cos α + x₂sin α)) dα has far-field
coefficient ∫ g(α) D(θ, α) dα. The α-integral is approximated by the
equispaced trapezoidal rule, with the nodes rotated so they stay as far
as possible from the points of Θ* (or any other avoid-set).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .embedding import EmbeddingContext, evaluate
from .geometry import TWO_PI, circle_dist, theta_star_set
from .solver import regular_wave

logger = logging.getLogger(__name__)

PHASE_SAMPLES = 10_000
MIN_NODES = 40


@dataclass(frozen=True)
class HerglotzKernel:
    """Kernel g on the circle; ``oscillation_order`` bounds its Fourier content."""

    evaluate: Callable[[np.ndarray], np.ndarray]
    oscillation_order: int = 0

    def __call__(self, alpha):
        return self.evaluate(np.asarray(alpha, dtype=float))


def fourier_bessel_kernel(ell: int) -> HerglotzKernel:
    """Kernel whose Herglotz wave is the regular wavefunction J_{|ℓ|}(k|x|)e^{iℓθ_x}.

    By the Jacobi–Anger expansion this is g_ℓ(α) = i^{|ℓ|} e^{iℓα} / (2π).
    """
    ell = int(ell)
    c = 1j ** abs(ell) / TWO_PI
    return HerglotzKernel(lambda a: c * np.exp(1j * ell * a), abs(ell))


def zero_kernel() -> HerglotzKernel:
    return HerglotzKernel(lambda a: np.zeros(np.shape(a), dtype=complex), 0)


def regular_wavefunction(ell: int, k: float, x) -> complex | np.ndarray:
    """J_{|ℓ|}(k|x|) e^{iℓθ_x}; 1 at the origin for ℓ = 0, else 0."""
    xa = np.asarray(x, dtype=float)
    out = regular_wave(int(ell), k, xa.reshape(-1, 2))
    return complex(out[0]) if xa.ndim == 1 else out


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    phase: float
    min_dist: float


def _node_gap(phase: float, n: int, avoid: np.ndarray) -> float:
    nodes = phase + TWO_PI * np.arange(n) / n
    return float(circle_dist(nodes[:, None], avoid[None, :]).min())


def node_count(k: float, ell_max: int) -> int:
    return max(20 * int(math.ceil(max(k, ell_max))), MIN_NODES)


def build_quadrature(
    k: float,
    ell_max: int,
    p: int,
    avoid: Sequence[float] | None = None,
    n_nodes: int | None = None,
) -> QuadratureRule:
    """Equispaced rule whose rotation maximises the distance to ``avoid``.

    ``avoid`` defaults to Θ*. The rotation is found by scanning one node
    spacing and polishing the best sample with a bounded scalar search.
    """
    if not k > 0:
        raise ValueError("wavenumber must be positive")
    n = node_count(k, ell_max) if n_nodes is None else int(n_nodes)
    av = theta_star_set(p) if avoid is None else np.asarray(avoid, dtype=float)
    h = TWO_PI / n
    grid = np.linspace(0.0, h, PHASE_SAMPLES, endpoint=False)
    # distance from each phase to the avoid-set, modulo the node spacing
    r = np.mod(av[None, :] - grid[:, None], h)
    score = np.minimum(r, h - r).min(axis=1)
    i = int(np.argmax(score))
    step = h / PHASE_SAMPLES
    res = minimize_scalar(
        lambda ph: -_node_gap(ph, n, av),
        bounds=(grid[i] - step, grid[i] + step),
        method="bounded",
        options={"xatol": 1e-14},
    )
    phase, best = float(grid[i]), float(score[i])
    if -res.fun > best:
        phase, best = float(res.x) % h, float(-res.fun)
    nodes = phase + h * np.arange(n)
    return QuadratureRule(nodes, np.full(n, h), phase, _node_gap(phase, n, av))


def midpoint_quadrature(n_nodes: int) -> QuadratureRule:
    """Unrotated midpoint nodes (2i+1)π/N, with no avoidance."""
    h = TWO_PI / n_nodes
    nodes = h * (np.arange(n_nodes) + 0.5)
    return QuadratureRule(nodes, np.full(n_nodes, h), 0.5 * h, float("nan"))


def plane_wave_matrix(ctx: EmbeddingContext, theta, quad: QuadratureRule, mode: str = "combined") -> np.ndarray:
    """E[t, i] ≈ D(θ_t, ᾱ_i) from the embedding formula."""
    th = np.asarray(theta, dtype=float).ravel()
    TH, AL = np.meshgrid(th, quad.nodes, indexing="ij")
    vals, _ = evaluate(ctx, TH, AL, mode)
    return vals


def herglotz_far_fields(
    ctx: EmbeddingContext,
    kernels: Sequence[HerglotzKernel],
    quad: QuadratureRule,
    theta,
    mode: str = "combined",
) -> np.ndarray:
    """Far fields for several kernels at once; shape ``(len(theta), len(kernels))``."""
    E = plane_wave_matrix(ctx, theta, quad, mode)
    G = np.column_stack([quad.weights * kern(quad.nodes) for kern in kernels])
    return E @ G


def herglotz_far_field(ctx: EmbeddingContext, kernel: HerglotzKernel, quad: QuadratureRule, theta, mode: str = "combined"):
    """Σ_i w_i g(ᾱ_i) D(θ, ᾱ_i) with D from the embedding formula."""
    th = np.asarray(theta, dtype=float)
    out = herglotz_far_fields(ctx, [kernel], quad, th.ravel(), mode)[:, 0].reshape(th.shape)
    return out[()] if out.ndim == 0 else out


HERGLOTZ_HEADER = ["theta", "re", "im", "relerr_vs_direct"]


def herglotz_rows(theta, values, relerr):
    for t, v, e in zip(theta, values, relerr):
        yield [repr(float(t)), repr(float(v.real)), repr(float(v.imag)), repr(float(e))]


def write_herglotz_csv(path, theta, values, relerr) -> None:
    """CSV with columns theta,re,im,relerr_vs_direct."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HERGLOTZ_HEADER)
        w.writerows(herglotz_rows(theta, values, relerr))
