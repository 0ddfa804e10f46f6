"""Embedding formulae for plane-wave far fields of rational polygons.

With Λ(θ, α) = cos pθ - (-1)^p cos pα and D̂ = ΛD, every far field is a
combination of M canonical ones,

    D(θ, α) = Σ_m b_m(α) D̂(θ, α_m) / Λ(θ, α),

where b(α) solves Σ_m b_m D̂(α_n, α_m) = (-1)^{p+1} D̂(α, α_n). The quotient
is 0/0 on the zero set Θ_α of Λ(·, α), so near it the numerator and
denominator are replaced by Taylor expansions, L'Hôpital limits, or, close
to the double zeros Θ* = {nπ/p}, a first-order two-variable expansion
about a pair of canonical angles. :func:`evaluate` implements the
five-way combined rule; the ``d_*`` functions expose each branch.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (
    DegenerateDenominatorError,
    DispatchError,
    EmbeddingSystemError,
)
from .geometry import (
    CanonicalSet,
    Polygon,
    RationalAngleData,
    circle_dist,
    closest_rows,
    lam,
    lambda_deriv,
    rational_params,
    select_canonical_angles,
    signed_diff,
    theta_star_set,
    wrap,
    zero_candidates,
)
from .solver import DEFAULT_DOFS, MFSSolver, SolutionSet

logger = logging.getLogger(__name__)

COND_WARN = 1e12
# θ counts as a zero of Λ(·, α) or a point of Θ* within this arc distance
MEMBER_EPS = 1e-12
DENOM_MAX_TERMS = 60
TOL1 = 0.25
# The two-variable branch is first order, so its error is about tol2² |D''|;
# the single-variable branch stays accurate much closer to Θ*, so the
# crossover is pushed in until the naive quotient starts to lose digits.
TOL2 = 2e-4


class Branch(enum.IntEnum):
    LHOPITAL1 = 1
    LHOPITAL2 = 2
    TAYLOR0 = 3
    TAYLOR_STAR = 4
    NAIVE = 5


@dataclass(frozen=True)
class BmCoefficients:
    alpha: float
    b: np.ndarray


@dataclass
class EmbeddingContext:
    """Canonical solutions plus the factorised D̂ system.

    Attributes
    ----------
    dhat_matrix : ndarray
        ``dhat_matrix[n, m] = Λ(α_n, α_m) D_m(α_n)``.
    cond : float
        1-norm condition number of ``dhat_matrix``.
    denom_terms : int or None
        Terms of the stable-denominator series; None sums to convergence.
    require_star : bool
        Insist that Θ* ⊂ A_M. Without it only the ``'naive'`` and
        ``'taylor'`` modes are available.
    """

    polygon: Polygon
    params: RationalAngleData
    canonical: CanonicalSet
    solutions: SolutionSet
    tol1: float = TOL1
    tol2: float = TOL2
    taylor_order: int = 10
    max_deriv_order: int = 12
    denom_terms: int | None = None
    require_star: bool = True
    dhat_matrix: np.ndarray = field(init=False, repr=False)
    cond: float = field(init=False)

    def __post_init__(self):
        if not (0 < self.tol1 < 1 and 0 < self.tol2 < 1):
            raise ValueError("tolerances must lie in (0, 1)")
        if self.taylor_order < 1 or self.taylor_order > self.max_deriv_order:
            raise ValueError("taylor_order must lie in [1, max_deriv_order]")
        a = np.array(self.canonical.angles, dtype=float)
        if len(a) != self.params.M or len(self.solutions) != len(a):
            raise EmbeddingSystemError("need exactly M canonical angles and solutions")
        gaps = circle_dist(a[:, None], a[None, :]) + np.eye(len(a)) * 10.0
        if gaps.min() <= 1e-9:
            raise EmbeddingSystemError("canonical angles must be distinct")
        p = self.params.p
        self.alphas = a
        self.star_index = None
        if self.require_star:
            self.star_index = np.array([self._index(t) for t in theta_star_set(p)])

        D = self.solutions.far_field_matrix(a)  # D[n, m] = D_m(α_n)
        self.dhat_matrix = lam(p, a[:, None], a[None, :]) * D
        try:
            self._lu = sla.lu_factor(self.dhat_matrix, check_finite=True)
        except (ValueError, sla.LinAlgError) as exc:
            raise EmbeddingSystemError(f"canonical system could not be factorised: {exc}") from exc
        if np.any(np.diag(self._lu[0]) == 0):
            raise EmbeddingSystemError("canonical system is singular")
        with np.errstate(all="ignore"):
            inv = np.linalg.inv(self.dhat_matrix)
        self.cond = float(np.linalg.norm(self.dhat_matrix, 1) * np.linalg.norm(inv, 1))
        if not math.isfinite(self.cond):
            raise EmbeddingSystemError("canonical system is singular")
        if self.cond > COND_WARN:
            logger.warning("canonical system condition number %.2e exceeds %.0e", self.cond, COND_WARN)
        logger.info("canonical system: M=%d, cond_1=%.3e", len(a), self.cond)
        # D and D' of every canonical solution at every point of Θ*
        self._star_table = self.solutions.table(theta_star_set(p), 1) if self.require_star else None

    def _index(self, angle: float) -> int:
        try:
            return self.canonical.index_of(angle)
        except KeyError:
            raise EmbeddingSystemError(
                f"canonical set must contain every point of Θ* (missing {angle:.6f})"
            ) from None

    @property
    def p(self) -> int:
        return self.params.p

    @property
    def M(self) -> int:
        return self.params.M


def build_context(
    polygon: Polygon,
    k: float,
    dofs_per_side: int = DEFAULT_DOFS,
    params: RationalAngleData | None = None,
    canonical: CanonicalSet | None = None,
    seed: int = 0,
    use_reduction: bool = True,
    solver: MFSSolver | None = None,
    **options,
) -> EmbeddingContext:
    """Run the M canonical solves and factorise the embedding system.

    ``options`` are passed to :class:`EmbeddingContext` (tol1, tol2,
    taylor_order, max_deriv_order, denom_terms).
    """
    if params is None:
        params = rational_params(polygon, use_reduction)
    if canonical is None:
        canonical = select_canonical_angles(polygon, params, seed)
    if solver is None:
        solver = MFSSolver(polygon, k, dofs_per_side)
    sols = solver.solve_plane_waves(np.array(canonical.angles))
    return EmbeddingContext(polygon, params, canonical, sols, **options)


# ---------------------------------------------------------------- helpers


def _bm_matrix(ctx: EmbeddingContext, alphas: np.ndarray) -> np.ndarray:
    """b(α) for each α; returns ``(len(alphas), M)``."""
    alphas = np.asarray(alphas, dtype=float).ravel()
    p = ctx.p
    sign = 1.0 if p % 2 else -1.0
    Dn = ctx.solutions.far_field_matrix(alphas)  # D_n(α)
    rhs = (sign * lam(p, alphas[:, None], ctx.alphas[None, :]) * Dn).T
    b = sla.lu_solve(ctx._lu, rhs)
    b += sla.lu_solve(ctx._lu, rhs - ctx.dhat_matrix @ b)
    return b.T


def solve_bm(ctx: EmbeddingContext, alpha: float) -> BmCoefficients:
    """Embedding coefficients b(α)."""
    return BmCoefficients(float(alpha), _bm_matrix(ctx, np.array([alpha]))[0])


def _dhat_derivs(ctx: EmbeddingContext, theta: np.ndarray, order: int) -> np.ndarray:
    """∂ⁿD̂(θ_i, α_m) for n ≤ order by the Leibniz rule; shape ``(N, M, order+1)``."""
    theta = np.asarray(theta, dtype=float).ravel()
    uniq, inv = np.unique(theta, return_inverse=True)
    Dd = ctx.solutions.table(uniq, order)[inv.ravel()]  # (N, M, order+1)
    p = ctx.p
    lamd = np.empty((theta.size, ctx.M, order + 1))
    lamd[:, :, 0] = lam(p, theta[:, None], ctx.alphas[None, :])
    for j in range(1, order + 1):
        lamd[:, :, j] = lambda_deriv(p, theta, None, j)[:, None]
    out = np.zeros_like(Dd)
    for n in range(order + 1):
        for j in range(n + 1):
            out[:, :, n] += math.comb(n, j) * lamd[:, :, j] * Dd[:, :, n - j]
    return out


def _stable_denominator(p: int, h, theta0, n_terms: int | None, check_lead: bool = True) -> np.ndarray:
    """(θ-θ₀)/Λ(θ, α) from the reciprocal of Λ's Taylor series about θ₀.

    A double zero (θ₀ ∈ Θ*) makes the first term vanish; the series is
    still usable when |θ-θ₀| is bounded away from 0, so callers that
    guarantee this pass ``check_lead=False``.
    """
    h = np.asarray(h, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    lead = p * np.cos(p * theta0 + math.pi / 2)
    if check_lead and np.any(np.abs(lead) < 1e-14):
        raise DegenerateDenominatorError("expansion point lies on Θ*; first-order term vanishes")
    total = np.zeros(np.broadcast(h, theta0).shape)
    cap = DENOM_MAX_TERMS if n_terms is None else int(n_terms)
    term_scale = 1.0
    for n in range(1, cap + 1):
        # term_scale = p^n |h|^{n-1} / n!
        term_scale = p if n == 1 else term_scale * p * np.abs(h) / n
        total = total + h ** (n - 1) / math.factorial(n) * p**n * np.cos(p * theta0 + n * math.pi / 2)
        if n_terms is None and np.all(term_scale <= 1e-17 * np.abs(total)):
            break
    return 1.0 / total


def stable_denominator(p: int, theta, theta0, n_terms: int | None = None):
    """(θ-θ₀)/Λ(θ, α) for θ₀ a zero of Λ(·, α) outside Θ*.

    Parameters
    ----------
    n_terms : int, optional
        Series length; by default terms are added until they fall below
        rounding level (at most 60).
    """
    out = _stable_denominator(p, signed_diff(theta, theta0), theta0, n_terms)
    return out[()] if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class DispatchInfo:
    """Per-point quantities used by the combined rule."""

    theta: np.ndarray
    alpha: np.ndarray
    theta0: np.ndarray
    theta_star: np.ndarray  # nearest point of Θ* to θ₀
    alpha_star: np.ndarray
    dist0: np.ndarray  # |θ - θ₀|
    dist_star: np.ndarray  # min over Θ* of |θ - θ*|
    branch: np.ndarray


def classify(ctx: EmbeddingContext, theta, alpha, mode: str = "combined") -> DispatchInfo:
    """Assign each (θ, α) pair its branch.

    ``mode='combined'`` is the five-way rule; ``'taylor'`` drops the
    two-variable branch and uses the single-variable expansion whenever
    θ is within tol1 of a simple zero; ``'naive'`` never leaves the quotient.
    """
    th = wrap(np.asarray(theta, dtype=float).ravel())
    al = wrap(np.asarray(alpha, dtype=float).ravel())
    th, al = np.broadcast_arrays(th, al)
    p = ctx.p
    star = theta_star_set(p)
    theta0 = closest_rows(zero_candidates(p, al), th)
    tstar = closest_rows(np.broadcast_to(star, (th.size, star.size)), theta0)
    # α* ∈ Θ* with θ* ∈ Θ_{α*}: index parity must equal (index of θ*) + p
    i_t = np.rint(tstar * p / math.pi).astype(int) % (2 * p)
    ok = (np.arange(2 * p)[None, :] - i_t[:, None] - p) % 2 == 0
    astar = closest_rows(np.where(ok, star[None, :], np.nan), al)
    # NaN candidates compare False in the tie test and never win
    dist0 = circle_dist(th, theta0)
    dstar = circle_dist(th[:, None], star[None, :]).min(axis=1)
    on_zero = dist0 <= MEMBER_EPS
    on_star = dstar <= MEMBER_EPS

    br = np.full(th.size, Branch.NAIVE, dtype=int)
    if mode == "naive":
        pass
    elif mode == "combined":
        if ctx.star_index is None:
            raise DispatchError("combined mode needs a canonical set containing Θ*")
        c1 = on_zero & (dstar > ctx.tol2)
        c2 = ~c1 & on_zero & on_star
        c3 = ~(c1 | c2) & ~on_zero & (dist0 <= ctx.tol1) & (dstar > ctx.tol2)
        c4 = ~(c1 | c2 | c3) & (dist0 < ctx.tol2) & (circle_dist(theta0, tstar) <= ctx.tol2)
        br[c1], br[c2], br[c3], br[c4] = Branch.LHOPITAL1, Branch.LHOPITAL2, Branch.TAYLOR0, Branch.TAYLOR_STAR
    elif mode == "taylor":
        zero_on_star = circle_dist(theta0, tstar) <= MEMBER_EPS
        c2 = on_zero & on_star
        c1 = on_zero & ~on_star
        c3 = ~on_zero & (dist0 <= ctx.tol1) & ~zero_on_star
        br[c1], br[c2], br[c3] = Branch.LHOPITAL1, Branch.LHOPITAL2, Branch.TAYLOR0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return DispatchInfo(th, al, theta0, tstar, astar, dist0, dstar, br)


# ---------------------------------------------------------------- branches


def _naive(ctx, theta, alpha, B):
    Dh = _dhat_derivs(ctx, theta, 0)[:, :, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.einsum("nm,nm->n", B, Dh) / lam(ctx.p, theta, alpha)


def _lhopital(ctx, theta, B, order):
    Dh = _dhat_derivs(ctx, theta, order)[:, :, order]
    return np.einsum("nm,nm->n", B, Dh) / lambda_deriv(ctx.p, theta, None, order)


def _taylor0(ctx, theta, theta0, B, n_terms):
    h = signed_diff(theta, theta0)
    Dh = _dhat_derivs(ctx, theta0, n_terms)
    n = np.arange(1, n_terms + 1)
    fact = np.array([math.factorial(j) for j in n], dtype=float)
    coef = h[:, None] ** (n - 1)[None, :] / fact[None, :]
    num = np.einsum("nm,nj,nmj->n", B, coef, Dh[:, :, 1:])
    # the dispatcher keeps |θ - θ*| > tol2 here, so θ ≠ θ₀ whenever θ₀ ∈ Θ*
    return _stable_denominator(ctx.p, h, theta0, ctx.denom_terms, check_lead=False) * num


def _taylor_star(ctx, theta, alpha, tstar, astar):
    p = ctx.p
    i_t = np.rint(tstar * p / math.pi).astype(int) % (2 * p)
    i_a = np.rint(astar * p / math.pi).astype(int) % (2 * p)
    m1, m2 = ctx.star_index[i_t], ctx.star_index[i_a]
    tab = ctx._star_table  # (2p angles, M, 2)
    return (
        tab[i_t, m2, 0]
        + signed_diff(theta, tstar) * tab[i_t, m2, 1]
        + signed_diff(alpha, astar) * tab[i_a, m1, 1]
    )


def evaluate(ctx: EmbeddingContext, theta, alpha, mode: str = "combined"):
    """Embedding approximation of D(θ, α) on arrays of points.

    Returns
    -------
    values : ndarray of complex
    branch : ndarray of int
        :class:`Branch` codes.
    """
    th_in = np.asarray(theta, dtype=float)
    shape = np.broadcast(th_in, np.asarray(alpha, dtype=float)).shape
    info = classify(ctx, np.broadcast_to(th_in, shape), np.broadcast_to(np.asarray(alpha, dtype=float), shape), mode)
    th, al, br = info.theta, info.alpha, info.branch
    out = np.empty(th.size, dtype=complex)

    need_b = br != Branch.TAYLOR_STAR
    B = np.zeros((th.size, ctx.M), dtype=complex)
    if np.any(need_b):
        ua, inv = np.unique(al[need_b], return_inverse=True)
        B[need_b] = _bm_matrix(ctx, ua)[inv.ravel()]

    sel = br == Branch.NAIVE
    if np.any(sel):
        out[sel] = _naive(ctx, th[sel], al[sel], B[sel])
    for b_code, order in ((Branch.LHOPITAL1, 1), (Branch.LHOPITAL2, 2)):
        sel = br == b_code
        if np.any(sel):
            out[sel] = _lhopital(ctx, th[sel], B[sel], order)
    sel = br == Branch.TAYLOR0
    if np.any(sel):
        out[sel] = _taylor0(ctx, th[sel], info.theta0[sel], B[sel], ctx.taylor_order)
    sel = br == Branch.TAYLOR_STAR
    if np.any(sel):
        out[sel] = _taylor_star(ctx, th[sel], al[sel], info.theta_star[sel], info.alpha_star[sel])
    return out.reshape(shape), br.reshape(shape)


# ---------------------------------------------------------- scalar API


def d_naive(ctx: EmbeddingContext, theta: float, alpha: float) -> complex:
    """Σ b_m D̂(θ, α_m) / Λ(θ, α)."""
    if lam(ctx.p, theta, alpha) == 0.0:
        raise DispatchError("Λ(θ, α) = 0: use a limit branch")
    B = _bm_matrix(ctx, np.array([alpha]))
    return complex(_naive(ctx, np.array([theta]), np.array([alpha]), B)[0])


def d_lhopital(ctx: EmbeddingContext, theta: float, alpha: float, order: int = 1) -> complex:
    """L'Hôpital limit at a zero θ of Λ(·, α); order 2 is for θ ∈ Θ*."""
    info = classify(ctx, theta, alpha)
    if info.dist0[0] > MEMBER_EPS:
        raise DispatchError("θ is not a zero of Λ(·, α)")
    if order == 1:
        if info.dist_star[0] <= MEMBER_EPS:
            raise DispatchError("first-order limit undefined on Θ*")
    elif order == 2:
        if info.dist_star[0] > MEMBER_EPS:
            raise DispatchError("second-order limit requires θ ∈ Θ*")
    else:
        raise DispatchError("order must be 1 or 2")
    B = _bm_matrix(ctx, np.array([alpha]))
    return complex(_lhopital(ctx, np.array([float(theta)]), B, order)[0])


def d_taylor0(ctx: EmbeddingContext, theta: float, alpha: float, theta0: float | None = None, taylor_order: int | None = None) -> complex:
    """Single-variable Taylor expansion about the zero θ₀ nearest θ."""
    info = classify(ctx, theta, alpha)
    t0 = info.theta0[0] if theta0 is None else float(theta0)
    if circle_dist(t0, info.theta0[0]) > 1e-9:
        raise DispatchError("θ₀ must be the zero of Λ(·, α) nearest θ")
    if circle_dist(t0, info.theta_star[0]) < ctx.tol2:
        raise DispatchError("θ₀ is within tol2 of Θ*")
    n = ctx.taylor_order if taylor_order is None else int(taylor_order)
    if not 1 <= n <= ctx.max_deriv_order:
        raise DispatchError("Taylor order outside [1, max_deriv_order]")
    B = _bm_matrix(ctx, np.array([alpha]))
    return complex(_taylor0(ctx, np.array([float(theta)]), np.array([t0]), B, n)[0])


def d_taylor_star(ctx: EmbeddingContext, theta: float, alpha: float, theta_star: float, alpha_star: float) -> complex:
    """First-order two-variable expansion about (θ*, α*) ∈ Θ* × Θ*."""
    p = ctx.p
    for a in (theta_star, alpha_star):
        if circle_dist(a * p / math.pi, round(a * p / math.pi)) > 1e-9:
            raise DispatchError("expansion point must lie in Θ* × Θ*")
    return complex(
        _taylor_star(ctx, np.array([float(theta)]), np.array([float(alpha)]),
                     wrap(np.array([float(theta_star)])), wrap(np.array([float(alpha_star)])))[0]
    )


def d_combined(ctx: EmbeddingContext, theta: float, alpha: float, return_branch: bool = False):
    """Combined stable approximation; optionally also the branch that fired."""
    v, b = evaluate(ctx, np.array([float(theta)]), np.array([float(alpha)]))
    if return_branch:
        return complex(v[0]), Branch(int(b[0]))
    return complex(v[0])


# ---------------------------------------------------------- diagnostics


def l2_norms(values: np.ndarray) -> np.ndarray:
    """‖D(·, α)‖_{L²(0, 2π)} from samples on a uniform periodic θ grid (axis 0)."""
    v = np.asarray(values)
    return np.sqrt(2 * math.pi * np.mean(np.abs(v) ** 2, axis=0))


ERROR_GRID_HEADER = ["theta", "alpha", "branch", "re", "im", "relerr"]


def error_grid_rows(theta, alpha, branch, values, relerr):
    """Rows of the error-grid table, one per point, as strings."""
    for t, a, b, v, e in zip(
        np.ravel(theta), np.ravel(alpha), np.ravel(branch), np.ravel(values), np.ravel(relerr)
    ):
        yield [repr(float(t)), repr(float(a)), Branch(int(b)).name.lower(),
               repr(float(v.real)), repr(float(v.imag)), repr(float(e))]


def write_error_grid(path, theta, alpha, branch, values, relerr) -> None:
    """CSV with columns theta,alpha,branch,re,im,relerr."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ERROR_GRID_HEADER)
        w.writerows(error_grid_rows(theta, alpha, branch, values, relerr))
