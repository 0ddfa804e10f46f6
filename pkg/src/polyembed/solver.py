"""Sound-soft scattering by a convex polygon via the method of fundamental solutions.

The scattered field is expanded in outgoing cylindrical waves

    B_{y,n}(x) = (i/4) H_{|n|}(k|x - y|) e^{i n arg(x - y)}

with charge sites ``y`` clustered exponentially towards each corner (orders
n = 0, ±1) plus a multipole at the origin for the smooth part of the field.
Coefficients come from a weighted least-squares fit of u^i + u^s = 0 on
boundary points clustered at the same rate, solved by column-pivoted QR.

The far-field coefficient, normalised so that
u^s ~ e^{i(kr + π/4)} (2πkr)^{-1/2} D(θ), is

    D(θ) = ½ Σ_j c_j (-i)^{|n_j|} e^{i n_j θ} K(θ, y_j),
    K(θ, y) = exp(-ik(y₁cos θ + y₂sin θ)),

and its θ-derivatives follow from the banded recursion of
:mod:`polyembed.kernel_derivs`, extended to the factor e^{inθ}.
"""

from __future__ import annotations

import io
import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from . import _backend
from .errors import CacheFormatError, DerivativeOrderError, SolverConditioningError, SolverDomainError
from .geometry import Polygon
from .kernel_derivs import MAX_ORDER
from .special import jy_table

logger = logging.getLogger(__name__)

NORM_CONST = 0.5
CLUSTER_SIGMA = 3.0
SOURCE_DEPTH = 0.8
OVERSAMPLE = 3
CHECK_OVERSAMPLE = 10
RANK_TOL = 1e-14
DEFAULT_DOFS = 40
RESIDUAL_TOL = 1e-8
CACHE_MAGIC = b"MFS1\n"


class SolveCounter:
    """Counts right-hand sides solved (one per PDE solve)."""

    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0

    def add(self, n: int) -> None:
        with self._lock:
            self.count += n

    def reset(self) -> int:
        with self._lock:
            n, self.count = self.count, 0
        return n


SOLVE_COUNTER = SolveCounter()


@dataclass(frozen=True)
class IncidentField:
    """Incident wave: boundary trace plus a descriptor of what it is.

    ``trace`` maps an ``(P, 2)`` array of points to ``(P,)`` complex values
    and must be the restriction of an entire Helmholtz solution.
    """

    trace: Callable[[np.ndarray], np.ndarray]
    kind: str = "custom"
    param: object = None

    def __call__(self, x):
        return self.trace(np.atleast_2d(np.asarray(x, dtype=float)))


def plane_wave(alpha: float, k: float, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.exp(-1j * k * (x[:, 0] * math.cos(alpha) + x[:, 1] * math.sin(alpha)))


def regular_wave(ell: int, k: float, x) -> np.ndarray:
    """J_{|ℓ|}(k|x|) e^{iℓθ_x}, with the limit at the origin."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.hypot(x[:, 0], x[:, 1])
    out = np.zeros(r.shape, dtype=complex)
    nz = r > 0
    if np.any(nz):
        J, _ = jy_table(abs(ell), k * r[nz])
        out[nz] = J[:, abs(ell)] * np.exp(1j * ell * np.arctan2(x[nz, 1], x[nz, 0]))
    if ell == 0:
        out[~nz] = 1.0
    return out


def plane_wave_field(alpha: float, k: float) -> IncidentField:
    """Plane wave exp(-ik(x₁cos α + x₂sin α))."""
    return IncidentField(lambda x: plane_wave(alpha, k, x), "plane", float(alpha))


def regular_wave_field(ell: int, k: float) -> IncidentField:
    """Regular cylindrical wavefunction of order ℓ."""
    return IncidentField(lambda x: regular_wave(ell, k, x), "regular", int(ell))


def zero_field() -> IncidentField:
    return IncidentField(lambda x: np.zeros(len(x), dtype=complex), "zero", None)


def _clustered(n: int, sigma: float) -> np.ndarray:
    """n increasing fractions in (0, 1], geometrically graded towards 0."""
    j = np.arange(1, n + 1)
    return np.exp(-sigma * (np.sqrt(n) - np.sqrt(j)))


def source_layout(polygon: Polygon, sites_per_corner: int, sigma=CLUSTER_SIGMA, depth=SOURCE_DEPTH):
    """Charge sites along each corner's interior bisector, graded towards the corner."""
    v = polygon.vertices
    c = polygon.centroid
    sites = []
    for j in range(polygon.n_sides):
        a, b = v[j - 1] - v[j], v[(j + 1) % polygon.n_sides] - v[j]
        bis = a / np.linalg.norm(a) + b / np.linalg.norm(b)
        bis /= np.linalg.norm(bis)
        dist = depth * np.linalg.norm(c - v[j]) * _clustered(sites_per_corner, sigma)
        pts = v[j] + dist[:, None] * bis
        shrink = 1.0
        while not np.all(polygon.contains(pts, margin=0.0)):
            shrink *= 0.8
            pts = v[j] + shrink * dist[:, None] * bis
        sites.append(pts)
    return np.vstack(sites)


def collocation_points(polygon: Polygon, per_side: int, sigma=CLUSTER_SIGMA):
    """Boundary points (cell midpoints) and arc-length weights.

    Each side is split at points graded geometrically towards both ends and
    uniformly in between; points are the cell midpoints.
    """
    v = polygon.vertices
    t = 0.5 * _clustered(per_side, sigma)
    grid = np.unique(np.concatenate([[0.0, 1.0], t, 1.0 - t, np.linspace(0.0, 1.0, per_side)]))
    mid = 0.5 * (grid[1:] + grid[:-1])
    frac = np.diff(grid)
    pts, wts = [], []
    for j in range(polygon.n_sides):
        a, b = v[j], v[(j + 1) % polygon.n_sides]
        pts.append(a + (b - a) * mid[:, None])
        wts.append(frac * np.linalg.norm(b - a))
    return np.vstack(pts), np.concatenate(wts)


def multipole_order(k: float, radius: float) -> int:
    kr = k * radius
    return int(math.ceil(kr + 4.0 * kr ** (1.0 / 3.0) + 5.0))


def basis_matrix(k: float, centers: np.ndarray, orders: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Values of every basis function B_{y_j, n_j} at the points ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.empty((x.shape[0], centers.shape[0]), dtype=complex)
    uniq, inv = np.unique(centers, axis=0, return_inverse=True)
    inv = inv.ravel()
    top = np.zeros(len(uniq), dtype=int)
    np.maximum.at(top, inv, np.abs(orders))
    # one vectorised Bessel table per group of centres sharing a top order
    for nmax in np.unique(top):
        grp = np.flatnonzero(top == nmax)
        d = x[:, None, :] - uniq[None, grp, :]
        r = np.hypot(d[..., 0], d[..., 1])
        if np.any(r <= 0):
            raise SolverDomainError("evaluation point coincides with a source")
        J, Y = jy_table(int(nmax), k * r)
        ang = np.arctan2(d[..., 1], d[..., 0])
        col_group = np.searchsorted(grp, inv)
        cols = np.flatnonzero(np.isin(inv, grp))
        for c in cols:
            g = col_group[c]
            n = int(orders[c])
            h = J[:, g, abs(n)] + 1j * Y[:, g, abs(n)]
            out[:, c] = 0.25j * h * np.exp(1j * n * ang[:, g])
    return out


@dataclass(frozen=True)
class FarFieldWeights:
    """Basis far fields merged per distinct centre.

    ``W[u, r, m, f]`` multiplies K(θ, centers[u]) e^{i(f - F)θ} in ∂ᵐD_r/∂θᵐ,
    with F = (width - 1) / 2. Orders present at centre u span
    ``[lo[u], hi[u]]``, so for derivative m only slots F + lo - m .. F + hi + m
    can be nonzero.
    """

    centers: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    W: np.ndarray


def far_field_weights(centers: np.ndarray, orders: np.ndarray, coefficients: np.ndarray, k: float, max_order: int):
    """Coefficient × normalisation × hₘ, merged over basis functions sharing a centre.

    The factor e^{inθ} of an order-n basis function becomes a shift of its
    frequency slots, so each centre costs one kernel evaluation however
    many orders sit on it.
    """
    orders = np.asarray(orders, dtype=np.int64)
    coef = np.asarray(coefficients).reshape(centers.shape[0], -1)
    H = _backend.kernels.h_table(float(k), centers, orders, int(max_order))  # slot f ↔ n + f - max_order
    pref = NORM_CONST * (-1j) ** (np.abs(orders) % 4)
    uniq, inv = np.unique(centers, axis=0, return_inverse=True)
    inv = inv.ravel()
    nmax = int(np.abs(orders).max())
    width = 2 * (nmax + max_order) + 1
    W = np.zeros((len(uniq), coef.shape[1], max_order + 1, width), dtype=complex)
    band = 2 * max_order + 1
    for j in range(len(orders)):
        s = orders[j] + nmax
        W[inv[j], :, :, s : s + band] += (pref[j] * coef[j])[:, None, None] * H[j][None, :, :]
    lo = np.full(len(uniq), nmax, dtype=np.int64)
    hi = np.full(len(uniq), -nmax, dtype=np.int64)
    np.minimum.at(lo, inv, orders)
    np.maximum.at(hi, inv, orders)
    return FarFieldWeights(uniq, lo, hi, W)


def far_field_table(k, centers, orders, coefficients, angles, max_order: int = 0) -> np.ndarray:
    """∂ᵐD_r/∂θᵐ for every angle, solution column r and order m ≤ ``max_order``.

    Returns shape ``(len(angles), R, max_order + 1)``.
    """
    angles = np.asarray(angles, dtype=float).ravel()
    fw = far_field_weights(centers, orders, coefficients, k, max_order)
    return _backend.kernels.ff_sum(angles, float(k), fw.centers, fw.lo, fw.hi, fw.W)


@dataclass(frozen=True)
class FarFieldSolution:
    """A solved scattering problem.

    Attributes
    ----------
    k : float
        Wavenumber.
    source_points, orders : ndarray
        Basis centres (strictly inside the polygon, or the origin) and the
        angular order of each basis function.
    coefficients : ndarray
        Complex expansion coefficients.
    residual : float
        Relative RMS boundary misfit on a grid finer than the fitting grid.
    max_misfit : float
        Largest absolute boundary misfit on that grid.
    """

    k: float
    source_points: np.ndarray
    orders: np.ndarray
    coefficients: np.ndarray
    residual: float
    max_misfit: float
    incident: IncidentField | None = None
    norm_const: complex = NORM_CONST
    max_deriv_order: int = MAX_ORDER

    def far_field(self, theta):
        """D(θ) for scalar or array θ."""
        th = np.asarray(theta, dtype=float)
        tab = far_field_table(self.k, self.source_points, self.orders, self.coefficients, th.ravel(), 0)
        out = tab[:, 0, 0].reshape(th.shape)
        return out[()] if out.ndim == 0 else out

    def far_field_deriv(self, theta, n: int):
        """∂ⁿD/∂θⁿ for 1 ≤ n ≤ ``max_deriv_order``."""
        if n < 0 or n > self.max_deriv_order:
            raise DerivativeOrderError(f"derivative order {n} outside [0, {self.max_deriv_order}]")
        th = np.asarray(theta, dtype=float)
        tab = far_field_table(self.k, self.source_points, self.orders, self.coefficients, th.ravel(), n)
        out = tab[:, 0, n].reshape(th.shape)
        return out[()] if out.ndim == 0 else out

    def scattered_field(self, x):
        """u^s at points ``x`` outside the sources."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return basis_matrix(self.k, self.source_points, self.orders, x) @ self.coefficients


def far_field(sol: FarFieldSolution, theta):
    return sol.far_field(theta)


def far_field_deriv(sol: FarFieldSolution, theta, n: int):
    return sol.far_field_deriv(theta, n)


@dataclass(frozen=True)
class SolutionSet:
    """Many solutions sharing one basis; column r of ``coefficients`` is solution r."""

    k: float
    source_points: np.ndarray
    orders: np.ndarray
    coefficients: np.ndarray
    residuals: np.ndarray
    max_misfits: np.ndarray
    incidents: tuple = ()

    def __len__(self):
        return self.coefficients.shape[1]

    def __getitem__(self, r) -> FarFieldSolution:
        inc = self.incidents[r] if self.incidents else None
        return FarFieldSolution(
            self.k, self.source_points, self.orders, self.coefficients[:, r],
            float(self.residuals[r]), float(self.max_misfits[r]), inc,
        )

    def table(self, angles, max_order: int = 0) -> np.ndarray:
        """Far-field derivative table, shape ``(len(angles), len(self), max_order + 1)``."""
        return far_field_table(self.k, self.source_points, self.orders, self.coefficients, angles, max_order)

    def far_field_matrix(self, angles) -> np.ndarray:
        """D_r(θ_t) with shape ``(len(angles), len(self))``."""
        return self.table(angles, 0)[:, :, 0]


@dataclass
class MFSSolver:
    """Factorised least-squares system for one polygon, wavenumber and resolution.

    One factorisation serves any number of incident fields.

    Parameters
    ----------
    polygon : Polygon
    k : float
        Wavenumber, positive.
    dofs_per_side : int
        Charge sites per corner (each side owns its starting corner); at least 4.
    multipole_order : int, optional
        Highest order of the central multipole; defaults to the
        ``kR + 4(kR)^{1/3} + 5`` rule for the polygon's radius R.
    residual_tol : float
        Quality gate on the relative RMS residual; exceeding it logs a warning.
    """

    polygon: Polygon
    k: float
    dofs_per_side: int = DEFAULT_DOFS
    multipole_order: int | None = None
    residual_tol: float = RESIDUAL_TOL
    strict: bool = False
    centers: np.ndarray = field(init=False, repr=False)
    orders: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.k > 0) or not math.isfinite(self.k):
            raise SolverDomainError(f"wavenumber must be positive, got {self.k}")
        if self.dofs_per_side < 4:
            raise SolverDomainError("dofs_per_side must be at least 4")
        nc = int(self.dofs_per_side)
        sites = source_layout(self.polygon, nc)
        nr = self.multipole_order
        if nr is None:
            nr = multipole_order(self.k, self.polygon.radius)
        self.multipole_order = nr
        central = np.arange(-nr, nr + 1)
        self.centers = np.vstack([np.repeat(sites, 3, axis=0), np.zeros((central.size, 2))])
        self.orders = np.concatenate([np.tile([0, 1, -1], len(sites)), central]).astype(np.int64)

        x, w = collocation_points(self.polygon, OVERSAMPLE * nc)
        self._sw = np.sqrt(w)
        self._x = x
        A = basis_matrix(self.k, self.centers, self.orders, x) * self._sw[:, None]
        self._scale = np.linalg.norm(A, axis=0)
        Q, R, P = sla.qr(A / self._scale, mode="economic", pivoting=True)
        d = np.abs(np.diag(R))
        rank = int(np.sum(d > RANK_TOL * d[0]))
        self.rank = rank
        self._Q, self._R, self._P = Q[:, :rank], R[:rank, :rank], P[:rank]

        xc, wc = collocation_points(self.polygon, CHECK_OVERSAMPLE * nc)
        self._xc, self._wc = xc, wc
        self._Bc = basis_matrix(self.k, self.centers, self.orders, xc)
        logger.debug(
            "MFS system: %d rows, %d unknowns, rank %d", A.shape[0], A.shape[1], rank
        )

    @property
    def n_unknowns(self) -> int:
        return self.centers.shape[0]

    def solve_traces(self, trace_fit: np.ndarray, trace_check: np.ndarray):
        """Solve for several incident traces given on the fit and check grids."""
        b = -np.asarray(trace_fit, dtype=complex).reshape(self._x.shape[0], -1) * self._sw[:, None]
        y = sla.solve_triangular(self._R, self._Q.conj().T @ b)
        C = np.zeros((self.n_unknowns, b.shape[1]), dtype=complex)
        C[self._P] = y
        C /= self._scale[:, None]

        ui = np.asarray(trace_check, dtype=complex).reshape(self._xc.shape[0], -1)
        mis = self._Bc @ C + ui
        wsum = self._wc.sum()
        rms = np.sqrt((self._wc[:, None] * np.abs(mis) ** 2).sum(axis=0) / wsum)
        ref = np.sqrt((self._wc[:, None] * np.abs(ui) ** 2).sum(axis=0) / wsum)
        resid = np.where(ref > 0, rms / np.where(ref > 0, ref, 1.0), rms)
        SOLVE_COUNTER.add(b.shape[1])
        bad = resid > self.residual_tol
        if np.any(bad):
            msg = (
                f"{int(bad.sum())} of {bad.size} solves exceed residual tolerance "
                f"{self.residual_tol:.1e} (worst {resid.max():.2e})"
            )
            if self.strict:
                raise SolverConditioningError(msg)
            logger.warning(msg)
        return C, resid, np.abs(mis).max(axis=0)

    def solve_many(self, incidents: Sequence[IncidentField]) -> SolutionSet:
        incidents = tuple(incidents)
        if not incidents:
            raise ValueError("no incident fields given")
        fit = np.column_stack([inc(self._x) for inc in incidents])
        chk = np.column_stack([inc(self._xc) for inc in incidents])
        C, resid, mx = self.solve_traces(fit, chk)
        return SolutionSet(self.k, self.centers, self.orders, C, resid, mx, incidents)

    def solve(self, incident: IncidentField) -> FarFieldSolution:
        return self.solve_many([incident])[0]

    def solve_plane_waves(self, alphas) -> SolutionSet:
        return self.solve_many([plane_wave_field(float(a), self.k) for a in np.atleast_1d(alphas)])


def solve(polygon: Polygon, k: float, incident: IncidentField, dofs_per_side: int = DEFAULT_DOFS, **kw) -> FarFieldSolution:
    """Solve one scattering problem (builds a fresh factorisation)."""
    return MFSSolver(polygon, k, dofs_per_side, **kw).solve(incident)


def save_solutions(path, sols: SolutionSet, meta: dict | None = None) -> None:
    """Write a versioned binary cache (magic ``MFS1`` followed by an npz payload)."""
    buf = io.BytesIO()
    alphas = np.array([
        float(inc.param) if inc is not None and inc.kind == "plane" else np.nan for inc in (sols.incidents or [None] * len(sols))
    ])
    np.savez(
        buf,
        k=sols.k,
        source_points=sols.source_points,
        orders=sols.orders,
        coefficients=sols.coefficients,
        residuals=sols.residuals,
        max_misfits=sols.max_misfits,
        alphas=alphas,
        meta=np.array(repr(sorted((meta or {}).items()))),
    )
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(buf.getvalue())


def load_solutions(path) -> tuple[SolutionSet, str]:
    """Read a cache written by :func:`save_solutions`; returns the set and its meta string."""
    with open(path, "rb") as fh:
        head = fh.read(len(CACHE_MAGIC))
        if head != CACHE_MAGIC:
            raise CacheFormatError(f"{path}: not an MFS1 cache")
        try:
            data = np.load(io.BytesIO(fh.read()), allow_pickle=False)
            k = float(data["k"])
            alphas = data["alphas"]
            incs = tuple(
                plane_wave_field(float(a), k) if np.isfinite(a) else None for a in alphas
            )
            sols = SolutionSet(
                k,
                data["source_points"],
                data["orders"].astype(np.int64),
                data["coefficients"],
                data["residuals"],
                data["max_misfits"],
                incs,
            )
            return sols, str(data["meta"])
        except (KeyError, ValueError, OSError) as exc:
            raise CacheFormatError(f"{path}: corrupt cache ({exc})") from exc
