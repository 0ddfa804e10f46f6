"""Convex rational polygons and the angular sets of the embedding formula.

Angles are points on the unit circle. Distances between angles use the arc
metric ``|arg exp(i(a - b))|``; nearest-element searches break ties towards
the smaller angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    CanonicalSelectionError,
    InfeasibleCanonicalSetError,
    InvalidGeometryError,
    RationalityError,
)

TWO_PI = 2.0 * math.pi
MAX_DENOMINATOR = 100
RATIONAL_TOL = 1e-9
# two angles closer than this are the same point
ANGLE_EPS = 1e-12


def wrap(theta):
    """Map angles into [0, 2π)."""
    out = np.mod(theta, TWO_PI)
    # mod can round up to exactly 2π
    return np.where(out >= TWO_PI, 0.0, out)


def circle_dist(a, b):
    """Arc distance in [0, π] between angles ``a`` and ``b``."""
    d = np.mod(np.asarray(a, dtype=float) - b + math.pi, TWO_PI) - math.pi
    return np.abs(d)


def signed_diff(a, b):
    """Representative of ``a - b`` in [-π, π)."""
    return np.mod(np.asarray(a, dtype=float) - b + math.pi, TWO_PI) - math.pi


def closest(candidates: np.ndarray, theta: float) -> float:
    """Element of ``candidates`` nearest to ``theta`` (ties: smallest angle)."""
    cand = np.sort(wrap(np.asarray(candidates, dtype=float)))
    d = circle_dist(cand, theta)
    i = int(np.argmin(d + 0.0))
    # argmin already returns the first (smallest-angle) minimiser; exact ties
    # within rounding are folded in as well
    ties = np.flatnonzero(d <= d[i] + ANGLE_EPS)
    return float(cand[ties[0]])


def closest_rows(candidates: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Row-wise :func:`closest`: nearest entry of ``candidates[i]`` to ``theta[i]``.

    NaN candidates are ignored.
    """
    cand = wrap(np.asarray(candidates, dtype=float))
    d = circle_dist(cand, np.asarray(theta, dtype=float)[:, None])
    d = np.where(np.isnan(d), np.inf, d)
    dmin = d.min(axis=1, keepdims=True)
    return np.where(d <= dmin + ANGLE_EPS, cand, np.inf).min(axis=1)


@dataclass(frozen=True)
class Polygon:
    """Counter-clockwise convex polygon with exact external-angle fractions.

    ``angle_fractions[j]`` is ω_j / π for the corner at ``vertices[j]``,
    where ω_j is the angle measured through the exterior domain.
    """

    vertices: np.ndarray
    angle_fractions: tuple[Fraction, ...] = field(default=None)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise InvalidGeometryError("need at least 3 vertices given as (x, y) rows")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        _check_convex_ccw(v)
        _check_conventions(v)
        measured = _external_angles(v) / math.pi
        if self.angle_fractions is None:
            fracs = tuple(_detect_fraction(w) for w in measured)
        else:
            fracs = tuple(Fraction(f) for f in self.angle_fractions)
            if len(fracs) != len(v):
                raise InvalidGeometryError("one angle fraction per vertex required")
            for f, w in zip(fracs, measured):
                if abs(float(f) - w) > 1e-7:
                    raise InvalidGeometryError(
                        f"angle fraction {f} disagrees with vertex geometry ({w:.10f})"
                    )
        for f in fracs:
            if not (1 < f < 2):
                raise InvalidGeometryError("external angles must lie in (π, 2π)")
        object.__setattr__(self, "angle_fractions", fracs)

    @property
    def n_sides(self) -> int:
        return self.vertices.shape[0]

    @property
    def external_angles(self) -> np.ndarray:
        return np.array([float(f) * math.pi for f in self.angle_fractions])

    @property
    def side_lengths(self) -> np.ndarray:
        d = np.roll(self.vertices, -1, axis=0) - self.vertices
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def normals(self) -> np.ndarray:
        """Outward unit normal of side j (from vertex j to vertex j+1)."""
        d = np.roll(self.vertices, -1, axis=0) - self.vertices
        n = np.column_stack([d[:, 1], -d[:, 0]])
        return n / np.hypot(n[:, 0], n[:, 1])[:, None]

    @property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        area = 0.5 * cross.sum()
        return np.array([((v[:, 0] + w[:, 0]) * cross).sum(), ((v[:, 1] + w[:, 1]) * cross).sum()]) / (6 * area)

    @property
    def radius(self) -> float:
        """Radius of the tightest origin-centred ball containing the polygon."""
        return float(np.hypot(self.vertices[:, 0], self.vertices[:, 1]).max())

    def contains(self, points, margin: float = 0.0) -> np.ndarray:
        """True where points lie strictly inside, at least ``margin`` from every side."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.normals
        off = np.einsum("ij,ij->i", n, self.vertices)
        return np.all(pts @ n.T - off[None, :] < -margin, axis=1)

    def corner_visible(self, alpha: float, rule: str = "any") -> np.ndarray:
        """Which corners an incident plane wave from angle ``alpha`` illuminates.

        A side is lit when ``n · (cos α, sin α) > 0``. ``rule='any'`` marks a
        corner visible when either adjacent side is lit, ``'both'`` needs both.
        """
        lit = self.normals @ np.array([math.cos(alpha), math.sin(alpha)]) > 1e-12
        before = np.roll(lit, 1)  # side j-1 ends at corner j
        if rule == "any":
            return lit | before
        if rule == "both":
            return lit & before
        raise ValueError(f"unknown visibility rule {rule!r}")


def _external_angles(v: np.ndarray) -> np.ndarray:
    e_in = v - np.roll(v, 1, axis=0)
    e_out = np.roll(v, -1, axis=0) - v
    turn = np.arctan2(
        e_in[:, 0] * e_out[:, 1] - e_in[:, 1] * e_out[:, 0],
        (e_in * e_out).sum(axis=1),
    )
    # interior angle = π - turn; exterior-domain angle = 2π - interior
    return math.pi + turn


def _check_convex_ccw(v: np.ndarray) -> None:
    e_in = v - np.roll(v, 1, axis=0)
    e_out = np.roll(v, -1, axis=0) - v
    if np.any(np.hypot(e_out[:, 0], e_out[:, 1]) <= 0):
        raise InvalidGeometryError("repeated vertex")
    cross = e_in[:, 0] * e_out[:, 1] - e_in[:, 1] * e_out[:, 0]
    if np.any(cross <= 0):
        raise InvalidGeometryError("polygon must be strictly convex and counter-clockwise")
    if abs(_external_angles(v).sum() - (v.shape[0] + 2) * math.pi) > 1e-8:
        raise InvalidGeometryError("polygon winds more than once")


def _check_conventions(v: np.ndarray) -> None:
    d = np.roll(v, -1, axis=0) - v
    scale = np.abs(v).max()
    if not np.any(np.abs(d[:, 1]) <= 1e-12 * scale):
        raise InvalidGeometryError("at least one side must be parallel to the x1-axis")
    n = np.column_stack([d[:, 1], -d[:, 0]])
    off = np.einsum("ij,ij->i", n, v)
    if not np.all(off > 0):
        raise InvalidGeometryError("origin must lie strictly inside the polygon")


def _detect_fraction(w: float) -> Fraction:
    f = Fraction(w).limit_denominator(MAX_DENOMINATOR)
    if abs(float(f) - w) > RATIONAL_TOL:
        raise RationalityError(f"angle {w}π is not rational with denominator <= {MAX_DENOMINATOR}")
    return f


def regular_polygon(n_sides: int, side_length: float = 1.0) -> Polygon:
    """Regular polygon centred at the origin with its bottom side horizontal."""
    if n_sides < 3:
        raise InvalidGeometryError("a polygon needs at least 3 sides")
    if not side_length > 0:
        raise InvalidGeometryError("side length must be positive")
    rc = side_length / (2 * math.sin(math.pi / n_sides))
    ang = -math.pi / 2 - math.pi / n_sides + TWO_PI * np.arange(n_sides) / n_sides
    v = rc * np.column_stack([np.cos(ang), np.sin(ang)])
    # exact bottom edge
    v[0, 1] = v[1, 1] = -side_length / (2 * math.tan(math.pi / n_sides))
    frac = Fraction(n_sides + 2, n_sides)
    return Polygon(v, (frac,) * n_sides)


BUILTIN_SHAPES = {"triangle": 3, "square": 4, "pentagon": 5, "hexagon": 6}


def builtin_polygon(name: str, side_length: float = 1.0) -> Polygon:
    try:
        return regular_polygon(BUILTIN_SHAPES[name], side_length)
    except KeyError:
        raise InvalidGeometryError(f"unknown shape {name!r}") from None


def read_polygon(path) -> Polygon:
    """Read the plain-text polygon format.

    Header ``N p``, then N lines ``x y q_j`` with ω_j = π q_j / p.
    """
    with open(path) as fh:
        rows = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    try:
        n, p = int(rows[0][0]), int(rows[0][1])
        body = rows[1:]
        if len(body) != n or any(len(r) != 3 for r in body):
            raise ValueError("expected N lines of 'x y q'")
        v = [(float(r[0]), float(r[1])) for r in body]
        fr = [Fraction(int(r[2]), p) for r in body]
    except (IndexError, ValueError) as exc:
        raise InvalidGeometryError(f"malformed polygon file {path}: {exc}") from exc
    return Polygon(np.array(v), tuple(fr))


def write_polygon(polygon: Polygon, path) -> None:
    params = rational_params(polygon, use_reduction=True)
    with open(path, "w") as fh:
        fh.write(f"{polygon.n_sides} {params.p}\n")
        for (x, y), q in zip(polygon.vertices, params.q):
            fh.write(f"{float(x)!r} {float(y)!r} {int(q)}\n")


@dataclass(frozen=True)
class RationalAngleData:
    p: int
    q: tuple[int, ...]
    M: int
    quasi_regular: bool


def rational_params(polygon: Polygon, use_reduction: bool = True) -> RationalAngleData:
    """Compute p, q_j and the canonical solve count M.

    With ``use_reduction`` p is the smallest integer such that π/p divides
    every external angle; for quasi-regular polygons of even N this is
    (p, q) = (N/2, (N+2)/2), giving M = N²/2. Without it, quasi-regular
    polygons use the plain choice (p, q) = (N, N+2) and M = N(N+1).
    """
    fracs = polygon.angle_fractions
    if any(not isinstance(f, Fraction) for f in fracs):
        raise RationalityError("angle fractions must be exact")
    quasi = len(set(fracs)) == 1
    N = polygon.n_sides
    if quasi and not use_reduction:
        p, q = N, (N + 2,) * N
    else:
        p = math.lcm(*(f.denominator for f in fracs))
        q = tuple(int(f * p) for f in fracs)
    M = sum(qj - 1 for qj in q)
    return RationalAngleData(p=p, q=q, M=M, quasi_regular=quasi)


def theta_star_set(p: int) -> np.ndarray:
    """The 2p points nπ/p where ∂Λ/∂θ vanishes."""
    return np.arange(2 * p) * math.pi / p


def zero_candidates(p: int, alpha) -> np.ndarray:
    """All 2p zeros ±α + shift of Λ(·, α) per row of ``alpha``, duplicates kept."""
    n = np.arange(p)
    shift = (2 * n + 1) * math.pi / p if p % 2 else 2 * n * math.pi / p
    a = np.asarray(alpha, dtype=float).reshape(-1, 1)
    return wrap(np.concatenate([a + shift, -a + shift], axis=1))


def theta_alpha_set(p: int, alpha: float) -> np.ndarray:
    """Zeros of θ ↦ Λ(θ, α) on the circle, sorted and deduplicated."""
    cand = np.sort(zero_candidates(p, alpha)[0])
    keep = [cand[0]]
    for c in cand[1:]:
        if circle_dist(c, keep[-1]) > 1e-9 and circle_dist(c, keep[0]) > 1e-9:
            keep.append(c)
    return np.array(keep)


def in_theta_star(p: int, theta, tol: float = 1e-9):
    """True where θ is (within ``tol``) a point of the symmetric set."""
    r = np.mod(np.asarray(theta, dtype=float) * p / math.pi + 0.5, 1.0) - 0.5
    return np.abs(r) * math.pi / p <= tol


def lam(p: int, theta, alpha):
    """Λ(θ, α) = cos(pθ) - (-1)^p cos(pα)."""
    sign = -1.0 if p % 2 else 1.0
    return np.cos(p * np.asarray(theta)) - sign * np.cos(p * np.asarray(alpha))


def lambda_derivs(p: int, theta, alpha=None):
    """(∂Λ/∂θ, ∂²Λ/∂θ²); neither depends on α."""
    th = np.asarray(theta)
    return -p * np.sin(p * th), -(p * p) * np.cos(p * th)


def lambda_deriv(p: int, theta, alpha, n: int):
    """n-th θ-derivative of Λ; n = 0 returns Λ itself."""
    if n == 0:
        return lam(p, theta, alpha)
    return float(p) ** n * np.cos(p * np.asarray(theta) + n * math.pi / 2)


def lambda_bounds(p: int, theta, alpha):
    """Lower and upper bounds on |Λ(θ, α)| from the distances to the zero sets.

    With θ₀ the zero of Λ(·, α) nearest θ and θ* the point of Θ* nearest θ₀,
    the bounds are (p²/8)|θ-θ₀||θ₀-θ*| and p²|θ-θ₀|(|θ-θ₀|/2 + |θ₀-θ*|).
    Accepts scalars or broadcastable arrays.
    """
    th, al = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(alpha, dtype=float))
    shape = th.shape
    th, al = th.ravel(), al.ravel()
    theta0 = closest_rows(zero_candidates(p, al), th)
    star = theta_star_set(p)
    tstar = closest_rows(np.broadcast_to(star, (th.size, star.size)), theta0)
    a = circle_dist(th, theta0)
    b = circle_dist(theta0, tstar)
    lower = (p * p / 8.0 * a * b).reshape(shape)
    upper = (p * p * a * (0.5 * a + b)).reshape(shape)
    if lower.ndim == 0:
        return float(lower), float(upper)
    return lower, upper


@dataclass(frozen=True)
class CanonicalSet:
    angles: tuple[float, ...]
    star_indices: tuple[int, ...]

    def index_of(self, angle: float, tol: float = 1e-9) -> int:
        d = circle_dist(np.array(self.angles), angle)
        i = int(np.argmin(d))
        if d[i] > tol:
            raise KeyError(angle)
        return i


def select_canonical_angles(
    polygon: Polygon,
    params: RationalAngleData,
    rng_seed: int = 0,
    include_star: bool = True,
    visibility: str = "any",
    sampling: str = "stratified",
    max_retries: int = 10_000,
) -> CanonicalSet:
    """Choose the M canonical incident angles.

    All of the symmetric set Θ* is included (when ``include_star``). The
    remaining angles are random: with ``sampling='stratified'`` the circle
    is cut into equal arcs and one angle is drawn in the middle 70% of
    each; ``'uniform'`` draws anywhere. Draws closer than π/(4M) to an
    already chosen angle are rejected, and whole sets are redrawn until
    every corner j is seen by at least q_j - 1 angles.

    Stratification keeps the free angles spread out, which makes the
    canonical system far better conditioned than fully uniform draws.
    """
    p, M = params.p, params.M
    star = list(theta_star_set(p)) if include_star else []
    if M < len(star):
        raise InfeasibleCanonicalSetError(f"M={M} is smaller than |Θ*|={len(star)}")
    if sampling not in ("stratified", "uniform"):
        raise ValueError(f"unknown sampling {sampling!r}")
    need = np.array(params.q) - 1
    sep = math.pi / (4 * M)
    n_free = M - len(star)
    width = TWO_PI / max(n_free, 1)
    rng = np.random.default_rng(rng_seed)
    tries = 0
    while tries < max_retries:
        chosen = list(star)
        while len(chosen) < M and tries < max_retries:
            slot = len(chosen) - len(star)
            if sampling == "stratified":
                a = float((slot + rng.uniform(0.15, 0.85)) * width)
            else:
                a = float(rng.uniform(0.0, TWO_PI))
            if not chosen or circle_dist(np.array(chosen), a).min() >= sep:
                chosen.append(a)
            else:
                tries += 1
        if len(chosen) < M:
            break
        seen = sum(polygon.corner_visible(a, visibility).astype(int) for a in chosen)
        if np.all(seen >= need):
            free = sorted(chosen[len(star):])
            return CanonicalSet(tuple(star) + tuple(free), tuple(range(len(star))))
        tries += 1
    raise CanonicalSelectionError(f"no admissible canonical set after {max_retries} retries")
