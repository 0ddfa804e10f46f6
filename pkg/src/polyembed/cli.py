"""Command-line front end.

Subcommands write CSV files plus whitespace-separated ``.dat`` mirrors for
gnuplot, and a ``manifest.json`` recording parameters and PDE-solve counts.

Polygon files hold a header line ``N p`` followed by N lines ``x y q`` giving
each vertex (counter-clockwise) and the exterior angle π q / p at it.

Exit status: 0 on success, 1 when ``--strict`` is set and a numerical
quality warning was raised, 2 on configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import _backend
from .embedding import (
    ERROR_GRID_HEADER,
    TOL1,
    TOL2,
    Branch,
    EmbeddingContext,
    error_grid_rows,
    evaluate,
    l2_norms,
)
from .errors import CacheFormatError, InvalidGeometryError, PolyembedError
from .geometry import BUILTIN_SHAPES, builtin_polygon, rational_params, read_polygon, select_canonical_angles
from .herglotz import HERGLOTZ_HEADER, build_quadrature, fourier_bessel_kernel, herglotz_far_fields, herglotz_rows
from .solver import DEFAULT_DOFS, SOLVE_COUNTER, MFSSolver, load_solutions, regular_wave_field, save_solutions
from .tmatrix import DEFECT_THRESHOLD, assemble_t_matrix, write_tmatrix

logger = logging.getLogger("polyembed.cli")

EXIT_OK, EXIT_QUALITY, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    pass


class _WarningCounter(logging.Handler):
    def __init__(self):
        super().__init__(level=logging.WARNING)
        self.count = 0

    def emit(self, record):
        self.count += 1


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


def _ell_list(text: str) -> list[int]:
    """'0,1,5' or '0:5' (inclusive) into a list of orders."""
    text = str(text).strip()
    if ":" in text:
        a, b = text.split(":")
        return list(range(int(a), int(b) + 1))
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("problem")
    g.add_argument("--config", help="file of 'key = value' defaults; flags override")
    g.add_argument("--shape", choices=sorted(BUILTIN_SHAPES), default="square")
    g.add_argument("--side", type=float, default=1.0)
    g.add_argument("--polygon-file")
    g.add_argument("--k", type=float, default=1.0)
    g.add_argument("--dofs", type=int, default=DEFAULT_DOFS, help="charge sites per corner")
    g.add_argument("--tol1", type=float, default=TOL1)
    g.add_argument("--tol2", type=float, default=TOL2)
    g.add_argument("--taylor-order", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="out")
    g.add_argument("--strict", action="store_true", help="exit 1 on numerical-quality warnings")
    g.add_argument("--cache", help="MFS1 solution cache to read or create")
    g.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="polyembed", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common], help="far field of one plane wave")
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--grid", type=int, default=1000, help="number of observation angles")
    e = sub.add_parser("error-grid", parents=[common], help="embedding error over a (θ, α) grid")
    e.add_argument("--mode", choices=["naive", "taylor", "combined"], default="combined")
    e.add_argument("--grid", type=int, default=200)
    h = sub.add_parser("herglotz", parents=[common], help="regular-wavefunction far fields")
    h.add_argument("--ell", default="0:5")
    h.add_argument("--grid", type=int, default=720)
    t = sub.add_parser("tmatrix", parents=[common], help="T-matrix and energy defect")
    t.add_argument("--defect-threshold", type=float, default=DEFECT_THRESHOLD)
    return p


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(cfg) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        sub.set_defaults(**{k: _coerce(sub, k, v) for k, v in cfg.items()})
        args = parser.parse_args(argv)
    _validate(args)
    return args


def _coerce(sub, key, value):
    for a in sub._actions:
        if a.dest == key:
            if isinstance(a, argparse._StoreTrueAction):
                return value.lower() in ("1", "true", "yes", "on")
            if a.type is not None:
                try:
                    return a.type(value)
                except ValueError as exc:
                    raise ConfigError(f"bad value for {key}: {value!r}") from exc
            if a.choices and value not in a.choices:
                raise ConfigError(f"{key} must be one of {sorted(a.choices)}")
    return value


def _validate(args) -> None:
    for name in ("side", "k"):
        if not getattr(args, name) > 0:
            raise ConfigError(f"--{name} must be positive")
    if args.dofs < 4:
        raise ConfigError("--dofs must be at least 4")
    for name in ("tol1", "tol2"):
        if not 0 < getattr(args, name) < 1:
            raise ConfigError(f"--{name} must lie in (0, 1)")
    if args.taylor_order < 1:
        raise ConfigError("--taylor-order must be positive")
    if getattr(args, "grid", 1) < 1:
        raise ConfigError("--grid must be positive")


def _polygon(args):
    if args.polygon_file:
        return read_polygon(args.polygon_file)
    return builtin_polygon(args.shape, args.side)


def _write_table(path: Path, header: list[str], rows) -> None:
    """CSV file plus a gnuplot ``.dat`` mirror; blank line whenever column 2 changes."""
    rows = list(rows)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    with open(path.with_suffix(".dat"), "w") as fh:
        fh.write("# " + " ".join(header) + "\n")
        prev = None
        for r in rows:
            if len(header) > 3 and prev is not None and r[1] != prev:
                fh.write("\n")
            prev = r[1]
            fh.write(" ".join(str(v) for v in r) + "\n")


def _fmt(x: float) -> str:
    return repr(float(x))


def _cached_plane_waves(args, polygon, angles, manifest):
    """Plane-wave solves at ``angles``, read from ``--cache`` when it matches this run."""
    key = json.dumps(
        {"vertices": np.round(polygon.vertices, 14).tolist(), "k": args.k, "dofs": args.dofs,
         "angles": [round(float(a), 14) for a in angles]},
        sort_keys=True,
    )
    if args.cache and Path(args.cache).exists():
        sols, meta = load_solutions(args.cache)
        if meta == repr([("key", key)]):
            manifest["cache"] = "hit"
            return sols
        manifest["cache"] = "stale"
    solver = MFSSolver(polygon, args.k, args.dofs, strict=args.strict)
    sols = solver.solve_plane_waves(np.asarray(angles, dtype=float))
    if args.cache:
        save_solutions(args.cache, sols, {"key": key})
        manifest.setdefault("cache", "written")
    return sols


def _context(args, polygon, manifest) -> EmbeddingContext:
    params = rational_params(polygon, True)
    canonical = select_canonical_angles(polygon, params, args.seed)
    sols = _cached_plane_waves(args, polygon, canonical.angles, manifest)
    ctx = EmbeddingContext(polygon, params, canonical, sols, tol1=args.tol1, tol2=args.tol2,
                           taylor_order=args.taylor_order, max_deriv_order=max(12, args.taylor_order))
    manifest.update(p=params.p, q=list(params.q), M=params.M, cond=ctx.cond,
                    canonical_angles=list(canonical.angles),
                    canonical_residual_max=float(np.max(sols.residuals)))
    return ctx


def cmd_solve(args, out: Path, manifest: dict) -> None:
    polygon = _polygon(args)
    sol = _cached_plane_waves(args, polygon, (args.alpha,), manifest)[0]
    theta = 2 * np.pi * np.arange(args.grid) / args.grid
    D = sol.far_field(theta)
    _write_table(out / "far_field.csv", ["theta", "re", "im"],
                 ([_fmt(t), _fmt(d.real), _fmt(d.imag)] for t, d in zip(theta, D)))
    manifest.update(alpha=args.alpha, residual=sol.residual, max_misfit=sol.max_misfit)


def cmd_error_grid(args, out: Path, manifest: dict) -> None:
    polygon = _polygon(args)
    ctx = _context(args, polygon, manifest)
    n = args.grid
    g = 2 * np.pi * np.arange(n) / n
    ref_solver = MFSSolver(polygon, args.k, 2 * args.dofs)
    Dref = ref_solver.solve_plane_waves(g).far_field_matrix(g)  # [θ, α]
    TH, AL = np.meshgrid(g, g, indexing="ij")
    vals, br = evaluate(ctx, TH, AL, args.mode)
    with np.errstate(invalid="ignore"):
        rel = np.abs(vals - Dref) / l2_norms(Dref)[None, :]
    # α-major rows so each .dat block is one α slice
    _write_table(out / f"error_grid_{args.mode}.csv", ERROR_GRID_HEADER,
                 error_grid_rows(TH.T, AL.T, br.T, vals.T, rel.T))
    finite = rel[np.isfinite(rel)]
    manifest.update(mode=args.mode, grid=n, max_relerr=float(finite.max()) if finite.size else math.inf,
                    nonfinite=int((~np.isfinite(rel)).sum()),
                    branch_counts={Branch(b).name.lower(): int((br == b).sum()) for b in Branch})


def cmd_herglotz(args, out: Path, manifest: dict) -> None:
    polygon = _polygon(args)
    ells = _ell_list(args.ell)
    ctx = _context(args, polygon, manifest)
    quad = build_quadrature(args.k, max(abs(l) for l in ells), ctx.p)
    theta = 2 * np.pi * np.arange(args.grid) / args.grid
    F = herglotz_far_fields(ctx, [fourier_bessel_kernel(l) for l in ells], quad, theta)
    solves_embedding = SOLVE_COUNTER.count
    ref = MFSSolver(polygon, args.k, 2 * args.dofs).solve_many([regular_wave_field(l, args.k) for l in ells])
    Fd = ref.far_field_matrix(theta)
    errs = {}
    for j, l in enumerate(ells):
        rel = np.abs(F[:, j] - Fd[:, j]) / np.abs(Fd[:, j]).max()
        _write_table(out / f"herglotz_ell{l}.csv", HERGLOTZ_HEADER, herglotz_rows(theta, F[:, j], rel))
        errs[str(l)] = float(rel.max())
    manifest.update(ells=ells, n_quad=len(quad.nodes), quad_phase=quad.phase, relerr_linf=errs,
                    solves_embedding=solves_embedding)


def cmd_tmatrix(args, out: Path, manifest: dict) -> None:
    polygon = _polygon(args)
    ctx = _context(args, polygon, manifest)
    T = assemble_t_matrix(ctx, args.k, defect_threshold=args.defect_threshold)
    write_tmatrix(out / "tmatrix.txt", T)
    manifest.update(R=T.R, m_trunc=T.m_trunc, energy_defect=T.energy_defect, defect_flagged=T.flagged)
    if T.flagged:
        print(f"warning: energy defect {T.energy_defect:.3e} above {args.defect_threshold:.1e}", file=sys.stderr)


COMMANDS = {"solve": cmd_solve, "error-grid": cmd_error_grid, "herglotz": cmd_herglotz, "tmatrix": cmd_tmatrix}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # argparse usage errors
        return EXIT_CONFIG if exc.code else EXIT_OK

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    counter = _WarningCounter()
    root = logging.getLogger("polyembed")
    root.addHandler(counter)
    SOLVE_COUNTER.reset()
    out = Path(args.out)
    manifest = {"command": args.command, "backend": _backend.NAME, "k": args.k, "dofs": args.dofs,
                "tol1": args.tol1, "tol2": args.tol2, "taylor_order": args.taylor_order, "seed": args.seed,
                "shape": args.polygon_file or args.shape, "side": args.side}
    t0 = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, out, manifest)
    except (InvalidGeometryError, CacheFormatError, OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PolyembedError as exc:
        # numerical failure: canonical system singular, solver gate under --strict, ...
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_QUALITY
    finally:
        root.removeHandler(counter)
    manifest["solves"] = SOLVE_COUNTER.count
    manifest["warnings"] = counter.count
    manifest["elapsed_s"] = round(time.perf_counter() - t0, 3)
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    if args.strict and (counter.count or manifest.get("defect_flagged")):
        return EXIT_QUALITY
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
