"""The numba and numpy kernel backends must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest

from polyembed import _backend
from polyembed.solver import far_field_weights

nb = _backend.get("numba")
npk = _backend.get("numpy")


def _close(a, b, scale, tol):
    # exact agreement where the scale underflows to zero
    return np.all(np.abs(a - b) <= tol * scale)


def test_jy_tables_agree():
    x = np.concatenate([np.geomspace(1e-3, 1e4, 400), [24.999, 25.0, 25.001]])
    Ja, Ya = nb.jy_table(80, x)
    Jb, Yb = npk.jy_table(80, x)
    # pointwise below the turning point, against the modulus above it
    below = x[:, None] < np.arange(81)
    mod = np.hypot(Jb, Yb)
    assert _close(Ja, Jb, np.where(below, np.abs(Jb), mod), 1e-13)
    fin = np.isfinite(Yb)
    np.testing.assert_array_equal(np.isfinite(Ya), fin)
    assert _close(Ya[fin], Yb[fin], np.where(below, np.abs(Yb), mod)[fin], 1e-13)
    assert np.all(Ya[~fin] == -np.inf)


def test_h_tables_agree(rng):
    ys = rng.normal(size=(30, 2))
    n0 = rng.integers(-3, 4, 30)
    a, b = nb.h_table(1.7, ys, n0, 12), npk.h_table(1.7, ys, n0, 12)
    # per polynomial, relative to its largest coefficient
    assert _close(a, b, np.abs(b).max(axis=2, keepdims=True), 1e-13)


def test_ff_sums_agree(square_solver, rng):
    sols = square_solver.solve_plane_waves([0.3, 1.0, 2.0])
    fw = far_field_weights(sols.source_points, sols.orders, sols.coefficients, 1.0, 12)
    th = rng.uniform(0, 2 * np.pi, 200)
    a = nb.ff_sum(th, 1.0, fw.centers, fw.lo, fw.hi, fw.W)
    b = npk.ff_sum(th, 1.0, fw.centers, fw.lo, fw.hi, fw.W)
    # large coefficients cancel, so compare against each derivative order's size
    scale = np.abs(b).max(axis=(0, 1))
    assert np.all(np.abs(a - b).max(axis=(0, 1)) <= 1e-9 * scale)


def _backend_name(value):
    env = dict(os.environ, POLYEMBED_BACKEND=value)
    return subprocess.run(
        [sys.executable, "-c", "from polyembed import _backend; print(_backend.NAME)"],
        env=env, capture_output=True, text=True,
    )


@pytest.mark.parametrize("value", ["numpy", "numba"])
def test_env_selects_backend(value):
    out = _backend_name(value)
    assert out.returncode == 0 and out.stdout.strip() == value


def test_env_rejects_unknown():
    out = _backend_name("fortran")
    assert out.returncode != 0 and "POLYEMBED_BACKEND" in out.stderr
