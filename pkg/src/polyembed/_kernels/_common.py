"""Constants and sizing rules shared by both kernel backends."""

import math

EULER_GAMMA = 0.57721566490153286061
# Above this argument J0, J1, Y0, Y1 come from the Hankel asymptotic series.
ASYMPTOTIC_X = 25.0
RESCALE_AT = 1e250
RESCALE_BY = 1e-250


def miller_start(nmax: int, x: float) -> int:
    """Even starting order for Miller's downward recurrence."""
    n0 = max(nmax, int(math.ceil(x)))
    n = n0 + 20 + int(2.0 * math.sqrt(40.0 * (n0 + 1)))
    return n + (n % 2)
