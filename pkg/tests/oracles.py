"""Independent reference computations used by the tests.

These avoid the package's own machinery: plain loops, exact binomial sums with
``math.comb`` and textbook closed forms.
"""

import math

from scipy.optimize import brentq


def binary_entropy_bits(a):
    if a in (0.0, 1.0):
        return 0.0
    return -(a * math.log(a) + (1 - a) * math.log(1 - a)) / math.log(2)


def bernoulli_grid_dimension(alpha, slopes=(2.0, 2.0), step=1e-4):
    """Best ``h/lambda`` over Bernoulli(p) with ``p`` on a grid, subject to the digit
    frequency ``p`` equalling ``alpha`` to within half a grid step."""
    best = -math.inf
    k = 0
    while k * step <= 1 + 1e-12:
        p = k * step
        if abs(p - alpha) <= step / 2 + 1e-12:
            h = 0.0 if p in (0.0, 1.0) else -(p * math.log(p) + (1 - p) * math.log(1 - p))
            lam = p * math.log(slopes[0]) + (1 - p) * math.log(slopes[1])
            best = max(best, h / lam)
        k += 1
    return best


def moran_root(contractions):
    """Root ``s`` of ``sum r_i^s = 1``."""
    return brentq(lambda s: sum(r ** s for r in contractions) - 1.0, 1e-9, 10.0)


def typical_mass(p, l, eps, slopes=(2.0, 2.0)):
    """Bernoulli(p) mass of the non-constant words of length ``l`` whose digit
    frequency, average log-slope and ``-log mass / l`` are each within ``eps`` of the limits."""
    q = 1 - p
    h = -(p * math.log(p) + q * math.log(q))
    lam = p * math.log(slopes[0]) + q * math.log(slopes[1])
    total = 0.0
    for k in range(1, l):
        freq = k / l
        ag = (k * math.log(slopes[0]) + (l - k) * math.log(slopes[1])) / l
        info = -(k * math.log(p) + (l - k) * math.log(q)) / l
        if abs(freq - p) < eps and abs(ag - lam) < eps and abs(info - h) < eps:
            total += math.comb(l, k) * p ** k * q ** (l - k)
    return total
