"""Words over {1..m}, the shift, cylinder intervals and the coding projection.

Words are 1-based symbol sequences.  Single words travel as tuples (or anything
:func:`as_word` accepts: digit strings, lists, arrays); batch routines take a 2-D
``int8`` array with one word per row.

Cylinder diameters are tracked in log space.  Endpoints are composed exactly
while the interval is wide relative to its position; after that only the
midpoint is mapped and the log-diameter is updated by the midpoint derivative,
which is second-order accurate in the width.  This keeps ``D_n`` meaningful far
below double-precision underflow.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EscapeError, NumericError, ValidationError
from .interval_maps import BranchMap

MAX_DEPTH = 100_000
SWITCH_RELATIVE_WIDTH = 1e-6
ENDPOINT_TOL = 1e-12

Word = tuple[int, ...]


def as_word(w, m: int | None = None) -> np.ndarray:
    """Normalize ``w`` to a 1-D int8 array of 1-based symbols, validating the range."""
    if isinstance(w, str):
        try:
            arr = np.array([int(c) for c in w], dtype=np.int8)
        except ValueError as exc:
            raise ValidationError(f"word string {w!r} must contain digits only") from exc
    else:
        arr = np.asarray(w, dtype=np.int64).astype(np.int8).reshape(-1)
    if arr.size and arr.min() < 1:
        raise ValidationError(f"symbols are 1-based; got {int(arr.min())}")
    if m is not None and arr.size and arr.max() > m:
        raise ValidationError(f"symbol {int(arr.max())} outside alphabet of size {m}")
    return arr


def word_str(w) -> str:
    return "".join(str(int(s)) for s in np.asarray(w).reshape(-1))


def parse_word(s: str, m: int | None = None) -> Word:
    return tuple(int(c) for c in as_word(s, m))


def shift(w) -> Word:
    return tuple(int(s) for s in np.asarray(w).reshape(-1)[1:])


def all_words(m: int, n: int) -> np.ndarray:
    """Every word of length ``n`` in lexicographic order, first symbol most significant."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.int8)
    return np.array(list(itertools.product(range(1, m + 1), repeat=n)), dtype=np.int8)


def word_index(words: np.ndarray, m: int) -> np.ndarray:
    """Base-m index of each row, consistent with :func:`all_words` ordering."""
    words = np.atleast_2d(words)
    idx = np.zeros(words.shape[0], dtype=np.int64)
    for col in range(words.shape[1]):
        idx = idx * m + (words[:, col].astype(np.int64) - 1)
    return idx


@dataclass(frozen=True)
class CylinderInterval:
    word: Word
    a: float
    b: float
    log_diameter: float

    @property
    def diameter(self) -> float:
        return float(np.exp(self.log_diameter))

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.a + self.b)

    @property
    def n(self) -> int:
        return len(self.word)

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.a - tol <= x <= self.b + tol


@dataclass
class PassResult:
    """Batch output of :func:`cylinder_pass` (arrays indexed by word)."""

    center: np.ndarray
    log_diameter: np.ndarray
    a: np.ndarray
    b: np.ndarray
    g_sum: np.ndarray | None


def _apply_branch(map: BranchMap, i: int, y: np.ndarray) -> np.ndarray:
    y = np.clip(y, 0.0, 1.0)
    out = map.inverse[i](y)
    if not np.all(np.isfinite(out)):
        raise NumericError(f"inverse branch {i + 1} returned non-finite values")
    return out


def cylinder_pass(map: BranchMap, words, g_terms: int | None = None) -> PassResult:
    """Compose inverse branches right-to-left over a batch of equal-length words.

    Returns the cylinder of each full word.  If ``g_terms`` is given, also returns
    ``sum_{j < g_terms} log|T'(mid I_{w_{j+1} ... w_L})|``, the finite-word value of the
    geometric potential sum, which uses the whole word as context.
    """
    words = np.atleast_2d(np.asarray(words, dtype=np.int8))
    nb, L = words.shape
    if L > MAX_DEPTH:
        raise ValidationError(f"cylinder depth {L} exceeds cap {MAX_DEPTH}")
    if L and (words.min() < 1 or words.max() > map.m):
        raise ValidationError("word symbols outside the map's alphabet")
    want_g = g_terms is not None
    g_sum = np.zeros(nb) if want_g else None

    if map.affine:
        widths = np.array([b - a for a, b in map.domains])
        lo = np.array([a for a, _ in map.domains])
        log_w = np.log(widths)
        cum = np.cumsum(log_w[words.astype(np.intp) - 1], axis=1) if L else np.zeros((nb, 0))
        log_d = cum[:, -1] if L else np.zeros(nb)
        # symbols past the point where the prefix width underflows cannot move the endpoints
        deep = np.flatnonzero(cum.max(axis=0) < -1100 * np.log(2)) if L else np.zeros(0, dtype=np.intp)
        K = int(deep[0]) + 1 if deep.size else L
        a = np.zeros(nb)
        b = np.ones(nb)
        for col in range(K - 1, -1, -1):
            sym = words[:, col].astype(np.intp) - 1
            a, b = lo[sym] + a * widths[sym], lo[sym] + b * widths[sym]
        if want_g:
            g_sum = -log_w[words[:, :g_terms].astype(np.intp) - 1].sum(axis=1)
        center = 0.5 * (a + b)
        half = 0.5 * np.exp(log_d)
        resolved = b > a
        return PassResult(center, log_d, np.where(resolved, a, center - half),
                          np.where(resolved, b, center + half), g_sum)

    a = np.zeros(nb)
    b = np.ones(nb)
    center = np.full(nb, 0.5)
    log_d = np.zeros(nb)
    exact = np.ones(nb, dtype=bool)
    for col in range(L - 1, -1, -1):
        sym = words[:, col]
        for i in range(map.m):
            sel = sym == i + 1
            if not sel.any():
                continue
            ex = sel & exact
            if ex.any():
                ya = _apply_branch(map, i, a[ex])
                yb = _apply_branch(map, i, b[ex])
                a[ex] = np.minimum(ya, yb)
                b[ex] = np.maximum(ya, yb)
                center[ex] = 0.5 * (a[ex] + b[ex])
                with np.errstate(divide="ignore"):
                    log_d[ex] = np.log(b[ex] - a[ex])
            lin = sel & ~exact
            if lin.any():
                c_new = _apply_branch(map, i, center[lin])
                deriv = np.abs(map.derivative[i](c_new))
                if np.any(deriv <= 0):
                    raise NumericError(f"non-positive derivative on branch {i + 1}")
                log_d[lin] -= np.log(deriv)
                center[lin] = c_new
            if want_g and col < g_terms:
                deriv = np.abs(map.derivative[i](center[sel]))
                if np.any(deriv <= 0):
                    raise NumericError(f"non-positive derivative on branch {i + 1}")
                g_sum[sel] += np.log(deriv)
        scale = np.maximum(np.abs(a), np.abs(b))
        switch = exact & ((b - a) < SWITCH_RELATIVE_WIDTH * scale)
        exact &= ~switch
    half = 0.5 * np.exp(log_d)
    a_out = np.where(exact, a, center - half)
    b_out = np.where(exact, b, center + half)
    return PassResult(center, log_d, a_out, b_out, g_sum)


def cylinder(map: BranchMap, w) -> CylinderInterval:
    """The interval ``I_w = T_{w_1} o ... o T_{w_n} [0, 1]``."""
    arr = as_word(w, map.m)
    res = cylinder_pass(map, arr[None, :])
    return CylinderInterval(tuple(int(s) for s in arr), float(res.a[0]), float(res.b[0]),
                            float(res.log_diameter[0]))


def project(map: BranchMap, w) -> float:
    """Midpoint of ``I_w``; within ``D_n/2`` of ``Pi(omega)`` for every extension ``omega``."""
    arr = as_word(w, map.m)
    return float(cylinder_pass(map, arr[None, :]).center[0])


def project_many(map: BranchMap, words) -> np.ndarray:
    return cylinder_pass(map, words).center


def lambda_tilde(map: BranchMap, w) -> float:
    """``-log D_n(w) / n``."""
    c = cylinder(map, w)
    return -c.log_diameter / c.n


def itinerary(map: BranchMap, x: float, n: int) -> Word:
    """First ``n`` symbols of the coding of ``x``; shared endpoints go to the left branch."""
    if not (-ENDPOINT_TOL <= x <= 1 + ENDPOINT_TOL):
        raise ValidationError(f"x={x} outside [0, 1]")
    out = []
    y = min(max(float(x), 0.0), 1.0)
    for k in range(n):
        i = map.branch_index(y)
        if i is None:
            raise EscapeError(f"orbit of x={x} leaves the branch domains at time {k + 1}", time=k + 1)
        out.append(i + 1)
        y = float(map.forward[i](np.asarray(y)))
        y = min(max(y, 0.0), 1.0)
    return tuple(out)


def conjugacy_residual(map: BranchMap, w) -> float:
    """``|Pi(sigma w) - T(Pi(w))|`` on finite words; expected to be at most ``D_{n-1}``."""
    arr = as_word(w, map.m)
    if arr.size < 2:
        raise ValidationError("conjugacy residual needs a word of length >= 2")
    x = project(map, arr)
    i = int(arr[0]) - 1
    tx = float(map.forward[i](np.asarray(x)))
    return abs(project(map, arr[1:]) - tx)


def cylinders_csv(cyls: Iterable[CylinderInterval]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["word", "a", "b", "diameter", "log_diameter"])
    for c in cyls:
        writer.writerow([word_str(c.word), repr(c.a), repr(c.b), repr(c.diameter), repr(c.log_diameter)])
    return buf.getvalue()


def max_diameters(map: BranchMap, depths: Sequence[int]) -> np.ndarray:
    """``max_{|w| = n} D_n`` for each ``n`` by enumeration (keep ``m^n`` small)."""
    return np.array([np.exp(cylinder_pass(map, all_words(map.m, n)).log_diameter.max()) for n in depths])
