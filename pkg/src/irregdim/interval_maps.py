"""Piecewise expanding interval maps with full branches.

A map ``T`` is given on ``m`` closed, non-overlapping subintervals ``I_1 < ... < I_m``
of ``[0, 1]``; each restriction ``T|I_i`` is a C^1 bijection onto ``[0, 1]`` with a
unique fixed point.  Fixed points where the derivative equals one are parabolic.

All branch functions are numpy-vectorized and accept arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConvergenceError, ValidationError

PARABOLIC_TOL = 1e-9
BISECTION_WIDTH = 1e-13
NEWTON_STEPS = 5

Func = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BranchMap:
    """Immutable description of a full-branch interval map.

    ``derivative`` returns the signed derivative of each branch; consumers use its
    absolute value.  ``parabolic_set`` holds branch indices (0-based) whose fixed
    point has ``|T'(x_j)| < 1 + 1e-9``.
    """

    kind: str
    params: dict
    domains: tuple[tuple[float, float], ...]
    forward: tuple[Func, ...] = field(repr=False)
    derivative: tuple[Func, ...] = field(repr=False)
    inverse: tuple[Func, ...] = field(repr=False)
    fixed_points: tuple[float, ...]
    parabolic_set: tuple[int, ...]
    affine: bool = False
    caveats: tuple[str, ...] = ()

    @property
    def m(self) -> int:
        return len(self.domains)

    @property
    def parabolic_points(self) -> tuple[float, ...]:
        return tuple(self.fixed_points[j] for j in self.parabolic_set)

    @property
    def slopes(self) -> np.ndarray:
        """Per-branch |T'| for affine maps."""
        if not self.affine:
            raise ValidationError("slopes are only defined for affine maps")
        return np.array([1.0 / (b - a) for a, b in self.domains])

    def branch_index(self, x: float) -> int | None:
        """0-based index of the branch containing ``x``; left branch wins on ties."""
        for i, (a, b) in enumerate(self.domains):
            if a <= x <= b:
                return i
        return None

    def __call__(self, x: float) -> float:
        i = self.branch_index(x)
        if i is None:
            raise ValidationError(f"x={x!r} lies outside every branch domain")
        return float(self.forward[i](np.asarray(x, dtype=float)))

    def abs_derivative(self, x: float) -> float:
        i = self.branch_index(x)
        if i is None:
            raise ValidationError(f"x={x!r} lies outside every branch domain")
        return abs(float(self.derivative[i](np.asarray(x, dtype=float))))

    def log_abs_derivative_sup(self, samples: int = 2001) -> float:
        """sup |log|T'|| over the branch domains, by dense sampling plus endpoints."""
        best = 0.0
        for (a, b), dfun in zip(self.domains, self.derivative):
            xs = np.linspace(a, b, samples)
            best = max(best, float(np.max(np.abs(np.log(np.abs(dfun(xs)))))))
        return best

    def describe(self) -> dict:
        """Serializable descriptor; round-trips through :func:`map_from_descriptor`."""
        out = {"kind": self.kind}
        out.update(self.params)
        if self.kind == "linear":
            out["domains"] = [[float(a), float(b)] for a, b in self.domains]
        return out


def _validate_domains(domains):
    if len(domains) < 2:
        raise ValidationError("a branch map needs at least two branches")
    doms = []
    for d in domains:
        try:
            a, b = (float(d[0]), float(d[1]))
        except (TypeError, IndexError, ValueError) as exc:
            raise ValidationError(f"bad domain {d!r}") from exc
        if not (0.0 <= a < b <= 1.0):
            raise ValidationError(f"domain [{a}, {b}] is degenerate or outside [0, 1]")
        doms.append((a, b))
    for (a0, b0), (a1, b1) in zip(doms, doms[1:]):
        if a1 < b0:
            raise ValidationError(f"domains [{a0}, {b0}] and [{a1}, {b1}] overlap or are unordered")
    return tuple(doms)


def _detect_parabolic(derivative, fixed_points):
    return tuple(
        j for j, (d, x) in enumerate(zip(derivative, fixed_points))
        if abs(float(d(np.asarray(x)))) < 1.0 + PARABOLIC_TOL
    )


def _expansion_caveats(domains, derivative, fixed_points, samples=401):
    notes = []
    for i, ((a, b), d, xf) in enumerate(zip(domains, derivative, fixed_points)):
        xs = np.linspace(a, b, samples)
        xs = xs[np.abs(xs - xf) > 1e-9]
        bad = xs[np.abs(d(xs)) <= 1.0 + PARABOLIC_TOL]
        if bad.size:
            notes.append(
                f"branch {i + 1}: |T'| <= 1 at non-fixed point x={bad[0]:.6g}; "
                "the uniform expansion condition away from fixed points fails"
            )
    return tuple(notes)


def _affine_branch(a, b):
    w = b - a
    return (
        lambda x: (np.asarray(x, dtype=float) - a) / w,
        lambda x: np.full(np.shape(x), 1.0 / w),
        lambda y: a + np.asarray(y, dtype=float) * w,
    )


def make_linear_map(domains: Sequence[Sequence[float]]) -> BranchMap:
    """Affine full-branch map with slope ``1/|I_i|`` on each domain.

    >>> make_linear_map([(0, .5), (.5, 1)]).fixed_points
    (0.0, 1.0)
    """
    doms = _validate_domains(domains)
    fwd, der, inv, fixed = [], [], [], []
    for a, b in doms:
        f, d, g = _affine_branch(a, b)
        fwd.append(f)
        der.append(d)
        inv.append(g)
        fixed.append(a / (1.0 - (b - a)))
    return BranchMap(
        kind="linear",
        params={},
        domains=doms,
        forward=tuple(fwd),
        derivative=tuple(der),
        inverse=tuple(inv),
        fixed_points=tuple(fixed),
        parabolic_set=_detect_parabolic(der, fixed),
        affine=True,
    )


def bracketed_inverse(f: Func, df: Func, lo: float, hi: float, y, increasing=True):
    """Solve ``f(x) = y`` on ``[lo, hi]`` for arrays of ``y``.

    Bisection down to width 1e-13, then at most five Newton steps kept inside
    the final bracket.
    """
    y = np.asarray(y, dtype=float)
    a = np.full(y.shape, float(lo))
    b = np.full(y.shape, float(hi))
    sign = 1.0 if increasing else -1.0
    n_iter = max(1, math.ceil(math.log2((hi - lo) / BISECTION_WIDTH)))
    for _ in range(n_iter):
        mid = 0.5 * (a + b)
        below = sign * (f(mid) - y) < 0
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    x = 0.5 * (a + b)
    for _ in range(NEWTON_STEPS):
        step = (f(x) - y) / df(x)
        x_new = np.clip(x - step, a, b)
        if np.all(np.abs(x_new - x) <= 4e-16 * np.maximum(np.abs(x), 1e-300)):
            x = x_new
            break
        x = x_new
    if not np.all(np.isfinite(x)):
        raise ConvergenceError("inverse branch root finding produced non-finite values")
    return x


def make_manneville_pomeau(s: float) -> BranchMap:
    """Manneville-Pomeau map ``x(1 + 2^s x^s)`` on [0, 1/2], ``2x - 1`` on [1/2, 1]."""
    s = float(s)
    if not s > 0:
        raise ValidationError(f"Manneville-Pomeau exponent must be positive, got {s}")
    c = 2.0 ** s

    def f1(x):
        x = np.asarray(x, dtype=float)
        return x * (1.0 + c * x ** s)

    def d1(x):
        x = np.asarray(x, dtype=float)
        return 1.0 + c * (1.0 + s) * x ** s

    def inv1(y):
        return bracketed_inverse(f1, d1, 0.0, 0.5, y)

    f2, d2, inv2 = _affine_branch(0.5, 1.0)
    der = (d1, d2)
    fixed = (0.0, 1.0)
    return BranchMap(
        kind="manneville_pomeau",
        params={"s": s},
        domains=((0.0, 0.5), (0.5, 1.0)),
        forward=(f1, f2),
        derivative=der,
        inverse=(inv1, inv2),
        fixed_points=fixed,
        parabolic_set=_detect_parabolic(der, fixed),
    )


def make_farey() -> BranchMap:
    """Farey map; carries a caveat because ``|T'(1)| = 1`` at a non-fixed point."""

    def f1(x):
        x = np.asarray(x, dtype=float)
        return x / (1.0 - x)

    def d1(x):
        x = np.asarray(x, dtype=float)
        return 1.0 / (1.0 - x) ** 2

    def inv1(y):
        y = np.asarray(y, dtype=float)
        return y / (1.0 + y)

    def f2(x):
        x = np.asarray(x, dtype=float)
        return (1.0 - x) / x

    def d2(x):
        x = np.asarray(x, dtype=float)
        return -1.0 / x ** 2

    def inv2(y):
        y = np.asarray(y, dtype=float)
        return 1.0 / (1.0 + y)

    domains = ((0.0, 0.5), (0.5, 1.0))
    der = (d1, d2)
    fixed = (0.0, (math.sqrt(5.0) - 1.0) / 2.0)
    return BranchMap(
        kind="farey",
        params={},
        domains=domains,
        forward=(f1, f2),
        derivative=der,
        inverse=(inv1, inv2),
        fixed_points=fixed,
        parabolic_set=_detect_parabolic(der, fixed),
        caveats=_expansion_caveats(domains, der, fixed),
    )


def doubling_map() -> BranchMap:
    return make_linear_map([(0.0, 0.5), (0.5, 1.0)])


def cantor_map() -> BranchMap:
    return make_linear_map([(0.0, 1.0 / 3.0), (2.0 / 3.0, 1.0)])


def map_from_descriptor(desc: dict) -> BranchMap:
    """Build a map from ``{"kind": ..., ...}``; kinds: linear, manneville_pomeau, farey,
    plus the shorthands doubling and cantor."""
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ValidationError(f"map descriptor needs a 'kind': {desc!r}")
    kind = desc["kind"]
    if kind == "linear":
        if "domains" not in desc:
            raise ValidationError("linear map descriptor needs 'domains'")
        return make_linear_map(desc["domains"])
    if kind == "manneville_pomeau":
        if "s" not in desc:
            raise ValidationError("manneville_pomeau descriptor needs 's'")
        return make_manneville_pomeau(desc["s"])
    if kind == "farey":
        return make_farey()
    if kind == "doubling":
        return doubling_map()
    if kind == "cantor":
        return cantor_map()
    raise ValidationError(f"unknown map kind {kind!r}")


@dataclass(frozen=True)
class ParabolicHull:
    """Convex hull of the Birkhoff limits at the parabolic fixed points."""

    generator_points: tuple[np.ndarray, ...]
    brackets: tuple[tuple[np.ndarray, np.ndarray], ...] = ()

    @property
    def empty(self) -> bool:
        return not self.generator_points

    @property
    def dim(self) -> int | None:
        return None if self.empty else len(self.generator_points[0])

    @property
    def hull(self):
        """``(lo, hi)`` for d = 1, an array of hull vertices for d >= 2, ``None`` if empty."""
        if self.empty:
            return None
        pts = np.array(self.generator_points)
        if pts.shape[1] == 1:
            return float(pts.min()), float(pts.max())
        return _hull_vertices(pts)

    def contains(self, alpha, tol: float = 1e-6) -> bool:
        if self.empty:
            return False
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        pts = np.array(self.generator_points)
        if pts.shape[1] == 1:
            lo, hi = self.hull
            return lo - tol <= alpha[0] <= hi + tol
        return _in_hull(pts, alpha, tol)


def _hull_vertices(pts):
    uniq = np.unique(pts, axis=0)
    if len(uniq) <= pts.shape[1]:
        return uniq
    from scipy.spatial import ConvexHull, QhullError

    try:
        return uniq[ConvexHull(uniq).vertices]
    except QhullError:
        return uniq


def _in_hull(pts, alpha, tol):
    from scipy.optimize import linprog

    k, d = pts.shape
    # find convex weights w with |pts^T w - alpha|_inf <= tol
    a_ub = np.vstack([pts.T, -pts.T])
    b_ub = np.concatenate([alpha + tol, -(alpha - tol)])
    res = linprog(
        np.zeros(k), A_ub=a_ub, b_ub=b_ub,
        A_eq=np.ones((1, k)), b_eq=[1.0], bounds=[(0, None)] * k, method="highs",
    )
    return bool(res.status == 0)


def parabolic_hull(map: BranchMap, potential, n_limit: int = 200, tol: float = 0.05) -> ParabolicHull:
    """Estimate ``lim phi_n(x_j)/n`` at every parabolic fixed point and take the hull.

    The fixed point of branch ``j`` codes as the constant word ``j^inf``.  Each limit
    is certified by the bracket ``max_n (phi_n - C - var_n)/n <= lim <= min_n (phi_n + C + var_n)/n``
    (sub-additivity of ``phi_n -+ C``); a bracket wider than ``tol`` at ``n_limit``
    raises :class:`ConvergenceError`.
    """
    if not map.parabolic_set:
        return ParabolicHull(())
    points, brackets = [], []
    extra = potential.lookahead if potential.lookahead is not None else 32
    C = np.asarray(potential.C, dtype=float)
    for j in map.parabolic_set:
        word = np.full((1, n_limit + extra), j + 1, dtype=np.int8)
        lower = np.full(potential.d, -np.inf)
        upper = np.full(potential.d, np.inf)
        last = None
        for n in range(1, n_limit + 1):
            val = potential.evaluate(word, n)[0]
            slack = C + potential.variation_bound(n)
            lower = np.maximum(lower, (val - slack) / n)
            upper = np.minimum(upper, (val + slack) / n)
            last = val / n
        if np.any(upper - lower > tol):
            raise ConvergenceError(
                f"parabolic limit at x={map.fixed_points[j]} not resolved: bracket width "
                f"{float(np.max(upper - lower)):.3g} > {tol}",
                bracket=(lower, upper),
            )
        points.append(np.clip(last, lower, upper))
        brackets.append((lower, upper))
    return ParabolicHull(tuple(points), tuple(brackets))
