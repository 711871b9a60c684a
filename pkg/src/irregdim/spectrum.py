"""Variational dimension formulas optimized over order-k Markov measures.

``dim Lambda_alpha`` is computed as the supremum of ``h(mu) / lambda(mu)`` over
invariant measures with ``Phi_*(mu) = alpha`` and ``lambda(mu) > 0``.  The
supremum over all invariant measures is approximated by order-``k`` Markov
kernels, parametrized by row-wise softmax logits, and searched with a
multi-start quadratic-penalty scheme (initial weight 10, doubled each round,
at most 30 rounds).  Values where ``alpha`` lies in the hull of the parabolic
Birkhoff limits take the dimension of the whole attractor.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import ConvergenceError, InfeasibleError, NumericError, ValidationError
from .interval_maps import BranchMap, ParabolicHull, parabolic_hull
from .measures import MarkovMeasure, entropy, lyapunov_table, word_masses
from .potentials import AlmostAdditivePotential, phi_star

LOGIT_BOUND = 30.0
LAMBDA_FLOOR = 1e-6
CONSTRAINT_TOL = 1e-6
PENALTY_START = 10.0
PENALTY_FACTOR = 2.0
PENALTY_ROUNDS = 30
DEFAULT_STARTS = 16
DEFAULT_ORDER = 1
DEFAULT_DEPTH = 10


@dataclass
class SpectrumPoint:
    """One value of the spectrum with its witness measure.

    ``dim_value`` is the variational value; for levels outside the parabolic hull
    it equals the Hausdorff dimension under the standing assumption that some
    measure with positive exponent nearly attains the attractor's dimension.
    """

    alpha: np.ndarray
    dim_value: float
    witness: MarkovMeasure | None
    status: str
    h: float = float("nan")
    lam: float = float("nan")
    phi: np.ndarray | None = None
    residual: float = float("nan")
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LPhi:
    """The set of attainable ``Phi_*`` values: an interval for d = 1, else hull vertices."""

    d: int
    lo: np.ndarray
    hi: np.ndarray
    vertices: np.ndarray | None = None

    def contains(self, alpha, tol: float = CONSTRAINT_TOL) -> bool:
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        if self.d == 1:
            return bool(self.lo[0] - tol <= alpha[0] <= self.hi[0] + tol)
        from .interval_maps import _in_hull

        return _in_hull(self.vertices, alpha, tol)

    def on_boundary(self, alpha, tol: float = CONSTRAINT_TOL) -> bool:
        if self.d != 1:
            return False
        a = float(np.atleast_1d(alpha)[0])
        return abs(a - self.lo[0]) <= tol or abs(a - self.hi[0]) <= tol


class _KernelProblem:
    """Fast evaluation of ``(h, lambda, Phi_*)`` from free logits of an order-k kernel."""

    def __init__(self, map: BranchMap, pot: AlmostAdditivePotential | None, k: int, depth: int):
        self.map = map
        self.pot = pot
        self.m = map.m
        self.k = int(k)
        self.rows = self.m ** self.k
        self.table = lyapunov_table(map, max(depth, self.k + 1) if not map.affine else 1)
        self.geometric = pot is not None and pot.density is None and (pot.descriptor or {}).get("kind") == "geometric"

    @property
    def size(self) -> int:
        return self.rows * (self.m - 1)

    def kernel(self, theta: np.ndarray) -> np.ndarray:
        logits = np.concatenate([theta.reshape(self.rows, self.m - 1), np.zeros((self.rows, 1))], axis=1)
        logits -= logits.max(axis=1, keepdims=True)
        P = np.exp(logits)
        return P / P.sum(axis=1, keepdims=True)

    def measure(self, theta: np.ndarray) -> MarkovMeasure:
        from .measures import stationary_vector

        P = self.kernel(theta)
        return MarkovMeasure(m=self.m, order=self.k, transition=P, stationary=stationary_vector(P, self.m, self.k))

    def values(self, mu: MarkovMeasure):
        h = entropy(mu)
        lam = float(word_masses(mu, self.table.depth) @ self.table.middle)
        if self.pot is None:
            phi = np.zeros(0)
        elif self.geometric:
            phi = np.array([lam])
        else:
            phi = np.asarray(phi_star(self.pot, mu), dtype=float)
        return h, lam, phi

    def theta_from_rows(self, rows: np.ndarray) -> np.ndarray:
        rows = np.clip(rows, 1e-300, None)
        th = np.log(rows[:, :-1]) - np.log(rows[:, -1:])
        return np.clip(th, -LOGIT_BOUND, LOGIT_BOUND).ravel()

    def starts(self, count: int, seed: int) -> list[np.ndarray]:
        rng = np.random.default_rng(seed)
        out = [np.zeros(self.size)]
        for _ in range(max(0, count - 1)):
            out.append(self.theta_from_rows(rng.dirichlet(np.ones(self.m), size=self.rows)))
        return out


def _ratio(h, lam):
    return h / max(lam, LAMBDA_FLOOR)


def _optimize_start(prob: _KernelProblem, theta0, alpha):
    bounds = [(-LOGIT_BOUND, LOGIT_BOUND)] * prob.size

    def objective(theta, weight):
        mu = prob.measure(theta)
        h, lam, phi = prob.values(mu)
        val = -_ratio(h, lam)
        if lam < LAMBDA_FLOOR:
            val += 1e3 * (LAMBDA_FLOOR - lam) / LAMBDA_FLOOR
        if alpha is not None:
            val += weight * float(np.sum((phi - alpha) ** 2))
        return val

    theta = np.asarray(theta0, dtype=float)
    weight = PENALTY_START
    rounds = 0
    for rounds in range(1, PENALTY_ROUNDS + 1):
        res = minimize(objective, theta, args=(weight,), method="L-BFGS-B", bounds=bounds,
                       options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 500})
        theta = res.x
        if alpha is None:
            break
        _, _, phi = prob.values(prob.measure(theta))
        if np.max(np.abs(phi - alpha)) <= CONSTRAINT_TOL:
            break
        weight *= PENALTY_FACTOR
    mu = prob.measure(theta)
    h, lam, phi = prob.values(mu)
    resid = float(np.max(np.abs(phi - alpha))) if alpha is not None else 0.0
    return theta, mu, h, lam, phi, resid, rounds


def _best(results):
    """Deterministic reduction: feasible first, then largest value, ties by kernel."""
    def key(r):
        theta, mu, h, lam, phi, resid, _ = r
        feasible = resid <= CONSTRAINT_TOL and lam >= LAMBDA_FLOOR
        return (not feasible, -round(_ratio(h, lam), 12), tuple(np.round(mu.transition.ravel(), 12)))
    return min(results, key=key)


def _extreme_phi(prob: _KernelProblem, sign: float, direction: np.ndarray, starts: int, seed: int) -> np.ndarray:
    bounds = [(-LOGIT_BOUND, LOGIT_BOUND)] * prob.size

    def objective(theta):
        _, _, phi = prob.values(prob.measure(theta))
        return sign * float(phi @ direction)

    best_val, best_phi = np.inf, None
    for th0 in prob.starts(starts, seed):
        res = minimize(objective, th0, method="L-BFGS-B", bounds=bounds, options={"ftol": 1e-15, "gtol": 1e-12})
        if not np.isfinite(res.fun):
            continue
        if res.fun < best_val:
            best_val = res.fun
            best_phi = prob.values(prob.measure(res.x))[2]
    if best_phi is None:
        raise NumericError("every optimizer start failed while bounding L_Phi")
    return best_phi


def compute_L_phi(map: BranchMap, pot: AlmostAdditivePotential, k: int = DEFAULT_ORDER,
                  starts: int = 4, seed: int = 0, directions: int = 16) -> LPhi:
    """Range of ``Phi_*`` over order-``k`` Markov measures.

    d = 1: the interval between the minimizing and maximizing kernels.
    d >= 2: hull of the maximizers of ``<Phi_*, u>`` over a grid of unit directions.
    """
    if k < 0:
        raise ValidationError("Markov order k must be >= 0")
    prob = _KernelProblem(map, pot, k, DEFAULT_DEPTH)
    if pot.d == 1:
        lo = _extreme_phi(prob, 1.0, np.ones(1), starts, seed)
        hi = _extreme_phi(prob, -1.0, np.ones(1), starts, seed)
        return LPhi(1, lo, hi)
    if pot.d == 2:
        angles = np.linspace(0, 2 * np.pi, directions, endpoint=False)
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    else:
        dirs = np.random.default_rng(seed).normal(size=(directions, pot.d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = np.array([_extreme_phi(prob, -1.0, u, starts, seed) for u in dirs])
    from .interval_maps import _hull_vertices

    verts = _hull_vertices(pts)
    return LPhi(pot.d, pts.min(axis=0), pts.max(axis=0), verts)


def _point_from(prob, results, alpha, status, diagnostics):
    theta, mu, h, lam, phi, resid, rounds = _best(results)
    if lam < LAMBDA_FLOOR:
        raise NumericError("all optimizer starts collapsed to lambda <= floor")
    diagnostics = dict(diagnostics, penalty_rounds=rounds, starts=len(results))
    if alpha is not None and resid > CONSTRAINT_TOL:
        diagnostics["constraint_unmet"] = True
    return SpectrumPoint(
        alpha=np.atleast_1d(alpha) if alpha is not None else np.zeros(0),
        dim_value=float(_ratio(h, lam)), witness=mu, status=status,
        h=h, lam=lam, phi=phi, residual=resid, diagnostics=diagnostics,
    )


def hyperbolic_dimension(map: BranchMap, k: int = DEFAULT_ORDER, starts: int = DEFAULT_STARTS,
                         seed: int = 0, depth: int = DEFAULT_DEPTH) -> SpectrumPoint:
    """``sup h/lambda`` over order-``k`` Markov measures with positive exponent."""
    prob = _KernelProblem(map, None, k, depth)
    results = [_optimize_start(prob, th0, None) for th0 in prob.starts(starts, seed)]
    return _point_from(prob, results, None, "interior", {})


def _safe_hull(map, pot) -> tuple[ParabolicHull | None, str | None]:
    try:
        return parabolic_hull(map, pot), None
    except ConvergenceError as exc:
        return None, str(exc)


def dimension_spectrum(map: BranchMap, pot: AlmostAdditivePotential, alpha, k: int = DEFAULT_ORDER,
                       starts: int = DEFAULT_STARTS, seed: int = 0, depth: int = DEFAULT_DEPTH,
                       L_phi: LPhi | None = None, hull: ParabolicHull | None = None) -> SpectrumPoint:
    """Maximize ``h/lambda`` subject to ``|Phi_*(mu) - alpha| <= 1e-6``."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    if alpha.shape != (pot.d,):
        raise ValidationError(f"alpha must have dimension {pot.d}")
    L_phi = L_phi if L_phi is not None else compute_L_phi(map, pot, k, seed=seed)
    if not L_phi.contains(alpha):
        return SpectrumPoint(alpha=alpha, dim_value=float("nan"), witness=None, status="infeasible",
                             diagnostics={"L_phi": (L_phi.lo.tolist(), L_phi.hi.tolist())})
    diag = {}
    if hull is None:
        hull, note = _safe_hull(map, pot)
        if note:
            diag["parabolic_hull"] = note
    if hull is not None and hull.contains(alpha):
        hyp = hyperbolic_dimension(map, k, starts, seed, depth)
        return SpectrumPoint(alpha=alpha, dim_value=hyp.dim_value, witness=hyp.witness,
                             status="in_parabolic_hull", h=hyp.h, lam=hyp.lam,
                             phi=None, residual=float("nan"), diagnostics=dict(diag, rule="attractor dimension"))
    prob = _KernelProblem(map, pot, k, depth)
    results = [_optimize_start(prob, th0, alpha) for th0 in prob.starts(starts, seed)]
    status = "endpoint" if L_phi.on_boundary(alpha) else "interior"
    return _point_from(prob, results, alpha, status, diag)


def spectrum_curve(map: BranchMap, pot: AlmostAdditivePotential, alphas, k: int = DEFAULT_ORDER,
                   starts: int = DEFAULT_STARTS, seed: int = 0, threads: int = 1,
                   depth: int = DEFAULT_DEPTH):
    """Evaluate the spectrum on a 1-D grid.

    Returns ``(points, flags)``.  Per-point failures are recorded with status
    ``"failed"`` instead of aborting.  ``flags["concave"]`` checks discrete second
    differences of the resolved interior values against a 1e-4 tolerance.
    """
    if pot.d != 1:
        raise ValidationError("spectrum_curve handles one-dimensional potentials")
    alphas = [float(a) for a in np.atleast_1d(alphas)]
    if not alphas:
        raise ValidationError("empty alpha grid")
    L_phi = compute_L_phi(map, pot, k, seed=seed)
    hull, note = _safe_hull(map, pot)

    def one(a):
        try:
            return dimension_spectrum(map, pot, a, k, starts, seed, depth, L_phi=L_phi,
                                      hull=hull if hull is not None else _empty_hull())
        except (NumericError, InfeasibleError) as exc:
            return SpectrumPoint(alpha=np.array([a]), dim_value=float("nan"), witness=None,
                                 status="failed", diagnostics={"error": str(exc)})

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            points = list(pool.map(one, alphas))
    else:
        points = [one(a) for a in alphas]
    flags = {"concave": True, "failed": sum(p.status == "failed" for p in points)}
    if note:
        flags["parabolic_hull"] = note
    interior = [p for p in points if p.status == "interior"]
    if len(interior) >= 3:
        xs = np.array([p.alpha[0] for p in interior])
        ys = np.array([p.dim_value for p in interior])
        for i in range(1, len(xs) - 1):
            t = (xs[i] - xs[i - 1]) / (xs[i + 1] - xs[i - 1])
            chord = (1 - t) * ys[i - 1] + t * ys[i + 1]
            if ys[i] < chord - 1e-4:
                flags["concave"] = False
    return points, flags


def _empty_hull():
    return ParabolicHull(())


SPECTRUM_COLUMNS = ["alpha", "dim", "status", "witness", "h", "lambda", "residual"]


def spectrum_csv(points) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SPECTRUM_COLUMNS)
    for p in points:
        alpha = ";".join(f"{a:.10g}" for a in np.atleast_1d(p.alpha))
        witness = ";".join(f"{v:.10g}" for v in p.witness.parameters()) if p.witness is not None else ""
        writer.writerow([alpha, _fmt(p.dim_value), p.status, witness, _fmt(p.h), _fmt(p.lam), _fmt(p.residual)])
    return buf.getvalue()


def _fmt(x) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.12g}"
