"""Bernoulli and finite-order Markov measures on the full shift over {1..m}.

An order-``k`` measure is a stochastic kernel from ``k``-tuples to symbols plus a
stationary vector on ``k``-tuples (tuples indexed in base ``m``, first symbol most
significant).  Convex combinations built by :func:`mix` keep their components;
every functional that is affine in the measure (masses, entropy, Lyapunov
exponent) is evaluated component-wise.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ValidationError
from .interval_maps import BranchMap
from .symbolic import all_words, as_word, cylinder_pass

SMOOTHING = 1e-9


@dataclass(frozen=True, eq=False)
class MarkovMeasure:
    m: int
    order: int
    transition: np.ndarray | None = field(default=None, repr=False)
    stationary: np.ndarray | None = field(default=None, repr=False)
    atoms: tuple[tuple[float, "MarkovMeasure"], ...] = ()

    @property
    def is_mixture(self) -> bool:
        return bool(self.atoms)

    @property
    def bernoulli_vector(self) -> np.ndarray | None:
        if self.is_mixture or self.order != 0:
            return None
        return self.transition[0]

    def parameters(self) -> list[float]:
        """Flat parameter list (kernel rows, or weights followed by components)."""
        if self.is_mixture:
            out = []
            for w, comp in self.atoms:
                out.append(w)
                out.extend(comp.parameters())
            return out
        return [float(v) for v in self.transition.ravel()]

    def describe(self) -> dict:
        if self.is_mixture:
            return {"mix": [c.describe() for _, c in self.atoms], "weights": [w for w, _ in self.atoms]}
        if self.order == 0:
            return {"bernoulli": [float(v) for v in self.transition[0]]}
        return {"order": self.order, "transition": self.transition.tolist()}


def _lifted_matrix(P: np.ndarray, m: int, k: int) -> np.ndarray:
    n_states = m ** k
    Q = np.zeros((n_states, n_states))
    base = m ** (k - 1)
    for t in range(n_states):
        nxt = (t % base) * m + np.arange(m)
        Q[t, nxt] += P[t]
    return Q


def stationary_vector(P: np.ndarray, m: int, k: int) -> np.ndarray:
    """Stationary law on ``k``-tuples for the kernel ``P`` (shape ``(m^k, m)``)."""
    if k == 0:
        return np.ones(1)
    Q = _lifted_matrix(P, m, k)
    n_states = Q.shape[0]
    A = np.vstack([Q.T - np.eye(n_states), np.ones((1, n_states))])
    rhs = np.zeros(n_states + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def markov(transition, stationary=None, order: int | None = None) -> MarkovMeasure:
    """Order-``k`` Markov measure from a kernel of shape ``(m^k, m)``."""
    P = np.array(transition, dtype=float)
    if P.ndim != 2:
        raise ValidationError("transition must be a 2-D table")
    n_rows, m = P.shape
    if m < 2:
        raise ValidationError("alphabet needs at least two symbols")
    k = int(round(np.log(n_rows) / np.log(m))) if order is None else int(order)
    if m ** k != n_rows:
        raise ValidationError(f"transition has {n_rows} rows; expected m^k for m={m}")
    if np.any(P < 0):
        raise ValidationError("transition probabilities must be non-negative")
    rows = P.sum(axis=1)
    if np.any(np.abs(rows - 1.0) > 1e-9):
        raise ValidationError(f"transition rows must sum to 1 (got {rows})")
    P = P / rows[:, None]
    if stationary is None:
        pi = stationary_vector(P, m, k)
    else:
        pi = np.asarray(stationary, dtype=float)
        if pi.shape != (m ** k,) or abs(pi.sum() - 1.0) > 1e-10:
            raise ValidationError("stationary vector has wrong shape or does not sum to 1")
    if k > 0:
        drift = np.abs(pi @ _lifted_matrix(P, m, k) - pi).max()
        if drift > 1e-10:
            raise ValidationError(f"stationary vector is not invariant (drift {drift:.2e})")
    return MarkovMeasure(m=m, order=k, transition=P, stationary=pi)


def bernoulli(p) -> MarkovMeasure:
    """``bernoulli(0.3)`` is the two-symbol measure with P(symbol 1) = 0.3."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.size == 1:
        if not 0.0 <= p[0] <= 1.0:
            raise ValidationError(f"probability {p[0]} outside [0, 1]")
        p = np.array([p[0], 1.0 - p[0]])
    return markov(p[None, :], order=0)


def mix(mu: MarkovMeasure, nu: MarkovMeasure, s: float) -> MarkovMeasure:
    """Formal convex combination ``s mu + (1 - s) nu``."""
    if not 0.0 <= s <= 1.0:
        raise ValidationError(f"mixing weight {s} outside [0, 1]")
    if mu.m != nu.m:
        raise ValidationError("measures live on different alphabets")
    if s == 1.0:
        return mu
    if s == 0.0:
        return nu
    atoms = []
    for w, comp in ((s, mu), (1.0 - s, nu)):
        if comp.is_mixture:
            atoms.extend((w * cw, c) for cw, c in comp.atoms)
        else:
            atoms.append((w, comp))
    return MarkovMeasure(m=mu.m, order=max(mu.order, nu.order), atoms=tuple(atoms))


def measure_from_descriptor(desc, m: int | None = None) -> MarkovMeasure:
    if not isinstance(desc, dict):
        raise ValidationError(f"measure descriptor must be a mapping, got {desc!r}")
    if "bernoulli" in desc:
        mu = bernoulli(desc["bernoulli"])
    elif "transition" in desc:
        mu = markov(desc["transition"], order=desc.get("order"))
    elif "mix" in desc:
        comps = [measure_from_descriptor(c, m) for c in desc["mix"]]
        weights = desc.get("weights")
        if weights is None:
            weights = [1.0 / len(comps)] * len(comps)
        if len(weights) != len(comps) or abs(sum(weights) - 1.0) > 1e-9:
            raise ValidationError("mixture weights must match components and sum to 1")
        mu, acc = comps[0], weights[0]
        for w, c in zip(weights[1:], comps[1:]):
            mu = mix(mu, c, acc / (acc + w))
            acc += w
    else:
        raise ValidationError(f"unrecognized measure descriptor {desc!r}")
    if m is not None and mu.m != m:
        raise ValidationError(f"measure alphabet {mu.m} does not match map alphabet {m}")
    return mu


def entropy(mu: MarkovMeasure) -> float:
    """Metric entropy (nats): ``-sum_t pi(t) sum_a P(t, a) log P(t, a)``."""
    if mu.is_mixture:
        return float(sum(w * entropy(c) for w, c in mu.atoms))
    P = mu.transition
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log(P), 0.0)
    return float(-(mu.stationary @ terms.sum(axis=1)))


def _window_index(words: np.ndarray, m: int, k: int, start: int, stop: int) -> np.ndarray:
    """Base-m index of the length-k windows starting at columns ``start..stop-1``."""
    idx = np.zeros((words.shape[0], stop - start), dtype=np.int64)
    for t in range(k):
        idx = idx * m + (words[:, start + t:stop + t].astype(np.int64) - 1)
    return idx


def log_cylinder_masses(mu: MarkovMeasure, words) -> np.ndarray:
    """``log mu[w]`` for each row of ``words`` (``-inf`` for null cylinders)."""
    words = np.atleast_2d(np.asarray(words, dtype=np.int8))
    if mu.is_mixture:
        parts = np.array([np.log(w) + log_cylinder_masses(c, words) for w, c in mu.atoms])
        return logsumexp(parts, axis=0)
    nb, L = words.shape
    m, k = mu.m, mu.order
    if L == 0:
        return np.zeros(nb)
    with np.errstate(divide="ignore"):
        logP = np.log(mu.transition)
        logpi = np.log(mu.stationary)
    if L < k:
        marg = mu.stationary.reshape((m,) * k).sum(axis=tuple(range(L, k))).ravel()
        with np.errstate(divide="ignore"):
            return np.log(marg[_window_index(words, m, L, 0, 1)[:, 0]])
    if k == 0:
        return logP[0][words.astype(np.intp) - 1].sum(axis=1)
    out = logpi[_window_index(words, m, k, 0, 1)[:, 0]]
    if L > k:
        states = _window_index(words, m, k, 0, L - k)
        nxt = words[:, k:].astype(np.intp) - 1
        out = out + logP[states, nxt].sum(axis=1)
    return out


def cylinder_mass(mu: MarkovMeasure, w) -> float:
    """``mu[w]`` via the product formula (accumulated in log space)."""
    arr = as_word(w, mu.m)
    if arr.size < 1:
        raise ValidationError("cylinder mass needs a non-empty word")
    return float(np.exp(log_cylinder_masses(mu, arr[None, :])[0]))


def word_masses(mu: MarkovMeasure, n: int) -> np.ndarray:
    """Masses of all ``m^n`` words of length ``n`` in lexicographic order."""
    if mu.is_mixture:
        return sum(w * word_masses(c, n) for w, c in mu.atoms)
    m, k = mu.m, mu.order
    if n <= k:
        return mu.stationary.reshape((m,) * k).sum(axis=tuple(range(n, k))).ravel() if k else np.ones(1)
    masses = mu.stationary.copy()
    P = mu.transition
    base = m ** k
    for length in range(k, n):
        states = np.arange(m ** length) % base
        masses = (masses[:, None] * P[states]).ravel()
    return masses


def sample_words(mu: MarkovMeasure, n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent words of length ``n`` drawn from ``mu`` (rows of an int8 array)."""
    if mu.is_mixture:
        weights = np.array([w for w, _ in mu.atoms])
        pick = rng.choice(len(mu.atoms), size=count, p=weights / weights.sum())
        out = np.empty((count, n), dtype=np.int8)
        for c, (_, comp) in enumerate(mu.atoms):
            rows = np.flatnonzero(pick == c)
            if rows.size:
                out[rows] = sample_words(comp, n, rows.size, rng)
        return out
    m, k = mu.m, mu.order
    out = np.empty((count, n), dtype=np.int8)
    if k == 0:
        cum = np.cumsum(mu.transition[0])
        cum[-1] = 1.0
        chunk = max(1, 4_000_000 // max(n, 1))
        for r0 in range(0, count, chunk):
            u = rng.random((min(chunk, count - r0), n))
            out[r0:r0 + chunk] = np.searchsorted(cum, u, side="right") + 1
        return out
    cum_pi = np.cumsum(mu.stationary)
    cum_pi[-1] = 1.0
    head = np.searchsorted(cum_pi, rng.random(count), side="right")
    head = np.minimum(head, m ** k - 1)
    for t in range(k):
        out[:, t] = (head // m ** (k - 1 - t)) % m + 1
    if n <= k:
        return out[:, :n].copy()
    cumP = np.cumsum(mu.transition, axis=1)
    cumP[:, -1] = 1.0
    state = head
    base = m ** (k - 1)
    u_all = rng.random((count, n - k))
    for j in range(k, n):
        sym = (u_all[:, j - k][:, None] > cumP[state]).sum(axis=1)
        out[:, j] = sym + 1
        state = (state % base) * m + sym
    return out


def sample_word(mu: MarkovMeasure, n: int, seed: int) -> np.ndarray:
    """One word of length ``n``; identical for identical seeds."""
    if n < 1:
        raise ValidationError("sample length must be >= 1")
    return sample_words(mu, n, 1, np.random.default_rng(seed))[0]


def empirical_measure(w, order: int, m: int | None = None) -> MarkovMeasure:
    """Order-``k`` Markov measure fitted to the window counts of ``w`` (add-1e-9 smoothing).

    The stationary vector is the exact invariant law of the smoothed kernel,
    which differs from raw tuple frequencies only through boundary effects.
    """
    arr = as_word(w, m)
    if order < 0 or arr.size <= order + 1:
        raise ValidationError(f"word of length {arr.size} too short for order {order}")
    m = int(arr.max()) if m is None else m
    m = max(m, 2)
    windows = _window_index(arr[None, :], m, order + 1, 0, arr.size - order)[0]
    counts = np.bincount(windows, minlength=m ** (order + 1)).reshape(m ** order, m).astype(float)
    P = (counts + SMOOTHING) / (counts.sum(axis=1, keepdims=True) + m * SMOOTHING)
    return markov(P, order=order)


def ergodic_approximation(mu: MarkovMeasure, order: int, eps: float = SMOOTHING) -> MarkovMeasure:
    """Order-``k`` Markov measure matching the ``(k+1)``-cylinder marginals of ``mu``.

    With ``eps > 0`` the kernel is strictly positive, hence the result is ergodic
    and atomless; it is the constructive stand-in for approximating an invariant
    measure by ergodic ones.
    """
    m = mu.m
    joint = word_masses(mu, order + 1).reshape(m ** order, m)
    P = (joint + eps) / (joint.sum(axis=1, keepdims=True) + m * eps)
    return markov(P, order=order)


@dataclass(frozen=True)
class LyapunovTable:
    """Per-cylinder bounds of ``log|T'|`` at a fixed depth, reused across measures."""

    depth: int
    lower: np.ndarray
    middle: np.ndarray
    upper: np.ndarray

    def bracket(self, mu: MarkovMeasure) -> tuple[float, float, float]:
        w = word_masses(mu, self.depth)
        return float(w @ self.lower), float(w @ self.middle), float(w @ self.upper)


def lyapunov_table(map: BranchMap, depth: int) -> LyapunovTable:
    """Bracket ``log|T'|`` on every depth-``n`` cylinder by its values at both
    endpoints and the midpoint (|T'| is monotone on each branch of the builtin maps)."""
    if map.affine:
        depth = max(depth, 1)
        logs = np.log(map.slopes)
        words = all_words(map.m, 1)
        vals = logs[words[:, 0] - 1]
        return LyapunovTable(1, vals, vals, vals)
    if map.m ** depth > 2 ** 20:
        raise ValidationError(f"m^depth = {map.m ** depth} too large for exact Lyapunov sums")
    words = all_words(map.m, depth)
    res = cylinder_pass(map, words)
    first = words[:, 0].astype(np.intp) - 1
    vals = np.empty((3, len(words)))
    for i in range(map.m):
        sel = first == i
        for row, pts in enumerate((res.a[sel], res.center[sel], res.b[sel])):
            vals[row, sel] = np.log(np.abs(map.derivative[i](pts)))
    lo = np.minimum(vals[0], vals[2])
    hi = np.maximum(vals[0], vals[2])
    return LyapunovTable(depth, np.minimum(lo, vals[1]), vals[1], np.maximum(hi, vals[1]))


def lyapunov(map: BranchMap, mu: MarkovMeasure, depth: int = 10, tol: float | None = None):
    """Bracket ``(lower, upper)`` for the Lyapunov exponent ``int log|T'| o Pi dmu``.

    Zero width for affine maps.  If ``tol`` is given and the bracket is wider, a
    ``RuntimeWarning`` is emitted and the wide bracket is returned.
    """
    if mu.m != map.m:
        raise ValidationError("measure and map alphabets differ")
    lo, _, hi = lyapunov_table(map, depth).bracket(mu)
    if tol is not None and hi - lo > tol:
        warnings.warn(f"Lyapunov bracket width {hi - lo:.3g} exceeds tol {tol}; increase depth",
                      RuntimeWarning, stacklevel=2)
    return lo, hi
