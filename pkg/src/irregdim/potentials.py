"""Almost additive potentials on the full shift, evaluated on finite words.

A potential is a sequence ``phi_n`` with

    -C + phi_n(w) + phi_p(sigma^n w) <= phi_{n+p}(w) <= phi_n(w) + phi_p(sigma^n w) + C.

Every potential here is evaluated on finite words.  ``evaluate(words, n)``
returns ``phi_n`` using the first ``n`` symbols plus whatever trailing symbols
the word provides as context; symbols that are needed but missing are replaced
by a midrange completion.  ``variation_bound(n)`` bounds the resulting error,
i.e. ``||phi_n||_n``.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericError, ValidationError
from .interval_maps import BranchMap
from .measures import MarkovMeasure, log_cylinder_masses, sample_words, word_masses
from .symbolic import all_words, as_word, cylinder_pass, word_index

EXACT_WORD_LIMIT = 2 ** 16
_CHUNK = 1 << 20


@dataclass(frozen=True, eq=False)
class AlmostAdditivePotential:
    """``phi_n`` with almost-additivity constant ``C`` (one entry per coordinate).

    ``lookahead`` is the number of symbols beyond ``n`` that ``phi_n`` depends on
    (``None`` when the dependence is infinite, as for the geometric potential).
    ``density`` is ``(r, table)`` with ``table`` of shape ``(m^r, d)`` such that
    ``Phi_*(mu) = sum_v mu[v] table[v]`` exactly; set when such a table exists.
    """

    d: int
    C: np.ndarray
    evaluator: Callable[[np.ndarray, int], np.ndarray] = field(repr=False)
    variation_bound: Callable[[int], float] = field(repr=False)
    lookahead: int | None
    name: str = "potential"
    m: int | None = None
    density: tuple[int, np.ndarray] | None = field(default=None, repr=False)
    descriptor: dict | None = None

    def evaluate(self, words, n: int | None = None) -> np.ndarray:
        """``phi_n`` for each row of ``words`` (shape ``(B, d)``); ``n`` defaults to the word length."""
        words = np.atleast_2d(np.asarray(words, dtype=np.int8))
        n = words.shape[1] if n is None else int(n)
        if n < 1 or n > words.shape[1]:
            raise ValidationError(f"need 1 <= n <= word length, got n={n}, length={words.shape[1]}")
        return np.asarray(self.evaluator(words, n), dtype=float).reshape(words.shape[0], self.d)


def _as_vector_table(f, m: int, r: int, d: int | None):
    words = all_words(m, r)
    if callable(f):
        rows = [np.atleast_1d(np.asarray(f(tuple(int(s) for s in w)), dtype=float)) for w in words]
        table = np.array(rows)
    elif isinstance(f, dict):
        rows = []
        for w in words:
            key = tuple(int(s) for s in w)
            val = f.get(key, f.get("".join(map(str, key)), 0.0))
            rows.append(np.atleast_1d(np.asarray(val, dtype=float)))
        width = max(len(v) for v in rows)
        table = np.array([np.broadcast_to(v, (width,)) for v in rows])
    else:
        table = np.asarray(f, dtype=float).reshape(m ** r, -1)
    if d is not None and table.shape[1] != d:
        table = np.broadcast_to(table, (m ** r, d)).copy()
    return table


def _partial_tables(table: np.ndarray, m: int, r: int):
    """For t < r: midrange value, and per-coordinate range, of f over completions of each t-prefix."""
    d = table.shape[1]
    mids, ranges = {}, {}
    full = table.reshape((m ** r, d))
    for t in range(1, r):
        grouped = full.reshape(m ** t, m ** (r - t), d)
        hi, lo = grouped.max(axis=1), grouped.min(axis=1)
        mids[t] = 0.5 * (hi + lo)
        ranges[t] = hi - lo
    return mids, ranges


def _exact_finite_range_variation(table: np.ndarray, m: int, r: int) -> float:
    """sup over a shared tail p (r-1 symbols) and two completions u, v (r-1 symbols) of
    |sum_t f(window_t(pu)) - f(window_t(pv))| -- the trailing windows are the only
    terms of phi_n that two words with the same n-prefix can disagree on."""
    if r == 1:
        return 0.0
    k = r - 1
    best = 0.0
    tails = all_words(m, k)
    comps = all_words(m, k)
    for p in tails:
        sums = []
        for u in comps:
            ext = np.concatenate([p, u])
            idx = [word_index(ext[t:t + r][None, :], m)[0] for t in range(k)]
            sums.append(table[idx].sum(axis=0))
        sums = np.array(sums)
        diff = sums[:, None, :] - sums[None, :, :]
        best = max(best, float(np.sqrt((diff ** 2).sum(axis=2)).max()))
    return best


def _additive_evaluator(table: np.ndarray, m: int, r: int):
    mids, _ = _partial_tables(table, m, r)
    d = table.shape[1]

    def evaluate(words: np.ndarray, n: int) -> np.ndarray:
        nb, L = words.shape
        total = np.zeros((nb, d))
        full_stop = min(n, L - r + 1)
        step = max(1, _CHUNK // max(nb, 1))
        for j0 in range(0, max(full_stop, 0), step):
            j1 = min(full_stop, j0 + step)
            idx = np.zeros((nb, j1 - j0), dtype=np.int64)
            for t in range(r):
                idx = idx * m + (words[:, j0 + t:j1 + t].astype(np.int64) - 1)
            total += table[idx].sum(axis=1)
        for j in range(max(full_stop, 0), n):
            t = L - j
            total += mids[t][word_index(words[:, j:L], m)]
        return total

    return evaluate


def from_additive(f, r: int, m: int = 2, d: int | None = None, name: str = "additive") -> AlmostAdditivePotential:
    """Birkhoff sums ``phi_n = sum_{j<n} f o sigma^j`` of a range-``r`` observable.

    ``f`` is a callable on ``r``-tuples, a ``{tuple: value}`` mapping (missing keys are
    zero), or an array of shape ``(m^r, d)``.  ``C = 0``; the variation
    ``||phi_n||_n`` is constant in ``n`` and computed exactly by enumeration.
    """
    if int(r) != r or r <= 0:
        raise ValidationError(f"range r must be a positive integer, got {r}")
    r = int(r)
    table = _as_vector_table(f, m, r, d)
    d = table.shape[1]
    var = _exact_finite_range_variation(table, m, r)
    return AlmostAdditivePotential(
        d=d,
        C=np.zeros(d),
        evaluator=_additive_evaluator(table, m, r),
        variation_bound=lambda n, _v=var: _v,
        lookahead=r - 1,
        name=name,
        m=m,
        density=(r, table),
    )


def indicator(pattern, m: int = 2) -> AlmostAdditivePotential:
    """Frequency of the word ``pattern``: ``f = 1_[pattern]``."""
    pat = tuple(int(s) for s in as_word(pattern, m))
    table = (word_index(all_words(m, len(pat)), m) == word_index(np.array([pat]), m)[0]).astype(float)
    pot = from_additive(table[:, None], len(pat), m, name=f"indicator[{''.join(map(str, pat))}]")
    return _with_descriptor(pot, {"kind": "indicator", "pattern": "".join(map(str, pat))})


def constant(c: float, m: int = 2) -> AlmostAdditivePotential:
    pot = from_additive(np.full((m, 1), float(c)), 1, m, name=f"constant[{c}]")
    return _with_descriptor(pot, {"kind": "constant", "c": float(c)})


def terminal_bonus(pattern, bonus: float = 1.0, m: int = 2) -> AlmostAdditivePotential:
    """``phi_n = S_n 1_[pattern] + bonus * 1[w_n = first symbol of pattern]``.

    Almost additive but not additive: the defect ``phi_{n+p} - phi_n - phi_p o sigma^n``
    equals ``-bonus * 1[w_n = a]``, so ``C = |bonus|``.  ``Phi_*`` is the pattern frequency.
    """
    base = indicator(pattern, m)
    a = int(as_word(pattern, m)[0])
    b = float(bonus)

    def evaluate(words, n):
        return base.evaluator(words, n) + b * (words[:, n - 1] == a)[:, None]

    return AlmostAdditivePotential(
        d=1,
        C=np.array([abs(b)]),
        evaluator=evaluate,
        variation_bound=base.variation_bound,
        lookahead=base.lookahead,
        name=f"terminal_bonus[{pattern},{b}]",
        m=m,
        density=base.density,
        descriptor={"kind": "terminal_bonus", "pattern": str(pattern), "bonus": b},
    )


def _with_descriptor(pot, desc):
    return AlmostAdditivePotential(
        d=pot.d, C=pot.C, evaluator=pot.evaluator, variation_bound=pot.variation_bound,
        lookahead=pot.lookahead, name=pot.name, m=pot.m, density=pot.density, descriptor=desc,
    )


def _cylinder_oscillations(map: BranchMap, depth: int) -> np.ndarray:
    """``max_{|v| = k} osc(log|T'|, I_v)`` for k = 1..depth (endpoint/midpoint evaluation)."""
    out = []
    for k in range(1, depth + 1):
        words = all_words(map.m, k)
        res = cylinder_pass(map, words)
        first = words[:, 0].astype(np.intp) - 1
        osc = np.zeros(len(words))
        for i in range(map.m):
            sel = first == i
            vals = np.log(np.abs(np.array([map.derivative[i](p) for p in (res.a[sel], res.center[sel], res.b[sel])])))
            osc[sel] = vals.max(axis=0) - vals.min(axis=0)
        out.append(osc.max())
    return np.maximum.accumulate(np.array(out)[::-1])[::-1]


def g_potential(map: BranchMap, osc_depth: int = 10) -> AlmostAdditivePotential:
    """The geometric potential ``g(omega) = log|T'(Pi omega)|`` as Birkhoff sums.

    ``g`` at position ``j`` is evaluated at the midpoint of the cylinder of the
    remaining suffix, so ``A_n g = (1/n) phi_n`` is the finite-word expansion rate
    (``log 2`` for the doubling map).  The variation bound is
    ``sum_{k <= n} max_{|v| = k} osc(log|T'|, I_v)`` with the oscillation at depths
    beyond ``osc_depth`` bounded by its value at ``osc_depth``.
    """
    if map.affine:
        var = lambda n: 0.0  # noqa: E731
    else:
        osc_cache = functools.lru_cache(maxsize=1)(lambda: _cylinder_oscillations(map, osc_depth))

        def var(n):
            osc = osc_cache()
            k = min(n, len(osc))
            return float(osc[:k].sum() + max(0, n - len(osc)) * osc[-1])

    def evaluate(words, n):
        return cylinder_pass(map, words, g_terms=n).g_sum[:, None]

    return AlmostAdditivePotential(
        d=1, C=np.zeros(1), evaluator=evaluate, variation_bound=var, lookahead=None,
        name=f"geometric[{map.kind}]", m=map.m, descriptor={"kind": "geometric"},
    )


def birkhoff_average(pot: AlmostAdditivePotential, w) -> np.ndarray:
    """``phi_n(w) / n`` with ``n = |w|``; accurate to ``pot.variation_bound(n) / n``."""
    arr = as_word(w, pot.m)
    if arr.size < 1:
        raise ValidationError("Birkhoff average needs a non-empty word")
    return pot.evaluate(arr[None, :])[0] / arr.size


def A_n_g(map: BranchMap, words) -> np.ndarray:
    """Finite-word ``A_n g`` for each row of ``words``."""
    words = np.atleast_2d(words)
    if map.affine:
        return np.log(map.slopes)[words.astype(np.intp) - 1].mean(axis=1)
    return cylinder_pass(map, words, g_terms=words.shape[1]).g_sum / words.shape[1]


def appro_gap(map: BranchMap, words) -> np.ndarray:
    """``|lambda~_n - A_n g|`` per word: the distance between the cylinder shrinking
    rate ``-log D_n / n`` and the Birkhoff average of ``g``."""
    words = np.atleast_2d(words)
    n = words.shape[1]
    res = cylinder_pass(map, words, g_terms=n)
    return np.abs(-res.log_diameter / n - res.g_sum / n)


def hyperbolic_prefix(map: BranchMap, w, c: float) -> bool:
    """Threshold proxy for membership in the hyperbolic part: ``A_n g(w) > c``.

    Membership itself is a liminf condition on infinite words and cannot be
    decided from a prefix; this is only an approximation for a chosen ``c > 0``.
    """
    if c <= 0:
        raise ValidationError("threshold c must be positive")
    return bool(A_n_g(map, as_word(w, map.m)[None, :])[0] > c)


@dataclass(frozen=True)
class VariationNorm:
    """Sampled lower bound and analytic upper bound for ``||Phi||_n``."""

    n: int
    lower: float
    upper: float
    exhausted: bool

    @property
    def exact(self) -> bool:
        return self.upper - self.lower <= 1e-12


def variation_norm(pot: AlmostAdditivePotential, n: int, budget: int = 2000, seed: int = 0,
                   extension: int = 24, tol: float = 1e-9) -> VariationNorm:
    """``sup |phi_n(omega) - phi_n(tau)|`` over pairs sharing their first ``n`` symbols.

    Finite-range potentials: all completions of the lookahead are enumerated for
    each sampled prefix, and the analytic bound is exact.  Infinite-range
    potentials: prefixes are paired with extremal (constant) and random
    extensions of length ``extension``.  ``exhausted`` is set when the sampled
    bound is still more than ``tol`` below the analytic one after ``budget`` prefixes.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    m = pot.m or 2
    rng = np.random.default_rng(seed)
    upper = float(pot.variation_bound(n))
    lower = 0.0
    if pot.lookahead == 0:
        return VariationNorm(n, 0.0, upper, upper > tol)
    if pot.lookahead is not None:
        comps = all_words(m, pot.lookahead)
        per_batch = max(1, 4096 // len(comps))
        done = 0
        while done < budget and upper - lower > tol:
            nb = min(per_batch, budget - done)
            prefixes = rng.integers(1, m + 1, size=(nb, n), dtype=np.int8)
            words = np.concatenate([np.repeat(prefixes, len(comps), axis=0),
                                    np.tile(comps, (nb, 1))], axis=1)
            vals = pot.evaluate(words, n).reshape(nb, len(comps), pot.d)
            diff = vals[:, :, None, :] - vals[:, None, :, :]
            lower = max(lower, float(np.sqrt((diff ** 2).sum(axis=3)).max()))
            done += nb
        return VariationNorm(n, lower, upper, upper - lower > tol)
    ext_const = [np.full(extension, s, dtype=np.int8) for s in range(1, m + 1)]
    per_batch = 256
    done = 0
    while done < budget:
        nb = min(per_batch, budget - done)
        prefixes = rng.integers(1, m + 1, size=(nb, n), dtype=np.int8)
        exts = ext_const + [rng.integers(1, m + 1, size=extension, dtype=np.int8) for _ in range(2)]
        vals = np.stack([pot.evaluate(np.concatenate([prefixes, np.tile(e, (nb, 1))], axis=1), n)
                         for e in exts], axis=1)
        diff = vals[:, :, None, :] - vals[:, None, :, :]
        lower = max(lower, float(np.sqrt((diff ** 2).sum(axis=3)).max()))
        done += nb
    return VariationNorm(n, lower, max(upper, lower), upper - lower > tol)


def _integral_phi_m(pot: AlmostAdditivePotential, mu: MarkovMeasure, m_len: int, samples: int, rng):
    """``int phi_m dmu`` exactly over cylinders of length ``m + lookahead`` when feasible,
    otherwise by stratified Monte Carlo (strata = first symbol)."""
    extra = pot.lookahead if pot.lookahead is not None else 16
    L = m_len + extra
    if mu.m ** L <= EXACT_WORD_LIMIT:
        words = all_words(mu.m, L)
        weights = word_masses(mu, L)
        keep = weights > 0
        vals = pot.evaluate(words[keep], m_len)
        return weights[keep] @ vals, pot.variation_bound(m_len) if pot.lookahead is None else 0.0
    words = sample_words(mu, L, samples, rng)
    first_mass = word_masses(mu, 1)
    vals = pot.evaluate(words, m_len)
    total = np.zeros(pot.d)
    for a in range(mu.m):
        sel = words[:, 0] == a + 1
        if sel.any() and first_mass[a] > 0:
            total += first_mass[a] * vals[sel].mean(axis=0)
    return total, pot.variation_bound(m_len) if pot.lookahead is None else 0.0


def phi_star_bracket(pot: AlmostAdditivePotential, mu: MarkovMeasure, n_max: int = 12,
                     samples: int = 4000, seed: int = 0, tol: float = 1e-9):
    """Certified ``(lower, upper)`` for ``Phi_*(mu) = lim (1/m) int phi_m dmu``.

    ``lower = max_{m <= n_max} (1/m) int (phi_m - C) dmu`` and
    ``upper = min_{m <= n_max} (1/m) int (phi_m + C) dmu`` (sub-additivity of
    ``phi_m -+ C``).  Finite-word evaluation error widens the bracket when the
    potential has infinite lookahead.
    """
    rng = np.random.default_rng(seed)
    C = np.asarray(pot.C, dtype=float)
    lower = np.full(pot.d, -np.inf)
    upper = np.full(pot.d, np.inf)
    for m_len in range(1, n_max + 1):
        integral, err = _integral_phi_m(pot, mu, m_len, samples, rng)
        lower = np.maximum(lower, (integral - C - err) / m_len)
        upper = np.minimum(upper, (integral + C + err) / m_len)
    if np.any(lower > upper + tol):
        raise NumericError(f"inverted Phi_* bracket: lower={lower}, upper={upper}")
    return lower, np.maximum(upper, lower)


def phi_star(pot: AlmostAdditivePotential, mu: MarkovMeasure, n_max: int = 12) -> np.ndarray:
    """``Phi_*(mu)``: exact through the density table when available, else the bracket midpoint."""
    if pot.density is not None:
        r, table = pot.density
        return word_masses(mu, r) @ table
    lo, hi = phi_star_bracket(pot, mu, n_max)
    return 0.5 * (lo + hi)


def potential_from_descriptor(desc, map: BranchMap) -> AlmostAdditivePotential:
    """Kinds: indicator (pattern), constant (c), additive (range, table), geometric,
    terminal_bonus (pattern, bonus)."""
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ValidationError(f"potential descriptor needs a 'kind': {desc!r}")
    kind = desc["kind"]
    m = map.m
    if kind == "indicator":
        return indicator(str(desc.get("pattern", "1")), m)
    if kind == "constant":
        return constant(float(desc.get("c", 0.0)), m)
    if kind == "geometric":
        return g_potential(map)
    if kind == "terminal_bonus":
        return terminal_bonus(str(desc.get("pattern", "1")), float(desc.get("bonus", 1.0)), m)
    if kind == "additive":
        r = int(desc.get("range", 1))
        raw = desc.get("table")
        if not isinstance(raw, dict):
            raise ValidationError("additive descriptor needs a 'table' mapping words to values")
        table = {}
        for key, val in raw.items():
            word = tuple(int(c) for c in str(key))
            if len(word) != r:
                raise ValidationError(f"table key {key!r} does not have length {r}")
            table[word] = val
        d = desc.get("d")
        pot = from_additive(table, r, m, d)
        return _with_descriptor(pot, dict(desc))
    raise ValidationError(f"unknown potential kind {kind!r}")


def builtin_potentials(map: BranchMap) -> dict[str, AlmostAdditivePotential]:
    """The potentials every property suite runs over."""
    m = map.m
    return {
        "digit": indicator("1", m),
        "pair": indicator("11", m),
        "terminal_bonus": terminal_bonus("1", 1.0, m),
        "geometric": g_potential(map),
    }
