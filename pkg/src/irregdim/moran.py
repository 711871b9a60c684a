"""Moran construction of irregular points: schedules, block families, the
concatenated measure ``eta``, Birkhoff oscillation and local dimension.

Stages alternate between two ergodic source measures: odd stages draw blocks
typical for ``mu`` and even stages blocks typical for ``nu``.  Stage ``i`` uses
blocks of length ``l_i`` repeated ``N_i`` times, so ``n_j = sum_{i<=j} l_i N_i``.

A block family ``Sigma(i)`` is the set of non-constant length-``l_i`` words on
which the three typicality statistics of the source are within ``eps_i`` of
their limits.  Families are held implicitly by that predicate together with
the normalizer ``Z_i = source(Omega(i))``; normalized block weights are
``rho_w = source[w] / Z_i``.  ``Z_i`` is exact when it can be enumerated (small
``m^l``) or summed over binomial type classes (two symbols, Bernoulli source,
affine map, one-symbol additive potential); otherwise it is a Monte Carlo
estimate with a reported standard error.

Random streams: stage ``i`` harvesting uses ``seed + 1000 * i``; point ``j`` of
a batch uses ``seed + j``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import yaml
from scipy import stats
from scipy.special import logsumexp

from .dimension import DimensionEstimate, loglog_fit
from .errors import EstimationError, HarvestError, InfeasibleError, ValidationError
from .interval_maps import BranchMap
from .measures import MarkovMeasure, entropy, log_cylinder_masses, lyapunov, sample_words
from .potentials import AlmostAdditivePotential, A_n_g, phi_star
from .symbolic import all_words, as_word, cylinder_pass, word_index, word_str

DOMINANCE_MARGIN = 0.05
DOMINANCE_DECAY = 0.8
ENUMERATION_LIMIT = 2 ** 16
CHUNK_SYMBOLS = 1 << 22
HARVEST_ROUND = 256
KEEP_WORDS = 64
STAGE_SEED_OFFSET = 1000
RADIUS_RATIO = 0.8
RADIUS_START = 0.1
MIN_RADII = 12
MAX_RADII = 64
NEIGHBOR_STEPS = 8


# ---------------------------------------------------------------- schedules


@dataclass(frozen=True)
class MoranSchedule:
    """Block lengths ``l_i``, multiplicities ``N_i`` and tolerances ``eps_i`` for stages 1..S.

    ``N_0 = 1`` is implicit.  Odd stages are ``mu``-phase, even stages ``nu``-phase.
    """

    lengths: tuple[int, ...]
    multiplicities: tuple[int, ...]
    epsilons: tuple[float, ...]
    delta: float
    margin: float = DOMINANCE_MARGIN

    def __post_init__(self):
        S = len(self.lengths)
        if S < 2:
            raise ValidationError("a schedule needs at least two stages (one per phase)")
        if len(self.multiplicities) != S or len(self.epsilons) != S:
            raise ValidationError("lengths, multiplicities and epsilons must have equal length")
        if min(self.lengths) < 1 or min(self.multiplicities) < 1:
            raise ValidationError("lengths and multiplicities must be positive")
        if not all(e > 0 for e in self.epsilons):
            raise ValidationError("epsilons must be positive")
        if not 0 < self.delta < 1:
            raise ValidationError("delta must lie in (0, 1)")

    @property
    def stages(self) -> int:
        return len(self.lengths)

    @property
    def stage_lengths(self) -> np.ndarray:
        return np.array(self.lengths, dtype=np.int64) * np.array(self.multiplicities, dtype=np.int64)

    @property
    def boundaries(self) -> np.ndarray:
        """``n_j`` for ``j = 1..S``."""
        return np.cumsum(self.stage_lengths)

    @property
    def total_length(self) -> int:
        return int(self.boundaries[-1])

    @property
    def total_blocks(self) -> int:
        return int(sum(self.multiplicities))

    @property
    def flat_lengths(self) -> np.ndarray:
        """``l*_i``: one entry per block position."""
        return np.repeat(np.array(self.lengths, dtype=np.int64), self.multiplicities)

    @property
    def flat_stages(self) -> np.ndarray:
        """0-based stage index of each block position."""
        return np.repeat(np.arange(self.stages), self.multiplicities)

    @property
    def flat_epsilons(self) -> np.ndarray:
        return np.repeat(np.array(self.epsilons), self.multiplicities)

    @property
    def flat_sources(self) -> np.ndarray:
        """0 for ``mu``-phase positions, 1 for ``nu``-phase positions."""
        return self.flat_stages % 2

    def dominance_ratios(self) -> np.ndarray:
        """``(sum of nu-phase stage lengths up to 2j) / n_{2j+1}`` for each odd stage ``2j+1 >= 3``."""
        L = self.stage_lengths
        n = self.boundaries
        out = []
        for s in range(2, self.stages, 2):
            out.append(L[1:s:2].sum() / n[s])
        return np.array(out, dtype=float)

    def tail_ratios(self) -> np.ndarray:
        """``l_{i+1} / n_i`` for ``i = 1..S-1``: the next block against everything before it."""
        return np.array(self.lengths[1:], dtype=float) / self.boundaries[:-1]

    def check(self) -> dict:
        dom = self.dominance_ratios()
        tail = self.tail_ratios()
        return {
            "dominance": dom.tolist(),
            "dominance_decreasing": bool(np.all(np.diff(dom) < 0)),
            "dominance_ok": bool(dom.size == 0 or dom[-1] < self.margin),
            "tail": tail.tolist(),
            "tail_ok": bool(tail[-1] < self.margin),
            "epsilons_decreasing": bool(np.all(np.diff(self.epsilons) < 0)),
            "final_epsilon": float(self.epsilons[-1]),
        }

    def to_dict(self) -> dict:
        return {
            "stages": self.stages,
            "lengths": list(map(int, self.lengths)),
            "multiplicities": list(map(int, self.multiplicities)),
            "epsilons": list(map(float, self.epsilons)),
            "delta": float(self.delta),
            "margin": float(self.margin),
            "total_length": self.total_length,
        }


def build_schedule(stages: int, base_length: int, growth: float, eps0: float, delta: float,
                   margin: float = DOMINANCE_MARGIN, even_factor: float = 1.0,
                   symmetric: bool = False, max_total: int = 2 ** 31) -> MoranSchedule:
    """Desk-scale schedule with the smallest multiplicities meeting the ratio conditions.

    ``l_i = ceil(base_length * growth^i)`` and ``eps_i = eps0 / 2^i``.  Each ``N_i`` is
    the least integer such that

    * the next block is short against the past: ``l_{i+1} <= margin * n_i``;
    * at odd stages ``2j+1 >= 3`` the accumulated ``nu``-phase length is at most
      ``margin * DOMINANCE_DECAY^(j-1) * n_{2j+1}`` (strictly decreasing ratios);
    * at even stages the stage itself is at least ``even_factor * n_{2j-1}``, or with
      ``symmetric=True`` the accumulated ``mu``-phase length is dominated like the odd case.
    """
    if stages < 2:
        raise ValidationError("stages must be >= 2 so that both phases occur")
    if growth <= 1:
        raise ValidationError("growth must exceed 1")
    if base_length < 1 or eps0 <= 0 or not 0 < delta < 1 or not 0 < margin < 1:
        raise ValidationError("need base_length >= 1, eps0 > 0, delta and margin in (0, 1)")
    lengths = [int(math.ceil(base_length * growth ** i - 1e-9)) for i in range(1, stages + 1)]
    eps = [eps0 / 2 ** i for i in range(1, stages + 1)]
    next_len = lengths[1:] + [0]
    mults = []
    n_prev = 0
    phase_sums = [0, 0]
    for s in range(stages):
        l = lengths[s]
        phase = s % 2
        need = 1
        need = max(need, math.floor((next_len[s] / margin - n_prev) / l) + 1)
        j = s // 2
        if s >= 2 and phase == 0:
            target = margin * DOMINANCE_DECAY ** (j - 1)
            need = max(need, math.ceil((phase_sums[1] / target - n_prev) / l))
        if phase == 1:
            if symmetric and s >= 1:
                target = margin * DOMINANCE_DECAY ** j
                need = max(need, math.ceil((phase_sums[0] / target - n_prev) / l))
            else:
                need = max(need, math.ceil(even_factor * n_prev / l))
        N = int(max(1, need))
        mults.append(N)
        n_prev += l * N
        phase_sums[phase] += l * N
        if n_prev > max_total:
            raise InfeasibleError(
                f"total length {n_prev} exceeds budget {max_total} at stage {s + 1}: "
                "the dominance or tail ratio cannot be met; lower growth or stages"
            )
    sched = MoranSchedule(tuple(lengths), tuple(mults), tuple(eps), float(delta), float(margin))
    chk = sched.check()
    if not chk["tail_ok"]:
        raise InfeasibleError(f"tail ratio {chk['tail'][-1]:.4g} >= margin {margin}")
    if not chk["dominance_ok"] or not chk["dominance_decreasing"]:
        raise InfeasibleError(f"dominance ratios {chk['dominance']} not decreasing below {margin}")
    return sched


def exact_multiplicities(lengths) -> list[int]:
    """Doubly exponential rule ``N_0 = 1``, ``N_i = 2^(l_{i+2} + N_{i-1})`` for the
    indices where ``l_{i+2}`` exists (1-based lengths)."""
    lengths = list(lengths)
    out = [1]
    for i in range(1, len(lengths) - 1):
        out.append(2 ** (lengths[i + 1] + out[-1]))
    return out


def j_of_n(schedule: MoranSchedule, n: int) -> tuple[int, int]:
    """``(J, r)``: completed block positions within the first ``n`` symbols, and the
    number of completed stages ``r`` (``sum_{i<=r} N_i <= J < sum_{i<=r+1} N_i``)."""
    if not 1 <= n <= schedule.total_length:
        raise ValidationError(f"n={n} outside 1..{schedule.total_length}")
    bounds = schedule.boundaries
    s = int(np.searchsorted(bounds, n, side="right"))
    before = int(bounds[s - 1]) if s else 0
    blocks_before = int(sum(schedule.multiplicities[:s]))
    if s == schedule.stages:
        return blocks_before, s
    J = blocks_before + (n - before) // schedule.lengths[s]
    r = s if J < blocks_before + schedule.multiplicities[s] else s + 1
    return J, r


# ---------------------------------------------------------------- block families


@dataclass
class BlockFamily:
    """One stage's block set ``Sigma(i)`` and its normalizer.

    ``words``/``log_masses`` list kept words with their exact source masses: all of
    them for enumerated families, a deduplicated sample otherwise.
    """

    stage: int
    length: int
    eps: float
    source: MarkovMeasure
    h: float
    lam: float
    phi: np.ndarray
    total_mass: float
    method: str
    stderr: float
    words: np.ndarray
    log_masses: np.ndarray
    samples: int = 0

    @property
    def log_total_mass(self) -> float:
        return math.log(self.total_mass)

    @property
    def enumerated(self) -> bool:
        return self.method == "enumeration"

    @property
    def rho(self) -> np.ndarray:
        """Normalized weights of ``words`` (sum to 1 for enumerated families)."""
        return np.exp(self.log_masses - self.log_total_mass)

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "length": self.length,
            "eps": self.eps,
            "source": self.source.describe() if self.source is not None else None,
            "h": self.h,
            "lambda": self.lam,
            "phi": self.phi.tolist(),
            "total_mass": self.total_mass,
            "method": self.method,
            "stderr": self.stderr,
            "samples": self.samples,
            "words": [{"word": word_str(w), "mass": float(np.exp(lm))} for w, lm in zip(self.words, self.log_masses)],
        }


def enumerated_family(stage: int, words, masses, source: MarkovMeasure | None = None,
                      phi=None, h: float = float("nan"), lam: float = float("nan")) -> BlockFamily:
    """A family given by an explicit word list with source masses (``rho`` = mass / total)."""
    arr = np.stack([as_word(w) for w in words])
    masses = np.asarray(masses, dtype=float)
    if arr.shape[0] != masses.size or np.any(masses <= 0):
        raise ValidationError("need one positive mass per word")
    if np.any(arr.min(axis=1) == arr.max(axis=1)):
        raise ValidationError("constant words are not allowed in a block family")
    if np.unique(arr, axis=0).shape[0] != arr.shape[0]:
        raise ValidationError("duplicate words")
    phi = np.full(1, np.nan) if phi is None else np.atleast_1d(np.asarray(phi, dtype=float))
    return BlockFamily(stage=stage, length=arr.shape[1], eps=float("nan"), source=source, h=h, lam=lam,
                       phi=phi, total_mass=float(masses.sum()), method="enumeration", stderr=0.0,
                       words=arr, log_masses=np.log(masses))


def _chunks(words: np.ndarray):
    rows = max(1, CHUNK_SYMBOLS // max(words.shape[1], 1))
    for r0 in range(0, words.shape[0], rows):
        yield words[r0:r0 + rows]


def block_statistics(source: MarkovMeasure, pot: AlmostAdditivePotential, map: BranchMap, words):
    """Typicality statistics per word: ``(phi_l/l, A_l g, -log source[w]/l, non-constant)``."""
    words = np.atleast_2d(np.asarray(words, dtype=np.int8))
    l = words.shape[1]
    birk, ag, lm, nonconst = [], [], [], []
    for chunk in _chunks(words):
        birk.append(pot.evaluate(chunk, l) / l)
        ag.append(A_n_g(map, chunk))
        lm.append(-log_cylinder_masses(source, chunk) / l)
        nonconst.append(chunk.min(axis=1) != chunk.max(axis=1))
    return np.concatenate(birk), np.concatenate(ag), np.concatenate(lm), np.concatenate(nonconst)


def _passes(stats_tuple, phi, lam, h, eps) -> np.ndarray:
    birk, ag, lm, nonconst = stats_tuple
    with np.errstate(invalid="ignore"):
        return (np.all(np.abs(birk - phi) < eps, axis=1) & (np.abs(ag - lam) < eps)
                & (np.abs(lm - h) < eps) & nonconst)


def family_filter(family: BlockFamily, pot: AlmostAdditivePotential, map: BranchMap, words) -> np.ndarray:
    """Membership of each row of ``words`` in ``Sigma(i)``."""
    st = block_statistics(family.source, pot, map, words)
    return _passes(st, family.phi, family.lam, family.h, family.eps)


def _type_class_mass(source, pot, map, l, phi, lam, h, eps) -> float | None:
    """Exact ``source(Omega)`` by summing over the count of symbol 1, when every statistic
    depends on that count only."""
    if map.m != 2 or source.order != 0 or source.is_mixture or not map.affine:
        return None
    if pot.density is None or pot.density[0] != 1 or np.any(pot.C != 0):
        return None
    table = pot.density[1]
    k = np.arange(l + 1)
    birk = (k[:, None] * table[0] + (l - k)[:, None] * table[1]) / l
    g = np.log(map.slopes)
    ag = (k * g[0] + (l - k) * g[1]) / l
    p = source.transition[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        lm = -(np.where(k > 0, k * np.log(p[0]), 0.0) + np.where(l - k > 0, (l - k) * np.log(p[1]), 0.0)) / l
    nonconst = (k > 0) & (k < l)
    ok = _passes((birk, ag, lm, nonconst), phi, lam, h, eps)
    return float(stats.binom.pmf(k[ok], l, p[0]).sum())


def source_values(source: MarkovMeasure, pot: AlmostAdditivePotential, map: BranchMap):
    """``(h, lambda, Phi_*)`` of a source measure."""
    lo, hi = lyapunov(map, source)
    return entropy(source), 0.5 * (lo + hi), np.atleast_1d(phi_star(pot, source)).astype(float)


def harvest_blocks(source: MarkovMeasure, pot: AlmostAdditivePotential, map: BranchMap, l: int,
                   eps: float, delta: float, seed: int = 0, budget: int = 4096, stage: int = 1) -> BlockFamily:
    """Build ``Sigma(i)`` for one stage and check ``source(Omega(i)) >= 1 - delta``.

    Raises :class:`HarvestError` with the achieved mass when the typical set is too
    small, which signals that ``l`` is too short for ``eps``.
    """
    if eps <= 0 or l < 1:
        raise ValidationError("need eps > 0 and l >= 1")
    if source.m != map.m or pot.m != map.m:
        raise ValidationError("source measure, potential and map alphabets differ")
    h, lam, phi = source_values(source, pot, map)
    rng = np.random.default_rng(seed)
    stderr = 0.0
    samples = 0
    kept = np.zeros((0, l), dtype=np.int8)
    if map.m ** l <= ENUMERATION_LIMIT:
        words = all_words(map.m, l)
        ok = _passes(block_statistics(source, pot, map, words), phi, lam, h, eps)
        kept = words[ok]
        lm = log_cylinder_masses(source, kept)
        kept, lm = kept[np.isfinite(lm)], lm[np.isfinite(lm)]
        Z = float(np.exp(logsumexp(lm))) if lm.size else 0.0
        method = "enumeration"
    else:
        Z = _type_class_mass(source, pot, map, l, phi, lam, h, eps)
        method = "types"
        hits = 0
        rounds = 1 if Z is not None else max(1, budget // HARVEST_ROUND)
        size = HARVEST_ROUND if Z is None else max(8, min(HARVEST_ROUND, (1 << 20) // l))
        for _ in range(rounds):
            cand = sample_words(source, l, size, rng)
            ok = _passes(block_statistics(source, pot, map, cand), phi, lam, h, eps)
            samples += cand.shape[0]
            hits += int(ok.sum())
            if kept.shape[0] < KEEP_WORDS:
                kept = np.unique(np.concatenate([kept, cand[ok]]), axis=0)[:KEEP_WORDS]
            if Z is None:
                z_hat = hits / samples
                se = math.sqrt(max(z_hat * (1 - z_hat), 1.0 / samples) / samples)
                if z_hat - 3 * se >= 1 - delta:
                    break
        if Z is None:
            method = "monte_carlo"
            Z = hits / samples
            stderr = math.sqrt(Z * (1 - Z) / samples)
        lm = log_cylinder_masses(source, kept)
    if Z <= 0 or Z < 1 - delta:
        raise HarvestError(
            f"stage {stage}: typical-block mass {Z:.4g} < 1 - delta = {1 - delta:.4g} "
            f"(l={l}, eps={eps:.4g}); increase l or eps",
            achieved_mass=Z, stage=stage,
        )
    return BlockFamily(stage=stage, length=l, eps=float(eps), source=source, h=h, lam=lam, phi=phi,
                       total_mass=float(min(Z, 1.0)), method=method, stderr=stderr,
                       words=kept, log_masses=lm, samples=samples)


# ---------------------------------------------------------------- concatenated measure


@dataclass
class ConcatenatedMeasure:
    """The product measure ``eta`` over block choices, immutable once built."""

    schedule: MoranSchedule
    families: list
    map: BranchMap
    pot: AlmostAdditivePotential
    diagnostics: dict = field(default_factory=dict)

    @property
    def targets(self) -> list:
        """Phase targets ``(alpha, beta)``: ``Phi_*`` of the two sources."""
        return [self.families[0].phi, self.families[1].phi]

    def family_at(self, position: int) -> BlockFamily:
        return self.families[int(self.schedule.flat_stages[position])]

    def to_dict(self) -> dict:
        return {"schedule": self.schedule.to_dict(), "families": [f.to_dict() for f in self.families]}

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def build_concatenated(schedule: MoranSchedule, mu: MarkovMeasure, nu: MarkovMeasure,
                       pot: AlmostAdditivePotential, map: BranchMap, seed: int = 0,
                       budget: int = 4096) -> ConcatenatedMeasure:
    """Harvest every stage (odd stages from ``mu``, even from ``nu``)."""
    if mu.is_mixture or nu.is_mixture:
        raise ValidationError("source measures must be ergodic; use a Markov measure, not a mixture")
    fams = []
    for s in range(schedule.stages):
        src = mu if s % 2 == 0 else nu
        fams.append(harvest_blocks(src, pot, map, schedule.lengths[s], schedule.epsilons[s],
                                   schedule.delta, seed=seed + STAGE_SEED_OFFSET * (s + 1),
                                   budget=budget, stage=s + 1))
    return ConcatenatedMeasure(schedule, fams, map, pot)


def _batch_size(family: BlockFamily) -> int:
    return 2 if family.total_mass >= 0.75 else int(math.ceil(2 / family.total_mass))


def _draw_blocks(cm: ConcatenatedMeasure, family: BlockFamily, rngs) -> np.ndarray:
    """One block from ``rho`` per generator: a categorical draw for enumerated families,
    otherwise rejection from the source in batches of :func:`_batch_size` candidates."""
    out = np.empty((len(rngs), family.length), dtype=np.int8)
    if family.enumerated:
        p = family.rho
        p = p / p.sum()
        for t, rng in enumerate(rngs):
            out[t] = family.words[rng.choice(p.size, p=p)]
        return out
    c = _batch_size(family)
    pending = list(range(len(rngs)))
    while pending:
        cand = np.stack([sample_words(family.source, family.length, c, rngs[t]) for t in pending])
        ok = family_filter(family, cm.pot, cm.map, cand.reshape(-1, family.length)).reshape(len(pending), c)
        still = []
        for row, t in enumerate(pending):
            hit = np.flatnonzero(ok[row])
            if hit.size:
                out[t] = cand[row, hit[0]]
            else:
                still.append(t)
        pending = still
    return out


def generate_points(cm: ConcatenatedMeasure, seed: int, count: int, n: int | None = None) -> np.ndarray:
    """``count`` words of length ``n``; row ``j`` equals ``generate_point(cm, seed + j, n)``."""
    sched = cm.schedule
    n = sched.total_length if n is None else int(n)
    if not 1 <= n <= sched.total_length:
        raise ValidationError(f"n={n} outside 1..{sched.total_length}")
    rngs = [np.random.default_rng(seed + j) for j in range(count)]
    out = np.empty((count, n), dtype=np.int8)
    pos = 0
    flat = sched.flat_lengths
    for b in range(flat.size):
        if pos >= n:
            break
        fam = cm.family_at(b)
        blocks = _draw_blocks(cm, fam, rngs)
        take = min(fam.length, n - pos)
        out[:, pos:pos + take] = blocks[:, :take]
        pos += take
    return out


def generate_point(cm: ConcatenatedMeasure, seed: int, n: int | None = None) -> np.ndarray:
    """A word drawn from the ``eta`` marginal on the first ``n`` symbols (default: all)."""
    return generate_points(cm, seed, 1, n)[0]


def _block_spans(sched: MoranSchedule, n: int):
    """``(position, start, stop)`` for the block positions meeting ``[0, n)``."""
    out = []
    bounds = np.concatenate([[0], sched.boundaries])
    for s in range(sched.stages):
        l = sched.lengths[s]
        lo = int(bounds[s])
        if lo >= n:
            break
        first = int(sum(sched.multiplicities[:s]))
        cnt = min(sched.multiplicities[s], -(-(n - lo) // l))
        for q in range(cnt):
            start = lo + q * l
            out.append((first + q, start, min(start + l, n)))
    return out


def _log_rho_blocks(cm: ConcatenatedMeasure, fam: BlockFamily, blocks: np.ndarray) -> np.ndarray:
    """``log rho`` of full blocks (``-inf`` outside ``Sigma(i)``)."""
    if fam.enumerated:
        keys = word_index(fam.words, cm.map.m)
        order = np.argsort(keys)
        q = word_index(blocks, cm.map.m)
        at = np.minimum(np.searchsorted(keys[order], q), keys.size - 1)
        hit = keys[order][at] == q
        return np.where(hit, fam.log_masses[order][at] - fam.log_total_mass, -np.inf)
    lm = log_cylinder_masses(fam.source, blocks)
    ok = family_filter(fam, cm.pot, cm.map, blocks)
    return np.where(ok, lm - fam.log_total_mass, -np.inf)


def _log_rho_partial(cm: ConcatenatedMeasure, fam: BlockFamily, prefix: np.ndarray) -> float:
    """Mass of the completions of a partial block: exact for enumerated families, else the
    upper bound ``source[prefix] / Z`` (capped at 1)."""
    q = prefix.size
    if fam.enumerated:
        match = np.all(fam.words[:, :q] == prefix, axis=1)
        if not match.any():
            return -np.inf
        return float(logsumexp(fam.log_masses[match]) - fam.log_total_mass)
    return float(min(0.0, log_cylinder_masses(fam.source, prefix[None, :])[0] - fam.log_total_mass))


def _log_eta_from(cm: ConcatenatedMeasure, w: np.ndarray, start_position: int = 0) -> tuple[np.ndarray, list]:
    """Per-block ``log rho`` of ``w`` for block positions ``>= start_position``."""
    spans = [s for s in _block_spans(cm.schedule, w.size) if s[0] >= start_position]
    vals = np.empty(len(spans))
    # group full blocks by family for vectorized filtering
    by_stage: dict[int, list[int]] = {}
    for k, (pos, a, b) in enumerate(spans):
        fam = cm.family_at(pos)
        if b - a == fam.length:
            by_stage.setdefault(fam.stage, []).append(k)
        else:
            vals[k] = _log_rho_partial(cm, fam, w[a:b])
    for stage, ks in by_stage.items():
        fam = cm.families[stage - 1]
        blocks = np.stack([w[spans[k][1]:spans[k][2]] for k in ks])
        vals[ks] = _log_rho_blocks(cm, fam, blocks)
    return vals, spans


def eta_mass(cm: ConcatenatedMeasure, w) -> float:
    """``log eta[w]``: product of block weights, ``-inf`` off the support."""
    arr = as_word(w, cm.map.m)
    if arr.size == 0:
        return 0.0
    if arr.size > cm.schedule.total_length:
        raise ValidationError("word longer than the schedule")
    vals, _ = _log_eta_from(cm, arr)
    return float(vals.sum())


# ---------------------------------------------------------------- verification


@dataclass(frozen=True)
class OscillationPoint:
    stage: int
    n: int
    value: np.ndarray
    target: np.ndarray
    mixture: np.ndarray
    deviation: float
    mixture_deviation: float
    budget: float


def oscillation_profile(cm: ConcatenatedMeasure, map: BranchMap, pot: AlmostAdditivePotential, w) -> list:
    """Birkhoff averages ``phi_{n_j}(w)/n_j`` at each stage boundary within ``w``.

    ``mixture`` is the length-weighted average of the stage targets up to ``n_j``;
    ``budget`` is ``sum_{i<=j} N_i (3 l_i eps_i + C) / n_j``.
    """
    arr = np.asarray(w, dtype=np.int8).reshape(-1)
    if pot is cm.pot:
        targets = [f.phi for f in cm.families]
    else:
        if pot.d != cm.pot.d and pot.m != map.m:
            raise ValidationError("potential does not match the construction")
        targets = [np.atleast_1d(phi_star(pot, f.source)) for f in cm.families]
    if any(t is None or np.any(~np.isfinite(t)) for t in targets):
        raise ValidationError("phase targets missing")
    sched = cm.schedule
    C = float(np.max(pot.C))
    rows = []
    acc_mix = np.zeros(pot.d)
    acc_budget = 0.0
    for s, n in enumerate(sched.boundaries):
        n = int(n)
        l, N = sched.lengths[s], sched.multiplicities[s]
        acc_mix = acc_mix + l * N * targets[s]
        acc_budget += N * (3 * l * sched.epsilons[s] + C)
        if n > arr.size:
            break
        val = pot.evaluate(arr[None, :n], n)[0] / n
        mix = acc_mix / n
        rows.append(OscillationPoint(
            stage=s + 1, n=n, value=val, target=targets[s], mixture=mix,
            deviation=float(np.max(np.abs(val - targets[s]))),
            mixture_deviation=float(np.max(np.abs(val - mix))),
            budget=acc_budget / n,
        ))
    return rows


def oscillation_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["stage", "n", "value", "target", "mixture", "deviation", "mixture_deviation", "budget"])
    for r in rows:
        vec = lambda v: ";".join(f"{x:.10g}" for x in np.atleast_1d(v))
        writer.writerow([r.stage, r.n, vec(r.value), vec(r.target), vec(r.mixture),
                         f"{r.deviation:.10g}", f"{r.mixture_deviation:.10g}", f"{r.budget:.10g}"])
    return buf.getvalue()


def g_sup_norm(map: BranchMap, depth: int = 8) -> tuple[float, str]:
    """``sup |log|T'||`` with its source: sampled on ``[0, 1]`` and, for nonlinear maps,
    maximized with the derivative at the endpoints of every depth-``depth`` cylinder."""
    if map.affine:
        return float(np.max(np.abs(np.log(map.slopes)))), "slopes"
    depth = max(1, min(depth, int(16 / math.log2(map.m))))
    words = all_words(map.m, depth)
    res = cylinder_pass(map, words)
    first = words[:, 0].astype(np.intp) - 1
    vals = [abs(map.log_abs_derivative_sup())]
    for i in range(map.m):
        sel = first == i
        for pts in (res.a[sel], res.b[sel]):
            vals.append(float(np.max(np.abs(np.log(np.abs(map.derivative[i](pts)))))))
    return max(vals), "cylinder_endpoints"


def rho_bound(cm: ConcatenatedMeasure, map: BranchMap, n: int) -> float:
    """``rho(n) = sum_{i<=J} l*_i (lambda_i + 4 eps*_i) + l*_{J+1} (||g|| + eps*_J)``
    with ``eps*_0 = eps*_1`` and ``l*_{J+1} = 0`` past the last block."""
    sched = cm.schedule
    J, _ = j_of_n(sched, n)
    flat_l = sched.flat_lengths
    flat_s = sched.flat_stages
    lam = np.array([f.lam for f in cm.families])
    eps = np.array(sched.epsilons)
    head = float(np.sum(flat_l[:J] * (lam[flat_s[:J]] + 4 * eps[flat_s[:J]])))
    if J >= flat_l.size:
        return head
    key = ("g_norm", id(map))
    if key not in cm.diagnostics:
        cm.diagnostics[key] = g_sup_norm(map)
    gnorm = cm.diagnostics[key][0]
    eps_J = eps[flat_s[J - 1]] if J >= 1 else eps[0]
    return head + float(flat_l[J]) * (gnorm + eps_J)


def rho_bounds(cm: ConcatenatedMeasure, map: BranchMap, ns) -> np.ndarray:
    return np.array([rho_bound(cm, map, int(n)) for n in ns])


# ---------------------------------------------------------------- local dimension


def _orientations(map: BranchMap) -> np.ndarray:
    """+1 for increasing branches, -1 for decreasing ones."""
    out = []
    for i, (a, b) in enumerate(map.domains):
        out.append(1 if float(map.forward[i](np.asarray(0.75 * a + 0.25 * b))) <
                   float(map.forward[i](np.asarray(0.25 * a + 0.75 * b))) else -1)
    return np.array(out)


def _ranks(map: BranchMap, w: np.ndarray, orient: np.ndarray):
    """Digits of the geometric rank of ``I_w`` among cylinders of its depth, and the
    orientation in force before each symbol."""
    sym = w.astype(np.int64)
    o = np.concatenate([[1], np.cumprod(orient[sym[:-1] - 1])]) if sym.size else np.ones(0, dtype=np.int64)
    return np.where(o > 0, sym - 1, map.m - sym), o


def _neighbor(map: BranchMap, w: np.ndarray, side: int, orient: np.ndarray):
    """Adjacent cylinder of the same depth on the given side, or ``None`` at the edge."""
    e, o = _ranks(map, w, orient)
    m = map.m
    idx = np.flatnonzero(e < m - 1) if side > 0 else np.flatnonzero(e > 0)
    if idx.size == 0:
        return None
    p = int(idx[-1])
    e[p] += 1 if side > 0 else -1
    e[p + 1:] = 0 if side > 0 else m - 1
    out = w.copy()
    cur = int(o[p])
    for k in range(p, w.size):
        s = e[k] + 1 if cur > 0 else m - e[k]
        out[k] = s
        cur *= int(orient[s - 1])
    return out, p


def _prefix_log_diameters(map: BranchMap, w: np.ndarray, ns) -> np.ndarray:
    if map.affine:
        cum = np.concatenate([[0.0], np.cumsum(np.log(np.diff(np.array(map.domains), axis=1)[:, 0])[w.astype(np.intp) - 1])])
        return cum[np.asarray(ns)]
    return np.array([cylinder_pass(map, w[None, :n]).log_diameter[0] if n else 0.0 for n in ns])


def _depth_for_radius(map, w, log_r, cache) -> int:
    """Largest ``n <= |w|`` with ``log D_n(w) >= log r`` (bisection; ``D_n`` decreases in ``n``)."""
    def ld(n):
        if n not in cache:
            cache[n] = float(_prefix_log_diameters(map, w, [n])[0])
        return cache[n]
    lo, hi = 0, w.size
    if ld(hi) >= log_r:
        return hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ld(mid) >= log_r:
            lo = mid
        else:
            hi = mid
    return lo


class _EtaPrefix:
    """Block weights of a fixed word, reused for words sharing a prefix with it."""

    def __init__(self, cm: ConcatenatedMeasure, arr: np.ndarray):
        self.cm = cm
        self.arr = arr
        vals, self.spans = _log_eta_from(cm, arr)
        self.stops = np.array([sp[2] for sp in self.spans])
        self.cum = np.concatenate([[0.0], np.cumsum(vals)])

    def mass(self, v: np.ndarray, n: int, agree: int) -> float:
        """``log eta[v|n]`` where ``v`` equals the stored word on its first ``agree`` symbols."""
        k0 = int(np.searchsorted(self.stops, min(agree, n), side="right"))
        total = float(self.cum[k0])
        if not np.isfinite(total):
            return -np.inf
        by_stage: dict[int, list] = {}
        for pos, a, b in self.spans[k0:]:
            if a >= n:
                break
            fam = self.cm.family_at(pos)
            stop = min(b, n)
            if stop - a == fam.length:
                by_stage.setdefault(fam.stage, []).append(v[a:stop])
            else:
                total += _log_rho_partial(self.cm, fam, v[a:stop])
        for stage, blocks in by_stage.items():
            total += float(_log_rho_blocks(self.cm, self.cm.families[stage - 1], np.stack(blocks)).sum())
        return total


def covering_cylinders(cm: ConcatenatedMeasure, map: BranchMap, w, log_r: float, n: int, _ctx=None, _orient=None):
    """Depth-``n`` cylinders of positive ``eta`` mass that can meet ``B(x, r)``, ``x`` in ``I_{w|n}``.

    ``x`` may sit anywhere in ``I_{w|n}``, so on each side neighbors are added until
    their accumulated diameter reaches ``r`` (at most ``NEIGHBOR_STEPS``; gaps between
    cylinders are ignored, which can only add cylinders).  Returns ``(words, log_masses)``.
    """
    arr = np.asarray(w, dtype=np.int8)
    ctx = _ctx if _ctx is not None else _EtaPrefix(cm, arr)
    orient = _orientations(map) if _orient is None else _orient
    own = arr[:n]
    words = [own]
    masses = [ctx.mass(arr, n, n)]
    for side in (-1, 1):
        cur = own
        agree = n
        reach = -np.inf
        for _ in range(NEIGHBOR_STEPS):
            nb = _neighbor(map, cur, side, orient)
            if nb is None:
                break
            cur, p = nb
            agree = min(agree, p)
            lm = ctx.mass(cur, n, agree)
            if np.isfinite(lm):
                words.append(cur)
                masses.append(lm)
            reach = np.logaddexp(reach, float(_prefix_log_diameters(map, cur, [n])[0]))
            if reach >= log_r:
                break
    return words, np.array(masses)


def default_log_radii(map: BranchMap, w, ratio: float = RADIUS_RATIO, start: float = RADIUS_START,
                      max_radii: int = MAX_RADII) -> np.ndarray:
    """Geometric radii ``start * ratio^k`` down to ``D_{|w|}(w)``, thinned evenly to at most
    ``max_radii`` (the thinned grid is still geometric)."""
    floor = float(_prefix_log_diameters(map, np.asarray(w, dtype=np.int8), [len(w)])[0])
    steps = int(np.floor((math.log(start) - floor) / -math.log(ratio)))
    if steps < 0:
        return np.zeros(0)
    stride = max(1, -(-(steps + 1) // max_radii))
    k = np.arange(0, steps + 1, stride)
    return math.log(start) + k * math.log(ratio)


def local_dimension(cm: ConcatenatedMeasure, map: BranchMap, w, log_radii=None,
                    min_radii: int = MIN_RADII) -> DimensionEstimate:
    """Regress ``log eta(B(x, r))`` on ``log r`` for the point coded by ``w``.

    Radii are given in log scale so that depths far beyond double precision can be
    probed.  For each ``r`` the depth ``n`` is the largest with ``D_n(w) >= r``; the
    ball's mass is bounded by the summed ``eta`` masses of
    :func:`covering_cylinders`.  ``diagnostics`` carries the pointwise ratios
    ``log mass / log r``, their minimum over the deeper half of the grid, the cylinder
    counts, and the floor ``min h/lambda`` of the two sources.
    """
    arr = np.asarray(w, dtype=np.int8).reshape(-1)
    log_radii = default_log_radii(map, arr) if log_radii is None else np.sort(np.asarray(log_radii, float))[::-1]
    if log_radii.size < min_radii:
        raise EstimationError(f"need at least {min_radii} radii, got {log_radii.size}")
    orient = _orientations(map)
    ctx = _EtaPrefix(cm, arr)
    cache: dict[int, float] = {}
    depth, mass, count = [], [], []
    for lr in log_radii:
        n = _depth_for_radius(map, arr, lr, cache)
        if n == 0:
            depth.append(0)
            mass.append(0.0)
            count.append(1)
            continue
        _, masses = covering_cylinders(cm, map, arr, lr, n, _ctx=ctx, _orient=orient)
        depth.append(n)
        mass.append(float(logsumexp(masses)))
        count.append(int(np.isfinite(masses).sum()))
    mass = np.minimum(np.array(mass), 0.0)
    usable = np.array(depth) > 0
    if usable.sum() < 4:
        raise EstimationError("fewer than 4 usable radii")
    slope, intercept, stderr, r2 = loglog_fit(log_radii[usable], mass[usable])
    ratios = np.where(usable, mass / log_radii, np.nan)
    deep = ratios[usable][usable.sum() // 2:]
    floors = [f.h / f.lam for f in cm.families[:2]]
    return DimensionEstimate(
        slope=slope, stderr=stderr,
        radii_range=(float(np.exp(log_radii.min())), float(np.exp(log_radii.max()))),
        table={"log_r": log_radii, "depth": np.array(depth), "log_mass": mass, "cylinders": np.array(count)},
        r_squared=r2, intercept=intercept,
        diagnostics={"ratios": ratios.tolist(), "deep_min_ratio": float(np.min(deep)),
                     "floor": float(min(floors)), "max_cylinders": int(max(count))},
    )


def points_csv(map: BranchMap, words) -> str:
    """``(word, x)`` rows; ``x`` is the projection of the word's cylinder midpoint."""
    words = np.atleast_2d(words)
    xs = cylinder_pass(map, words[:, :min(words.shape[1], 200)]).center
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["word", "x"])
    for w, x in zip(words, xs):
        writer.writerow([word_str(w), repr(float(x))])
    return buf.getvalue()
