"""Acceptance suite: one test per criterion, each timed and reported as a pass/fail line.

Run directly with ``python tests/test_acceptance.py`` or through pytest.
"""

import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from irregdim.cli import main as cli_main
from irregdim.dimension import attractor_sample, box_counting
from irregdim.interval_maps import cantor_map, doubling_map, make_linear_map, make_manneville_pomeau
from irregdim.measures import bernoulli, entropy, lyapunov, markov, sample_words
from irregdim.moran import (
    MoranSchedule,
    build_concatenated,
    build_schedule,
    eta_mass,
    generate_point,
    generate_points,
    j_of_n,
    local_dimension,
    rho_bounds,
)
from irregdim.potentials import appro_gap, builtin_potentials, indicator, phi_star, phi_star_bracket, variation_norm
from irregdim.spectrum import dimension_spectrum, hyperbolic_dimension
from irregdim.symbolic import conjugacy_residual, cylinder_pass
from oracles import bernoulli_grid_dimension, binary_entropy_bits, moran_root

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def test_criterion_1_besicovitch_eggleston(acceptance_report):
    T, f = doubling_map(), indicator("1")
    alphas = [k / 10 for k in range(1, 10)]
    with Timer() as t:
        points = [dimension_spectrum(T, f, a, k=0, starts=16, seed=0) for a in alphas]
    errors = []
    for a, pt in zip(alphas, points):
        closed = binary_entropy_bits(a)
        assert bernoulli_grid_dimension(a) == pytest.approx(closed, abs=1e-9)
        errors.append(abs(pt.dim_value - closed))
    err = max(errors)
    ok = err < 1e-3 and t.elapsed < 30
    acceptance_report(1, ok, f"max |dim - closed form| = {err:.2e} (tol 1e-3), {t.elapsed:.1f}s (limit 30s)")
    assert err < 1e-3
    assert t.elapsed < 30


def test_criterion_2_uniformly_hyperbolic_dimension(acceptance_report):
    with Timer() as t:
        cantor = hyperbolic_dimension(cantor_map(), k=0, starts=8, seed=0).dim_value
        mixed = hyperbolic_dimension(make_linear_map([(0, 0.5), (0.75, 1)]), k=0, starts=8, seed=0).dim_value
    e1 = abs(cantor - math.log(2) / math.log(3))
    e2 = abs(mixed - moran_root([0.5, 0.25]))
    ok = max(e1, e2) < 1e-3 and t.elapsed < 10
    acceptance_report(2, ok, f"cantor {cantor:.6f} (err {e1:.1e}), (1/2,1/4) {mixed:.6f} (err {e2:.1e}), "
                             f"{t.elapsed:.1f}s (limit 10s)")
    assert max(e1, e2) < 1e-3
    assert t.elapsed < 10


def test_criterion_3_box_counting_consistency(acceptance_report):
    with Timer() as t:
        cantor = box_counting(attractor_sample(cantor_map(), 10)).slope
        doubling = box_counting(attractor_sample(doubling_map(), 10)).slope
    e1 = abs(cantor - math.log(2) / math.log(3))
    e2 = abs(doubling - 1.0)
    ok = max(e1, e2) < 0.05 and t.elapsed < 10
    acceptance_report(3, ok, f"cantor slope {cantor:.4f} (err {e1:.3f}), doubling {doubling:.4f} "
                             f"(err {e2:.3f}), tol 0.05, {t.elapsed:.1f}s (limit 10s)")
    assert max(e1, e2) < 0.05
    assert t.elapsed < 10


def test_criterion_4_irregular_set_full_dimension(acceptance_report, tmp_path, capsys):
    out = tmp_path / "irregular"
    with Timer() as t:
        code = cli_main(["irregular", "--config", str(CONFIGS / "irregular_doubling.yaml"), "--out", str(out)])
    capsys.readouterr()
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["schedule"]["lengths"]) == 6
    floor = summary["floor"]
    assert floor == pytest.approx(binary_entropy_bits(0.9), abs=1e-9)

    osc = list(csv.DictReader(io.StringIO((out / "oscillation.csv").read_text())))
    odd = [float(r["value"]) for r in osc if int(r["stage"]) % 2 == 1]
    even_ok = all(float(r["mixture_deviation"]) <= float(r["budget"])
                  for r in osc if int(r["stage"]) % 2 == 0)
    odd_err = max(abs(v - 0.5) for v in odd)
    ok_a = len(osc) == 6 and odd_err <= 0.05 and even_ok

    local = list(csv.DictReader(io.StringIO((out / "local_dimension.csv").read_text())))
    slopes = np.array([float(r["slope"]) for r in local])
    frac = float(np.mean(slopes >= min(1.0, floor) - 0.05))
    ok_b = len(local) == 50 and frac >= 0.9

    box = summary["box_dimension"]
    ok_c = box["diagnostics"]["points"] == 10_000 and box["slope"] >= floor - 0.08

    ok = ok_a and ok_b and ok_c and t.elapsed < 60
    acceptance_report(4, ok, f"(a) odd max |avg - 0.5| = {odd_err:.3f}, even within budget: {even_ok}; "
                             f"(b) {frac:.0%} of slopes >= {min(1.0, floor) - 0.05:.3f}; "
                             f"(c) box {box['slope']:.3f} >= {floor - 0.08:.3f}; {t.elapsed:.1f}s (limit 60s)")
    assert ok_a and ok_b and ok_c
    assert t.elapsed < 60


def test_criterion_5_cylinder_rate_approaches_birkhoff_average(acceptance_report):
    T = make_manneville_pomeau(0.5)
    with Timer() as t:
        words = sample_words(bernoulli(0.5), 1000, 100, np.random.default_rng(0))
        gap100 = float(appro_gap(T, words[:, :100]).max())
        gap1000 = float(appro_gap(T, words).max())
    ok = gap1000 < gap100 and gap1000 < 0.05 and t.elapsed < 20
    acceptance_report(5, ok, f"max gap n=100 {gap100:.2e}, n=1000 {gap1000:.2e} (< 0.05), "
                             f"{t.elapsed:.1f}s (limit 20s)")
    assert gap1000 < gap100
    assert gap1000 < 0.05
    assert t.elapsed < 20


def test_criterion_6_variation_norm_is_sublinear(acceptance_report):
    pots = builtin_potentials(make_manneville_pomeau(0.5))
    ns = [50, 100, 200, 500]
    details, ok = [], True
    for name, pot in pots.items():
        per_n = np.array([variation_norm(pot, n, budget=128, seed=0).lower / n for n in ns])
        good = per_n[-1] < 0.01 and np.all(np.diff(per_n) <= 1e-3)
        ok &= bool(good)
        details.append(f"{name} {per_n[-1]:.4f}")
    acceptance_report(6, ok, "||Phi||_500 / 500: " + ", ".join(details) + " (tol 0.01, non-increasing within 1e-3)")
    assert ok


def test_criterion_7_phi_star_continuity(acceptance_report):
    f = indicator("1")
    base = float(phi_star(f, bernoulli(0.3))[0])
    ratios = []
    for k in range(1, 13):
        p = 0.3 + 0.1 / 2 ** k
        ratios.append(abs(float(phi_star(f, bernoulli(p))[0]) - base) / abs(p - 0.3))
    ok_cont = max(ratios) <= 2 + 1e-9

    tb = builtin_potentials(doubling_map())["terminal_bonus"]
    n_max = 12
    C = float(np.max(tb.C))
    widths = []
    for p in (0.3, 0.5, 0.3 + 0.1 / 2):
        lo, hi = phi_star_bracket(tb, bernoulli(p), n_max=n_max)
        widths.append(float(np.max(hi - lo)))
    ok_bracket = max(widths) <= 2 * C / n_max + 1e-12
    ok = ok_cont and ok_bracket
    acceptance_report(7, ok, f"max |dPhi*|/|dp| = {max(ratios):.3f} (<= 2); max bracket width "
                             f"{max(widths):.4f} (<= 2C/n_max = {2 * C / n_max:.4f})")
    assert ok_cont and ok_bracket


def _structural_checks():
    rng = np.random.default_rng(8)
    results = {}

    linear = [make_linear_map([(0, 0.5), (0.5, 1)]), make_linear_map([(0, 0.3), (0.6, 1)]),
              make_linear_map([(0, 0.2), (0.4, 0.7), (0.8, 1)])]
    nest = True
    for T in linear + [make_manneville_pomeau(0.5)]:
        W = rng.integers(1, T.m + 1, size=(50, 20), dtype=np.int8)
        prev = None
        for n in range(1, 21):
            res = cylinder_pass(T, W[:, :n])
            if prev is not None:
                nest &= bool(np.all(res.a >= prev.a - 1e-12) and np.all(res.b <= prev.b + 1e-12))
            prev = res
    results["cylinder nesting"] = nest

    resid = 0.0
    for T in linear:
        for w in rng.integers(1, T.m + 1, size=(50, 30), dtype=np.int8):
            resid = max(resid, conjugacy_residual(T, w))
    results[f"conjugacy residual {resid:.1e} < 1e-9"] = resid < 1e-9

    ruelle = True
    for _ in range(1000):
        a = rng.uniform(0.05, 0.45)
        T = make_linear_map([(0, a), (rng.uniform(a + 0.05, 0.95), 1)])
        mu = markov(rng.dirichlet(np.ones(2), size=2))
        ruelle &= entropy(mu) <= lyapunov(T, mu)[0] + 1e-9
    results["Ruelle h <= lambda on 1000 measures"] = bool(ruelle)

    sched = MoranSchedule((6, 8, 10), (2, 2, 2), (0.6, 0.5, 0.45), 0.5)
    small = build_concatenated(sched, bernoulli(0.5), bernoulli(0.7), indicator("1"), doubling_map(), seed=4)
    norm = all(abs(fam.rho.sum() - 1.0) < 1e-12 for fam in small.families)
    marg = True
    stops = np.cumsum(np.r_[0, sched.flat_lengths])
    for seed in range(5):
        w = generate_point(small, seed)
        for pos, cut in enumerate(stops[:-1]):
            fam = small.family_at(pos)
            total = np.logaddexp.reduce([eta_mass(small, np.concatenate([w[:cut], b])) for b in fam.words])
            marg &= abs(total - (eta_mass(small, w[:cut]) if cut else 0.0)) < 1e-12
    results["rho normalization and eta marginalization"] = bool(norm and marg)

    T = cantor_map()
    s = build_schedule(4, 20, 1.5, 1.2, 0.3)
    cm = build_concatenated(s, bernoulli(0.5), bernoulli(0.8), indicator("1"), T, seed=1)
    W = generate_points(cm, 0, 200, s.total_length)
    ns = np.unique(np.r_[np.geomspace(1, s.total_length, 40).astype(int), s.boundaries])
    rb = rho_bounds(cm, T, ns)
    floor = True
    for n, r in zip(ns, rb):
        floor &= bool(np.all(cylinder_pass(T, W[:, :n]).log_diameter >= -r - 1e-9))
    results["diameter floor on 200 points"] = floor

    big = build_schedule(6, 20, 4, 0.4, 0.1)
    J = np.array([j_of_n(big, n)[0] for n in range(1, 200_001, 7)] + [j_of_n(big, big.total_length)[0]])
    Jc = np.array([j_of_n(big, n)[0] for n in range(1, 5001)])
    results["J monotone"] = bool(np.all(np.diff(J) >= 0) and np.all(np.diff(Jc) >= 0) and np.all(np.diff(Jc) <= 1))

    cover = max(local_dimension(small, doubling_map(), generate_point(small, k)).diagnostics["max_cylinders"]
                for k in range(20))
    results[f"covering cylinders {cover} <= 3"] = cover <= 3
    return results


def test_criterion_8_structural_invariants(acceptance_report):
    with Timer() as t:
        results = _structural_checks()
    failed = [k for k, v in results.items() if not v]
    ok = not failed and t.elapsed < 30
    acceptance_report(8, ok, f"{len(results) - len(failed)}/{len(results)} invariant groups hold"
                             + (f" (failed: {'; '.join(failed)})" if failed else "")
                             + f", {t.elapsed:.1f}s (limit 30s)")
    assert not failed
    assert t.elapsed < 30


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
