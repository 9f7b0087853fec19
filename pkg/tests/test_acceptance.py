"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from koopmanlab.attractor import (
    SetFamily, find_absorbing_time, ideal_of_attractor_check, smallest_attractor,
)
from koopmanlab.characterize import (
    OperatorUnderTest, averaging_operator, check_algebra_homomorphism, check_kato,
    check_lattice_homomorphism, check_unital, classify_operator, hsign,
)
from koopmanlab.koopman import (
    check_resolvent_identity, generator_on_grid, kernel_fixed_check, resolvent_laplace,
)
from koopmanlab.observables import (
    AtomicMeasure, CompactSample, Dictionary, Observable, cexp, coordinate, exp_decay, sine, unit,
)
from koopmanlab.semiflow import (
    DomainChart, check_semiflow_laws, crandall_liggett_evolve, linear_relation,
    make_compactified_translation_flow, make_ode_flow, make_translation_flow, logistic_field,
)

TR = make_translation_flow()
GRID20 = CompactSample.interval(0.0, 3.0, 20)
GRID3 = CompactSample.from_points([0.0, 1.0, 2.0])


@pytest.fixture
def verdict(capsys):
    def emit(n, name, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n:2d}] {'PASS' if ok else 'FAIL'}  {name}: {detail}")
        assert ok, detail
    return emit


def test_criterion_01_semiflow_laws(verdict):
    start = time.perf_counter()
    grid = CompactSample.interval(0.0, 5.0, 20)
    tr = check_semiflow_laws(TR, grid, [0.25, 0.5, 1.0], 1e-15)
    flow = make_ode_flow(logistic_field(), DomainChart.interval(0.0, math.inf), 1e-3)
    lg = check_semiflow_laws(flow, CompactSample.interval(0.1, 2.0, 50), [0.25, 0.5, 1.0], 1e-6)
    elapsed = time.perf_counter() - start
    r_tr = max(tr.residuals.values())
    r_lg = max(lg.residuals.values())
    ok = r_tr <= 1e-15 and r_lg < 1e-6 and elapsed < 1.0
    verdict(1, "semiflow laws", ok,
            f"translation {r_tr:.2e} <= 1e-15, logistic {r_lg:.2e} < 1e-6, {elapsed:.2f}s < 1s")


def test_criterion_02_crandall_liggett(verdict):
    start = time.perf_counter()
    rel = linear_relation(1.0)
    ks = [2 ** p for p in range(6, 11)]
    errs, oracle_gap = [], 0.0
    for k in ks:
        v = float(crandall_liggett_evolve(rel, 1.0, 1.0, k))
        oracle_gap = max(oracle_gap, abs(v - (1.0 + 1.0 / k) ** -k))
        errs.append(abs(v - math.exp(-1.0)))
    ratios = [b / a for a, b in zip(errs, errs[1:])]
    elapsed = time.perf_counter() - start
    ok = (errs[-1] < 2e-4 and all(0.45 <= r <= 0.55 for r in ratios) and oracle_gap < 1e-14
          and elapsed < 1.0)
    verdict(2, "Crandall-Liggett", ok,
            f"err(1024)={errs[-1]:.2e} < 2e-4, ratios {min(ratios):.4f}..{max(ratios):.4f} "
            f"in [0.45,0.55], closed-form gap {oracle_gap:.1e}, {elapsed:.2f}s < 1s")


def test_criterion_03_generator_order(verdict):
    X = GRID20.points[:, 0]
    cases = [(sine(), np.cos(X)), (exp_decay(), -np.exp(-X))]
    worst_ratio, worst_abs = 0.0, 0.0
    for f, exact in cases:
        err = {h: float(np.max(np.abs(generator_on_grid(TR, f, GRID20, h).value - exact)))
               for h in (1e-2, 5e-3, 2.5e-3, 1e-3)}
        worst_ratio = max(worst_ratio, err[5e-3] / err[1e-2], err[2.5e-3] / err[5e-3])
        worst_abs = max(worst_abs, err[1e-3])
    ok = worst_ratio <= 0.3 and worst_abs < 1e-6
    verdict(3, "generator order", ok,
            f"max error ratio {worst_ratio:.3f} <= 0.3, error at h=1e-3 {worst_abs:.2e} < 1e-6")


def test_criterion_04_resolvent(verdict):
    grid = CompactSample.interval(0.0, 5.0, 20)
    res = resolvent_laplace(TR, exp_decay(), 1.0, 30.0, 512, grid)
    err = float(np.max(np.abs(res.observable.values(grid.points) - np.exp(-grid.points[:, 0]) / 2)))
    ident = check_resolvent_identity(TR, exp_decay(), 1.0, grid, 1e-3, 1e-3, 30.0, 512)
    r = ident.residuals["identity"]
    ok = err < 1e-4 and r < 1e-3
    verdict(4, "resolvent", ok, f"grid error {err:.2e} < 1e-4, identity residual {r:.2e} < 1e-3")


def test_criterion_05_characterization(verdict):
    koop = OperatorUnderTest.from_flow(TR)
    d = Dictionary((exp_decay(), cexp(), sine()))
    r_koop = max(check_algebra_homomorphism(koop, 1.0, d, GRID20, 1e-12).max_residual(),
                 check_lattice_homomorphism(koop, 1.0, d, GRID20, 1e-12).max_residual(),
                 check_unital(koop, 1.0, GRID20, 1e-12).max_residual())
    S = averaging_operator(TR)
    f = exp_decay()
    lhs, rhs = S(0.0, f * f)(0.0), S(0.0, f)(0.0) ** 2
    alg = check_algebra_homomorphism(S, 0.0, Dictionary((f,)), GRID3, 1e-12)
    lat = check_lattice_homomorphism(S, 0.0, Dictionary((cexp(),)), GRID3, 1e-12)
    r_alg, r_lat = alg.residuals["product"], lat.residuals["modulus"]
    # closed forms (1 + e^-2)/2 and ((1 + e^-1)/2)^2
    witness_ok = abs(lhs - 0.567668) < 1e-6 and abs(rhs - 0.467774) < 1e-6
    ok = (r_koop <= 1e-12 and not alg.passed and r_alg >= 0.09 and not lat.passed
          and r_lat >= 0.1 and witness_ok)
    verdict(5, "characterization", ok,
            f"Koopman residual {r_koop:.1e} <= 1e-12, averaging algebra {r_alg:.4f} >= 0.09 "
            f"(witness {lhs:.6f} vs {rhs:.6f}), lattice {r_lat:.4f} >= 0.1")


def test_criterion_06_derivation(verdict):
    from koopmanlab.characterize import check_derivation
    f, g = exp_decay(), sine()
    rs = [check_derivation(TR, f, g, GRID20, h, 1e-5).residuals["product_rule"]
          for h in (1e-2, 5e-3, 2.5e-3, 1e-3)]
    order = math.log2(rs[0] / rs[1]), math.log2(rs[1] / rs[2])
    ok = rs[-1] < 1e-5 and min(order) >= 1.8
    verdict(6, "derivation", ok,
            f"product-rule residual {rs[-1]:.2e} < 1e-5 at h=1e-3, observed orders "
            f"{order[0]:.2f}, {order[1]:.2f}")


def test_criterion_07_kato(verdict):
    # x - 1, clipped to stay bounded; vanishes at x = 1 with unit orbit derivative
    shifted = Observable(lambda X: np.clip(X[:, 0] - 1.0, -1.0, 10.0), 10.0, "x-1")
    nonzero = check_kato(TR, shifted, AtomicMeasure.dirac(2.0), 1e-3)
    zero = check_kato(TR, shifted, AtomicMeasure.dirac(1.0), 1e-3)
    gaps = [abs(r.residuals["lhs"] - r.residuals["rhs"]) for r in (nonzero, zero)]
    hs = [hsign(0, 3 - 4j) == 5, hsign(2, 7) == 7, hsign(1j, 1) == 1j, hsign(-1, 2) == -2,
          hsign(1e-12, -2.0, eps=1e-9) == 2.0]
    ok = nonzero.passed and zero.passed and max(gaps) < 1e-4 and all(hs)
    verdict(7, "Kato equality", ok,
            f"nonzero-atom gap {gaps[0]:.1e}, zero-atom gap {gaps[1]:.1e} < 1e-4, "
            f"hsign cases {sum(hs)}/{len(hs)} exact")


def test_criterion_08_point_map(verdict):
    koop = OperatorUnderTest.from_flow(TR)
    cands = CompactSample.interval(0.0, 4.0, 4001)
    cl = classify_operator(koop, 1.0, Dictionary((exp_decay(), cexp(), sine())), GRID3, 1e-9,
                           cands)
    err = float(np.max(np.abs(cl.psi.ravel() - np.array([1.0, 2.0, 3.0]))))
    ok = cl.verdict == "koopman-like" and err <= 1e-3
    verdict(8, "point map", ok, f"psi={np.round(cl.psi.ravel(), 4).tolist()}, error {err:.1e} "
                                f"<= mesh 1e-3")


def test_criterion_09_attractor(verdict, logistic_flow):
    start = time.perf_counter()
    A = CompactSample.interval(0.5, 1.5, 101)
    absorb = find_absorbing_time(logistic_flow, SetFamily((CompactSample.from_points([0.1]),)), A,
                                 np.linspace(0.0, 8.0, 801), 0.0)
    t_in = absorb.entry_times[0]
    res = smallest_attractor(logistic_flow, A, 1.0, 60, 1e-6)
    pts = res.M.points[:, 0]
    diam = float(pts.max() - pts.min())
    has_one = float(np.min(np.abs(pts - 1.0))) <= A.mesh
    family = SetFamily((CompactSample.interval(0.1, 2.0, 39),))
    ideal = ideal_of_attractor_check(logistic_flow, res, family,
                                     [unit(), coordinate(0, 0.0, 2.0)],
                                     np.linspace(0.0, 12.0, 121), 1e-3)
    comp = smallest_attractor(make_compactified_translation_flow(),
                              CompactSample.interval(0.5, 1.0, 51), 1000.0, 200, 1e-6)
    comp_ok = bool(np.all(np.abs(comp.M.points - 1.0) <= 0.01))
    elapsed = time.perf_counter() - start
    ok = (t_in is not None and abs(t_in - math.log(9.0)) <= 0.1 and diam < 0.02 and has_one
          and ideal.passed and comp_ok and elapsed < 10.0)
    verdict(9, "attractor", ok,
            f"entry {t_in:.3f} vs ln 9 {math.log(9.0):.3f}, diameter {diam:.1e}, contains 1 "
            f"{has_one}, ideal check {ideal.passed} (basis "
            f"{ideal.residuals['basis_decay']:.1e}), compactified M={comp.M.points.ravel()[:3]}, "
            f"{elapsed:.2f}s < 10s")


def test_criterion_10_kernel(verdict):
    times = [0.5, 1.0, 2.0]
    one = kernel_fixed_check(TR, unit(), times, GRID20, 1e-3, 1e-6)
    dec = kernel_fixed_check(TR, exp_decay(), times, GRID20, 1e-3, 1e-6)
    ok = one.passed and one.verdict == "fixed" and dec.passed and dec.verdict == "non-fixed"
    verdict(10, "kernel lemma", ok, f"1 -> {one.verdict}, exp(-x) -> {dec.verdict}")
