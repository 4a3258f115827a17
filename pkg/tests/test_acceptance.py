"""End-to-end acceptance checks, one summary line per criterion."""

import itertools
import math
import time

import numpy as np
import pytest
from scipy import special

from phi4ope import oracle
from phi4ope.checks import reference_zeroth_order_cases
from phi4ope.core import parse_op, two_points
from phi4ope.deform import CoeffTable, NumericSettings, build_integrand, coefficient, integrand_function, ir_slopes, uv_slopes
from phi4ope.expr import evaluate
from phi4ope.quad import QuadPlan, integrate_r4
from phi4ope.specfun import propagator
from phi4ope.wick import _zeroth_order, zeroth_order

pytestmark = pytest.mark.slow

SEPARATIONS = (0.5, 1.0, 2.0)
PHI_PHI = ["phi", "phi"]
PHI_PHI3 = ["phi", "phi^3"]
SHIFT = np.array([3.7, -1.2, 0.4, 10.0])


def bessel_target(r, m=1.0):
    return -special.k0(m * r) / (16 * math.pi**2)


@pytest.fixture(scope="module")
def table():
    return CoeffTable()


def test_criterion_1_wick_fidelity(report):
    _zeroth_order.cache_clear()
    t0 = time.perf_counter()
    bad = [label for label, ops, target, expected in reference_zeroth_order_cases() if zeroth_order(ops, target) != expected]
    itg = build_integrand(PHI_PHI3, "phi^2", 0)
    main = sorted({int(w) for _, w in itg.main.terms})
    uv = sorted({int(w) for _, w in itg.uv.terms})
    elapsed = time.perf_counter() - t0
    ok = not bad and main == [24, 36, 72] and uv == [24, 108] and elapsed < 1.0
    detail = f"{len(reference_zeroth_order_cases()) - len(bad)} exact matches, mismatches {bad}; main weights {main}, uv weights {uv}; {elapsed:.3f} s (< 1 s)"
    assert report("1", ok, detail)


def test_criterion_2_vanishing_coefficient(table, report):
    sym = coefficient(PHI_PHI, two_points(1.0), "phi^4", 1, "symbolic", table=table, slopes=False)
    t0 = time.perf_counter()
    num = coefficient(PHI_PHI, two_points(1.0), "phi^4", 1, "numeric", table=table, slopes=False,
                      settings=NumericSettings(rel_tol=1e-7))
    elapsed = time.perf_counter() - t0
    ratio = abs(num.value) / max(abs(v) for v in num.breakdown.values())
    ok = sym.expr.is_zero() and sym.value == 0.0 and ratio <= 1e-6 and elapsed < 300
    detail = f"symbolic expression '{sym.expr.to_text()}'; numeric |value|/max region = {ratio:.3g} (<= 1e-6); {elapsed:.1f} s"
    assert report("2", ok, detail)


def test_criterion_3_bessel_benchmark(table, report):
    parts, ok = [], True
    for r in SEPARATIONS:
        ref = bessel_target(r)
        sym = coefficient(PHI_PHI, two_points(r), "phi^2", 1, "symbolic", table=table, slopes=False)
        t0 = time.perf_counter()
        num = coefficient(PHI_PHI, two_points(r), "phi^2", 1, "numeric", table=table, slopes=False)
        elapsed = time.perf_counter() - t0
        err = abs(num.value / ref - 1)
        sym_ok = sym.expr.to_text() == "-1/2*K0b(x1,x2)" and sym.value == pytest.approx(ref, rel=1e-14)
        ok &= sym_ok and err <= 1e-3 and elapsed <= 60
        parts.append(f"r={r:g}: numeric rel err {err:.2g} in {elapsed:.1f} s, symbolic exact={sym_ok}")
    assert report("3", ok, "; ".join(parts) + " (tol 1e-3)")


def test_criterion_4_small_separation(table, report):
    r = 1e-2
    got = coefficient(PHI_PHI, two_points(r), "phi^2", 1, table=table, slopes=False).value
    expansion = (math.log(r / 2) + np.euler_gamma) / (16 * math.pi**2)
    diff = abs(got - expansion)
    assert report("4", diff <= 5e-5, f"|x|=1e-2 value {got:.10g} vs expansion {expansion:.10g}, |diff| {diff:.3g} (<= 5e-5)")


def test_criterion_5_divergence_cancellation(table, report):
    parts, ok = [], True
    for r in SEPARATIONS:
        t0 = time.perf_counter()
        pos = coefficient(PHI_PHI3, two_points(r), "phi^2", 1, table=table, slopes=False)
        elapsed = time.perf_counter() - t0
        mom = oracle.momentum_space_C1_phi_phi3(r)
        err = abs(pos.value / mom - 1)
        ok &= pos.converged and err <= 1e-2 and elapsed <= 600
        parts.append(f"r={r:g}: position {pos.value:.8g} vs momentum {mom:.8g}, rel {err:.2g}, {elapsed:.1f} s")
    assert report("5", ok, "; ".join(parts) + " (tol 1e-2)")


def test_criterion_6_uv_slopes(table, report):
    worst, parts = math.inf, []
    for r in SEPARATIONS:
        cfg = two_points(r)
        for ops, tgt in ((PHI_PHI, "phi^4"), (PHI_PHI, "phi^2"), (PHI_PHI3, "phi^2")):
            itg = table.integrand(tuple(parse_op(o) for o in ops), parse_op(tgt), 0)
            for fit in uv_slopes(integrand_function(itg, cfg.points), cfg.points).values():
                worst = min(worst, fit.slope)
    itg = table.integrand((parse_op("phi"), parse_op("phi^3")), parse_op("phi^2"), 0)
    cfg = two_points(1.0)
    main = uv_slopes(integrand_function(itg, cfg.points, part="main"), cfg.points)[1].slope
    parts.append(f"smallest subtracted slope {worst:.3f} (>= -3.9)")
    parts.append(f"unsubtracted main near x2 {main:.3f} (<= -5.5)")
    assert report("6", worst >= -3.9 and main <= -5.5, "; ".join(parts))


def test_criterion_7_ir_decay(table, report):
    worst, mono = -math.inf, True
    for r in SEPARATIONS:
        cfg = two_points(r)
        for ops, tgt in ((PHI_PHI, "phi^4"), (PHI_PHI, "phi^2"), (PHI_PHI3, "phi^2")):
            itg = table.integrand(tuple(parse_op(o) for o in ops), parse_op(tgt), 0)
            fit = ir_slopes(integrand_function(itg, cfg.points), cfg.points)
            worst = max(worst, max(fit.successive))
            mono &= all(b <= a + 1e-9 for a, b in zip(fit.successive[:-1], fit.successive[1:]))
    assert report("7", worst <= -6 and mono, f"largest fitted slope beyond 3x diameter {worst:.3f} (<= -6), steepening={mono}")


def test_criterion_8_quadrature_self_tests(report):
    parts, ok = [], True
    origin = np.zeros((1, 4))
    for m in (0.5, 1.0, 2.0):
        res = integrate_r4(lambda y, m=m: propagator(y, m), QuadPlan.for_points(origin, mass=m, rel_tol=1e-8))
        err = abs(res.value * m**2 - 1)
        ok &= err <= 1e-6
        parts.append(f"int C m={m:g} rel {err:.2g}")
    for r in SEPARATIONS:
        x1 = np.array([0.0, r, 0.0, 0.0])
        res = integrate_r4(lambda y, x1=x1: propagator(y - x1) * propagator(y),
                           QuadPlan.for_points([x1, np.zeros(4)], rel_tol=1e-5))
        err = abs(res.value / (special.k0(r) / (8 * math.pi**2)) - 1)
        ok &= err <= 1e-4
        parts.append(f"int CC r={r:g} rel {err:.2g}")
    assert report("8", ok, "; ".join(parts) + " (tol 1e-6 and 1e-4)")


INVARIANCE_ZEROTH = [
    (["phi^4", "phi", "phi"], "phi^4"),
    (["phi^4", "phi", "phi^3"], "phi^2"),
    (["phi", "phi^3"], "phi*d2phi"),
    (["phi^2", "d3phi*phi", "phi"], "phi*d1d3phi"),
]
POINTS3 = np.array([[0.3, 1.1, -0.2, 0.5], [-0.6, 0.2, 0.9, 0.1], [0.4, -0.7, 0.3, -0.8]])


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def test_criterion_9_invariance(table, report):
    trans, perm, scale = 0.0, 0.0, 0.0
    # first-order criterion coefficients under a common shift
    for ops, tgt, method in ((PHI_PHI, "phi^2", "symbolic"), (PHI_PHI3, "phi^2", "numeric")):
        p = two_points(1.0).points
        a = coefficient(ops, p, tgt, 1, method, table=table, slopes=False).value
        b = coefficient(ops, p + SHIFT, tgt, 1, method, table=table, slopes=False).value
        trans = max(trans, _rel(a, b))
    # permutation of the two phi insertions in the Bessel entry
    p = two_points(1.0).points
    perm = _rel(coefficient(PHI_PHI, p, "phi^2", table=table, slopes=False).value,
                coefficient(PHI_PHI, p[::-1].copy(), "phi^2", table=table, slopes=False).value)
    for ops, tgt in INVARIANCE_ZEROTH:
        parsed = [parse_op(o) for o in ops]
        target = parse_op(tgt)
        pts = POINTS3[: len(ops)] if len(ops) == 3 else POINTS3[1:]
        e = zeroth_order(parsed, target)
        base = evaluate(e, pts)
        trans = max(trans, _rel(evaluate(e, pts + SHIFT), base))
        n = len(ops)
        for order in itertools.permutations(range(n - 1)):
            idx = list(order) + [n - 1]
            f = zeroth_order([parsed[i] for i in idx], target)
            perm = max(perm, _rel(evaluate(f, pts[idx]), base))
        power = target.dimension - sum(op.dimension for op in parsed)
        for lam in (0.5, 3.0):
            scale = max(scale, _rel(evaluate(e, lam * pts, None, 1.0 / lam), lam**power * base))
    s = NumericSettings(engine="mc", mc_samples=20_000, seed=7)
    runs = [coefficient(PHI_PHI3, two_points(1.0), "phi^2", settings=s, table=table, slopes=False) for _ in range(2)]
    det = runs[0].value == runs[1].value and runs[0].abs_error == runs[1].abs_error
    ok = trans <= 1e-10 and perm <= 1e-10 and scale <= 1e-10 and det
    detail = f"translation {trans:.2g}, permutation {perm:.2g}, scaling {scale:.2g} (tol 1e-10); seeded Monte Carlo repeatable={det}"
    assert report("9", ok, detail)


def test_second_order_properties(table, report):
    def run(points, seed):
        s = NumericSettings(mc_samples=8000, inner_samples=1000, seed=seed)
        return coefficient(PHI_PHI, points, "phi^2", 2, settings=s, table=table, slopes=False)

    p = two_points(1.0).points
    a, b, c = run(p, 1), run(p, 2), run(p + SHIFT, 1)
    finite = all(math.isfinite(x.value) and x.abs_error > 0 for x in (a, b, c))
    seeds = abs(a.value - b.value) / math.hypot(a.abs_error, b.abs_error)
    shift = abs(a.value - c.value) / math.hypot(a.abs_error, c.abs_error)
    ok = finite and seeds <= 3 and shift <= 3
    detail = (f"R=2 value {a.value:.4g} +- {a.abs_error:.2g}, finite={finite}; seed difference {seeds:.2f} sigma, "
              f"shift difference {shift:.2f} sigma at equal seed (<= 3)")
    assert report("R=2", ok, detail)
