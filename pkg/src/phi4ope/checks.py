"""Verification suites run by ``phi4ope verify``.

Each check records what was measured, the reference and the tolerance, so a
report line can be read without the code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy import special

from . import oracle
from .core import CompositeOp, parse_op, two_points, unit
from .deform import CoeffTable, NumericSettings, coefficient, integrand_function, ir_slopes, uv_slopes
from .expr import Y, CoeffExpr, bubble, integrate_y_symbolic, mass_power
from .quad import QuadPlan, integrate_r4
from .specfun import EULER_GAMMA, bessel_k0, bessel_k1, propagator, propagator_deriv
from .wick import zeroth_order

SEPARATIONS = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    measured: str
    target: str
    tolerance: str
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.suite}/{self.name}: measured {self.measured}; target {self.target}; tolerance {self.tolerance}"


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b) if b else abs(a)


def _num(suite, name, measured, target, tol, *, relative=True) -> Check:
    err = _rel(measured, target) if relative else abs(measured - target)
    kind = "rel" if relative else "abs"
    return Check(suite, name, f"{measured:.12g}", f"{target:.12g}", f"{kind} {tol:g}", bool(err <= tol))


# -- wick -------------------------------------------------------------------

P = parse_op


def _c(a, b, w=(0, 0, 0, 0), weight=1):
    return CoeffExpr.propagator(a, b, w, weight)


def reference_zeroth_order_cases() -> list[tuple[str, list[CompositeOp], CompositeOp, CoeffExpr]]:
    """(label, ops, target, expected) for the printed zeroth-order expressions.

    Labels: the interaction sits at y (first operator), externals at x1, x2.
    """
    phi, phi2, phi3, phi4 = P("phi"), P("phi^2"), P("phi^3"), P("phi^4")
    one = P("1")
    cases = [
        ("phi4.phi.phi->phi4", [phi4, phi, phi], phi4, _c(0, 1, weight=4) + _c(0, 2, weight=4) + _c(1, 2)),
        ("phi.phi->1", [phi, phi], one, _c(0, 1)),
        ("phi4.1->phi4", [phi4, one], phi4, CoeffExpr.constant(1)),
        ("phi.phi->phi2", [phi, phi], phi2, CoeffExpr.constant(1)),
        ("phi4.phi2->phi4", [phi4, phi2], phi4, _c(0, 1, weight=8)),
        ("phi4.phi3->phi", [phi4, phi3], phi, CoeffExpr.term(24, [_c(0, 1).terms[0][0][0]] * 3)),
        (
            "phi4.phi.phi3->phi2",
            [phi4, phi, phi3],
            phi2,
            CoeffExpr.term(72, [_c(0, 1).terms[0][0][0]] + [_c(0, 2).terms[0][0][0]] * 2)
            + CoeffExpr.term(24, [_c(0, 2).terms[0][0][0]] * 3)
            + CoeffExpr.term(36, [_c(0, 2).terms[0][0][0]] * 2 + [_c(1, 2).terms[0][0][0]]),
        ),
        ("phi4.phi3->phi3", [phi4, phi3], phi3, CoeffExpr.term(36, [_c(0, 1).terms[0][0][0]] * 2)),
        ("phi.phi3->phi2", [phi, phi3], phi2, _c(0, 1, weight=3)),
    ]
    for mu in range(4):
        tgt = CompositeOp(((0, 0, 0, 0), unit(mu)))
        cases.append((f"phi.phi->phi.d{mu + 1}phi", [phi, phi], tgt, CoeffExpr.monomial(unit(mu), 0, 1)))
        # phi4 at y, (phi d_mu phi) at x2 -> phi4: 4 d_mu C(x2 - y)
        cases.append((f"phi4.phi.d{mu + 1}phi->phi4", [phi4, tgt], phi4, _c(1, 0, unit(mu), weight=4)))
    return cases


def brute_force_count(field_counts: list[int], n_left: int) -> dict[tuple[tuple[int, int], ...], int]:
    """Count labelled cross-operator pairings of plain fields by direct recursion.

    Every field slot is either left uncontracted or paired with a later slot
    of a different operator.  The result maps the sorted multiset of
    contracted operator pairs to the number of labelled pairings producing it.
    """
    slots = [i for i, c in enumerate(field_counts) for _ in range(c)]
    out: dict[tuple[tuple[int, int], ...], int] = {}

    def rec(remaining: tuple[int, ...], kept: int, pairs: tuple):
        if not remaining:
            if kept == n_left:
                key = tuple(sorted(pairs))
                out[key] = out.get(key, 0) + 1
            return
        first, rest = remaining[0], remaining[1:]
        if kept < n_left:
            rec(rest, kept + 1, pairs)
        for j, other in enumerate(rest):
            if slots[other] != slots[first]:
                rec(rest[:j] + rest[j + 1 :], kept, pairs + ((slots[first], slots[other]),))

    rec(tuple(range(len(slots))), 0, ())
    return out


def _pattern_weights(ops: list[CompositeOp], target: CompositeOp) -> dict[tuple, int]:
    """Weights of the Wick expression regrouped like ``brute_force_count`` keys."""
    e = zeroth_order(ops, target, labels=list(range(len(ops))))
    out = {}
    for factors, w in e.terms:
        pairs = tuple(sorted((min(f.a, f.b), max(f.a, f.b)) for f in factors))
        out[pairs] = int(w)
    return out


def suite_wick() -> list[Check]:
    checks = []
    for label, ops, tgt, expected in reference_zeroth_order_cases():
        got = zeroth_order(ops, tgt)
        checks.append(Check("wick", label, got.to_text(), expected.to_text(), "exact", got == expected))
    # independent count of labelled pairings for derivative-free inputs
    for counts, n_left in (
        ([4, 1, 1], 4), ([4, 1, 1], 2), ([4, 2], 4), ([4, 3], 1), ([4, 3], 3), ([4, 1, 3], 2), ([2, 2, 2], 0), ([4, 4], 4)
    ):
        ops = [CompositeOp.phi(c) for c in counts]
        agg = brute_force_count(counts, n_left)
        got = _pattern_weights(ops, CompositeOp.phi(n_left))
        checks.append(
            Check("wick", f"count {counts}->phi^{n_left}", str(sorted(got.values())), str(sorted(agg.values())), "exact", got == agg)
        )
    return checks


# -- bessel -----------------------------------------------------------------


def suite_bessel() -> list[Check]:
    s = "bessel"
    checks = [
        _num(s, "K0(1)", bessel_k0(1.0), float(special.k0(1.0)), 1e-12),
        _num(s, "K0(10)", bessel_k0(10.0), float(special.k0(10.0)), 1e-12),
        _num(s, "K1(1)", bessel_k1(1.0), float(special.k1(1.0)), 1e-12),
        _num(s, "K1(5)", bessel_k1(5.0), float(special.k1(5.0)), 1e-12),
        _num(s, "K0(z)+log(z/2)+gamma at z=1e-6", bessel_k0(1e-6) + math.log(5e-7) + EULER_GAMMA, 0.0, 1e-10, relative=False),
        _num(s, "z K1(z) at z=1e-6", 1e-6 * bessel_k1(1e-6), 1.0, 1e-10),
        _num(s, "propagator r=1 m=1", propagator([1.0, 0, 0, 0], 1.0), float(special.k1(1.0)) / (4 * math.pi**2), 1e-12),
        _num(s, "4 pi^2 r^2 C at r=1e-4", 4 * math.pi**2 * 1e-8 * propagator([1e-4, 0, 0, 0]), 1.0, 1e-6),
    ]
    h = 1e-5
    x = np.array([1.0, 0, 0, 0])
    fd = (propagator(x + h * np.eye(4)[0]) - propagator(x - h * np.eye(4)[0])) / (2 * h)
    checks.append(_num(s, "d1 C vs central difference", propagator_deriv(x, 1.0, (1, 0, 0, 0)), fd, 1e-6))
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        p = rng.normal(size=4)
        lap = sum(propagator_deriv(p, 1.0, tuple(2 * unit(mu)[k] for k in range(4))) for mu in range(4))
        worst = max(worst, abs(-lap + propagator(p)) / propagator(p))
    checks.append(_num(s, "(-Laplacian + m^2) C residual", worst, 0.0, 1e-6, relative=False))
    return checks


# -- integrals ----------------------------------------------------------------


def suite_integrals() -> list[Check]:
    s = "integrals"
    checks = []
    origin = np.zeros((1, 4))
    for m in (1.0, 2.0):
        res = integrate_r4(lambda y, m=m: propagator(y, m), QuadPlan.for_points(origin, mass=m, rel_tol=1e-8))
        checks.append(_num(s, f"int C d^4y = 1/m^2 (m={m:g})", res.value, 1.0 / m**2, 1e-6))
    for r in SEPARATIONS:
        x1 = np.array([r, 0, 0, 0])
        res = integrate_r4(
            lambda y, x1=x1: propagator(y - x1) * propagator(y), QuadPlan.for_points([x1, np.zeros(4)], rel_tol=1e-5)
        )
        checks.append(_num(s, f"int C C = K0/(8 pi^2) (r={r:g})", res.value, float(special.k0(r)) / (8 * math.pi**2), 1e-4))
    res = integrate_r4(lambda y: propagator_deriv(y, 1.0, (1, 0, 0, 0)), QuadPlan.for_points(origin))
    checks.append(_num(s, "int d1 C = 0", res.value, 0.0, 1e-8, relative=False))
    e = CoeffExpr.propagator(Y, 0) * CoeffExpr.propagator(Y, 1)
    got = integrate_y_symbolic(e)
    exp = CoeffExpr.term(1, [bubble(0, 1)])
    checks.append(Check(s, "table: int C C", got.to_text(), exp.to_text(), "exact", got == exp))
    got = integrate_y_symbolic(CoeffExpr.propagator(Y, 1, (1, 0, 0, 0)))
    checks.append(Check(s, "table: int dC", got.to_text(), "0", "exact", got.is_zero()))
    got = integrate_y_symbolic(CoeffExpr.propagator(Y, 0))
    exp = CoeffExpr.term(1, [mass_power(-2)])
    checks.append(Check(s, "table: int C", got.to_text(), exp.to_text(), "exact", got == exp))
    return checks


# -- examples -------------------------------------------------------------------


def suite_examples(separations=SEPARATIONS, numeric=True) -> list[Check]:
    s = "examples"
    table = CoeffTable()
    checks = []
    phi = ["phi", "phi"]
    res = coefficient(phi, two_points(1.0), "phi^4", 1, "symbolic", table=table, slopes=False)
    checks.append(Check(s, "(C1) phi.phi->phi4 symbolic", res.expr.to_text(), "0", "exact (empty expression)", res.expr.is_zero()))
    if numeric:
        res = coefficient(phi, two_points(1.0), "phi^4", 1, "numeric", table=table, slopes=False,
                          settings=NumericSettings(rel_tol=1e-5))
        scale = max(abs(v) for v in res.breakdown.values())
        checks.append(_num(s, "(C1) phi.phi->phi4 numeric / max region", abs(res.value) / scale, 0.0, 1e-6, relative=False))
    exp = CoeffExpr.term(Fraction(-1, 2), [bubble(0, 1)])
    for r in separations:
        cfg = two_points(r)
        ref = oracle.k0_check(r)
        sym = coefficient(phi, cfg, "phi^2", 1, "symbolic", table=table, slopes=False)
        checks.append(Check(s, f"(C1) phi.phi->phi2 symbolic form r={r:g}", sym.expr.to_text(), exp.to_text(), "exact", sym.expr == exp))
        checks.append(_num(s, f"(C1) phi.phi->phi2 symbolic r={r:g}", sym.value, ref, 1e-13))
        if numeric:
            num = coefficient(phi, cfg, "phi^2", 1, "numeric", table=table, slopes=False)
            checks.append(_num(s, f"(C1) phi.phi->phi2 numeric r={r:g}", num.value, ref, 1e-3))
    small = coefficient(phi, two_points(1e-2), "phi^2", 1, table=table, slopes=False).value
    expansion = (math.log(1e-2 / 2) + EULER_GAMMA) / (16 * math.pi**2)
    checks.append(_num(s, "(C1) phi.phi->phi2 at r=1e-2 vs log expansion", small, expansion, 5e-5, relative=False))
    if numeric:
        for r in separations:
            pos = coefficient(["phi", "phi^3"], two_points(r), "phi^2", 1, table=table, slopes=False).value
            mom = oracle.momentum_space_C1_phi_phi3(r)
            checks.append(_num(s, f"(C1) phi.phi3->phi2 vs momentum space r={r:g}", pos, mom, 1e-2))
    return checks


# -- slopes -------------------------------------------------------------------

SLOPE_CASES = (("phi.phi->phi4", ["phi", "phi"], "phi^4"), ("phi.phi->phi2", ["phi", "phi"], "phi^2"),
               ("phi.phi3->phi2", ["phi", "phi^3"], "phi^2"))


def suite_slopes(separation: float = 1.0) -> list[Check]:
    s = "slopes"
    table = CoeffTable()
    cfg = two_points(separation)
    checks = []
    for label, ops, tgt in SLOPE_CASES:
        itg = table.integrand(tuple(parse_op(o) for o in ops), parse_op(tgt), 0)
        f = integrand_function(itg, cfg.points)
        for j, fit in uv_slopes(f, cfg.points).items():
            checks.append(Check(s, f"UV {label} near x{j + 1}", f"{fit.slope:.4g}", ">= -3.9", "slope", fit.slope >= -3.9))
        fit = ir_slopes(f, cfg.points)
        worst = max(fit.successive)
        mono = all(b <= a + 1e-9 for a, b in zip(fit.successive[:-1], fit.successive[1:]))
        checks.append(Check(s, f"IR {label}", f"{worst:.4g} (decreasing={mono})", "<= -6, decreasing", "slope", worst <= -6 and mono))
    itg = table.integrand((parse_op("phi"), parse_op("phi^3")), parse_op("phi^2"), 0)
    f = integrand_function(itg, cfg.points, part="main")
    fit = uv_slopes(f, cfg.points)[1]
    checks.append(Check(s, "UV unsubtracted phi.phi3->phi2 main near x2", f"{fit.slope:.4g}", "<= -5.5", "slope", fit.slope <= -5.5))
    return checks


# -- oracle -------------------------------------------------------------------


def suite_oracle() -> list[Check]:
    s = "oracle"
    checks = [
        _num(s, "bubble(q2=0)", oracle.subtracted_bubble(0.0), 0.0, 0.0, relative=False),
        _num(s, "bubble(q2=m2) vs 2D brute force", oracle.subtracted_bubble(1.0), oracle.bubble_bruteforce(1.0), 1e-4),
        _num(s, "bubble Feynman vs closed form q2=10", oracle.subtracted_bubble(10.0), oracle.subtracted_bubble_closed(10.0), 1e-10),
    ]
    q2 = np.logspace(6, 8, 9)
    vals = [oracle.subtracted_bubble(q) for q in q2]
    slope = float(np.polyfit(np.log(q2), vals, 1)[0])
    checks.append(_num(s, "large-q2 log slope", slope, -1 / (16 * math.pi**2), 1e-2))
    checks.append(_num(s, "angular kernel at 0 = 2 pi^2", float(oracle.angular_kernel(0.0)), 2 * math.pi**2, 1e-14))
    for z in (0.5, 3.0):
        checks.append(_num(s, f"angular kernel z={z:g} vs 2D quadrature", float(oracle.angular_kernel(z)), oracle.angular_kernel_direct(z), 1e-9))
    r = 1e-3
    exp_small = (math.log(r / 2) + EULER_GAMMA) / (16 * math.pi**2)
    checks.append(_num(s, "k0_check small |x| expansion", oracle.k0_check(r), exp_small, 1e-7, relative=False))
    prof = oracle._profile(1.0)
    test_q2 = np.logspace(-3, 6, 37) * 1.37
    worst = max(_rel(prof(q), oracle.subtracted_bubble(q)) for q in test_q2)
    checks.append(_num(s, "bubble profile vs Feynman integral off-grid", worst, 0.0, 1e-6, relative=False))
    a = oracle.momentum_space_C1_phi_phi3([1.0, 0, 0, 0])
    b = oracle.momentum_space_C1_phi_phi3([0, 0, 0.6, 0.8])
    checks.append(_num(s, "momentum-space result depends on |x| only", a, b, 1e-10))
    return checks


SUITES: dict[str, Callable[[], list[Check]]] = {
    "wick": suite_wick,
    "bessel": suite_bessel,
    "integrals": suite_integrals,
    "examples": suite_examples,
    "slopes": suite_slopes,
    "oracle": suite_oracle,
}


def run_suite(name: str) -> list[Check]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return SUITES[name]()
