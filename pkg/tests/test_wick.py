import itertools
import time
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phi4ope.checks import reference_zeroth_order_cases
from phi4ope.core import CompositeOp, parse_op, two_points
from phi4ope.deform import build_integrand
from phi4ope.expr import CoeffExpr, evaluate
from phi4ope.wick import _zeroth_order, vanishes_by_counting, zeroth_order


def matchings(slots):
    """All perfect matchings of a list of slot ids."""
    if not slots:
        yield []
        return
    a, rest = slots[0], slots[1:]
    for i, b in enumerate(rest):
        for m in matchings(rest[:i] + rest[i + 1 :]):
            yield [(a, b)] + m


def brute_force(counts, n_left):
    """Pair multiset -> number of labelled Wick pairings, by listing subsets and matchings."""
    owner = [i for i, c in enumerate(counts) for _ in range(c)]
    out = Counter()
    for left in itertools.combinations(range(len(owner)), n_left):
        rest = [s for s in range(len(owner)) if s not in left]
        for m in matchings(rest):
            if all(owner[a] != owner[b] for a, b in m):
                out[tuple(sorted(tuple(sorted((owner[a], owner[b]))) for a, b in m))] += 1
    return out


def pair_weights(expr):
    return Counter({tuple(sorted((min(f.a, f.b), max(f.a, f.b)) for f in fs)): int(w) for fs, w in expr.terms})


@pytest.mark.parametrize("label, ops, target, expected", reference_zeroth_order_cases(), ids=lambda v: v if isinstance(v, str) else "")
def test_printed_expressions(label, ops, target, expected):
    assert zeroth_order(ops, target) == expected


def test_printed_expressions_are_fast():
    _zeroth_order.cache_clear()
    t0 = time.perf_counter()
    for _, ops, target, _ in reference_zeroth_order_cases():
        zeroth_order(ops, target)
    assert time.perf_counter() - t0 < 1.0


def test_assembly_weights_for_phi_phi3():
    # main bracket and x2 counter-terms behind the first-order (phi, phi^3) -> phi^2 entry
    itg = build_integrand(["phi", "phi^3"], "phi^2", 0)
    y_main = Counter(int(w) for _, w in itg.main.terms)
    y_uv = Counter(int(w) for _, w in itg.uv.terms)
    assert sorted(y_main) == [24, 36, 72]
    assert sorted(y_uv) == [24, 108]
    assert itg.combined.to_text() == "72*C(y-x1)*C(y-x2)^2 - 72*C(y-x2)^2*C(x1-x2)"


@pytest.mark.parametrize(
    "counts, n_left",
    [([4, 1, 1], 4), ([4, 1, 1], 2), ([4, 1, 3], 2), ([4, 3], 1), ([4, 3], 3), ([4, 4], 4), ([4, 4], 0),
     ([2, 2, 2], 0), ([2, 2, 2], 2), ([4, 2, 2], 2), ([3, 3], 2)],
)
def test_counts_match_brute_force(counts, n_left):
    ops = [CompositeOp.phi(c) for c in counts]
    assert pair_weights(zeroth_order(ops, CompositeOp.phi(n_left))) == brute_force(counts, n_left)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=2, max_size=3), st.integers(0, 4))
def test_random_counts_match_brute_force(counts, n_left):
    ops = [CompositeOp.phi(c) for c in counts]
    expected = brute_force(counts, n_left)
    got = zeroth_order(ops, CompositeOp.phi(n_left))
    assert pair_weights(got) == expected
    assert got.is_zero() == (not expected)
    if vanishes_by_counting(ops, CompositeOp.phi(n_left)):
        assert got.is_zero()


def test_counting_rule():
    P = parse_op
    assert vanishes_by_counting([P("phi"), P("phi")], P("phi^4"))
    assert vanishes_by_counting([P("phi"), P("phi")], P("phi"))
    assert vanishes_by_counting([P("phi^4"), P("phi")], P("phi^4"))
    assert not vanishes_by_counting([P("phi^4"), P("phi^3")], P("phi"))
    # all leftover fields forced onto one operator with nothing to pair
    assert vanishes_by_counting([P("phi^4"), P("1")], P("phi^2"))


def test_repeated_derivative_normalization():
    # monomial-coefficient convention: (d1 phi)^2 phi picks x1 and x2 once each, weight 1
    e = zeroth_order([parse_op("phi")] * 3, parse_op("d1phi^2*phi"))
    assert e == CoeffExpr.monomial((1, 0, 0, 0), 0, 2) * CoeffExpr.monomial((1, 0, 0, 0), 1, 2)
    # second-order Taylor term of one field carries 1/2!
    e = zeroth_order([parse_op("phi")] * 2, parse_op("phi*d1d1phi"))
    assert e == CoeffExpr.monomial((2, 0, 0, 0), 0, 1, weight=Fraction(1, 2))


OPS_FOR_PROPERTIES = [
    (["phi^4", "phi", "phi"], "phi^4"),
    (["phi^4", "phi", "phi^3"], "phi^2"),
    (["phi", "phi^3"], "phi*d2phi"),
    (["phi*d1phi", "phi^2"], "phi^2"),
    (["phi^2", "d3phi*phi", "phi"], "phi*d1d3phi"),
]

POINTS3 = np.array([[0.3, 1.1, -0.2, 0.5], [-0.6, 0.2, 0.9, 0.1], [0.4, -0.7, 0.3, -0.8]])


def _pts(n):
    return POINTS3[:n] if n == 3 else POINTS3[1:3]


@pytest.mark.parametrize("ops, target", OPS_FOR_PROPERTIES)
def test_translation_invariance(ops, target):
    e = zeroth_order([parse_op(o) for o in ops], parse_op(target))
    pts = _pts(len(ops))
    a = evaluate(e, pts)
    b = evaluate(e, pts + np.array([3.7, -1.2, 0.4, 10.0]))
    assert b == pytest.approx(a, rel=1e-10, abs=1e-14)


@pytest.mark.parametrize("ops, target", OPS_FOR_PROPERTIES)
def test_permutation_symmetry(ops, target):
    parsed = [parse_op(o) for o in ops]
    n = len(ops)
    e = zeroth_order(parsed, parse_op(target))
    pts = _pts(n)
    for perm in itertools.permutations(range(n - 1)):
        # reorder the non-base operators together with their points
        order = list(perm) + [n - 1]
        f = zeroth_order([parsed[i] for i in order], parse_op(target))
        assert evaluate(f, pts[order]) == pytest.approx(evaluate(e, pts), rel=1e-10, abs=1e-14)


@pytest.mark.parametrize("ops, target", OPS_FOR_PROPERTIES)
@pytest.mark.parametrize("lam", [0.5, 3.0])
def test_scaling_covariance(ops, target, lam):
    # x -> lam x together with m -> m / lam scales by lam^([B] - sum [A])
    parsed = [parse_op(o) for o in ops]
    tgt = parse_op(target)
    e = zeroth_order(parsed, tgt)
    pts = _pts(len(ops))
    power = tgt.dimension - sum(op.dimension for op in parsed)
    m = 1.3
    assert evaluate(e, lam * pts, None, m / lam) == pytest.approx(lam**power * evaluate(e, pts, None, m), rel=1e-10)


def test_explicit_labels_and_base():
    phi = parse_op("phi")
    e = zeroth_order([phi, phi], parse_op("phi*d1phi"), labels=[5, 7], base=5)
    assert e == CoeffExpr.monomial((1, 0, 0, 0), 7, 5)
    with pytest.raises(ValueError):
        zeroth_order([phi, phi], parse_op("phi^2"), labels=[1, 1])
    with pytest.raises(ValueError):
        zeroth_order([phi, phi], parse_op("phi^2"), base=9)


def test_two_point_value():
    e = zeroth_order([parse_op("phi")] * 2, parse_op("1"))
    assert evaluate(e, two_points(1.0).points) == pytest.approx(1.524648825e-2, rel=1e-9)
