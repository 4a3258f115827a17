import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from phi4ope.core import two_points
from phi4ope.expr import (
    Y,
    CoeffExpr,
    DivergenceError,
    bubble,
    evaluate,
    integrate_y_symbolic,
    mass_power,
    scale,
    sum_exprs,
)
from phi4ope.specfun import propagator, propagator_deriv

labels = st.sampled_from([Y, 0, 1, 2])
small_w = st.tuples(*[st.integers(0, 1)] * 4)
weights = st.fractions(min_value=-5, max_value=5, max_denominator=6)


@st.composite
def atoms(draw):
    a, b = draw(labels), draw(labels)
    if a == b:
        b = 2 if a != 2 else 0
    kind = draw(st.sampled_from(["C", "X"]))
    if kind == "C":
        return CoeffExpr.propagator(a, b, draw(small_w), draw(weights))
    return CoeffExpr.monomial(draw(small_w), a, b, draw(weights))


@st.composite
def exprs(draw):
    terms = []
    for _ in range(draw(st.integers(0, 3))):
        t = draw(atoms())
        for _ in range(draw(st.integers(0, 2))):
            t = t * draw(atoms())
        terms.append(t)
    return sum_exprs(terms)


@given(exprs(), exprs())
def test_addition_commutes(a, b):
    assert a + b == b + a


@given(exprs(), exprs(), exprs())
def test_multiplication_distributes(a, b, c):
    assert a * (b + c) == a * b + a * c


@given(exprs(), exprs())
def test_multiplication_commutes(a, b):
    assert a * b == b * a


@given(exprs())
def test_zero_and_one(a):
    assert a - a == CoeffExpr()
    assert (a - a).is_zero()
    assert a * CoeffExpr.constant(1) == a
    assert (a * CoeffExpr()).is_zero()


@given(exprs())
def test_text_form_is_canonical(a):
    # rebuilding term by term in reverse order gives the same text
    rebuilt = sum_exprs(CoeffExpr.term(w, f) for f, w in reversed(a.terms))
    assert rebuilt.to_text() == a.to_text()
    assert hash(rebuilt) == hash(a)


@given(exprs())
def test_split_partitions_terms(a):
    dep, indep = a.split(Y)
    assert dep + indep == a
    assert not indep.depends_on(Y)
    assert all(any(f.involves(Y) for f in fs) for fs, _ in dep.terms)


@settings(max_examples=40)
@given(exprs())
def test_evaluation_is_linear(a):
    cfg = np.array([[0.9, 0.1, 0, 0], [0, 0.7, 0.3, 0], [0.1, 0.2, 0.3, 0.4]])
    y = np.array([[1.5, -0.5, 0.2, 0.8], [-0.3, 0.9, 1.1, -1.0]])
    two = evaluate(scale(a, 2) + a, cfg, y)
    assert np.allclose(two, 3 * np.asarray(evaluate(a, cfg, y)), rtol=1e-12, atol=1e-300)


def test_text_uses_rational_weights():
    e = CoeffExpr.propagator(0, 1, weight=Fraction(-3, 4)) + CoeffExpr.constant(Fraction(1, 3))
    assert e.to_text() == "1/3 - 3/4*C(x1-x2)"
    assert CoeffExpr().to_text() == "0"


def test_propagator_orientation_sign():
    # d_mu C is odd: C'(b - a) = -C'(a - b)
    assert CoeffExpr.propagator(0, 1, (1, 0, 0, 0)) == -CoeffExpr.propagator(1, 0, (1, 0, 0, 0))
    assert CoeffExpr.propagator(0, 1, (1, 1, 0, 0)) == CoeffExpr.propagator(1, 0, (1, 1, 0, 0))
    assert CoeffExpr.propagator(0, 1) == CoeffExpr.propagator(1, 0)


def test_monomials_merge():
    e = CoeffExpr.monomial((1, 0, 0, 0), 0, 1) * CoeffExpr.monomial((1, 0, 0, 0), 0, 1)
    assert e == CoeffExpr.monomial((2, 0, 0, 0), 0, 1)
    assert CoeffExpr.monomial((1, 0, 0, 0), 1, 0) == -CoeffExpr.monomial((1, 0, 0, 0), 0, 1)


def test_evaluate_matches_direct_formula():
    cfg = two_points(1.3, direction=(1, 1, 0, 0))
    x1, x2 = cfg.points
    y = np.array([0.2, -0.4, 0.5, 0.1])
    e = (
        CoeffExpr.propagator(Y, 0) * CoeffExpr.propagator(Y, 1, (0, 1, 0, 0), 3)
        + CoeffExpr.monomial((1, 0, 0, 0), 0, 1, Fraction(1, 2)) * CoeffExpr.term(1, [bubble(0, 1)])
        + CoeffExpr.term(2, [mass_power(-2)])
    )
    m = 1.4
    direct = (
        propagator(y - x1, m) * 3 * propagator_deriv(y - x2, m, (0, 1, 0, 0))
        + 0.5 * (x1 - x2)[0] * special.k0(m * 1.3) / (8 * math.pi**2)
        + 2 / m**2
    )
    assert evaluate(e, cfg.points, y, m) == pytest.approx(direct, rel=1e-13)


def test_evaluate_broadcasts_over_y():
    cfg = two_points(1.0).points
    ys = np.random.default_rng(0).normal(size=(7, 4))
    e = CoeffExpr.propagator(Y, 0) * CoeffExpr.propagator(Y, 1)
    batch = evaluate(e, cfg, ys)
    assert batch.shape == (7,)
    assert np.allclose(batch, [evaluate(e, cfg, y) for y in ys], rtol=1e-14)


def test_relabel():
    e = CoeffExpr.propagator(Y, 0) * CoeffExpr.propagator(1, 0)
    r = e.relabel({Y: 2})
    assert r == CoeffExpr.propagator(2, 0) * CoeffExpr.propagator(1, 0)
    assert not r.depends_on(Y)


def test_symbolic_integration_table():
    assert integrate_y_symbolic(CoeffExpr.propagator(Y, 0, weight=5)) == CoeffExpr.term(5, [mass_power(-2)])
    assert integrate_y_symbolic(CoeffExpr.propagator(Y, 1, (0, 0, 1, 0))).is_zero()
    both = CoeffExpr.propagator(Y, 0) * CoeffExpr.propagator(Y, 1) * CoeffExpr.propagator(0, 1)
    assert integrate_y_symbolic(both) == CoeffExpr.term(1, [bubble(0, 1)]) * CoeffExpr.propagator(0, 1)
    # no closed form for three propagators or C^2 at one point
    assert integrate_y_symbolic(CoeffExpr.propagator(Y, 0) * CoeffExpr.propagator(Y, 0)) is None
    cubic = CoeffExpr.propagator(Y, 0) * CoeffExpr.propagator(Y, 1) * CoeffExpr.propagator(Y, 2)
    assert integrate_y_symbolic(cubic) is None


def test_y_independent_terms_diverge():
    with pytest.raises(DivergenceError) as info:
        integrate_y_symbolic(CoeffExpr.propagator(Y, 0) + CoeffExpr.propagator(0, 1))
    assert info.value.residue == CoeffExpr.propagator(0, 1)
