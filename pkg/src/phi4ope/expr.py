"""Exact symbolic coefficient expressions.

A ``CoeffExpr`` is a sum of terms ``weight * prod(factors)`` with exact rational
weights.  Factors are propagator derivatives d^w C(x_a - x_b), coordinate
monomials (x_a - x_b)^w, and two "special" factors produced by integrating
over the insertion point: the bubble K0(m|x_a - x_b|)/(8 pi^2) and powers of
the mass.

Point labels are integers: ``Y = -1`` is the integration variable, labels
``0..N-1`` index the external points of a ``PointConfig``.
"""

from __future__ import annotations

import math
from collections import Counter
from fractions import Fraction
from typing import Callable, Iterable, Mapping, NamedTuple

import numpy as np

from .core import DIM, MultiIndex, ZERO, mi_add, order
from .specfun import bessel_k0, propagator_deriv

Y = -1

PROP = "C"
MONO = "X"
BUBBLE = "K"
MASS = "m"


class DivergenceError(ArithmeticError):
    """y-independent terms survived cancellation; their y-integral diverges."""

    def __init__(self, residue: "CoeffExpr"):
        self.residue = residue
        super().__init__(f"uncancelled y-independent terms (divergent integral): {residue.to_text()}")


class Factor(NamedTuple):
    kind: str
    w: tuple
    a: int
    b: int

    @property
    def labels(self) -> tuple[int, ...]:
        return () if self.kind == MASS else (self.a, self.b)

    def involves(self, label: int) -> bool:
        return label in self.labels


def label_name(lab: int) -> str:
    return "y" if lab == Y else f"x{lab + 1}"


def _fmt_w(w) -> str:
    return "".join(f"d{mu + 1}" * c for mu, c in enumerate(w))


def format_factor(f: Factor, power: int = 1) -> str:
    if f.kind == PROP:
        s = f"{_fmt_w(f.w)}C({label_name(f.a)}-{label_name(f.b)})"
    elif f.kind == MONO:
        s = f"({label_name(f.a)}-{label_name(f.b)})^({','.join(map(str, f.w))})"
    elif f.kind == BUBBLE:
        s = f"K0b({label_name(f.a)},{label_name(f.b)})"
    else:
        return f"m^{f.w[0] * power}"
    return s if power == 1 else f"{s}^{power}"


def prop(w: MultiIndex, a: int, b: int) -> tuple[int, Factor]:
    """Canonical d^w C(x_a - x_b) as (sign, factor)."""
    if a == b:
        raise ValueError("propagator between a point and itself")
    if a < b:
        return 1, Factor(PROP, tuple(w), a, b)
    return (-1) ** order(w), Factor(PROP, tuple(w), b, a)


def mono(w: MultiIndex, a: int, b: int) -> tuple[int, Factor]:
    """Canonical (x_a - x_b)^w as (sign, factor)."""
    if a == b:
        raise ValueError("monomial between a point and itself")
    if a < b:
        return 1, Factor(MONO, tuple(w), a, b)
    return (-1) ** order(w), Factor(MONO, tuple(w), b, a)


def bubble(a: int, b: int) -> Factor:
    a, b = min(a, b), max(a, b)
    return Factor(BUBBLE, (), a, b)


def mass_power(p: int) -> Factor:
    return Factor(MASS, (p,), 0, 0)


def _normalize(weight: Fraction, factors: Iterable[Factor]) -> tuple[Fraction, tuple[Factor, ...]]:
    # merge monomials on the same pair and mass powers; drop trivial ones
    monos: dict[tuple[int, int], MultiIndex] = {}
    mpow = 0
    rest = []
    for f in factors:
        if f.kind == MONO:
            key = (f.a, f.b)
            monos[key] = mi_add(monos.get(key, ZERO), f.w)
        elif f.kind == MASS:
            mpow += f.w[0]
        else:
            rest.append(f)
    for (a, b), w in monos.items():
        if order(w):
            rest.append(Factor(MONO, w, a, b))
    if mpow:
        rest.append(mass_power(mpow))
    return weight, tuple(sorted(rest))


class CoeffExpr:
    """Immutable canonical sum of terms; zero is the empty sum."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[tuple[Factor, ...], Fraction] | Iterable = ()):
        acc: dict[tuple[Factor, ...], Fraction] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for factors, weight in items:
            weight, factors = _normalize(Fraction(weight), factors)
            if weight:
                acc[factors] = acc.get(factors, Fraction(0)) + weight
        self._terms = tuple(sorted((k, v) for k, v in acc.items() if v))

    @classmethod
    def constant(cls, q) -> "CoeffExpr":
        return cls([((), Fraction(q))])

    @classmethod
    def term(cls, weight, factors: Iterable[Factor]) -> "CoeffExpr":
        return cls([(tuple(factors), Fraction(weight))])

    @classmethod
    def propagator(cls, a: int, b: int, w: MultiIndex = ZERO, weight=1) -> "CoeffExpr":
        sign, f = prop(w, a, b)
        return cls.term(sign * Fraction(weight), [f])

    @classmethod
    def monomial(cls, w: MultiIndex, a: int, b: int, weight=1) -> "CoeffExpr":
        sign, f = mono(w, a, b)
        return cls.term(sign * Fraction(weight), [f])

    @property
    def terms(self) -> tuple[tuple[tuple[Factor, ...], Fraction], ...]:
        return self._terms

    def __iter__(self):
        return iter(self._terms)

    def __len__(self):
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def __bool__(self):
        return bool(self._terms)

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = CoeffExpr.constant(other)
        if not isinstance(other, CoeffExpr):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        return hash(self._terms)

    def __add__(self, other):
        if isinstance(other, (int, Fraction)):
            other = CoeffExpr.constant(other)
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return scale(self, -1)

    def __sub__(self, other):
        if isinstance(other, (int, Fraction)):
            other = CoeffExpr.constant(other)
        return add(self, scale(other, -1))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return scale(self, other)
        return multiply(self, other)

    __rmul__ = __mul__

    def labels(self) -> set[int]:
        return {lab for factors, _ in self._terms for f in factors for lab in f.labels}

    def depends_on(self, label: int) -> bool:
        return label in self.labels()

    def split(self, label: int = Y) -> tuple["CoeffExpr", "CoeffExpr"]:
        """(terms involving label, terms not involving it)."""
        dep, indep = [], []
        for factors, w in self._terms:
            (dep if any(f.involves(label) for f in factors) else indep).append((factors, w))
        return CoeffExpr(dep), CoeffExpr(indep)

    def relabel(self, mapping: Mapping[int, int] | Callable[[int], int]) -> "CoeffExpr":
        """Rename point labels; labels missing from a mapping are kept."""
        fn = mapping if callable(mapping) else (lambda lab: mapping.get(lab, lab))
        out = []
        for factors, w in self._terms:
            sign = 1
            new = []
            for f in factors:
                if f.kind == PROP:
                    s, g = prop(f.w, fn(f.a), fn(f.b))
                elif f.kind == MONO:
                    s, g = mono(f.w, fn(f.a), fn(f.b))
                elif f.kind == BUBBLE:
                    s, g = 1, bubble(fn(f.a), fn(f.b))
                else:
                    s, g = 1, f
                sign *= s
                new.append(g)
            out.append((tuple(new), sign * w))
        return CoeffExpr(out)

    def to_text(self) -> str:
        return to_text(self)

    def __str__(self):
        return self.to_text()

    def __repr__(self):
        return f"CoeffExpr({self.to_text()!r})"

    def __call__(self, cfg, y=None, m: float = 1.0):
        return evaluate(self, cfg, y, m)


ZERO_EXPR = CoeffExpr()
ONE = CoeffExpr.constant(1)


def add(e1: CoeffExpr, e2: CoeffExpr) -> CoeffExpr:
    return CoeffExpr(list(e1.terms) + list(e2.terms))


def scale(e: CoeffExpr, q) -> CoeffExpr:
    q = Fraction(q)
    if not q:
        return ZERO_EXPR
    return CoeffExpr([(f, w * q) for f, w in e.terms])


def multiply(e1: CoeffExpr, e2: CoeffExpr) -> CoeffExpr:
    return CoeffExpr([(f1 + f2, w1 * w2) for f1, w1 in e1.terms for f2, w2 in e2.terms])


def sum_exprs(exprs: Iterable[CoeffExpr]) -> CoeffExpr:
    terms = []
    for e in exprs:
        terms.extend(e.terms)
    return CoeffExpr(terms)


def format_term(factors: tuple[Factor, ...], weight: Fraction) -> str:
    mag = abs(weight)
    body = "*".join(format_factor(f, k) for f, k in sorted(Counter(factors).items()))
    if not body:
        return str(mag)
    return body if mag == 1 else f"{mag}*{body}"


def to_text(e: CoeffExpr) -> str:
    """Deterministic serialization: canonical term order, weights as p/q."""
    if e.is_zero():
        return "0"
    out = []
    for i, (f, w) in enumerate(e.terms):
        t = format_term(f, w)
        if i == 0:
            out.append(t if w > 0 else f"-{t}")
        else:
            out.append(f"{'+' if w > 0 else '-'} {t}")
    return " ".join(out)


def _point(cfg, lab: int, y):
    if lab == Y:
        if y is None:
            raise KeyError("expression depends on y but no y was supplied")
        return y
    pts = cfg.points if hasattr(cfg, "points") else np.asarray(cfg, dtype=float)
    if not 0 <= lab < len(pts):
        raise KeyError(f"label {label_name(lab)} not in configuration of {len(pts)} points")
    return pts[lab]


def _factor_value(f: Factor, cfg, y, m: float):
    if f.kind == MASS:
        return m ** f.w[0]
    xa, xb = _point(cfg, f.a, y), _point(cfg, f.b, y)
    d = np.asarray(xa, dtype=float) - np.asarray(xb, dtype=float)
    if f.kind == PROP:
        return propagator_deriv(d, m, f.w)
    if f.kind == MONO:
        val = 1.0
        for mu in range(DIM):
            if f.w[mu]:
                val = val * d[..., mu] ** f.w[mu]
        return val
    if f.kind == BUBBLE:
        r = np.sqrt(np.einsum("...i,...i->...", d, d))
        return bessel_k0(m * r) / (8.0 * math.pi**2)
    raise ValueError(f"unknown factor kind {f.kind!r}")


def evaluate(e: CoeffExpr, cfg, y=None, m: float = 1.0):
    """Numeric value; ``y`` may be a single point or an (M, 4) batch."""
    if y is not None:
        y = np.asarray(y, dtype=float)
    shape = () if y is None else y.shape[:-1]
    total = np.zeros(shape)
    cache: dict[Factor, object] = {}
    for factors, w in e.terms:
        val = float(w)
        for f in factors:
            if f not in cache:
                cache[f] = _factor_value(f, cfg, y, m)
            val = val * cache[f]
        total = total + val
    return total if total.ndim else float(total)


def integrate_y_symbolic(e: CoeffExpr) -> CoeffExpr | None:
    """Closed-form integral over y of R^4 using the table

        int d^w C(y - a) d^4y   = 1/m^2 if |w| = 0 else 0
        int C(y - a) C(y - b)   = K0(m|a - b|) / (8 pi^2)

    Returns None when some term matches no pattern.  Raises DivergenceError
    when y-independent terms are present (their integral is infinite).
    """
    dep, indep = e.split(Y)
    if not indep.is_zero():
        raise DivergenceError(indep)
    out = []
    for factors, w in dep.terms:
        ydep = [f for f in factors if f.involves(Y)]
        rest = [f for f in factors if not f.involves(Y)]
        if any(f.kind != PROP for f in ydep):
            return None
        if len(ydep) == 1:
            if order(ydep[0].w):
                continue
            out.append((tuple(rest) + (mass_power(-2),), w))
        elif len(ydep) == 2:
            f, g = ydep
            if order(f.w) or order(g.w):
                return None
            a = f.b if f.a == Y else f.a
            b = g.b if g.a == Y else g.a
            if a == b:
                return None
            out.append((tuple(rest) + (bubble(a, b),), w))
        else:
            return None
    return CoeffExpr(out)
