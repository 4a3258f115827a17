"""Perturbative recursion for OPE coefficients.

The order r+1 coefficient is an integral over the insertion point y of the
interaction operator:

    (C_{r+1})_{A_1..A_N}^B(x) = -1/(4! (r+1)) int d^4y [ main - uv - ir ]

    main = (C_r)_{L A_1..A_N}^B(y, x_1..x_N)
    uv   = sum_i sum_{[C] <= [A_i]} sum_s (C_s)_{L A_i}^C(y, x_i) (C_{r-s})_{A_1..C..A_N}^B(x)
    ir   = sum_{[C] < [B]}         sum_s (C_s)_{A_1..A_N}^C(x) (C_{r-s})_{L C}^B(y, x_N)

with L = phi^4.  The two subtracted sums remove the non-integrable behaviour
of the main term near each x_i and at large |y|.  At r = 0 every piece is an
exact Wick expression, so the bracket is formed and cancelled symbolically
before anything is integrated.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .core import (
    INTERACTION,
    CompositeOp,
    DomainError,
    PointConfig,
    dimension,
    enumerate_basis,
    parse_op,
)
from .expr import Y, CoeffExpr, DivergenceError, evaluate, integrate_y_symbolic, scale, sum_exprs
from .quad import QuadPlan, integrate_r4, mc_batch, mc_integrate_r4
from .wick import vanishes_by_counting, zeroth_order

log = logging.getLogger(__name__)

MAX_ORDER = 2
MAX_BASIS_DIM = 8
_INNER_CHUNK = 32
UV_DIRECTION = np.array([0.5377, 1.8339, -2.2588, 0.8622]) / np.linalg.norm([0.5377, 1.8339, -2.2588, 0.8622])

METHODS = ("auto", "symbolic", "numeric")
ENGINES = ("cubature", "mc")


class SymbolicUnavailable(LookupError):
    """The y-integral matches no entry of the closed-form table."""


@dataclass(frozen=True)
class Key:
    ops: tuple[CompositeOp, ...]
    target: CompositeOp
    order: int

    def __str__(self):
        return f"(C{self.order})_{{{','.join(o.spec() for o in self.ops)}}}^{{{self.target.spec()}}}"


@dataclass(frozen=True)
class Product:
    """One summand of a bracket group: sign * Cy(y, ...) * Cx(x) (Cx absent for main)."""

    group: str
    sign: int
    y_key: Key
    y_labels: tuple[int, ...]
    x_key: Key | None = None


@dataclass(frozen=True)
class Integrand:
    """The bracket of the recursion at input order ``order``.

    ``products`` lists every non-vanishing summand; at order 0 the groups are
    also available as exact expressions in the labels (Y, 0..N-1).
    """

    ops: tuple[CompositeOp, ...]
    target: CompositeOp
    order: int
    products: tuple[Product, ...]
    main: CoeffExpr | None = None
    uv: CoeffExpr | None = None
    ir: CoeffExpr | None = None
    combined: CoeffExpr | None = None

    @property
    def symbolic(self) -> bool:
        return self.combined is not None

    def group(self, name: str) -> tuple[Product, ...]:
        return tuple(p for p in self.products if p.group == name)

    def is_zero(self) -> bool:
        if self.combined is not None:
            return self.combined.is_zero()
        return not self.products

    def trace(self) -> dict[str, str]:
        if not self.symbolic:
            return {g: "; ".join(f"{'+' if p.sign > 0 else '-'}{p.y_key}*{p.x_key}" for p in self.group(g)) for g in ("main", "uv", "ir")}
        return {"main": self.main.to_text(), "uv": self.uv.to_text(), "ir": self.ir.to_text(), "combined": self.combined.to_text()}


@dataclass(frozen=True)
class FirstOrder:
    """Order-1 entry: its integrand and, when the table applies, its closed form."""

    integrand: Integrand
    closed_form: CoeffExpr | None


class CoeffTable:
    """Configuration-independent cache of zeroth-order expressions and integrands.

    Entries are written once and never modified; filling order is
    deterministic because the basis sums are sorted.
    """

    def __init__(self):
        self._zeroth: dict[tuple, CoeffExpr] = {}
        self._integrands: dict[tuple, Integrand] = {}
        self._first: dict[tuple, FirstOrder] = {}
        self.audit: list[str] = []

    # -- entries -----------------------------------------------------------
    def zeroth(self, ops: Sequence[CompositeOp], target: CompositeOp) -> CoeffExpr:
        key = (tuple(ops), target)
        if key not in self._zeroth:
            self._zeroth[key] = zeroth_order(ops, target)
        return self._zeroth[key]

    def first_order(self, ops: Sequence[CompositeOp], target: CompositeOp) -> FirstOrder:
        key = (tuple(ops), target)
        if key not in self._first:
            itg = self.integrand(ops, target, 0)
            closed = None
            if itg.combined.is_zero():
                closed = CoeffExpr()
            else:
                sym = integrate_y_symbolic(itg.combined)
                if sym is not None:
                    closed = scale(sym, Fraction(-1, 24))
            self._first[key] = FirstOrder(itg, closed)
        return self._first[key]

    def is_zero(self, key: Key) -> bool:
        """Exact vanishing of an entry, decided without numerics."""
        n_fields = sum(op.n for op in key.ops) + key.target.n
        if n_fields % 2:
            return True
        if key.order == 0:
            return vanishes_by_counting(key.ops, key.target) or self.zeroth(key.ops, key.target).is_zero()
        if key.order == 1:
            fo = self.first_order(key.ops, key.target)
            return fo.closed_form is not None and fo.closed_form.is_zero()
        return self.integrand(key.ops, key.target, key.order - 1).is_zero()

    def _kept(self, key: Key) -> bool:
        if key.order == 0 and vanishes_by_counting(key.ops, key.target):
            return False
        if self.is_zero(key):
            if key.order == 0 or sum(op.n for op in key.ops) % 2 == key.target.n % 2:
                msg = f"{key} passes the counting rule but is exactly zero"
                if msg not in self.audit:
                    self.audit.append(msg)
                    log.info(msg)
            return False
        return True

    # -- integrands ---------------------------------------------------------
    def integrand(self, ops: Sequence[CompositeOp], target: CompositeOp, r: int) -> Integrand:
        ops = tuple(ops)
        key = (ops, target, r)
        if key not in self._integrands:
            self._integrands[key] = self._build(ops, target, r)
        return self._integrands[key]

    def _build(self, ops, target, r) -> Integrand:
        n = len(ops)
        if not ops:
            raise ValueError("need at least one operator")
        cap = max([dimension(target)] + [dimension(a) for a in ops])
        if cap > MAX_BASIS_DIM:
            raise ValueError(f"operator dimension {cap} exceeds basis cap {MAX_BASIS_DIM}")
        products: list[Product] = []
        main_key = Key((INTERACTION,) + ops, target, r)
        if self._kept(main_key):
            products.append(Product("main", 1, main_key, (Y,) + tuple(range(n))))
        for i, a in enumerate(ops):
            for c in enumerate_basis(dimension(a), include_odd=True):
                for s in range(r + 1):
                    yk = Key((INTERACTION, a), c, s)
                    xk = Key(ops[:i] + (c,) + ops[i + 1 :], target, r - s)
                    if self._kept(yk) and self._kept(xk):
                        products.append(Product("uv", -1, yk, (Y, i), xk))
        for c in enumerate_basis(dimension(target) - 1, include_odd=True):
            for s in range(r + 1):
                xk = Key(ops, c, s)
                yk = Key((INTERACTION, c), target, r - s)
                if self._kept(xk) and self._kept(yk):
                    products.append(Product("ir", -1, yk, (Y, n - 1), xk))
        if r > 0:
            return Integrand(ops, target, r, tuple(products))
        groups = {}
        for g in ("main", "uv", "ir"):
            terms = []
            for p in products:
                if p.group != g:
                    continue
                labels = p.y_labels
                ey = self.zeroth(p.y_key.ops, p.y_key.target).relabel(lambda j, labels=labels: labels[j])
                ex = CoeffExpr.constant(1) if p.x_key is None else self.zeroth(p.x_key.ops, p.x_key.target)
                terms.append(ey * ex)
            groups[g] = sum_exprs(terms)
        combined = groups["main"] - groups["uv"] - groups["ir"]
        return Integrand(ops, target, r, tuple(products), groups["main"], groups["uv"], groups["ir"], combined)


# ---------------------------------------------------------------------------
# numeric evaluation of entries


@dataclass
class NumericSettings:
    """Knobs for the numeric paths (cubature plan and Monte Carlo sizes)."""

    engine: str = "cubature"
    rho_frac: float = 0.4
    r_far: float | None = None
    rel_tol: float = 1e-4
    max_evals: int = 200_000_000
    mc_samples: int = 20_000
    inner_samples: int = 1_000
    seed: int = 0
    excision: float = 0.0

    def plan(self, points, mass: float, excision: float = 0.0) -> QuadPlan:
        return QuadPlan.for_points(
            points, mass=mass, rho_frac=self.rho_frac, r_far=self.r_far, rel_tol=self.rel_tol,
            max_evals=self.max_evals, excision=excision,
        )


def _integrand_fn(expr: CoeffExpr, cfg, m: float) -> Callable[[np.ndarray], np.ndarray]:
    def f(y):
        return np.asarray(evaluate(expr, cfg, y, m), dtype=float)

    return f


class _Evaluator:
    """Values of table entries on (batched) point configurations."""

    def __init__(self, table: CoeffTable, m: float, settings: NumericSettings):
        self.table = table
        self.m = m
        self.settings = settings
        self._scalar_cache: dict[tuple, float] = {}

    def scalar(self, key: Key, pts: np.ndarray) -> float:
        """Entry value at one fixed configuration (cached)."""
        ck = (key, pts.tobytes())
        if ck not in self._scalar_cache:
            if key.order == 0:
                val = float(evaluate(self.table.zeroth(key.ops, key.target), pts, None, self.m))
            elif key.order == 1:
                fo = self.table.first_order(key.ops, key.target)
                if fo.closed_form is not None:
                    val = float(evaluate(fo.closed_form, pts, None, self.m))
                else:
                    plan = self.settings.plan(pts, self.m)
                    res = integrate_r4(_integrand_fn(fo.integrand.combined, pts, self.m), plan)
                    val = -res.value / 24.0
            else:
                raise ValueError("fixed-configuration entries above order 1 are not needed")
            self._scalar_cache[ck] = val
        return self._scalar_cache[ck]

    def closed(self, key: Key, pts: np.ndarray) -> np.ndarray:
        """Entry with a closed form on pts of shape (k, M, 4)."""
        if key.order == 0:
            e = self.table.zeroth(key.ops, key.target)
        else:
            e = self.table.first_order(key.ops, key.target).closed_form
        return np.asarray(evaluate(e, pts, None, self.m), dtype=float) * np.ones(pts.shape[1])


@dataclass(frozen=True)
class NestedIntegrand:
    """Order-1 bracket split for nested integration.

    ``inner`` collects every summand whose y-factor is an order-1 entry
    without a closed form, merged into one exact expression in the inner
    variable (label Y) with the outer point as the extra label N.  Merging
    lets the main term and its counter-terms cancel pointwise in the inner
    variable instead of only after two independent integrations.
    ``outer`` holds the remaining summands, which are closed-form in y.
    """

    inner: CoeffExpr
    outer: tuple[Product, ...]
    n_points: int


def nested_integrand(itg: Integrand, table: CoeffTable) -> NestedIntegrand:
    n = len(itg.ops)
    inner_terms = []
    outer = []
    for p in itg.products:
        yk = p.y_key
        if yk.order == 1 and table.first_order(yk.ops, yk.target).closed_form is None:
            labels = p.y_labels

            def mapping(j, labels=labels):
                if j == Y:
                    return Y
                return n if labels[j] == Y else labels[j]

            e = table.first_order(yk.ops, yk.target).integrand.combined.relabel(mapping)
            if p.x_key is not None:
                if p.x_key.order != 0:
                    raise ValueError("order-1 factors on both sides of a summand cannot occur at order 2")
                e = e * table.zeroth(p.x_key.ops, p.x_key.target)
            inner_terms.append(scale(e, p.sign))
        else:
            outer.append(p)
    inner = scale(sum_exprs(inner_terms), Fraction(-1, 24))
    _, indep = inner.split(Y)
    if not indep.is_zero():
        raise DivergenceError(indep)
    return NestedIntegrand(inner, tuple(outer), n)


def _outer_fn(nest: NestedIntegrand, points: np.ndarray, ev: _Evaluator):
    """y -> bracket value, the inner integral estimated by batched Monte Carlo."""
    settings = ev.settings
    xvals = {k: (1.0 if p.x_key is None else ev.scalar(p.x_key, points)) for k, p in enumerate(nest.outer)}
    calls = [0]
    m = ev.m

    def g(y):
        y = np.atleast_2d(y)
        calls[0] += 1
        total = np.zeros(len(y))
        for k, p in enumerate(nest.outer):
            if xvals[k] == 0.0:
                continue
            local = np.stack([y if lab == Y else np.broadcast_to(points[lab], y.shape) for lab in p.y_labels])
            total += p.sign * xvals[k] * ev.closed(p.y_key, local)
        if nest.inner.is_zero():
            return total
        rng = np.random.default_rng((settings.seed, calls[0]))
        n = nest.n_points
        for s in range(0, len(y), _INNER_CHUNK):
            yb = y[s : s + _INNER_CHUNK]
            cb = np.concatenate([np.broadcast_to(points, (len(yb),) + points.shape), yb[:, None, :]], axis=1)
            diff = np.linalg.norm(cb[:, :, None, :] - cb[:, None, :, :], axis=-1)
            diff[:, np.arange(n + 1), np.arange(n + 1)] = np.inf
            dmin = diff.min(axis=(1, 2))
            diam = np.where(np.isfinite(diff), diff, 0.0).max(axis=(1, 2))
            local = np.transpose(cb, (1, 0, 2))[:, :, None, :]  # (N+1, B, 1, 4)

            def f(z, local=local):
                return evaluate(nest.inner, local, z, m)

            means, _, _ = mc_batch(
                f, cb, settings.rho_frac * dmin, cb.mean(axis=1), diam + 8.0 / m, m, settings.inner_samples, rng
            )
            total[s : s + len(yb)] += means
        return total

    return g


# ---------------------------------------------------------------------------
# slope diagnostics


@dataclass(frozen=True)
class SlopeFit:
    radii: tuple[float, ...]
    values: tuple[float, ...]
    slope: float
    successive: tuple[float, ...]


def _log2_abs(v):
    v = np.abs(np.asarray(v, dtype=float))
    with np.errstate(divide="ignore"):
        return np.where(v > 0, np.log2(np.where(v > 0, v, 1.0)), -np.inf)


def _fit(radii, values) -> SlopeFit:
    lr = np.log2(radii)
    lv = _log2_abs(values)
    succ = tuple(float(b - a) if np.isfinite(a) else (-math.inf if not np.isfinite(b) else math.inf)
                 for a, b in zip(lv[:-1], lv[1:]))
    fin = np.isfinite(lv)
    if fin.sum() >= 2:
        slope = float(np.polyfit(lr[fin], lv[fin], 1)[0])
    elif fin.sum() < len(lv) and fin.any() and not fin[-1]:
        slope = -math.inf
    else:
        slope = math.nan
    return SlopeFit(tuple(map(float, radii)), tuple(map(float, values)), slope, succ)


def uv_slopes(f, points, ks=range(2, 11), direction=UV_DIRECTION) -> dict[int, SlopeFit]:
    """log2-slope of |f| approaching each point along a fixed generic direction.

    Radii are 2^-k d with d half the minimum pairwise distance (1 for a
    single point).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    cfg = PointConfig(pts)
    d = 0.5 * cfg.min_distance if len(pts) > 1 else 1.0
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    radii = np.array([2.0**-k * d for k in ks])
    out = {}
    for j, x in enumerate(pts):
        vals = np.asarray(f(x + radii[:, None] * u), dtype=float)
        out[j] = _fit(radii, vals)
    return out


def ir_slopes(f, points, ks=range(3, 9), direction=UV_DIRECTION) -> SlopeFit:
    """log2-slopes of |f| at |y - x_N| = 2^k D, D the configuration diameter."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    cfg = PointConfig(pts)
    big_d = cfg.diameter if len(pts) > 1 else 1.0
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    radii = np.array([2.0**k * big_d for k in ks])
    vals = np.asarray(f(pts[-1] + radii[:, None] * u), dtype=float)
    return _fit(radii, vals)


# ---------------------------------------------------------------------------
# driver


@dataclass
class CoeffResult:
    ops: tuple[CompositeOp, ...]
    target: CompositeOp
    order: int
    method: str
    value: float
    abs_error: float = 0.0
    expr: CoeffExpr | None = None
    breakdown: dict[str, float] = field(default_factory=dict)
    converged: bool = True
    n_evals: int = 0
    diagnostics: dict = field(default_factory=dict)
    elapsed: float = 0.0
    experimental: bool = False


def _as_op(a) -> CompositeOp:
    return a if isinstance(a, CompositeOp) else parse_op(str(a))


def build_integrand(ops, target, r: int, table: CoeffTable | None = None) -> Integrand:
    """The bracket of the recursion producing order r+1 from order r."""
    table = CoeffTable() if table is None else table
    if not 0 <= r < MAX_ORDER:
        raise ValueError(f"input order must be in [0, {MAX_ORDER - 1}], got {r}")
    return table.integrand(tuple(_as_op(a) for a in ops), _as_op(target), r)


def integrand_function(itg: Integrand, points, m: float = 1.0, part: str = "combined"):
    """Pointwise evaluator y -> integrand (order-0 brackets only)."""
    if not itg.symbolic:
        raise ValueError("pointwise evaluation of higher-order brackets needs inner integrals")
    expr = {"combined": itg.combined, "main": itg.main, "uv": itg.uv, "ir": itg.ir}[part]
    return _integrand_fn(expr, np.asarray(points.points if hasattr(points, "points") else points, dtype=float), m)


def coefficient(
    ops,
    points,
    target,
    order: int = 1,
    method: str = "auto",
    *,
    mass: float = 1.0,
    settings: NumericSettings | None = None,
    table: CoeffTable | None = None,
    slopes: bool = True,
) -> CoeffResult:
    """(C_order)_{ops}^{target} at the given points.

    order 0 is the exact Wick expression.  order 1 uses the closed-form
    y-integral table when it applies (method "auto" or "symbolic") and
    cubature or Monte Carlo otherwise.  order 2 is experimental: nested
    Monte Carlo with an inner order-1 integral per outer sample.
    """
    t0 = time.perf_counter()
    ops = tuple(_as_op(a) for a in ops)
    target = _as_op(target)
    cfg = points if isinstance(points, PointConfig) else PointConfig(np.asarray(points, dtype=float))
    if len(cfg) != len(ops):
        raise ValueError(f"{len(ops)} operators but {len(cfg)} points")
    if not mass > 0:
        raise DomainError(f"mass must be positive, got {mass}")
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    settings = NumericSettings() if settings is None else settings
    if settings.engine not in ENGINES:
        raise ValueError(f"unknown engine {settings.engine!r}")
    table = CoeffTable() if table is None else table
    pts = np.array(cfg.points)
    diag: dict = {}

    def done(res: CoeffResult) -> CoeffResult:
        if table.audit:
            diag["audit_zero"] = list(table.audit)
        res.diagnostics = diag
        res.elapsed = time.perf_counter() - t0
        return res

    if order == 0:
        e = table.zeroth(ops, target)
        return done(CoeffResult(ops, target, 0, "wick", float(evaluate(e, pts, None, mass)), 0.0, e))

    if order == 1:
        fo = table.first_order(ops, target)
        itg = fo.integrand
        diag["integrand"] = itg.trace()
        if slopes and not itg.combined.is_zero():
            f = integrand_function(itg, pts, mass)
            diag["uv_slopes"] = {j: s.slope for j, s in uv_slopes(f, pts).items()}
            diag["ir_slopes"] = list(ir_slopes(f, pts).successive)
        if method in ("auto", "symbolic") and fo.closed_form is not None:
            diag["closed_form"] = fo.closed_form.to_text()
            val = float(evaluate(fo.closed_form, pts, None, mass)) if fo.closed_form else 0.0
            return done(CoeffResult(ops, target, 1, "symbolic", val, 0.0, fo.closed_form))
        if method == "symbolic":
            raise SymbolicUnavailable(f"no closed form for the y-integral of {itg.combined.to_text()}")
        f = _integrand_fn(itg.combined, pts, mass)
        if settings.engine == "mc":
            plan = settings.plan(pts, mass)
            res = mc_integrate_r4(f, plan, settings.mc_samples, settings.seed)
        else:
            res = integrate_r4(f, settings.plan(pts, mass))
        res = res.scaled(-1.0 / 24.0)
        return done(
            CoeffResult(ops, target, 1, res.method, res.value, res.abs_error_estimate, None,
                        res.breakdown, res.converged, res.n_evals)
        )

    # order 2: nested Monte Carlo
    itg = table.integrand(ops, target, 1)
    diag["integrand"] = itg.trace()
    if itg.is_zero():
        return done(CoeffResult(ops, target, 2, "nested-mc", 0.0, 0.0, CoeffExpr(), experimental=True))
    nest = nested_integrand(itg, table)
    diag["inner_integrand_terms"] = len(nest.inner)
    g = _outer_fn(nest, pts, _Evaluator(table, mass, settings))
    plan = settings.plan(pts, mass, excision=settings.excision)
    res = mc_integrate_r4(g, plan, settings.mc_samples, settings.seed).scaled(-1.0 / 48.0)
    diag["excision_radius"] = plan.excision
    return done(
        CoeffResult(ops, target, 2, "nested-mc", res.value, res.abs_error_estimate, None, res.breakdown,
                    res.converged, res.n_evals, experimental=True)
    )
