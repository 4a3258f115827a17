"""Multi-indices, composite operators, point configurations and model parameters."""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

DIM = 4

MultiIndex = tuple[int, int, int, int]
ZERO: MultiIndex = (0, 0, 0, 0)


class DomainError(ValueError):
    """Argument outside the domain of a function (e.g. zero separation)."""


class OpSpecError(ValueError):
    """Malformed operator spec string."""

    def __init__(self, message: str, text: str, column: int, line: int = 1):
        self.text = text
        self.column = column
        self.line = line
        super().__init__(f"line {line}, column {column}: {message} in {text!r}")


def multi_index(*components: int) -> MultiIndex:
    if len(components) == 1 and not isinstance(components[0], int):
        components = tuple(components[0])
    if len(components) != DIM or any(int(c) < 0 for c in components):
        raise ValueError(f"multi-index needs {DIM} non-negative integers, got {components!r}")
    return tuple(int(c) for c in components)  # type: ignore[return-value]


def unit(mu: int) -> MultiIndex:
    """Unit multi-index in direction ``mu`` (0-based)."""
    w = [0] * DIM
    w[mu] = 1
    return tuple(w)  # type: ignore[return-value]


def order(w: Sequence[int]) -> int:
    return sum(w)


def mi_factorial(w: Sequence[int]) -> int:
    return math.prod(math.factorial(c) for c in w)


def mi_add(u: Sequence[int], v: Sequence[int]) -> MultiIndex:
    return tuple(a + b for a, b in zip(u, v))  # type: ignore[return-value]


def mi_sub(u: Sequence[int], v: Sequence[int]) -> MultiIndex | None:
    """``u - v`` if non-negative componentwise, else None."""
    d = tuple(a - b for a, b in zip(u, v))
    if any(c < 0 for c in d):
        return None
    return d  # type: ignore[return-value]


def multinomial_weight(parts: Iterable[Sequence[int]]) -> int:
    """(v1+...+vr)! / (v1!...vr!) for multi-indices."""
    parts = list(parts)
    total = [0] * DIM
    for v in parts:
        total = [a + b for a, b in zip(total, v)]
    denom = math.prod(mi_factorial(v) for v in parts)
    return mi_factorial(total) // denom


@lru_cache(maxsize=None)
def multi_indices_of_order(k: int) -> tuple[MultiIndex, ...]:
    """All 4-component multi-indices with |w| = k, lexicographically sorted."""
    out = []
    for c in itertools.combinations_with_replacement(range(DIM), k):
        w = [0] * DIM
        for mu in c:
            w[mu] += 1
        out.append(tuple(w))
    return tuple(sorted(set(out)))


@dataclass(frozen=True, order=False)
class CompositeOp:
    """Monomial d^{w1}phi ... d^{wn}phi; the empty product is the identity."""

    factors: tuple[MultiIndex, ...] = ()

    def __post_init__(self):
        canon = tuple(sorted(multi_index(w) for w in self.factors))
        object.__setattr__(self, "factors", canon)

    @classmethod
    def phi(cls, n: int = 1) -> "CompositeOp":
        return cls((ZERO,) * n)

    @property
    def n(self) -> int:
        return len(self.factors)

    @property
    def dimension(self) -> int:
        return dimension(self)

    @property
    def is_identity(self) -> bool:
        return not self.factors

    def sort_key(self):
        # graded order: d1 before d4, d1d1 before d1d2, ...
        return (
            self.dimension,
            self.n,
            tuple((order(w), tuple(-c for c in w)) for w in self.factors),
        )

    def spec(self) -> str:
        return format_op(self)

    def pretty(self) -> str:
        if self.is_identity:
            return "𝟙"
        parts = []
        for w, k in _grouped(self.factors):
            d = "".join(f"∂{mu + 1}" * c for mu, c in enumerate(w))
            sup = "" if k == 1 else "".join("⁰¹²³⁴⁵⁶⁷⁸⁹"[int(ch)] for ch in str(k))
            parts.append(f"({d}φ){sup}" if d and k > 1 else f"{d}φ{sup}")
        return "".join(parts)

    def __str__(self) -> str:
        return self.spec()

    def __repr__(self) -> str:
        return f"CompositeOp({self.spec()!r})"


IDENTITY = CompositeOp()
PHI = CompositeOp.phi(1)
INTERACTION = CompositeOp.phi(4)


def dimension(op: CompositeOp) -> int:
    """Canonical dimension n + sum |w_i|."""
    return op.n + sum(order(w) for w in op.factors)


def _grouped(factors):
    for w, grp in itertools.groupby(factors):
        yield w, len(list(grp))


def format_op(op: CompositeOp) -> str:
    if op.is_identity:
        return "1"
    parts = []
    for w, k in _grouped(op.factors):
        d = "".join(f"d{mu + 1}" * c for mu, c in enumerate(w))
        parts.append(f"{d}phi" + (f"^{k}" if k > 1 else ""))
    return "*".join(parts)


def parse_op(text: str, line: int = 1) -> CompositeOp:
    """Parse an operator spec such as ``"phi^4"``, ``"phi*d1phi"`` or ``"1"``."""
    s = text.strip()
    offset = len(text) - len(text.lstrip())
    if s == "1":
        return IDENTITY
    if not s:
        raise OpSpecError("empty operator spec", text, 1, line)
    factors: list[MultiIndex] = []
    pos = 0
    expect_factor = True
    while pos < len(s):
        if s[pos].isspace():
            pos += 1
            continue
        col = offset + pos + 1
        if expect_factor:
            w = [0] * DIM
            while s.startswith("d", pos):
                m = re.match(r"d(\d)", s[pos:])
                if not m or not 1 <= int(m.group(1)) <= DIM:
                    raise OpSpecError("expected derivative d1..d4", text, offset + pos + 1, line)
                w[int(m.group(1)) - 1] += 1
                pos += 2
            if not s.startswith("phi", pos):
                raise OpSpecError("expected 'phi'", text, offset + pos + 1, line)
            pos += 3
            power = 1
            if s.startswith("^", pos):
                m = re.match(r"\^(\d+)", s[pos:])
                if not m or int(m.group(1)) < 1:
                    raise OpSpecError("expected positive integer exponent", text, offset + pos + 1, line)
                power = int(m.group(1))
                pos += len(m.group(0))
            factors.extend([tuple(w)] * power)  # type: ignore[list-item]
            expect_factor = False
        else:
            if s[pos] != "*":
                raise OpSpecError("expected '*'", text, col, line)
            pos += 1
            expect_factor = True
    if expect_factor:
        raise OpSpecError("dangling '*'", text, offset + len(s) + 1, line)
    return CompositeOp(tuple(factors))


def _operators_with(n: int, total_deriv: int) -> list[CompositeOp]:
    """All canonical n-factor operators with summed derivative order total_deriv."""
    out = set()

    def rec(k, remaining, acc):
        if k == 0:
            if remaining == 0:
                out.add(CompositeOp(tuple(acc)))
            return
        for d in range(remaining + 1):
            for w in multi_indices_of_order(d):
                if acc and w < acc[-1]:
                    continue
                rec(k - 1, remaining - d, acc + [w])

    rec(n, total_deriv, [])
    return list(out)


@lru_cache(maxsize=None)
def _basis(max_dim: int, include_odd: bool) -> tuple[CompositeOp, ...]:
    ops = [IDENTITY]
    for n in range(1, max_dim + 1):
        if n % 2 and not include_odd:
            continue
        for extra in range(0, max_dim - n + 1):
            ops.extend(_operators_with(n, extra))
    return tuple(sorted(set(ops), key=CompositeOp.sort_key))


def enumerate_basis(max_dim: int, include_odd: bool = False) -> list[CompositeOp]:
    """Canonical operators with dimension <= max_dim, identity first.

    Only even field counts unless ``include_odd``; the counter-term sums of the
    deformation recursion need the odd ones too when an argument is odd.
    """
    if max_dim < 0:
        return []
    return list(_basis(max_dim, include_odd))


@dataclass(frozen=True)
class ModelParams:
    mass: float = 1.0

    def __post_init__(self):
        if not self.mass > 0:
            raise DomainError(f"mass must be positive, got {self.mass}")


@dataclass(frozen=True)
class PointConfig:
    """Pairwise distinct points in R^4; ``base`` is the expansion point (default last)."""

    points: np.ndarray
    base: int = -1
    _min_dist: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != DIM:
            raise ValueError(f"points must have shape (N, {DIM}), got {pts.shape}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        base = self.base if self.base >= 0 else len(pts) + self.base
        if not 0 <= base < len(pts):
            raise ValueError(f"base index {self.base} out of range")
        object.__setattr__(self, "base", base)
        dmin = min_pairwise_distance(pts)
        if len(pts) > 1 and not dmin > 0:
            raise DomainError("points must be pairwise distinct")
        object.__setattr__(self, "_min_dist", dmin)

    def __len__(self):
        return len(self.points)

    @property
    def min_distance(self) -> float:
        return self._min_dist

    @property
    def diameter(self) -> float:
        if len(self.points) < 2:
            return 0.0
        d = self.points[:, None, :] - self.points[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())

    def shifted(self, a) -> "PointConfig":
        return PointConfig(self.points + np.asarray(a, dtype=float), self.base)

    def scaled(self, lam: float) -> "PointConfig":
        return PointConfig(self.points * lam, self.base)


def min_pairwise_distance(points) -> float:
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return math.inf
    d = pts[:, None, :] - pts[None, :, :]
    r = np.sqrt((d**2).sum(-1))
    r[np.diag_indices(len(pts))] = np.inf
    return float(r.min())


def two_points(separation: float, direction=(1.0, 0.0, 0.0, 0.0)) -> PointConfig:
    """x1 = separation * direction, x2 = 0."""
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    return PointConfig(np.array([separation * u, np.zeros(DIM)]))
