"""Zeroth-order (free field) OPE coefficients by Wick contraction.

Each operator is normal ordered, so contractions only link slots of different
operators.  Uncontracted slots are Taylor expanded about the base point and
the coefficient of the target monomial is collected.  Target operators are
plain monomials: the coefficient of ``phi * d1phi`` is the coefficient of that
monomial in the expansion, with no extra symmetry factor.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

from .core import CompositeOp, MultiIndex, dimension, mi_add, mi_factorial, mi_sub, order
from .expr import CoeffExpr, Factor, mono, prop


@dataclass(frozen=True)
class ContractionPattern:
    """A class of labelled Wick pairings sharing the same slot types.

    ``pairs`` holds ((label_a, w_a), (label_b, w_b), multiplicity) and
    ``leftover`` holds ((label, w), count); ``weight`` is the number of
    labelled pairings represented.
    """

    weight: int
    pairs: tuple[tuple[tuple[int, MultiIndex], tuple[int, MultiIndex], int], ...]
    leftover: tuple[tuple[tuple[int, MultiIndex], int], ...]


def _leftover_feasible(counts: Sequence[int], n_target: int) -> bool:
    for left in itertools.product(*(range(c + 1) for c in counts)):
        if sum(left) != n_target:
            continue
        rem = [c - l for c, l in zip(counts, left)]
        total = sum(rem)
        if total % 2 == 0 and all(2 * r <= total for r in rem):
            return True
    return False


def vanishes_by_counting(ops: Sequence[CompositeOp], target: CompositeOp) -> bool:
    """True if no choice of cross-operator contractions leaves n_target fields."""
    counts = [op.n for op in ops]
    excess = sum(counts) - target.n
    if excess < 0 or excess % 2:
        return True
    return not _leftover_feasible(counts, target.n)


def _slot_types(ops, labels):
    types = []
    for i, (op, lab) in enumerate(zip(ops, labels)):
        for w, c in sorted(Counter(op.factors).items()):
            types.append((i, lab, w, c))
    return types


def contraction_patterns(
    ops: Sequence[CompositeOp], labels: Sequence[int], n_leftover: int
) -> list[ContractionPattern]:
    """All contraction classes leaving exactly n_leftover uncontracted slots.

    Slots of one operator with equal multi-index are interchangeable, so
    the enumeration runs over slot types and carries the number of labelled
    pairings as an integer weight.
    """
    types = _slot_types(ops, labels)
    results: list[ContractionPattern] = []

    def rec(p, remaining, left_budget, weight, pairs, leftover):
        if p == len(types):
            if left_budget == 0:
                results.append(ContractionPattern(weight, tuple(pairs), tuple(leftover)))
            return
        op_p, lab_p, w_p, _ = types[p]
        c = remaining[p]
        partners = [q for q in range(p + 1, len(types)) if types[q][0] != op_p and remaining[q] > 0]
        avail = sum(remaining[q] for q in partners)
        for n_left in range(min(c, left_budget), -1, -1):
            need = c - n_left
            if need > avail:
                break
            w_left = math.comb(c, n_left)
            new_left = leftover + ([((lab_p, w_p), n_left)] if n_left else [])
            for alloc in _allocations(need, [remaining[q] for q in partners]):
                # split the need slots among partner types, then inject each
                # group into distinct partner slots
                new_rem = list(remaining)
                new_rem[p] = 0
                new_pairs = list(pairs)
                denom = perms = 1
                for q, k in zip(partners, alloc):
                    if not k:
                        continue
                    denom *= math.factorial(k)
                    perms *= math.perm(remaining[q], k)
                    new_rem[q] -= k
                    new_pairs.append(((lab_p, w_p), (types[q][1], types[q][2]), k))
                wt = weight * w_left * math.factorial(need) // denom * perms
                rec(p + 1, new_rem, left_budget - n_left, wt, new_pairs, new_left)

    rec(0, [t[3] for t in types], n_leftover, 1, [], [])
    return results


def _allocations(total: int, caps: Sequence[int]):
    """Compositions of total into len(caps) parts bounded by caps."""
    if not caps:
        if total == 0:
            yield ()
        return
    head, rest = caps[0], caps[1:]
    rest_cap = sum(rest)
    for k in range(min(head, total), -1, -1):
        if total - k > rest_cap:
            break
        for tail in _allocations(total - k, rest):
            yield (k,) + tail


def _taylor_matches(slots: Sequence[tuple[int, MultiIndex]], target: CompositeOp, base: int):
    """Distinct Taylor-order assignments v_s with multiset {u_s + v_s} == target."""
    seen = set()
    tf = target.factors
    for perm in itertools.permutations(range(len(tf))):
        vs = []
        for (lab, u), j in zip(slots, perm):
            v = mi_sub(tf[j], u)
            if v is None or (lab == base and order(v)):
                break
            vs.append(v)
        else:
            key = tuple(vs)
            if key not in seen:
                seen.add(key)
                yield key


@lru_cache(maxsize=None)
def _zeroth_order(ops: tuple[CompositeOp, ...], labels: tuple[int, ...], base: int, target: CompositeOp) -> CoeffExpr:
    if vanishes_by_counting(ops, target):
        return CoeffExpr()
    terms: list[tuple[tuple[Factor, ...], Fraction]] = []
    for pat in contraction_patterns(ops, labels, target.n):
        slots = [slot for slot, k in pat.leftover for _ in range(k)]
        if sum(1 + order(u) for _, u in slots) > dimension(target):
            continue
        sign = 1
        pfactors: list[Factor] = []
        for (la, u), (lb, v), k in pat.pairs:
            # <d^u phi(x_a) d^v phi(x_b)> = (-1)^|v| (d^(u+v) C)(x_a - x_b)
            s, f = prop(mi_add(u, v), la, lb)
            sign *= ((-1) ** order(v) * s) ** k
            pfactors.extend([f] * k)
        for vs in _taylor_matches(slots, target, base):
            weight = Fraction(sign * pat.weight)
            mfactors = []
            for (lab, _), v in zip(slots, vs):
                if not order(v):
                    continue
                s, f = mono(v, lab, base)
                weight = weight * s / mi_factorial(v)
                mfactors.append(f)
            terms.append((tuple(pfactors + mfactors), weight))
    return CoeffExpr(terms)


def zeroth_order(
    ops: Sequence[CompositeOp],
    target: CompositeOp,
    labels: Sequence[int] | None = None,
    base: int | None = None,
) -> CoeffExpr:
    """(C_0)_{ops}^{target} as an exact expression in the point labels.

    ``labels`` default to 0..N-1 and ``base`` to the last label.
    """
    ops = tuple(ops)
    if not ops:
        raise ValueError("need at least one operator")
    labels = tuple(range(len(ops))) if labels is None else tuple(labels)
    if len(set(labels)) != len(labels) or len(labels) != len(ops):
        raise ValueError("labels must be distinct, one per operator")
    base = labels[-1] if base is None else base
    if base not in labels:
        raise ValueError(f"base label {base} not among {labels}")
    return _zeroth_order(ops, labels, base, target)
