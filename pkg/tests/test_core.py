import numpy as np
import pytest
from hypothesis import given, strategies as st

from phi4ope.core import (
    IDENTITY,
    CompositeOp,
    DomainError,
    OpSpecError,
    PointConfig,
    enumerate_basis,
    mi_add,
    mi_sub,
    multinomial_weight,
    parse_op,
    two_points,
)

multi_indices = st.tuples(*[st.integers(0, 2)] * 4)
operators = st.lists(multi_indices, min_size=0, max_size=5).map(lambda fs: CompositeOp(tuple(fs)))


@pytest.mark.parametrize(
    "text, canonical, dim, n",
    [
        ("phi^4", "phi^4", 4, 4),
        ("phi*phi", "phi^2", 2, 2),
        ("d1phi*phi", "phi*d1phi", 3, 2),
        ("d1d1phi*phi", "phi*d1d1phi", 4, 2),
        ("d2d1phi", "d1d2phi", 3, 1),
        ("  phi^2 * d3phi ", "phi^2*d3phi", 4, 3),
        ("1", "1", 0, 0),
    ],
)
def test_parse_canonicalizes(text, canonical, dim, n):
    op = parse_op(text)
    assert op.spec() == canonical
    assert op.dimension == dim
    assert op.n == n


@pytest.mark.parametrize(
    "text, column",
    [("", 1), ("psi", 1), ("d5phi", 1), ("phi^0", 4), ("phi*", 5), ("phi^2^3", 6), ("phi*d0phi", 5)],
)
def test_parse_errors_report_column(text, column):
    with pytest.raises(OpSpecError) as info:
        parse_op(text, line=7)
    assert info.value.column == column
    assert info.value.line == 7
    assert "line 7" in str(info.value)


@given(operators)
def test_spec_round_trip(op):
    assert parse_op(op.spec()) == op


@given(st.permutations([(1, 0, 0, 0), (0, 0, 0, 0), (0, 2, 0, 1), (0, 0, 0, 0)]))
def test_factor_order_is_irrelevant(factors):
    assert CompositeOp(tuple(factors)) == CompositeOp(((0, 0, 0, 0), (0, 0, 0, 0), (0, 2, 0, 1), (1, 0, 0, 0)))


@given(multi_indices, multi_indices)
def test_multi_index_add_sub(u, v):
    assert mi_sub(mi_add(u, v), v) == u
    if any(b > a for a, b in zip(u, v)):
        assert mi_sub(u, v) is None


def test_multinomial_weight():
    # multi-index factorials are per component: (1,1,0,0)! = 1
    assert multinomial_weight([(1, 0, 0, 0), (0, 1, 0, 0)]) == 1
    assert multinomial_weight([(1, 0, 0, 0), (1, 0, 0, 0)]) == 2
    assert multinomial_weight([(2, 0, 0, 0), (1, 0, 0, 0)]) == 3


def test_basis_counts():
    basis = enumerate_basis(4)
    # 1, phi^2, 4 of phi d phi, 10 of phi dd phi, 10 of d phi d phi, phi^4
    assert len(basis) == 27
    assert basis[0] == IDENTITY
    assert all(op.dimension <= 4 and op.n % 2 == 0 for op in basis)
    assert len(set(basis)) == len(basis)
    odd = [op for op in enumerate_basis(4, include_odd=True) if op.n % 2]
    assert {op.spec() for op in odd if op.dimension <= 3} == {"phi", "d1phi", "d2phi", "d3phi", "d4phi",
                                                                "d1d1phi", "d1d2phi", "d1d3phi", "d1d4phi",
                                                                "d2d2phi", "d2d3phi", "d2d4phi", "d3d3phi",
                                                                "d3d4phi", "d4d4phi", "phi^3"}
    assert enumerate_basis(-1) == []


def test_basis_is_sorted_by_dimension():
    dims = [op.dimension for op in enumerate_basis(6)]
    assert dims == sorted(dims)


def test_point_config_validation():
    with pytest.raises(DomainError):
        PointConfig(np.zeros((2, 4)))
    with pytest.raises(ValueError):
        PointConfig(np.zeros((2, 3)))
    cfg = PointConfig(np.array([[1.0, 0, 0, 0], [0, 0, 0, 0], [0, 3.0, 0, 0]]))
    assert cfg.base == 2
    assert cfg.min_distance == pytest.approx(1.0)
    assert cfg.diameter == pytest.approx(np.sqrt(10))
    assert not cfg.points.flags.writeable


def test_two_points_and_transforms():
    cfg = two_points(2.0, direction=(0, 3.0, 0, 4.0))
    assert np.allclose(cfg.points[0], [0, 1.2, 0, 1.6])
    assert cfg.shifted([1, 1, 1, 1]).min_distance == pytest.approx(2.0)
    assert cfg.scaled(0.5).diameter == pytest.approx(1.0)
