import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hptsi.field import Grid1D, SampledField, l1_distance
from hptsi.interp import (NodeSet, chebyshev_nodes, equispaced_nodes, interpolate_fields,
                          lagrange_coeffs, lagrange_matrix, lebesgue_constant)


def test_chebyshev_examples():
    np.testing.assert_array_equal(chebyshev_nodes(1).nodes, [0.0])
    r = math.sqrt(2) / 2
    np.testing.assert_allclose(chebyshev_nodes(2).nodes, [-r, r], atol=1e-15)
    np.testing.assert_allclose(chebyshev_nodes(2, (0, 2)).nodes, [1 - r, 1 + r], atol=1e-15)
    assert chebyshev_nodes(7, (0, 1)).kind == "chebyshev"
    with pytest.raises(ValueError):
        chebyshev_nodes(0)


def test_nodeset_validation():
    with pytest.raises(ValueError):
        NodeSet((0, 1), [0.5, 0.2])
    with pytest.raises(ValueError):
        NodeSet((0, 1), [0.5, 1.5])
    ns = NodeSet((0, 1), [0.2, 0.5])
    assert ns.index(0.5) == 1
    with pytest.raises(KeyError):
        ns.index(0.3)


def test_lagrange_examples():
    nodes = NodeSet((0, 1), [0.0, 1.0])
    np.testing.assert_allclose(lagrange_coeffs(nodes, 0.25), [0.75, 0.25])
    cheb = chebyshev_nodes(5, (-1, 1))
    for k, z in enumerate(cheb.nodes):
        np.testing.assert_array_equal(lagrange_coeffs(cheb, z), np.eye(5)[k])
    with pytest.raises(ValueError):
        lagrange_coeffs(cheb, np.inf)


def test_interpolate_fields_examples():
    grid = Grid1D.from_spacing(0.0, 1.0, 0.01)
    nodes = chebyshev_nodes(3, (1.0, 2.0))
    snaps = [SampledField(grid, z * grid.x) for z in nodes.nodes]
    np.testing.assert_array_equal(interpolate_fields(snaps, nodes, nodes.nodes[1]).values,
                                  snaps[1].values)
    np.testing.assert_allclose(interpolate_fields(snaps, nodes, 1.37).values, 1.37 * grid.x,
                               atol=1e-12)
    with pytest.raises(ValueError):
        interpolate_fields(snaps[:2], nodes, 1.5)


def test_plain_interpolation_of_moving_step_fails():
    grid = Grid1D.from_spacing(0.0, 1.0, 0.01)
    nodes = NodeSet((0.3, 0.7), [0.3, 0.7])
    snaps = [SampledField(grid, (grid.x >= z).astype(float)) for z in nodes.nodes]
    mixed = interpolate_fields(snaps, nodes, 0.5)
    truth = SampledField(grid, (grid.x >= 0.5).astype(float))
    assert l1_distance(mixed, truth) == pytest.approx(0.2, abs=grid.h)
    assert l1_distance(mixed, truth) >= 0.09


def _lebesgue_at(z, mu):
    return sum(abs(np.prod([(mu - z[j]) / (z[k] - z[j]) for j in range(z.size) if j != k]))
               for k in range(z.size))


def test_lebesgue_examples():
    assert lebesgue_constant(equispaced_nodes(2, (0.3, 0.9)), 100) == pytest.approx(1.0, abs=1e-9)
    # the [1.5, 1.8] range holds for extrema (second-kind) points; first-kind
    # points peak at the interval ends, checked against the product formula
    lobatto = NodeSet((-1, 1), np.cos(np.pi * np.arange(5) / 4)[::-1])
    assert 1.5 <= lebesgue_constant(lobatto, 2001) <= 1.8
    assert lebesgue_constant(chebyshev_nodes(5), 2001) == pytest.approx(
        _lebesgue_at(chebyshev_nodes(5).nodes, 1.0), abs=1e-12)
    assert lebesgue_constant(equispaced_nodes(8), 2001) > lebesgue_constant(chebyshev_nodes(8), 2001)
    with pytest.raises(ValueError):
        lebesgue_constant(chebyshev_nodes(5), 20)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_partition_of_unity_and_monomials(n, seed):
    rng = np.random.default_rng(seed)
    nodes = chebyshev_nodes(n, (-1.0, 2.0))
    mus = rng.uniform(-1.0, 2.0, 100)
    L = lagrange_matrix(nodes, mus)
    np.testing.assert_allclose(L.sum(axis=1), 1.0, atol=1e-12)
    for k in range(n):
        np.testing.assert_allclose(L @ nodes.nodes ** k, mus ** k, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 10), st.floats(-5, 5), st.floats(0.1, 10))
def test_lebesgue_affine_invariance(n, a, width):
    base = lebesgue_constant(chebyshev_nodes(n, (0.0, 1.0)), 1000)
    moved = lebesgue_constant(chebyshev_nodes(n, (a, a + width)), 1000)
    assert moved == pytest.approx(base, abs=1e-9)
