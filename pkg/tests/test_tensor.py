import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hptsi.field import Grid1D, SampledField, l1_distance
from hptsi.hp import Cell, Partition
from hptsi.interp import NodeSet, chebyshev_nodes, lagrange_matrix, lebesgue_constant
from hptsi.tensor import (Axis1Config, Axis2Config, ComponentModel, PairCache, active_points,
                          build_param_warp, evaluate_componentwise, fit_componentwise,
                          stage2_gamma, stage2_stability_bound)
from hptsi.transforms import FoldingTransformError, TransformSet
from hptsi.tsi import TsiCellModel

GRID = Grid1D.from_spacing(0.0, 2.0, 0.01)
DOM1 = (0.2, 0.6)
DOM2 = (0.2, 0.6)
W = GRID.trapezoid_weights()


def shifted_step(mu1, mu2):
    return SampledField(GRID, (GRID.x >= mu1 + mu2).astype(float))


def one_cell(provider, nodes, shift=0.0):
    """Stage-1 partition whose transforms displace by ``(mu - eta) * shift``."""
    n = len(nodes)
    c = np.zeros((n, n, 1, 2))
    c[..., 0] = shift
    T = TransformSet(nodes, (GRID.x_min, GRID.x_max), c)
    cell = Cell(nodes.interval, 0, n - 1,
                TsiCellModel(nodes, tuple(provider(float(z)) for z in nodes.nodes), T))
    return Partition(nodes.interval, [cell], True)


def hand_model(provider, n1=3, n2=3, shift1=0.0, shift2=0.0, nodes2=None):
    """Component model with constant-shift transforms in both stages."""
    nodes1 = chebyshev_nodes(n1, DOM1)
    nodes2 = chebyshev_nodes(n2, DOM2) if nodes2 is None else nodes2
    stage1 = {float(e): one_cell(lambda m, e=e: provider(m, float(e)), nodes1, shift1)
              for e in nodes2.nodes}
    pnodes = chebyshev_nodes(2, DOM1)
    T = TransformSet.identity(nodes2, (GRID.x_min, GRID.x_max), 1, (pnodes,), warp_params=True)
    c = T.coeffs.copy()
    c[..., 0] = shift2
    return ComponentModel(GRID, DOM1, stage1, T.with_coeffs(c))


def exact_model():
    # both jumps at mu1 + mu2: phi = x - (mu - eta) in each stage
    return hand_model(shifted_step, shift1=-1.0, shift2=-1.0)


def test_pair_cache_counts_distinct_calls():
    calls = []

    def provider(a, b):
        calls.append((a, b))
        return shifted_step(a, b)
    cache = PairCache(provider)
    cache(0.3, 0.4)
    cache(0.3, 0.4)
    cache.frozen(0.5)(0.3)
    assert cache.count == 2 and len(calls) == 2


def test_param_warp_examples():
    ident = build_param_warp(lambda m: 1.0, [(0.5, 1.5)], (0.0, 2.0))
    q = np.linspace(0.0, 2.0, 9)
    np.testing.assert_allclose(ident(0.5, 1.5, q), q)
    warp = build_param_warp(lambda m: 1.0 if m < 1 else 1.2, [(0.5, 1.5)], (0.0, 2.0))
    np.testing.assert_allclose(warp(0.5, 1.5, [0.0, 0.5, 1.0, 1.5, 2.0]),
                               [0.0, 0.6, 1.2, 1.6, 2.0])
    with pytest.raises(ValueError, match="interior"):
        build_param_warp(lambda m: 0.0, [(0.5, 1.5)], (0.0, 2.0))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 1.95), st.floats(0.05, 1.95), st.integers(0, 2**32 - 1))
def test_param_warp_preserves_regions(a_src, a_dst, seed):
    warp = build_param_warp(lambda m: a_src if m == 0.0 else a_dst, [(0.0, 1.0)], (0.0, 2.0))
    mu = np.random.default_rng(seed).uniform(0.0, 2.0, 100)
    out = warp(0.0, 1.0, mu)
    assert warp(0.0, 1.0, a_src) == pytest.approx(a_dst, abs=1e-9)
    np.testing.assert_array_equal(mu < a_src, out < a_dst)
    dense = warp(0.0, 1.0, np.linspace(0.0, 2.0, 1001))
    assert np.all(np.diff(dense) >= 0)


def test_nested_node_reproduction():
    m = hand_model(shifted_step, shift1=-1.0, shift2=0.7)
    nodes1 = m.partition_at(m.nodes2.nodes[0]).cells[0].model.nodes
    for e in m.nodes2.nodes:
        for z in nodes1.nodes:
            got = evaluate_componentwise(m, float(z), float(e)).values
            assert np.max(np.abs(got - shifted_step(z, e).values)) <= 1e-10


def test_reduction_to_tensor_interpolation():
    def smooth(a, b):
        return SampledField(GRID, np.sin(GRID.x + 3 * a) * np.exp(b * GRID.x))
    m = hand_model(smooth, n1=3, n2=4)
    nodes1 = chebyshev_nodes(3, DOM1)
    rng = np.random.default_rng(5)
    for a, b in rng.uniform(0.2, 0.6, (20, 2)):
        la = lagrange_matrix(nodes1, [a])[0]
        lb = lagrange_matrix(m.nodes2, [b])[0]
        plain = sum(la[i] * lb[j] * smooth(z1, z2).values
                    for i, z1 in enumerate(nodes1.nodes) for j, z2 in enumerate(m.nodes2.nodes))
        np.testing.assert_allclose(evaluate_componentwise(m, a, b).values, plain,
                                   rtol=0, atol=1e-10)


def test_exact_shift_transforms_align_the_step():
    m = exact_model()
    rng = np.random.default_rng(9)
    for a, b in rng.uniform(0.2, 0.6, (20, 2)):
        assert l1_distance(evaluate_componentwise(m, a, b), shifted_step(a, b)) <= 2 * GRID.h


def test_outside_domain_and_clamping():
    m = exact_model()
    with pytest.raises(ValueError):
        evaluate_componentwise(m, 0.1, 0.3)
    with pytest.raises(ValueError):
        evaluate_componentwise(m, 0.3, 0.7)
    e = np.full(m.stage2.param_coeffs.shape, 5.0)
    pushed = ComponentModel(GRID, DOM1, m.stage1, m.stage2.with_coeffs(m.stage2.coeffs, e))
    diag = {}
    evaluate_componentwise(pushed, 0.55, 0.6, diag)
    assert diag["clamped"] and all(v > DOM1[1] for _, v in diag["clamped"])
    diag = {}
    evaluate_componentwise(m, 0.4, 0.4, diag)
    assert "clamped" not in diag


def test_active_points_non_adaptive_is_full_grid():
    m = exact_model()
    nodes1 = chebyshev_nodes(3, DOM1).nodes
    full = {(float(z), float(e)) for z in nodes1 for e in m.nodes2.nodes}
    for a, b in [(0.25, 0.33), (0.5, 0.41), (0.6, 0.2)]:
        assert active_points(m, a, b) == full
    z, e = float(nodes1[1]), float(m.nodes2.nodes[2])
    assert (z, e) in active_points(m, z, e)


def test_stability_bound_examples():
    ends = NodeSet(DOM2, [0.2, 0.6])
    ident = hand_model(shifted_step, n2=2, nodes2=ends)
    assert stage2_stability_bound(ident, 0.3, 0.4) == pytest.approx(1.0, abs=1e-9)
    shift = exact_model()
    lam = lebesgue_constant(shift.nodes2, 1000)
    assert stage2_gamma(shift, 0.3, 0.45) == pytest.approx(1.0, abs=1e-9)
    assert stage2_stability_bound(shift, 0.3, 0.45) == pytest.approx(lam, abs=1e-9)


def test_stability_bound_of_contraction():
    m = hand_model(shifted_step, n2=2)
    nodes2 = m.nodes2.nodes
    gap = nodes2[1] - nodes2[0]
    span = GRID.x_max - GRID.x_min
    c = m.stage2.coeffs.copy()
    # slope of x + (mu - eta) c1 psi_1(x) is 1 + (mu - eta) c1 * 2 / |Omega|; want 1/2 at eta = nodes2[0]
    c[..., 1] = -0.5 * span / (2 * gap)
    squeezed = ComponentModel(GRID, DOM1, m.stage1, m.stage2.with_coeffs(c))
    lam = lebesgue_constant(m.nodes2, 1000)
    assert stage2_gamma(squeezed, 0.4, float(nodes2[1])) == pytest.approx(2.0, rel=1e-9)
    assert stage2_stability_bound(squeezed, 0.4, float(nodes2[1])) == pytest.approx(2 * lam, rel=1e-9)
    c[..., 1] = -4 * span / (2 * gap)
    folded = ComponentModel(GRID, DOM1, m.stage1, m.stage2.with_coeffs(c))
    with pytest.raises(FoldingTransformError):
        stage2_gamma(folded, 0.4, float(nodes2[1]))


def test_error_splits_into_stage_parts():
    # stage 1 is plain interpolation in mu1, stage 2 aligns exactly; the total
    # error stays below the stability bound times the stage-1 error plus the
    # stage-2 error measured with exact stage-1 data
    m = hand_model(shifted_step, shift2=-1.0)
    mus1 = np.linspace(*DOM1, 41)
    e1 = 0.0
    for e in m.nodes2.nodes:
        part = m.partition_at(float(e))
        for a in mus1:
            got = part.cells[0].model
            vals = lagrange_matrix(got.nodes, [a])[0] @ np.stack([s.values for s in got.snapshots])
            e1 = max(e1, np.abs(vals - shifted_step(a, e).values) @ W)
    rng = np.random.default_rng(3)
    for a, b in rng.uniform(0.2, 0.6, (15, 2)):
        lb = lagrange_matrix(m.nodes2, [b])[0]
        exact2 = np.zeros(GRID.n_points)
        for i, e in enumerate(m.nodes2.nodes):
            X, R = m.stage2.apply(b, float(e), GRID.x, [[a]])
            exact2 += lb[i] * np.interp(X[0], GRID.x, shifted_step(R[0, 0], e).values)
        truth = shifted_step(a, b).values
        e2 = np.abs(exact2 - truth) @ W
        total = np.abs(evaluate_componentwise(m, a, b).values - truth) @ W
        assert total <= 2 * (stage2_stability_bound(m, a, b) * e1 + e2)


def test_fitted_separable_family():
    grid = Grid1D.from_spacing(0.0, 1.0, 0.02)

    def provider(a, b):
        return SampledField(grid, np.sin(np.pi * grid.x) * np.exp(a) * np.cos(b))
    m = fit_componentwise(provider, Axis1Config((0.0, 1.0), degree=2, adaptive=False),
                          Axis2Config((0.0, 1.0), degree=2, fine_points=11, max_iters=50),
                          adaptive_axis1=False)
    assert np.abs(m.stage2.coeffs).max() <= 0.02
    assert np.abs(m.stage2.param_coeffs).max() <= 0.02
    nodes1 = chebyshev_nodes(3, (0.0, 1.0))
    w = grid.trapezoid_weights()
    worst_tsi = worst_plain = 0.0
    for a, b in np.random.default_rng(0).uniform(0.0, 1.0, (20, 2)):
        truth = provider(a, b).values
        la = lagrange_matrix(nodes1, [a])[0]
        lb = lagrange_matrix(m.nodes2, [b])[0]
        plain = sum(la[i] * lb[j] * provider(z1, z2).values
                    for i, z1 in enumerate(nodes1.nodes) for j, z2 in enumerate(m.nodes2.nodes))
        worst_plain = max(worst_plain, np.abs(plain - truth) @ w)
        worst_tsi = max(worst_tsi, np.abs(evaluate_componentwise(m, a, b).values - truth) @ w)
    assert worst_tsi <= worst_plain
    for e in m.nodes2.nodes:
        for z in nodes1.nodes:
            got = evaluate_componentwise(m, float(z), float(e)).values
            assert np.max(np.abs(got - provider(z, e).values)) <= 1e-10


def test_constant_family_gives_identity():
    flat = SampledField(GRID, np.cos(GRID.x))
    m = fit_componentwise(lambda a, b: flat, Axis1Config(DOM1, degree=1, adaptive=False),
                          Axis2Config(DOM2, degree=1, fine_points=5, max_iters=20),
                          adaptive_axis1=False)
    np.testing.assert_array_equal(m.stage2.coeffs, 0.0)
    np.testing.assert_array_equal(m.stage2.param_coeffs, 0.0)
    for part in m.stage1.values():
        np.testing.assert_array_equal(part.cells[0].model.transforms.coeffs, 0.0)
    assert m.training_error <= 1e-12


def test_serialization_round_trip():
    m = exact_model()
    back = ComponentModel.loads(m.dumps())
    for a, b in [(0.25, 0.3), (0.41, 0.58)]:
        np.testing.assert_array_equal(evaluate_componentwise(back, a, b).values,
                                      evaluate_componentwise(m, a, b).values)
