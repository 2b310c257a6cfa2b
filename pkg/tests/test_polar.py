import numpy as np
import pytest

from metalgraph.errors import EmptyMetalError
from metalgraph.oracles import oracle_dense_adjacency, oracle_nearest_metal
from metalgraph.polar import (angular_weight, build_artifact_graph,
                              build_graph_context, compute_polar,
                              empty_adjacency, radial_weight)


def polar_for(mask):
    return compute_polar(mask.astype(np.uint8))


def test_polar_345_triangle():
    m = np.zeros((6, 6), np.uint8)
    m[0, 0] = 1
    p = polar_for(m)
    assert p.radius[3, 4] == pytest.approx(5.0)
    assert p.theta[3, 4] == pytest.approx(np.arctan2(4, 3), abs=1e-6)


def test_polar_zero_radius_zero_angle():
    m = np.zeros((4, 4), np.uint8)
    m[1, 2] = 1
    p = polar_for(m)
    assert p.radius[1, 2] == 0.0
    assert p.theta[1, 2] == 0.0


def test_polar_empty_metal_raises():
    with pytest.raises(EmptyMetalError):
        compute_polar(np.zeros((4, 4), np.uint8))


@pytest.mark.parametrize("seed", range(6))
def test_polar_matches_bruteforce(seed):
    rng = np.random.default_rng(seed)
    m = (rng.random((9, 9)) < 0.1).astype(np.uint8)
    m[rng.integers(9), rng.integers(9)] = 1
    p = polar_for(m)
    dr, dc = oracle_nearest_metal([tuple(q) for q in np.argwhere(m > 0)], 9, 9)
    assert np.allclose(p.radius, np.hypot(dr, dc), atol=1e-5)
    expect_theta = np.arctan2(dc, dr)
    expect_theta[(dr == 0) & (dc == 0)] = 0.0
    assert np.allclose(p.theta, expect_theta, atol=1e-6)


def test_angular_weight_identity():
    assert angular_weight(1.2, 1.2) == pytest.approx(1.0)


def test_angular_weight_value():
    # circular distance 2.0 with sigma 2.0
    assert angular_weight(0.0, 2.0, sigma=2.0) == pytest.approx(np.exp(-0.5), abs=1e-9)


def test_angular_weight_wraps():
    w_near = angular_weight(np.pi - 0.1, -np.pi + 0.1)
    assert w_near == pytest.approx(np.exp(-(0.2 ** 2) / 8.0), abs=1e-9)
    assert w_near > angular_weight(0.0, 2.0)


def test_radial_weight_identity_and_value():
    assert radial_weight(3.0, 3.0) == pytest.approx(1.0)
    assert radial_weight(1.0, 3.0, sigma=2.0) == pytest.approx(np.exp(-0.5), abs=1e-9)


def test_radial_weight_monotone():
    prev = 2.0
    for d in (0.5, 1.0, 2.0, 4.0):
        w = radial_weight(0.0, d)
        assert w < prev
        prev = w


def test_two_node_closed_form():
    # only two nodes: any selected edge normalizes to off-diagonal 1.0
    from metalgraph.polar import PolarField
    polar = PolarField(radius=np.array([[1.0, 3.0]], np.float32),
                       theta=np.array([[0.2, 0.9]], np.float32))
    adj = build_artifact_graph(polar, np.ones((1, 2), np.float32), 1,
                               k_ang=1, k_rad=0)
    dense = adj.to_dense()
    assert dense[0, 1] == pytest.approx(1.0, abs=1e-6)
    assert dense[1, 0] == pytest.approx(1.0, abs=1e-6)
    assert dense[0, 0] == 0.0 and dense[1, 1] == 0.0


def test_single_implant_no_density_reweight():
    rng = np.random.default_rng(3)
    m = np.zeros((5, 5), np.uint8)
    m[2, 2] = 1
    polar = polar_for(m)
    density = rng.random((5, 5)).astype(np.float32) * 0.5
    a1 = build_artifact_graph(polar, density, 1, k_ang=3, k_rad=2).to_dense()
    a2 = build_artifact_graph(polar, np.ones((5, 5), np.float32), 1,
                              k_ang=3, k_rad=2).to_dense()
    assert np.allclose(a1, a2, atol=1e-7)   # N=1 ignores the density map


def test_multi_implant_density_reweight_active():
    rng = np.random.default_rng(4)
    m = np.zeros((5, 5), np.uint8)
    m[0, 0] = 1
    m[4, 4] = 1
    polar = polar_for(m)
    density = rng.random((5, 5)).astype(np.float32)
    a1 = build_artifact_graph(polar, density, 2, k_ang=3, k_rad=2).to_dense()
    a2 = build_artifact_graph(polar, np.ones((5, 5), np.float32), 2,
                              k_ang=3, k_rad=2).to_dense()
    assert not np.allclose(a1, a2, atol=1e-7)


@pytest.mark.parametrize("seed", range(5))
def test_adjacency_matches_dense_oracle(seed):
    rng = np.random.default_rng(10 + seed)
    m = np.zeros((6, 6), np.uint8)
    m[rng.integers(6), rng.integers(6)] = 1
    polar = polar_for(m)
    density = rng.random((6, 6)).astype(np.float32)
    adj = build_artifact_graph(polar, density, 2, k_ang=12, k_rad=4)
    ref = oracle_dense_adjacency(polar.theta.reshape(-1).astype(np.float64),
                                 polar.radius.reshape(-1).astype(np.float64),
                                 12, 4, 2.0, density=density, n_implants=2)
    assert np.abs(adj.to_dense() - ref).max() < 1e-5


def test_adjacency_structure_invariants():
    rng = np.random.default_rng(21)
    m = (rng.random((8, 8)) < 0.08).astype(np.uint8)
    m[3, 3] = 1
    polar = polar_for(m)
    adj = build_artifact_graph(polar, np.ones((8, 8), np.float32), 1)
    dense = adj.to_dense()
    assert np.abs(dense - dense.T).max() < 1e-6
    assert np.abs(np.diag(dense)).max() == 0.0
    assert (adj.weight >= 0).all()
    # pre-symmetrization out-degree bound
    from metalgraph import kernels
    src, dst, _ = kernels.topk_edges(
        polar.theta.reshape(-1).astype(np.float64),
        polar.radius.reshape(-1).astype(np.float64), 12, 4, 2.0)
    counts = np.bincount(src, minlength=64)
    assert counts.max() <= 16


def test_spectral_bound_power_iteration():
    rng = np.random.default_rng(30)
    for seed in range(3):
        r = np.random.default_rng(seed)
        m = np.zeros((6, 6), np.uint8)
        m[r.integers(6), r.integers(6)] = 1
        m[r.integers(6), r.integers(6)] = 1
        polar = polar_for(m)
        adj = build_artifact_graph(polar, r.random((6, 6)).astype(np.float32), 2)
        dense = adj.to_dense().astype(np.float64)
        v = rng.standard_normal(dense.shape[0])
        for _ in range(200):
            v = dense @ v
            nrm = np.linalg.norm(v)
            if nrm == 0:
                break
            v /= nrm
        lam = float(v @ (dense @ v)) if np.linalg.norm(v) > 0 else 0.0
        assert abs(lam) <= 1.0 + 1e-4


def test_k_clamped_with_warning():
    m = np.zeros((2, 2), np.uint8)
    m[0, 0] = 1
    polar = polar_for(m)
    with pytest.warns(UserWarning):
        adj = build_artifact_graph(polar, np.ones((2, 2), np.float32), 1,
                                   k_ang=12, k_rad=4)
    src = adj.src
    assert np.bincount(src, minlength=4).max() <= 3


def test_zero_k_gives_empty_graph():
    m = np.zeros((4, 4), np.uint8)
    m[1, 1] = 1
    polar = polar_for(m)
    adj = build_artifact_graph(polar, np.ones((4, 4), np.float32), 1,
                               k_ang=0, k_rad=0)
    assert adj.nnz == 0


def test_context_empty_metal_runs():
    ctx = build_graph_context(np.zeros((16, 16), np.uint8),
                              np.zeros((16, 16), np.float32), 0, (8, 8))
    assert ctx.adjacency.nnz == 0
    assert not ctx.polar.radius.any()
    x = np.ones((64, 3), np.float32)
    assert not ctx.adjacency.matmul(x).any()


def test_backends_agree_on_structure():
    from metalgraph.kernels import _numba_impl, _numpy_impl
    rng = np.random.default_rng(9)
    theta = rng.uniform(-np.pi, np.pi, 80)
    rad = rng.uniform(0, 12, 80)
    s1, d1, w1 = _numpy_impl.topk_edges(theta, rad, 6, 3, 2.0)
    s2, d2, w2 = _numba_impl.topk_edges(theta, rad, 6, 3, 2.0)
    assert np.array_equal(s1, s2) and np.array_equal(d1, d2)
    assert np.allclose(w1, w2, atol=1e-12)


def test_empty_adjacency_matmul_requires_finalized():
    from metalgraph.errors import StateError
    from metalgraph.polar import SparseAdjacency
    adj = SparseAdjacency(n=4)
    with pytest.raises(StateError):
        adj.matmul(np.zeros((4, 2), np.float32))
    assert empty_adjacency(4).matmul(np.ones((4, 2), np.float32)).sum() == 0
