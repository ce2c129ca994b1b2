import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from mmflow.cfs import (
    CfsDistance,
    CfsError,
    CfsGrid,
    CfsState,
    EmbeddingMismatch,
    NotSymmetric,
    QOutOfRange,
    RankOverflow,
    SignatureViolation,
    SymOperator,
    TraceViolation,
    action_via_moments,
    build_cfs_kernel,
    embedding,
    filtration_flow,
    grid_from_json,
    kappa_lagrangian,
    projector_grid,
    random_operator,
    rank_one_projector,
    raw_cfs_kernel,
    run_cfs_flow,
    sphere_kernel,
    to_moments,
)
from mmflow.action import action
from mmflow.flow import FlowConfig
from mmflow.metrics import MetricChoice


def test_operator_validation():
    with pytest.raises(NotSymmetric):
        SymOperator(np.array([[1.0, 1.0], [0.0, 0.0]]), 1)
    with pytest.raises(TraceViolation, match="trace constraint"):
        SymOperator(np.eye(2), 1)
    with pytest.raises(SignatureViolation):
        SymOperator(np.diag([0.5, 0.5]), 1)
    assert SymOperator(np.diag([0.5, 0.5]), 2).norm == 0.5


def test_rank_overflow():
    x = np.diag([0.4, 0.3, 0.3])
    with pytest.raises(RankOverflow):
        kappa_lagrangian(x, x, 1, 1.0)


@settings(max_examples=40)
@given(st.integers(2, 5), st.integers(1, 2), st.floats(0.1, 2.0), st.integers(0, 2**31))
def test_lagrangian_matches_extended_precision(f, n, kappa, seed):
    rng = np.random.default_rng(seed)
    x, y = random_operator(f, n, rng), random_operator(f, n, rng)
    assert kappa_lagrangian(x, y, n, kappa) == pytest.approx(oracles.kappa_lagrangian_mp(x, y, n, kappa), rel=1e-9, abs=1e-12)


@settings(max_examples=40)
@given(st.integers(2, 6), st.integers(1, 2), st.floats(0.1, 2.0), st.floats(0.1, 10.0), st.integers(0, 2**31))
def test_lagrangian_symmetry_and_homogeneity(f, n, kappa, a, seed):
    rng = np.random.default_rng(seed)
    x, y = random_operator(f, n, rng), random_operator(f, n, rng)
    lxy = kappa_lagrangian(x, y, n, kappa)
    assert abs(lxy - kappa_lagrangian(y, x, n, kappa)) <= 1e-9 * max(1.0, lxy)
    assert kappa_lagrangian(a * x, y, n, kappa) == pytest.approx(a * a * lxy, rel=1e-9, abs=1e-12)
    assert lxy >= 0.0


@given(st.integers(1, 6), st.floats(0.1, 3.0), st.integers(0, 2**31))
def test_rank_one_self_value(f, kappa, seed):
    rng = np.random.default_rng(seed)
    x = rank_one_projector(rng.standard_normal(f))
    assert kappa_lagrangian(x, x, 1, kappa) == pytest.approx(0.5 + kappa, abs=1e-12)


def random_grid(rng, f, n, size, kappa=1.0):
    return CfsGrid([random_operator(f, n, rng) for _ in range(size)], n, kappa)


@settings(max_examples=20)
@given(st.integers(2, 4), st.integers(1, 2), st.integers(2, 6), st.integers(0, 2**31))
def test_moment_action_identity(f, n, size, seed):
    rng = np.random.default_rng(seed)
    grid = random_grid(rng, f, n, size)
    K = build_cfs_kernel(grid)
    w = rng.dirichlet(np.ones(size))
    direct = action(K, w)
    via = action_via_moments(to_moments(w, grid), sphere_kernel(grid))
    assert via == pytest.approx(direct, rel=1e-10, abs=1e-12)


@settings(max_examples=30)
@given(st.integers(2, 4), st.integers(2, 8), st.integers(0, 2**31))
def test_moment_cauchy_schwarz(f, size, seed):
    rng = np.random.default_rng(seed)
    grid = random_grid(rng, f, 1, size)
    m = to_moments(rng.dirichlet(np.ones(size)), grid)
    for _ in range(5):
        k = int(rng.integers(1, size + 1))
        assert m.cauchy_schwarz_ok(rng.choice(size, k, replace=False))


def test_kernel_symmetrization_is_small():
    rng = np.random.default_rng(0)
    grid = random_grid(rng, 4, 2, 8)
    L = raw_cfs_kernel(grid)
    assert np.abs(L - L.T).max() <= 1e-9 * max(1.0, np.abs(L).max())


def test_grid_json_roundtrip():
    rng = np.random.default_rng(1)
    grid = random_grid(rng, 3, 1, 4)
    back = grid_from_json(grid.to_json())
    np.testing.assert_array_equal(back.matrices(), grid.matrices())
    with pytest.raises(CfsError):
        grid_from_json({"dim": 2, "n": 1, "kappa": 1.0, "operators": [[1.0, 0.0, 0.0]]})
    with pytest.raises(CfsError):
        CfsGrid([np.eye(2) / 2], 1, 0.0)


def test_distance_requires_q_above_two():
    grid = projector_grid(2)
    with pytest.raises(QOutOfRange):
        CfsDistance(grid, MetricChoice.frechet(), q=2.0)


@settings(max_examples=20)
@given(st.integers(0, 2**31), st.sampled_from(["frechet", "wasserstein"]))
def test_distance_coefficients_bound_rays(seed, weighted):
    rng = np.random.default_rng(seed)
    grid = random_grid(rng, 3, 1, 5)
    dist = CfsDistance(grid, MetricChoice.wasserstein(1.0), weighted_metric=weighted)
    mu = rng.dirichlet(np.ones(5))
    lin, root = dist.dirac_coefs(mu)
    fd = dist.from_diracs(mu)
    for z in range(5):
        assert fd[z] == pytest.approx(dist(np.eye(5)[z], mu), abs=1e-12)
        t = rng.uniform()
        assert dist((1 - t) * mu + t * np.eye(5)[z], mu) <= dist.ray_bound(lin[z], root[z], t) + 1e-9


def test_cfs_flow_decreases_action():
    rng = np.random.default_rng(2)
    grid = random_grid(rng, 3, 1, 6)
    flow = run_cfs_flow(CfsState.uniform(grid), grid, FlowConfig(h=0.5, xi=0.01, metric=MetricChoice.frechet(), max_steps=30))
    assert np.all(np.diff(flow.actions) <= 1e-12)
    assert flow.inequality_report()["xi_lipschitz"]["fail"] == 0


def padded(ops, f):
    out = []
    for x in ops:
        p = np.zeros((f, f))
        p[: x.shape[0], : x.shape[1]] = x
        out.append(p)
    return out


def test_zero_padding_preserves_kernel_and_embedding():
    rng = np.random.default_rng(4)
    small_ops = [random_operator(2, 1, rng) for _ in range(3)]
    small = CfsGrid(small_ops, 1, 1.0)
    large = CfsGrid(padded(small_ops, 4) + [random_operator(4, 1, rng) for _ in range(3)], 1, 1.0)
    idx = embedding(small, large)
    np.testing.assert_array_equal(idx, [0, 1, 2])
    Ks, Kl = build_cfs_kernel(small), build_cfs_kernel(large)
    np.testing.assert_array_equal(Kl.L[np.ix_(idx, idx)], Ks.L)
    with pytest.raises(EmbeddingMismatch):
        embedding(large, small)


def test_filtration_chain():
    rng = np.random.default_rng(5)
    small_ops = [random_operator(2, 1, rng) for _ in range(3)]
    grids = [CfsGrid(small_ops, 1, 1.0), CfsGrid(padded(small_ops, 4) + [random_operator(4, 1, rng) for _ in range(3)], 1, 1.0)]
    cfg = FlowConfig(h=0.5, metric=MetricChoice.frechet(), max_steps=50)
    res = filtration_flow(grids, CfsState.uniform(grids[0]), cfg, [0.02, 0.01])
    acts = res.concatenated_actions()
    assert all(b <= a + 1e-12 for a, b in zip(acts, acts[1:]))
    # the second stage starts at the embedded first-stage limit
    np.testing.assert_array_equal(res.flows[1].measures[0].weights[:3], res.flows[0].final.weights)
    with pytest.raises(ValueError):
        filtration_flow(grids, CfsState.uniform(grids[0]), cfg, [0.01, 0.02])
