import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from mmflow.metrics import (
    MetricChoice,
    UnnormalizedInput,
    WassersteinDistance,
    distance,
    make_distance,
    total_variation,
    transport_plan,
    wasserstein,
    wasserstein_equal_mass,
)
from mmflow.space import build_metric_space


@st.composite
def instance(draw, max_n=6, max_support=4):
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    n = draw(st.integers(1, max_n))
    sp = build_metric_space(coords=rng.uniform(0, 1, (n, 2)))

    def measure():
        k = int(rng.integers(1, min(n, max_support) + 1))
        w = np.zeros(n)
        w[rng.choice(n, k, replace=False)] = rng.dirichlet(np.ones(k))
        return w

    return sp, measure(), measure(), measure()


def test_total_variation_convention():
    # the norm of a difference of probability measures is twice the moved mass
    assert total_variation([1.0, 0.0], [0.0, 1.0]) == 2.0
    assert total_variation([0.5, -0.25]) == 0.75


def test_two_point_wasserstein():
    sp = build_metric_space(coords=[[0.0], [2.0]])
    w, plan = wasserstein([0.75, 0.25], [0.25, 0.75], 2.0, sp)
    assert w == pytest.approx(np.sqrt(0.5 * 4.0))
    np.testing.assert_allclose(plan.plan.sum(axis=1), [0.75, 0.25])
    np.testing.assert_allclose(plan.plan.sum(axis=0), [0.25, 0.75])


def test_unequal_masses_rejected():
    sp = build_metric_space(coords=[[0.0], [1.0]])
    with pytest.raises(UnnormalizedInput):
        wasserstein([0.5, 0.6], [0.5, 0.5], 1.0, sp)


@settings(max_examples=60)
@given(instance(), st.sampled_from([1.0, 2.0, 3.0]))
def test_transport_cost_matches_vertex_enumeration(inst, p):
    sp, a, b, _ = inst
    w, plan = wasserstein(a, b, p, sp)
    ia, ib = np.nonzero(a > 0)[0], np.nonzero(b > 0)[0]
    ref = oracles.transport_cost_by_vertices(a[ia], b[ib], (sp.dist**p)[np.ix_(ia, ib)])
    assert plan.cost == pytest.approx(ref, abs=1e-12)
    assert w == pytest.approx(max(ref, 0.0) ** (1 / p), abs=1e-9)


@settings(max_examples=80)
@given(instance(), st.sampled_from([1.0, 2.0, 3.0]))
def test_plan_is_feasible(inst, p):
    sp, a, b, _ = inst
    _, plan = wasserstein(a, b, p, sp)
    P = plan.plan
    assert (P >= 0).all()
    np.testing.assert_allclose(P.sum(axis=1), a, atol=1e-12)
    np.testing.assert_allclose(P.sum(axis=0), b, atol=1e-12)
    assert plan.cost == pytest.approx(float((P * sp.dist**p).sum()), abs=1e-14)


@settings(max_examples=100)
@given(instance(), st.sampled_from([1.0, 2.0, 3.0]))
def test_wasserstein_metric_axioms(inst, p):
    sp, a, b, c = inst
    ab = wasserstein(a, b, p, sp)[0]
    assert wasserstein(a, a, p, sp)[0] == pytest.approx(0.0, abs=1e-12)
    assert ab == pytest.approx(wasserstein(b, a, p, sp)[0], abs=1e-12)
    assert ab <= wasserstein(a, c, p, sp)[0] + wasserstein(c, b, p, sp)[0] + 1e-9
    assert ab >= 0.0


@settings(max_examples=100)
@given(instance())
def test_total_variation_metric_axioms(inst):
    _, a, b, c = inst
    assert total_variation(a, a) == 0.0
    assert total_variation(a, b) == total_variation(b, a)
    assert total_variation(a, b) <= total_variation(a, c) + total_variation(c, b) + 1e-15


@settings(max_examples=60)
@given(instance(), st.sampled_from([2.0, 3.0]))
def test_wasserstein_monotone_in_p(inst, p):
    sp, a, b, _ = inst
    assert wasserstein(a, b, 1.0, sp)[0] <= wasserstein(a, b, p, sp)[0] + 1e-12


@settings(max_examples=60)
@given(st.integers(2, 7), st.integers(0, 2**31))
def test_w1_on_the_line_matches_cumulative_formula(n, seed):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0, 1, n))
    sp = build_metric_space(coords=x)
    a, b = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
    assert wasserstein(a, b, 1.0, sp)[0] == pytest.approx(oracles.w1_on_line(x, a, b), abs=1e-12)


@settings(max_examples=100)
@given(instance(), st.floats(0.0, 1.0), st.sampled_from([1.0, 2.0]))
def test_mixture_bound_with_root_exponent(inst, lam, p):
    # shipping the fraction lam of an optimal plan: W_p(mix, nu) <= lam**(1/p) W_p(mu, nu)
    sp, mu, nu, _ = inst
    mix = lam * mu + (1 - lam) * nu
    assert wasserstein(mix, nu, p, sp)[0] <= lam ** (1 / p) * wasserstein(mu, nu, p, sp)[0] + 1e-9


def test_linear_mixture_bound_fails_for_p2():
    # two points at distance 1, mu = delta_0, nu = delta_1, lam = 1/2
    sp = build_metric_space(coords=[[0.0], [1.0]])
    mu, nu = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    lhs = wasserstein(0.5 * mu + 0.5 * nu, nu, 2.0, sp)[0]
    assert lhs == pytest.approx(np.sqrt(0.5))
    assert lhs > 0.5 * wasserstein(mu, nu, 2.0, sp)[0]


@settings(max_examples=100)
@given(instance(), st.sampled_from([1.0, 2.0, 3.0]))
def test_diameter_bound(inst, p):
    sp, mu, nu, _ = inst
    assert wasserstein(mu, nu, p, sp)[0] <= sp.diameter * total_variation(mu, nu) ** (1 / p) + 1e-9


def test_equal_mass_wasserstein_scales_with_mass():
    sp = build_metric_space(coords=[[0.0], [1.0], [3.0]])
    a, b = np.array([0.2, 0.8, 0.0]), np.array([0.0, 0.5, 0.5])
    m = 3.0
    assert wasserstein_equal_mass(m * a, m * b, 2.0, sp) == pytest.approx(m * wasserstein(a, b, 2.0, sp)[0])
    with pytest.raises(UnnormalizedInput):
        wasserstein_equal_mass(a, 2 * b, 1.0, sp)


def test_distance_dispatch():
    sp = build_metric_space(coords=[[0.0], [1.0]])
    a, b = [1.0, 0.0], [0.0, 1.0]
    assert distance(a, b, MetricChoice.frechet(), sp) == 2.0
    assert distance(a, b, MetricChoice.wasserstein(3.0), sp) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        MetricChoice("hellinger")
    with pytest.raises(ValueError):
        MetricChoice.wasserstein(0.5)


@settings(max_examples=50)
@given(instance(), st.sampled_from(["frechet", 1.0, 2.0]))
def test_distance_objects_agree_with_functions(inst, kind):
    sp, a, b, _ = inst
    choice = MetricChoice.frechet() if kind == "frechet" else MetricChoice.wasserstein(kind)
    dist = make_distance(choice, sp)
    assert dist(a, b) == pytest.approx(distance(a, b, choice, sp), abs=1e-12)
    n = sp.size
    fd = dist.from_diracs(a)
    for z in range(n):
        assert fd[z] == pytest.approx(distance(np.eye(n)[z], a, choice, sp), abs=1e-12)


@settings(max_examples=60)
@given(instance(), st.sampled_from([1.0, 2.0, 3.0]), st.floats(0.0, 1.0))
def test_ray_bounds_dominate_segment_distances(inst, p, frac):
    sp, mu, _, _ = inst
    dist = WassersteinDistance(sp, p)
    n = sp.size
    lin, root = dist.dirac_coefs(mu)
    for z in range(n):
        nu = (1 - frac) * mu + frac * np.eye(n)[z]
        assert dist(nu, mu) <= dist.ray_bound(lin[z], root[z], frac) + 1e-9
    I, J = np.nonzero(mu > 0)[0], np.arange(n)
    for i in I:
        for j in J:
            eps = frac * mu[i]
            nu = mu.copy()
            nu[i] -= eps
            nu[j] += eps
            pl, pr = dist.pair_coefs(np.array([i]), np.array([j]))
            assert dist(nu, mu) <= dist.ray_bound(pl[0], pr[0], eps) + 1e-9


@settings(max_examples=60)
@given(instance(), st.sampled_from([1.0, 2.0]), st.floats(0.0, 1.0))
def test_floors_bound_distances_from_below(inst, p, frac):
    sp, mu, prev, _ = inst
    dist = WassersteinDistance(sp, p)
    n = sp.size
    c0, phi = dist.dual_floor(mu, prev)
    assert c0 == pytest.approx(dist(mu, prev) ** p, abs=1e-12)
    k = dist.origin_slopes(mu)
    for z in range(n):
        nu = (1 - frac) * mu + frac * np.eye(n)[z]
        assert dist(nu, prev) ** p >= c0 + phi @ (nu - mu) - 1e-12
        assert dist(nu, mu) ** p >= k[z] * frac - 1e-12


def test_zero_atoms_are_dropped_and_restored():
    a = np.array([0.0, 0.5, 0.5])
    b = np.array([1.0, 0.0, 0.0])
    P, cost = transport_plan(a, b, np.arange(9.0).reshape(3, 3))
    np.testing.assert_allclose(P, [[0, 0, 0], [0.5, 0, 0], [0.5, 0, 0]])
    assert cost == pytest.approx(0.5 * 3 + 0.5 * 6)
