import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linear_sum_assignment

from mgot import (
    ConvergenceError,
    GotConfig,
    SinkhornConfig,
    exact_ot_oracle,
    got_distance,
    got_objective,
    gromov_wasserstein,
    gw_linearized_cost,
    sinkhorn,
    transport_cost,
)
from conftest import random_graph, random_marginal

SHARP = SinkhornConfig(1e-3)


def brute_gw(A, B):
    """Structural cost of the best permutation coupling (uniform marginals)."""
    n = len(A)
    best = np.inf
    for perm in itertools.permutations(range(n)):
        T = np.zeros((n, n))
        T[np.arange(n), perm] = 1 / n
        best = min(best, transport_cost(T, gw_linearized_cost(A, B, T)))
    return best


# sinkhorn ------------------------------------------------------------------

def test_single_cell_plan():
    plan = sinkhorn([[3.0]], [1.0], [1.0])
    assert plan.values.tolist() == [[1.0]]
    assert transport_cost(plan, [[3.0]]) == 3.0


def test_off_diagonal_suppressed():
    C = [[0, 1], [1, 0]]
    plan = sinkhorn(C, [0.5, 0.5], [0.5, 0.5], SinkhornConfig(0.01))
    np.testing.assert_allclose(plan.values, [[0.5, 0], [0, 0.5]], atol=1e-12)
    assert transport_cost(plan, C) <= 1e-3


def test_random_4x4_matches_assignment(rng):
    for _ in range(5):
        C = rng.random((4, 4))
        u = np.full(4, 0.25)
        plan = sinkhorn(C, u, u, SHARP)
        r, c = linear_sum_assignment(C)
        assert abs(transport_cost(plan, C) - C[r, c].sum() / 4) <= 1e-3


@given(
    n=st.integers(1, 8),
    m=st.integers(1, 8),
    beta=st.sampled_from([0.005, 0.05, 0.5, 5.0]),
    seed=st.integers(0, 2**31),
)
def test_marginals_hold(n, m, beta, seed):
    rng = np.random.default_rng(seed)
    u, v = random_marginal(rng, n), random_marginal(rng, m)
    plan = sinkhorn(rng.random((n, m)) * 3, u, v, SinkhornConfig(beta))
    assert np.all(plan.values >= 0)
    assert plan.marginal_violation() <= 1e-9


@given(seed=st.integers(0, 2**31), shift=st.floats(0, 5))
def test_constant_shift_leaves_plan(seed, shift):
    rng = np.random.default_rng(seed)
    C = rng.random((4, 3))
    u, v = random_marginal(rng, 4), random_marginal(rng, 3)
    a = sinkhorn(C, u, v).values
    b = sinkhorn(C + shift, u, v).values
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_entropy_grows_with_beta(rng):
    C = rng.random((5, 5))
    u = np.full(5, 0.2)
    ent = [sinkhorn(C, u, u, SinkhornConfig(b)).entropy() for b in (0.01, 0.1, 1.0, 10.0)]
    assert all(a < b for a, b in zip(ent, ent[1:]))


def test_deterministic(rng):
    C = rng.random((6, 4))
    u, v = random_marginal(rng, 6), random_marginal(rng, 4)
    a, b = sinkhorn(C, u, v, SHARP), sinkhorn(C, u, v, SHARP)
    assert np.array_equal(a.values, b.values)


def test_iteration_cap_raises():
    C = np.random.default_rng(0).random((6, 6))
    u = np.full(6, 1 / 6)
    with pytest.raises(ConvergenceError) as info:
        sinkhorn(C, u, u, SinkhornConfig(1e-3, max_iterations=3, tolerance=1e-14))
    assert info.value.violation > 0


@pytest.mark.parametrize(
    "cost,u,v",
    [
        ([[-1.0]], [1.0], [1.0]),
        ([[np.nan]], [1.0], [1.0]),
        ([[1.0, 2.0]], [1.0], [0.6, 0.6]),
        ([[1.0, 2.0]], [1.0], [1.0, 0.0]),
        ([[1.0, 2.0]], [1.0], [1.0]),
    ],
)
def test_invalid_inputs(cost, u, v):
    with pytest.raises(ValueError):
        sinkhorn(cost, u, v)


@pytest.mark.parametrize("kw", [{"entropy_weight": 0}, {"max_iterations": 0}, {"tolerance": -1}])
def test_invalid_config(kw):
    with pytest.raises(ValueError):
        SinkhornConfig(**kw)


# transport_cost -------------------------------------------------------------

def test_transport_cost_cases(rng):
    assert transport_cost([[1.0]], [[3.0]]) == 3.0
    T = sinkhorn(rng.random((3, 3)), np.full(3, 1 / 3), np.full(3, 1 / 3)).values
    assert transport_cost(T, np.zeros((3, 3))) == 0.0
    assert transport_cost([[0.5, 0], [0, 0.5]], [[0, 1], [1, 0]]) == 0.0


# gw_linearized_cost ---------------------------------------------------------

def test_linearized_cost_cases():
    assert gw_linearized_cost([[0.0]], [[0.0]], [[1.0]]).tolist() == [[0.0]]
    A = np.array([[0, 0.3, 0.7], [0.3, 0, 0.1], [0.7, 0.1, 0]])
    L = gw_linearized_cost(A, A, np.eye(3) / 3)
    np.testing.assert_array_equal(np.diag(L), 0.0)
    L = gw_linearized_cost([[0, 1], [1, 0]], np.zeros((2, 2)), np.full((2, 2), 0.25))
    np.testing.assert_allclose(L, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)


@given(seed=st.integers(0, 2**31), n=st.integers(1, 5), m=st.integers(1, 5))
def test_linearized_cost_matches_quadruple_sum(seed, n, m):
    rng = np.random.default_rng(seed)
    A, B, P = random_graph(rng, n), random_graph(rng, m), rng.random((n, m))
    ref = np.zeros((n, m))
    for i, j, k, l in itertools.product(range(n), range(m), range(n), range(m)):
        ref[i, j] += P[k, l] * abs(A[i, k] - B[j, l])
    np.testing.assert_allclose(gw_linearized_cost(A, B, P), ref, atol=1e-12)


# gromov_wasserstein ---------------------------------------------------------

def test_identical_graphs_have_zero_distance(rng):
    A = random_graph(rng, 4)
    _, d = gromov_wasserstein(A, A, cfg=GotConfig(0.0, SHARP))
    assert d <= 1e-3


def test_permuted_three_node_graph():
    A = np.array([[0, 0.9, 0.2], [0.9, 0, 0.5], [0.2, 0.5, 0]])
    perm = [2, 0, 1]
    B = A[np.ix_(perm, perm)]
    assert brute_gw(A, B) == 0.0
    _, d = gromov_wasserstein(A, B, cfg=GotConfig(0.0, SHARP))
    assert d <= 1e-3


def test_single_node_graphs():
    plan, d = gromov_wasserstein([[0.0]], [[0.0]])
    assert d == 0.0 and plan.values.tolist() == [[1.0]]


def test_restarts_escape_symmetric_fixed_point():
    # two-node graphs are symmetric, so u v^T is a fixed point of the alternation
    A = np.array([[0, 0.8], [0.8, 0]])
    stuck = gromov_wasserstein(A, A, cfg=GotConfig(0.0, SHARP, restarts=0))[1]
    freed = gromov_wasserstein(A, A, cfg=GotConfig(0.0, SHARP, restarts=3))[1]
    assert stuck > 0.1 and freed <= 1e-9


def test_gw_not_below_brute_force_optimum_much(rng):
    # entropic plans cannot beat the best permutation coupling by more than rounding
    for n in (3, 4):
        A, B = random_graph(rng, n), random_graph(rng, n)
        _, d = gromov_wasserstein(A, B, cfg=GotConfig(0.0, SHARP))
        assert d >= brute_gw(A, B) - 1e-2


def test_gw_rejects_asymmetric_shapes():
    with pytest.raises(ValueError):
        gromov_wasserstein(np.zeros((2, 3)), np.zeros((2, 2)))


# got_distance ---------------------------------------------------------------

def test_lambda_one_is_wasserstein(rng):
    C = rng.random((4, 3))
    A, B = random_graph(rng, 4), random_graph(rng, 3)
    u, v = random_marginal(rng, 4), random_marginal(rng, 3)
    plan, obj = got_distance(C, A, B, u, v, GotConfig(1.0))
    ref = sinkhorn(C, u, v)
    assert np.max(np.abs(plan.values - ref.values)) <= 1e-9
    assert abs(obj - transport_cost(ref, C)) <= 1e-9


def test_lambda_zero_is_gromov_wasserstein(rng):
    C = rng.random((4, 3))
    A, B = random_graph(rng, 4), random_graph(rng, 3)
    plan, obj = got_distance(C, A, B, cfg=GotConfig(0.0))
    ref, d = gromov_wasserstein(A, B, cfg=GotConfig(0.0))
    assert np.max(np.abs(plan.values - ref.values)) <= 1e-9
    assert abs(obj - d) <= 1e-9


def test_objective_matches_double_sum(rng):
    C = rng.random((3, 2))
    A, B = random_graph(rng, 3), random_graph(rng, 2)
    plan, obj = got_distance(C, A, B, cfg=GotConfig(0.5))
    T = plan.values
    wd = sum(T[i, j] * C[i, j] for i in range(3) for j in range(2))
    gw = sum(
        T[i, j] * T[k, l] * abs(A[i, k] - B[j, l])
        for i, j, k, l in itertools.product(range(3), range(2), range(3), range(2))
    )
    assert abs(obj - (0.5 * wd + 0.5 * gw)) <= 1e-6
    total, wd_t, gw_t = got_objective(plan, C, A, B, 0.5)
    assert abs(wd_t - wd) <= 1e-12 and abs(gw_t - gw) <= 1e-12 and total == obj


@pytest.mark.parametrize("kw", [{"lambda_mix": 1.5}, {"outer_iterations": 0}, {"restarts": -1}])
def test_invalid_got_config(kw):
    with pytest.raises(ValueError):
        GotConfig(**kw)


# exact_ot_oracle ------------------------------------------------------------

def test_oracle_cases():
    plan, cost = exact_ot_oracle([[0, 1], [1, 0]])
    assert cost == 0.0 and plan.values.tolist() == [[0.5, 0], [0, 0.5]]
    _, cost = exact_ot_oracle([[1, 1], [1, 1]])
    assert cost == 1.0


def test_oracle_agrees_with_assignment_solver(rng):
    for n in range(1, 7):
        C = rng.random((n, n))
        r, c = linear_sum_assignment(C)
        assert abs(exact_ot_oracle(C)[1] - C[r, c].sum() / n) <= 1e-12


def test_oracle_size_limits():
    with pytest.raises(ValueError):
        exact_ot_oracle(np.zeros((9, 9)))
    with pytest.raises(ValueError):
        exact_ot_oracle(np.zeros((2, 3)))
