from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbi import tensorcore as tc
from mbi.agent import (
    AgentState,
    CostSpec,
    EffortModel,
    IncentiveSignal,
    agent_utility,
    best_response,
    gradient_follower_step,
    register_cost,
    register_kappa,
    satisficing_effort,
    satisficing_stop,
)
from mbi.errors import NonConvexCost, NonFiniteAction
from mbi.oracle import GridSpec, grid_search_min


def _sig(*g):
    return IncentiveSignal(np.array(g, dtype=float), 1)


# ----------------------------------------------------- gradient follower

def test_follower_step_arithmetic():
    s = AgentState(0, [5.0], eta=0.2)
    x, T = gradient_follower_step(s, _sig(-1.0))
    assert x[0] == pytest.approx(4.8, abs=1e-15) and T == 1


def test_follower_fixed_point():
    s = AgentState(0, [2.5, -1.0], eta=0.3)
    x, _ = gradient_follower_step(s, _sig(0.0, 0.0))
    np.testing.assert_array_equal(x, [2.5, -1.0])


def test_follower_clamps_to_bounds():
    s = AgentState(0, [0.9, -0.9], eta=1.0, lo=-1.0, hi=1.0)
    x, _ = gradient_follower_step(s, _sig(0.5, -0.05))
    np.testing.assert_allclose(x, [1.0, -0.95], rtol=1e-15)


def test_follower_rejects_non_finite():
    s = AgentState(0, [1e308], eta=1.0, lo=-np.inf, hi=np.inf)
    with pytest.raises(NonFiniteAction), np.errstate(over="ignore"):
        gradient_follower_step(s, _sig(1e308))


def test_toy_repeated_steps_reach_optimum():
    # independent loop: exact toy gradient, both agents step on the same signals
    y, lam, eta = 3.0, 0.5, 0.2
    a1 = AgentState(0, [1.0], true_lambda=lam, eta=eta)
    a2 = AgentState(1, [1.0], cost=CostSpec("zero"), eta=eta)
    for cycle in range(400):
        x1, x2 = a1.action[0], a2.action[0]
        r = x1 + x2 - y
        a1.action, _ = gradient_follower_step(a1, IncentiveSignal(np.array([-(2 * r + 2 * lam * x1)]), cycle))
        a2.action, _ = gradient_follower_step(a2, IncentiveSignal(np.array([-2 * r]), cycle))
    assert abs(a1.action[0]) <= 1e-6 and abs(a2.action[0] - 3.0) <= 1e-6


# ---------------------------------------------------------- best response

@pytest.mark.parametrize("price,lam,expected", [(2.0, 1.0, 1.0), (0.0, 1.0, 0.0), (4.0, 0.5, 4.0)])
def test_best_response_closed_form(price, lam, expected):
    s = AgentState(0, [0.0], true_lambda=lam, strategy="best_response")
    x, _ = best_response(s, np.array([price]))
    assert x[0] == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("price,lam", [(2.0, 1.0), (4.0, 0.5)])
def test_best_response_agrees_with_grid_oracle(price, lam):
    xs, _ = grid_search_min(lambda X: lam * X[:, 0] ** 2 - price * X[:, 0], GridSpec([(-10.0, 10.0)], 20001))
    s = AgentState(0, [0.0], true_lambda=lam, strategy="best_response")
    x, _ = best_response(s, np.array([price]))
    assert abs(x[0] - xs[0]) <= 1e-3


def test_best_response_zero_rho_reports_full_budget():
    s = AgentState(0, [0.0], true_lambda=1.0, strategy="best_response", max_effort=37)
    _, T = best_response(s, np.array([2.0]))
    assert T == 37


def test_best_response_shifted_closed_form():
    s = AgentState(0, [0.0, 0.0], true_lambda=2.0, cost=CostSpec("shifted", (1.0, -1.0)), strategy="best_response")
    x, _ = best_response(s, np.array([4.0, 0.0]))
    np.testing.assert_allclose(x, [2.0, -1.0])


def test_best_response_inner_search_converges_without_effort_cost():
    s = AgentState(0, [0.0], true_lambda=2.0, cost=CostSpec("logcosh"), strategy="best_response",
                   inner_eta=0.2, max_effort=2000)
    x, T = best_response(s, np.array([1.0]))
    # FOC for 2 * logcosh: 2 tanh(x) = 1; the search halts once a step's
    # utility gain rounds to zero, which leaves about 1e-8 of slack
    assert x[0] == pytest.approx(np.arctanh(0.5), abs=1e-6)
    assert 0 < T <= 2000


def test_best_response_halts_when_effort_is_expensive():
    s = AgentState(0, [0.0], true_lambda=1.0, strategy="best_response", effort_model=EffortModel(10.0))
    x, T = best_response(s, np.array([2.0]))
    assert T == 0 and x[0] == 0.0


def test_best_response_requires_strict_convexity():
    with pytest.raises(NonConvexCost):
        AgentState(0, [0.0], cost=CostSpec("zero"), strategy="best_response")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=4), st.floats(0.01, 100))
def test_best_response_first_order_condition(price, lam):
    p = np.array(price)
    s = AgentState(0, np.zeros(p.size), true_lambda=lam, strategy="best_response")
    x, _ = best_response(s, p)
    assert np.linalg.norm(s.cost.grad(x, lam) - p) <= 1e-9 * max(1.0, np.linalg.norm(p))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.2, 5), st.floats(1e-4, 2), st.floats(1e-4, 2))
def test_effort_non_increasing_in_rho(price, lam, r1, r2):
    lo, hi = sorted((r1, r2))
    efforts = []
    for rho in (lo, hi):
        s = AgentState(0, [0.0], true_lambda=lam, strategy="best_response", inner_eta=0.05, max_effort=500)
        _, T = best_response(s, np.array([price]), EffortModel(rho))
        efforts.append(T)
    assert efforts[1] <= efforts[0]


# ------------------------------------------------------------- costs

def test_cost_values_and_gradients():
    x = np.array([1.0, -2.0])
    assert CostSpec().value(x, 0.5) == 2.5
    np.testing.assert_array_equal(CostSpec().grad(x, 0.5), [1.0, -2.0])
    sh = CostSpec("shifted", (1.0, 1.0))
    assert sh.value(x, 2.0) == 18.0
    np.testing.assert_array_equal(sh.grad(x, 2.0), [0.0, -12.0])
    assert CostSpec("zero").value(x, 3.0) == 0.0


@pytest.mark.parametrize("cost", [CostSpec(), CostSpec("shifted", (0.5, -0.25, 2.0)), CostSpec("logcosh")])
def test_cost_expression_matches_numpy(cost, rng):
    x = rng.normal(size=3)
    e = cost.expr(tc.var("x", 3), 1.7)
    val, g = tc.value_and_grad(e, {"x": tc.vector(x)})
    assert val == pytest.approx(cost.value(x, 1.7), rel=1e-13)
    np.testing.assert_allclose(g["x"], cost.grad(x, 1.7), rtol=1e-13, atol=1e-15)


def test_unknown_cost_kind():
    with pytest.raises(NonConvexCost):
        CostSpec("wiggly")


def test_register_cost_rejects_non_convex():
    with pytest.raises(NonConvexCost):
        register_cost("negsq", lambda x, lam, p: -lam * float(np.dot(x, x)),
                      lambda x, lam, p: -2 * lam * x, lambda xe, lam, p: tc.scale(-lam, tc.sqnorm(xe)))


# ------------------------------------------------------------ effort

def test_satisficing_halts_after_three_steps():
    assert satisficing_effort([1.0, 0.5, 0.2, 0.05], EffortModel(0.1)) == 3


def test_zero_rho_never_halts_on_positive_gains():
    gains = [1.0, 1e-3, 1e-9, 1e-300]
    assert satisficing_effort(gains, EffortModel(0.0)) == len(gains)
    assert not any(satisficing_stop(g, EffortModel(0.0), t) for t, g in enumerate(gains))


def test_expensive_effort_halts_immediately():
    assert satisficing_effort([1.0], EffortModel(10.0)) == 0


def test_kappa_shape():
    m = EffortModel(0.3)
    assert m.kappa(0) == 0.0 and m.kappa(4) == pytest.approx(1.2)
    q = EffortModel(0.5, "quadratic")
    assert q.marginal(2) == pytest.approx(0.5 * 9 - 0.5 * 4)


def test_register_kappa_validates():
    with pytest.raises(ValueError):
        register_kappa("offset", lambda rho, t: rho * (t + 1))
    with pytest.raises(ValueError):
        register_kappa("decreasing", lambda rho, t: -rho * t)
    register_kappa("cubic_test", lambda rho, t: rho * t ** 3)
    assert EffortModel(1.0, "cubic_test").kappa(2) == 8


@pytest.mark.parametrize("rho", [-1.0, float("inf")])
def test_effort_model_rejects_bad_rho(rho):
    with pytest.raises(ValueError):
        EffortModel(rho)


@pytest.mark.parametrize("payment,rho,T,expected", [(5.0, 0.1, 10, 4.0), (3.0, 0.7, 0, 3.0), (0.5, 0.2, 5, -0.5)])
def test_agent_utility(payment, rho, T, expected):
    s = AgentState(0, [0.0], effort_model=EffortModel(rho))
    assert agent_utility(s, payment, T) == pytest.approx(expected, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 10), st.integers(0, 1000), st.integers(0, 1000))
def test_kappa_non_decreasing(rho, t1, t2):
    m = EffortModel(rho)
    lo, hi = sorted((t1, t2))
    assert m.kappa(0) == 0.0
    assert m.kappa(lo) <= m.kappa(hi)


# ------------------------------------------------------------ state

def test_state_validation():
    with pytest.raises(ValueError):
        AgentState(0, [0.0], true_lambda=0.0)
    with pytest.raises(ValueError):
        AgentState(0, [0.0], strategy="random")
    with pytest.raises(ValueError):
        AgentState(0, [0.0], eta=0.0)


def test_report_defaults_to_truth():
    assert AgentState(0, [0.0], true_lambda=1.7).reported_lambda == 1.7
