from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import quadratic_graph, toy_agents, toy_graph
from mbi import ddag
from mbi import tensorcore as tc
from mbi.agent import AgentState, CostSpec
from mbi.errors import NonFiniteLoss, UnknownAgent
from mbi.mechanism import (
    AgentRecord,
    CycleTrace,
    Mechanism,
    NoiseSpec,
    PlannerConfig,
    externality_integral,
    path_integral,
    payment_for_cycle,
    payment_ledger,
    run_cycle,
    run_until_convergence,
    vcg_equivalence_audit,
)
from mbi.oracle import quadratic_kkt_solution, quadratic_loss


def quad_agents(lams, start=None, eta=0.1, strategy="gradient"):
    start = np.zeros(len(lams)) if start is None else start
    return [AgentState(k, [float(s)], true_lambda=l, eta=eta, strategy=strategy)
            for k, (l, s) in enumerate(zip(lams, start))]


# --------------------------------------------------------------- run_cycle

def test_toy_first_cycle():
    tr = run_cycle(toy_graph(3.0), toy_agents(1.0, 1.0), PlannerConfig(), cycle=1)
    assert tr.loss == pytest.approx(1.5, abs=1e-15)
    assert tr.record(0).incentive[0] == pytest.approx(1.0, abs=1e-15)
    assert tr.record(1).incentive[0] == pytest.approx(2.0, abs=1e-15)
    assert tr.grad_norm == pytest.approx(np.sqrt(5.0), rel=1e-15)


def test_first_cycle_incentive_matches_finite_differences():
    mech = Mechanism(toy_graph(3.0), toy_agents(1.0, 1.0))
    tr = mech.run_cycle(1)

    def f(p):
        x1, x2 = p["x1"][0], p["x2"][0]
        return (x1 + x2 - 3.0) ** 2 + 0.5 * x1 ** 2

    fd = tc.finite_diff_grad(f, {"x1": [1.0], "x2": [1.0]})
    assert tr.record(0).incentive[0] == pytest.approx(-fd["x1"][0], abs=1e-8)
    assert tr.record(1).incentive[0] == pytest.approx(-fd["x2"][0], abs=1e-8)


def test_optimum_has_zero_incentive():
    tr = run_cycle(toy_graph(3.0), toy_agents(0.0, 3.0), PlannerConfig(), cycle=1)
    assert tr.loss == 0.0
    assert tr.record(0).incentive[0] == 0.0 and tr.record(1).incentive[0] == 0.0


def test_symmetric_quadratic_at_its_optimum():
    tr = run_cycle(quadratic_graph(2, 3.0), quad_agents([1.0, 1.0], [1.0, 1.0]), PlannerConfig(), cycle=1)
    assert tr.loss == pytest.approx(3.0, rel=1e-15)
    assert tr.grad_norm == 0.0


def test_agents_act_on_previous_cycle_signal():
    mech = Mechanism(toy_graph(3.0), toy_agents(1.0, 1.0, eta=0.2))
    t1 = mech.run_cycle(1)
    # nobody moves in cycle 1: no signal has been delivered yet
    assert t1.record(0).delivered is None and not t1.record(0).delta.any()
    t2 = mech.run_cycle(2)
    np.testing.assert_array_equal(t2.record(0).delivered, t1.record(0).incentive)
    assert t2.record(0).action[0] == pytest.approx(1.0 + 0.2 * 1.0)
    assert t2.record(1).action[0] == pytest.approx(1.0 + 0.2 * 2.0)


def test_incentive_is_exact_negation_of_backward(rng):
    lams = [0.7, 1.3, 2.9]
    mech = Mechanism(quadratic_graph(3, 4.0), quad_agents(lams, rng.normal(size=3)))
    tr = mech.run_cycle(1)
    expr = mech.global_loss_expr()
    b = mech.bindings()
    tc.forward_eval(expr, b)
    g = tc.backward_eval(expr, b)
    for k in range(3):
        assert tr.record(k).incentive.tobytes() == (-g[f"x{k + 1}"]).tobytes()


def test_best_response_price_is_system_only():
    lams = [2.0, 3.0]
    agents = quad_agents(lams, [0.5, 0.25], strategy="best_response")
    mech = Mechanism(quadratic_graph(2, 5.0), agents)
    tr = mech.run_cycle(1)
    resid = 0.5 + 0.25 - 5.0
    for k in range(2):
        assert tr.record(k).incentive[0] == pytest.approx(-2 * resid, rel=1e-14)


def test_noise_is_seeded_and_zero_mean():
    def run(seed):
        mech = Mechanism(toy_graph(3.0), toy_agents(1.0, 1.0), noise=NoiseSpec(0.5))
        return np.array([mech.run_cycle(c, seed).record(0).incentive[0] for c in range(1, 4)])

    np.testing.assert_array_equal(run(7), run(7))
    assert not np.array_equal(run(7), run(8))
    # cycle-1 incentive without noise is exactly 1.0 at this start
    diffs = [Mechanism(toy_graph(3.0), toy_agents(1.0, 1.0), noise=NoiseSpec(0.5)).run_cycle(1, s)
             .record(0).incentive[0] - 1.0 for s in range(1000)]
    assert abs(np.mean(diffs)) < 0.06 and np.std(diffs) == pytest.approx(0.5, rel=0.1)


def test_non_finite_loss_raises():
    mech = Mechanism(toy_graph(3.0), toy_agents(1e200, 1.0))
    with pytest.raises(NonFiniteLoss):
        mech.run_cycle(1)


def test_mechanism_checks_agent_coverage():
    g = toy_graph()
    with pytest.raises(UnknownAgent):
        Mechanism(g, toy_agents()[:1])
    with pytest.raises(UnknownAgent):
        Mechanism(g, toy_agents() + [AgentState(2, [0.0])])
    with pytest.raises(ValueError):
        Mechanism(g, [AgentState(0, [0.0, 0.0]), toy_agents()[1]])


@pytest.mark.parametrize("kwargs", [dict(epsilon=0.0), dict(tau=-1.0), dict(max_cycles=0)])
def test_planner_config_validation(kwargs):
    with pytest.raises(ValueError):
        PlannerConfig(**kwargs)


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(-0.1)


# ------------------------------------------------------------- running

def test_toy_step_02_converges_within_the_stop_rule_bound():
    # the stop rule allows |grad| <= tau, so the distance to the optimum is
    # bounded by tau / mu_min with mu_min the smallest Hessian eigenvalue
    res = run_until_convergence(toy_graph(10.0), toy_agents(1.0, 1.0, 0.5, eta=0.2), PlannerConfig(1e-10, 1e-6, 2000))
    mu_min = np.linalg.eigvalsh(np.array([[3.0, 2.0], [2.0, 2.0]])).min()
    bound = 1e-6 / mu_min
    assert res.converged and res.cycles_used < 2000
    assert abs(res.final_actions["x1"][0]) <= bound
    assert abs(res.final_actions["x2"][0] - 10.0) <= bound


def test_toy_reaches_optimum_with_tighter_tau():
    res = run_until_convergence(toy_graph(10.0), toy_agents(1.0, 1.0, 0.5, eta=0.2), PlannerConfig(1e-10, 1e-7, 2000))
    assert abs(res.final_actions["x1"][0]) <= 1e-6
    assert abs(res.final_actions["x2"][0] - 10.0) <= 1e-6


def test_already_optimal_start_converges_in_one_cycle():
    res = run_until_convergence(toy_graph(10.0), toy_agents(0.0, 10.0), PlannerConfig())
    assert res.converged and res.cycles_used == 1


def test_budget_exhaustion_is_a_result():
    res = run_until_convergence(toy_graph(10.0), toy_agents(1.0, 1.0), PlannerConfig(max_cycles=5))
    assert not res.converged and res.cycles_used == 5


def test_converged_run_satisfies_both_stop_tests():
    cfg = PlannerConfig(1e-10, 1e-6, 2000)
    res = run_until_convergence(toy_graph(10.0), toy_agents(1.0, 1.0), cfg)
    last = res.traces[-1]
    assert last.loss_delta <= cfg.epsilon and last.grad_norm <= cfg.tau


def test_hundred_agent_quadratic_matches_kkt():
    lams = 1.0 + np.arange(100) / 100
    cfg = PlannerConfig(1e-10, 1e-6, 5000, record_agents=False)
    res = run_until_convergence(quadratic_graph(100, 50.0), quad_agents(lams, eta=0.009), cfg)
    x = quadratic_kkt_solution(lams, 50.0)
    assert res.converged
    assert abs(res.final_loss - quadratic_loss(x, lams, 50.0)[0]) <= 1e-8


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.1, 5.0), min_size=1, max_size=5), st.floats(-20, 20),
       st.lists(st.floats(-5, 5), min_size=5, max_size=5))
def test_monotone_descent_with_safe_step(lams, y, start):
    n = len(lams)
    hess = 2 * (np.ones((n, n)) + np.diag(lams))
    eta = 1.0 / np.linalg.eigvalsh(hess).max()
    res = run_until_convergence(quadratic_graph(n, y), quad_agents(lams, start[:n], eta=eta),
                                PlannerConfig(1e-12, 1e-8, 300, record_agents=False))
    losses = res.losses
    assert np.all(np.diff(losses) <= 1e-12 * max(1.0, losses[0]))
    if res.converged:
        assert res.traces[-1].grad_norm <= 1e-8


# --------------------------------------------------------------- payments

def _trace_with(delivered, delta):
    rec = AgentRecord(4, np.zeros(1), np.array(delta), np.array(delivered), np.zeros(1), 1)
    return CycleTrace(1, 0.0, 0.0, 0.0, 1, 0, [rec])


def test_payment_is_incentive_dot_move():
    assert payment_for_cycle(_trace_with([2.0], [0.4]), 4) == pytest.approx(0.8)
    assert payment_for_cycle(_trace_with([2.0], [0.0]), 4) == 0.0


def test_payment_unknown_agent():
    with pytest.raises(UnknownAgent):
        payment_for_cycle(_trace_with([2.0], [0.4]), 9)


@pytest.mark.parametrize("eta", [0.2, 0.02])
def test_payments_telescope_within_the_curvature_bound(eta):
    res = run_until_convergence(toy_graph(10.0), toy_agents(1.0, 1.0, eta=eta), PlannerConfig(max_cycles=5000))
    ledger = payment_ledger(res)
    assert ledger.loss_drop == pytest.approx(res.traces[0].loss - res.traces[-1].loss)
    assert ledger.within_bound


def test_payment_gap_shrinks_with_the_step():
    gaps = []
    for eta in (0.2, 0.02, 0.002):
        res = run_until_convergence(toy_graph(10.0), toy_agents(1.0, 1.0, eta=eta), PlannerConfig(max_cycles=50000))
        ledger = payment_ledger(res)
        gaps.append(abs(ledger.residual) / ledger.loss_drop)
    assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 0.01


# ------------------------------------------------------ externality audit

def _fixed_toy(x2=2.0):
    return Mechanism(toy_graph(3.0), toy_agents(0.0, x2, 0.5))


def test_toy_externality_integral_equals_loss_difference():
    v = externality_integral(_fixed_toy(), 0, [0.0], [1.0], steps=1000)
    assert abs(v - 0.5) <= 1e-6


def test_empty_path_integrates_to_zero():
    assert externality_integral(_fixed_toy(), 0, [0.4], [0.4]) == 0.0


def test_too_few_quadrature_steps():
    with pytest.raises(ValueError):
        externality_integral(_fixed_toy(), 0, [0.0], [1.0], steps=5)


def test_detour_and_straight_paths_agree():
    lams = [1.0, 2.0]
    g = ddag.build_graph(ddag.GraphSpec(
        [ddag.agent(0, "v", 2), ddag.agent(1, "w"), ddag.source(2, "y", [3.0]),
         ddag.loss(3, "L", lambda ins: tc.square(tc.sum_(ins[0]) + ins[1] - ins[2]))],
        [(0, 3), (1, 3), (2, 3)]))
    mech = Mechanism(g, [AgentState(0, [0.1, 0.2], true_lambda=lams[0]), AgentState(1, [0.5], true_lambda=lams[1])])
    a, b = np.array([0.0, 0.0]), np.array([1.0, -0.5])
    straight = externality_integral(mech, 0, a, b, 1000)
    detour = path_integral(mech, 0, [a, np.array([1.0, 0.0]), b], 1000)
    assert abs(straight - detour) <= 1e-6
    assert abs(straight - (mech.loss_at({0: a}) - mech.loss_at({0: b}))) <= 1e-6


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6), st.floats(0.2, 3.0))
def test_path_independence(coords, lam):
    mech = Mechanism(quadratic_graph(2, 3.0), quad_agents([lam, 1.0], [0.3, 0.7]))
    a, mid, b = (np.array(coords[k:k + 1]) for k in (0, 2, 4))
    direct = externality_integral(mech, 0, a, b, 1000)
    bent = path_integral(mech, 0, [a, mid, b], 1000)
    assert abs(direct - bent) <= 1e-6


def test_vcg_audit_on_toy():
    mech = Mechanism(toy_graph(3.0), toy_agents(1.0, 1.0))
    rep = vcg_equivalence_audit(mech, optimum={0: [0.0], 1: [3.0]})
    assert rep.passed and rep.verdict == "vcg-equivalent"
    assert max(rep.argmax_gaps.values()) == 0.0
    assert rep.max_residual <= 1e-6
    # audit leaves the agents where it found them
    assert mech.agents[0].action[0] == 1.0


def test_vcg_audit_default_optimum_on_five_agents():
    lams = [0.5, 1.0, 1.5, 2.0, 4.0]
    mech = Mechanism(quadratic_graph(5, 10.0), quad_agents(lams))
    rep = vcg_equivalence_audit(mech, seed=3)
    assert rep.passed and rep.max_residual <= 1e-6


def test_sign_flip_is_a_violation():
    mech = Mechanism(toy_graph(3.0), toy_agents(1.0, 1.0), corrupt="sign_flip")
    rep = vcg_equivalence_audit(mech, optimum={0: [0.0], 1: [3.0]})
    assert rep.verdict == "violation"
    assert not rep.argmax_ok


def test_unknown_corruption():
    with pytest.raises(ValueError):
        Mechanism(toy_graph(), toy_agents(), corrupt="scramble")


def test_zero_cost_agent_needs_no_cost_term():
    a = AgentState(0, [0.0], cost=CostSpec("zero"))
    assert a.cost.expr(tc.var("x1"), 1.0) is None
