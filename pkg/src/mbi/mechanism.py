"""The optimisation cycle: agents act, the planner differentiates, incentives flow back.

One cycle is synchronous.  Every agent acts on the signal it received in
the previous cycle (agents without a signal hold still), the global loss is
evaluated at the new joint action, and the backward pass yields
``G_i = -dL_global/dx_i`` for every agent.  Best-response agents are sent
the system-only price ``-dL_system/dx_i`` instead; the planner obtains it by
adding back the gradient of its model of the agent's own cost.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import ddag
from . import tensorcore as tc
from .agent import AgentState, IncentiveSignal, best_response, gradient_follower_step
from .errors import NonFiniteLoss, NonFiniteResult, UnknownAgent
from .oracle import quadratic_minimizer


@dataclass(frozen=True)
class NoiseSpec:
    """Additive zero-mean Gaussian noise on every delivered incentive."""

    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("noise sigma must be non-negative")


@dataclass
class PlannerConfig:
    epsilon: float = 1e-10
    tau: float = 1e-6
    max_cycles: int = 2000
    # planner's cost parameter per agent node; defaults to each agent's report
    cost_beliefs: dict[int, float] | None = None
    record_agents: bool = True

    def __post_init__(self):
        if not (self.epsilon > 0 and self.tau > 0):
            raise ValueError("epsilon and tau must be positive")
        if self.max_cycles < 1:
            raise ValueError("max_cycles must be >= 1")


@dataclass
class AgentRecord:
    node: int
    action: np.ndarray
    delta: np.ndarray
    delivered: np.ndarray | None   # signal the agent acted on this cycle
    incentive: np.ndarray          # signal computed this cycle, delivered next
    effort: int

    @property
    def payment(self) -> float:
        if self.delivered is None:
            return 0.0
        return float(np.dot(self.delivered, self.delta))


@dataclass
class CycleTrace:
    cycle: int
    loss: float
    grad_norm: float
    loss_delta: float
    total_effort: int
    wall_nanos: int
    per_agent: list[AgentRecord] = field(default_factory=list)

    def record(self, node: int) -> AgentRecord:
        for r in self.per_agent:
            if r.node == node:
                return r
        raise UnknownAgent(node)


@dataclass
class RunResult:
    traces: list[CycleTrace]
    final_actions: dict[str, np.ndarray]
    converged: bool
    cycles_used: int

    @property
    def final_loss(self) -> float:
        return self.traces[-1].loss

    @property
    def losses(self) -> np.ndarray:
        return np.array([t.loss for t in self.traces])


# A schedule maps a cycle number to source-value overrides, keyed by label.
Schedule = Callable[[int], Mapping[str, np.ndarray]]


class Mechanism:
    """Planner plus agents over one validated graph.

    ``agents`` maps agent node id to its :class:`AgentState`; states are
    mutated at cycle barriers.  ``schedule`` optionally changes source
    values per cycle (target tracking); ``settle_after`` is the last cycle at
    which the schedule changes, before which convergence is not declared.
    ``corrupt="sign_flip"`` delivers negated incentives (a negative control
    for audits).
    """

    def __init__(self, graph: ddag.Graph, agents: Mapping[int, AgentState] | Sequence[AgentState],
                 cfg: PlannerConfig | None = None, noise: NoiseSpec | None = None,
                 schedule: Schedule | None = None, settle_after: int = 0,
                 corrupt: str | None = None):
        if not isinstance(agents, Mapping):
            agents = {a.node: a for a in agents}
        self.graph = graph
        self.agents = dict(agents)
        self.cfg = cfg or PlannerConfig()
        self.noise = noise or NoiseSpec()
        self.schedule = schedule
        self.settle_after = settle_after
        if corrupt not in (None, "sign_flip"):
            raise ValueError(f"unknown corruption {corrupt!r}")
        self.corrupt = corrupt
        self.order = ddag.agent_nodes(graph)
        missing = set(self.order) - set(self.agents)
        if missing:
            raise UnknownAgent(f"no agent state for nodes {sorted(missing)}")
        extra = set(self.agents) - set(self.order)
        if extra:
            raise UnknownAgent(f"agent states for non-agent nodes {sorted(extra)}")
        self.labels = {i: graph.nodes[i].label for i in self.order}
        for i in self.order:
            if self.agents[i].dim != graph.nodes[i].dim:
                raise ValueError(f"agent {self.labels[i]}: action dim {self.agents[i].dim} "
                                 f"!= node dim {graph.nodes[i].dim}")
        self.belief = {i: self._planner_lambda(i) for i in self.order}
        self.tape = tc.Tape(self.global_loss_expr())
        self._sources = ddag.source_bindings(graph)
        self._last_loss: float | None = None
        # agent gradients as one stacked vector: buffer slots and per-agent ranges
        slots, ranges, pos = [], [], 0
        for i in self.order:
            o, d = self.tape.variables[self.labels[i]]
            slots.append(np.arange(o, o + d))
            ranges.append((pos, pos + d))
            pos += d
        self._slots = np.concatenate(slots)
        self._ranges = ranges
        self._responders = [k for k, i in enumerate(self.order) if self.agents[i].strategy == "best_response"]

    def global_loss_expr(self) -> tc.Expr:
        """``L_system`` plus every agent's cost at the planner's belief about it.

        Built on demand; the mechanism keeps only the compiled tape.
        """
        terms = [ddag.compose_loss(self.graph)]
        for i in self.order:
            a = self.agents[i]
            c = a.cost.expr(tc.var(self.labels[i], a.dim), self.belief[i])
            if c is not None:
                terms.append(c)
        return tc.add(*terms)

    def _planner_lambda(self, i: int) -> float:
        beliefs = self.cfg.cost_beliefs
        if beliefs is not None and i in beliefs:
            return float(beliefs[i])
        return float(self.agents[i].reported_lambda)

    # ------------------------------------------------------------ evaluation

    def bindings(self, cycle: int = 0, actions: Mapping[int, np.ndarray] | None = None) -> dict:
        b = dict(self._sources)
        if self.schedule is not None:
            b.update(self.schedule(cycle))
        for i in self.order:
            b[self.labels[i]] = actions[i] if actions is not None and i in actions else self.agents[i].action
        return b

    def loss_at(self, actions: Mapping[int, np.ndarray] | None = None, cycle: int = 0) -> float:
        try:
            return self.tape.forward(self.bindings(cycle, actions))
        except NonFiniteResult as e:
            raise NonFiniteLoss(str(e)) from None

    def gradients(self, actions=None, cycle: int = 0) -> tuple[float, dict[int, np.ndarray]]:
        """Loss and ``+dL_global/dx_i`` per agent node."""
        loss = self.loss_at(actions, cycle)
        g = self.tape.backward()
        return loss, {i: g[self.labels[i]] for i in self.order}

    def incentive(self, i: int, grad: np.ndarray, action: np.ndarray) -> np.ndarray:
        """Signal delivered to agent ``i`` given ``+dL_global/dx_i`` at ``action``."""
        a = self.agents[i]
        if a.strategy == "best_response":
            g = -(grad - a.cost.grad(action, self.belief[i]))
        else:
            g = -grad
        if self.corrupt == "sign_flip":
            g = -g
        return g

    def incentives(self, cycle: int = 0) -> dict[int, IncentiveSignal]:
        """Noise-free signals at the current joint action (no state change)."""
        _, grads = self.gradients(cycle=cycle)
        return {i: IncentiveSignal(self.incentive(i, grads[i], self.agents[i].action), cycle)
                for i in self.order}

    # ---------------------------------------------------------------- cycles

    def run_cycle(self, cycle: int, seed: int = 0) -> CycleTrace:
        t0 = time.perf_counter_ns()
        agents, order = self.agents, self.order
        if self._last_loss is None:
            self._last_loss = self.loss_at(cycle=cycle)
        # forward pass: act on last cycle's signals
        moves = []
        for i in order:
            a = agents[i]
            sig = a.signal
            if sig is None:
                moves.append((a.action, 0, None))
            elif a.strategy == "gradient":
                x, T = gradient_follower_step(a, sig)
                moves.append((x, T, sig.grad))
            else:
                x, T = best_response(a, sig.grad)
                moves.append((x, T, sig.grad))
        old = [agents[i].action for i in order]
        for i, (x, _, _) in zip(order, moves):
            agents[i].action = x
        # loss and backward pass
        loss = self.loss_at(cycle=cycle)
        grad = self.tape.adjoint_buffer()[self._slots]
        grad_norm = math.sqrt(float(np.dot(grad, grad)))
        signal = -grad
        for k in self._responders:
            i = order[k]
            a, b = self._ranges[k]
            signal[a:b] += agents[i].cost.grad(moves[k][0], self.belief[i])
        if self.corrupt == "sign_flip":
            signal = -signal
        sigma = self.noise.sigma
        if sigma > 0:
            rng = np.random.default_rng([seed, cycle])
            signal = signal + rng.normal(0.0, sigma, size=signal.size)
        signal.flags.writeable = False
        records = []
        total_effort = 0
        record = self.cfg.record_agents
        for k, i in enumerate(order):
            a, b = self._ranges[k]
            g = signal[a:b]
            x, T, delivered = moves[k]
            agents[i].signal = IncentiveSignal(g, cycle)
            total_effort += T
            if record:
                records.append(AgentRecord(i, x, x - old[k], delivered, g, T))
        delta = self._last_loss - loss
        self._last_loss = loss
        wall = time.perf_counter_ns() - t0
        return CycleTrace(cycle, loss, grad_norm, delta, total_effort, wall, records)

    def converged(self, trace: CycleTrace) -> bool:
        return (trace.cycle > self.settle_after
                and trace.loss_delta <= self.cfg.epsilon
                and trace.grad_norm <= self.cfg.tau)

    def run(self, seed: int = 0) -> RunResult:
        """Cycle until both stop tests hold or the cycle budget is spent."""
        traces = []
        converged = False
        for t in range(1, self.cfg.max_cycles + 1):
            tr = self.run_cycle(t, seed)
            traces.append(tr)
            if self.converged(tr):
                converged = True
                break
        final = {self.labels[i]: self.agents[i].action for i in self.order}
        return RunResult(traces, final, converged, len(traces))


def run_cycle(graph, agents, cfg, cycle, noise=None, rng_seed=0) -> CycleTrace:
    """One cycle on a fresh planner; prefer :class:`Mechanism` for repeated cycles."""
    return Mechanism(graph, agents, cfg, noise).run_cycle(cycle, rng_seed)


def run_until_convergence(graph, agents, cfg, seed=0, noise=None) -> RunResult:
    return Mechanism(graph, agents, cfg, noise).run(seed)


def payment_for_cycle(trace: CycleTrace, agent: int) -> float:
    """First-order loss reduction credited to ``agent``: delivered incentive dot its move."""
    return trace.record(agent).payment


@dataclass
class PaymentLedger:
    total_payments: float
    loss_drop: float
    residual: float
    bound: float

    @property
    def within_bound(self) -> bool:
        return abs(self.residual) <= self.bound * (1 + 1e-9) + 1e-12


def payment_ledger(result: RunResult) -> PaymentLedger:
    """Compare summed payments with the realised loss drop.

    For a noise-free gradient run each cycle's loss change is
    ``-sum_i G_i.dx_i`` plus a curvature term bounded by
    ``|dX| |dG| / 2`` (exact for quadratics, by Cauchy-Schwarz), where ``dG``
    is the change of the stacked incentive across the cycle.
    """
    traces = result.traces
    total = sum(r.payment for t in traces for r in t.per_agent)
    drop = traces[0].loss + traces[0].loss_delta - traces[-1].loss
    bound = 0.0
    for t in traces:
        dx = 0.0
        dg = 0.0
        for r in t.per_agent:
            if r.delivered is None:
                continue
            dx += float(np.dot(r.delta, r.delta))
            diff = r.incentive - r.delivered
            dg += float(np.dot(diff, diff))
        bound += 0.5 * math.sqrt(dx) * math.sqrt(dg)
    return PaymentLedger(total, drop, drop - total, bound)


# ----------------------------------------------------------- VCG auditing

def path_integral(mech: Mechanism, i: int, points: Sequence[np.ndarray], steps: int = 1000) -> float:
    """Line integral of ``G_i = -dL_global/dx_i`` along a polygonal path.

    Other agents stay at their current actions.  Each segment uses the
    composite trapezoid rule with ``steps`` intervals.
    """
    if steps < 10:
        raise ValueError("quadrature needs at least 10 steps")
    total = 0.0
    pts = [tc.vector(p) for p in points]
    for a, b in zip(pts, pts[1:]):
        d = b - a
        if not d.any():
            continue
        vals = np.empty(steps + 1)
        for k in range(steps + 1):
            x = a + (k / steps) * d
            _, grads = mech.gradients({i: x})
            g = grads[i] if mech.corrupt == "sign_flip" else -grads[i]
            vals[k] = float(np.dot(g, d))
        total += (vals[0] + vals[-1]) / 2 * (1.0 / steps) + vals[1:-1].sum() / steps
    return total


def externality_integral(mech: Mechanism, i: int, frm, to, steps: int = 1000) -> float:
    """Integral of agent ``i``'s incentive along the straight segment ``frm -> to``.

    For a conservative incentive this equals
    ``L_global(frm, X_-i) - L_global(to, X_-i)``.
    """
    return path_integral(mech, i, [frm, to], steps)


def _price_integral(mech: Mechanism, i: int, frm, to, steps: int) -> float:
    """Integral of the system-only price ``-dL_system/dx_i`` along a segment."""
    a, b = tc.vector(frm), tc.vector(to)
    d = b - a
    if not d.any():
        return 0.0
    vals = np.empty(steps + 1)
    lam = mech.belief[i]
    cost = mech.agents[i].cost
    for k in range(steps + 1):
        x = a + (k / steps) * d
        _, grads = mech.gradients({i: x})
        p = -(grads[i] - cost.grad(x, lam))
        if mech.corrupt == "sign_flip":
            p = -p
        vals[k] = float(np.dot(p, d))
    return (vals[0] + vals[-1]) / 2 / steps + vals[1:-1].sum() / steps


@dataclass
class AuditReport:
    argmax_gaps: dict[int, float]
    integral_residuals: dict[int, float]
    path_residuals: dict[int, float]
    tolerance: float
    grid_step: float

    @property
    def max_residual(self) -> float:
        return max([*self.integral_residuals.values(), *self.path_residuals.values()], default=0.0)

    @property
    def argmax_ok(self) -> bool:
        return all(g <= self.grid_step * (1 + 1e-9) for g in self.argmax_gaps.values())

    @property
    def passed(self) -> bool:
        return self.argmax_ok and self.max_residual <= self.tolerance

    @property
    def verdict(self) -> str:
        return "vcg-equivalent" if self.passed else "violation"


def vcg_equivalence_audit(mech: Mechanism, seed: int = 0, optimum: Mapping[int, np.ndarray] | None = None,
                          steps: int = 1000, tolerance: float = 1e-6, width: float = 1.0,
                          candidates: int = 21, utility_steps: int = 200) -> AuditReport:
    """Check that integrated incentives reproduce the global loss and its minimiser.

    (a) With the others held at the global optimum, agent ``i``'s utility
    ``integral of price - C_i`` is maximised over a line of candidate
    actions through the optimum along each coordinate; the argmax must sit
    at the optimum (within one candidate step).

    (b) The externality integral from the optimum to a random nearby action
    must match the loss difference, and a detour path must give the same
    value.

    The optimum defaults to the exact minimiser of the planner's loss,
    treated as a strictly convex quadratic and fitted from forward
    evaluations only.
    """
    saved = {i: mech.agents[i].action for i in mech.order}
    if optimum is None:
        optimum = _quadratic_optimum(mech)
    rng = np.random.default_rng(seed)
    offsets = np.linspace(-width, width, candidates)
    grid_step = offsets[1] - offsets[0]
    argmax_gaps, residuals, path_res = {}, {}, {}
    try:
        for i in mech.order:
            xstar = tc.vector(optimum[i])
            for j in mech.order:
                mech.agents[j].action = tc.vector(optimum[j])
            # (a) local utility argmax along each coordinate
            lam_true = mech.agents[i].true_lambda
            cost = mech.agents[i].cost
            gap = 0.0
            for k in range(xstar.size):
                utils = []
                for off in offsets:
                    x = xstar.copy()
                    x[k] += off
                    u = _price_integral(mech, i, xstar, x, utility_steps) - cost.value(x, lam_true)
                    utils.append(u)
                gap = max(gap, abs(offsets[int(np.argmax(utils))]))
            argmax_gaps[i] = gap
            # (b) integral vs loss difference, and path independence
            to = xstar + rng.uniform(-width, width, size=xstar.size)
            integral = externality_integral(mech, i, xstar, to, steps)
            diff = mech.loss_at({i: xstar}) - mech.loss_at({i: to})
            residuals[i] = abs(integral - diff)
            detour = [xstar, xstar + rng.uniform(-width, width, size=xstar.size), to]
            path_res[i] = abs(path_integral(mech, i, detour, steps) - integral)
    finally:
        for i, x in saved.items():
            mech.agents[i].action = x
    return AuditReport(argmax_gaps, residuals, path_res, tolerance, grid_step)


def _quadratic_optimum(mech: Mechanism) -> dict[int, np.ndarray]:
    dims = [mech.agents[i].dim for i in mech.order]
    splits = np.cumsum(dims)[:-1]

    def f(X):
        out = np.empty(X.shape[0])
        for r, row in enumerate(X):
            parts = np.split(row, splits)
            out[r] = mech.loss_at({i: p for i, p in zip(mech.order, parts)})
        return out

    x, _ = quadratic_minimizer(f, int(sum(dims)))
    return {i: p for i, p in zip(mech.order, np.split(x, splits))}
