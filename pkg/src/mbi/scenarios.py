"""Built-in scenario catalog.

A :class:`ScenarioSpec` is plain data: a loss template name with its
parameters, one :class:`AgentSpec` per agent, planner tolerances, noise,
an optional time-varying target and an optional type prior.  Templates
build the D-DAG and, independently, a batched numpy version of the same
system loss that the oracles and gradient checks use.

Agents are labelled ``x1 .. xN`` in every template; ``AgentSpec`` k of a
spec drives the agent labelled ``x{k+1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import ddag
from . import tensorcore as tc
from .agent import AgentState, CostSpec, EffortModel
from .bayes import QuadraticFamily, TypePrior
from .errors import UnknownScenario
from .mechanism import Mechanism, NoiseSpec, PlannerConfig, RunResult
from .oracle import GridSpec, grid_local_minima, quadratic_kkt_solution, quadratic_minimizer


@dataclass(slots=True)
class AgentSpec:
    lam: float = 1.0
    reported: float | None = None
    cost: str = "quadratic"
    center: tuple | None = None
    rho: float = 0.0
    strategy: str = "gradient"
    eta: float | None = None           # None: use the scenario's eta
    inner_eta: float = 0.05
    max_effort: int = 100
    dim: int = 1
    init: tuple | None = None          # None: zeros
    lo: float = -1e6
    hi: float = 1e6


@dataclass
class ScheduleSpec:
    """Target ``Y*(t)``: a single step or a sinusoid."""

    kind: str = "step"
    at: int = 200
    before: float = 10.0
    after: float = 20.0
    mean: float = 10.0
    amplitude: float = 2.0
    period: float = 100.0

    def __post_init__(self):
        if self.kind not in ("step", "sinusoid"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "sinusoid" and not self.period > 0:
            raise ValueError("sinusoid period must be positive")

    def value(self, cycle: int) -> float:
        if self.kind == "step":
            return self.before if cycle < self.at else self.after
        return self.mean + self.amplitude * math.sin(2 * math.pi * cycle / self.period)


@dataclass
class ScenarioSpec:
    name: str
    description: str
    template: str
    params: dict = field(default_factory=dict)
    agents: list[AgentSpec] = field(default_factory=list)
    eta: float = 0.1
    epsilon: float = 1e-10
    tau: float = 1e-6
    max_cycles: int = 2000
    noise_sigma: float = 0.0
    schedule: ScheduleSpec | None = None
    prior: TypePrior | None = None
    seeds: tuple[int, ...] = (0,)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.template not in TEMPLATES:
            raise UnknownScenario(f"scenario {self.name!r} uses unknown template {self.template!r}")
        if not self.agents:
            raise ValueError(f"scenario {self.name!r} has no agents")

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def dims(self) -> list[int]:
        return [a.dim for a in self.agents]

    def copy(self, **changes) -> "ScenarioSpec":
        """Deep enough copy for overriding: agent specs and dicts are duplicated."""
        base = dict(agents=[replace(a) for a in self.agents], params=dict(self.params),
                    extra=dict(self.extra), schedule=replace(self.schedule) if self.schedule else None)
        base.update(changes)
        return replace(self, **base)


# ------------------------------------------------------------ templates

@dataclass
class Template:
    graph: ddag.GraphSpec
    agent_ids: list[int]
    system_loss: Callable[[np.ndarray], np.ndarray]   # batched numpy, (M, n) -> (M,)


def _labels(n):
    return [f"x{k + 1}" for k in range(n)]


def _flat_sum(e):
    return tc.sum_(e) if e.dim > 1 else e


def _splits(dims):
    return np.cumsum(dims)[:-1]


def _assembly(spec: ScenarioSpec) -> Template:
    """Two agents whose outputs add up to a target: ``(x1 + x2 - Y*)^2``."""
    if spec.n_agents != 2:
        raise ValueError("assembly template needs exactly two agents")
    y = float(spec.params.get("y_star", 10.0))
    nodes = [
        ddag.agent(0, "x1", spec.agents[0].dim),
        ddag.agent(1, "x2", spec.agents[1].dim),
        ddag.source(2, "y_star", [y]),
        ddag.function(3, "output", lambda ins: _flat_sum(ins[0]) + _flat_sum(ins[1])),
        ddag.loss(4, "loss", lambda ins: tc.square(ins[1] - ins[0])),
    ]
    edges = [(0, 3), (1, 3), (3, 4), (2, 4)]

    def ref(X):
        return (X.sum(axis=1) - y) ** 2

    return Template(ddag.GraphSpec(nodes, edges), [0, 1], ref)


def _quadratic(spec: ScenarioSpec) -> Template:
    """``N`` agents whose summed output tracks a target: ``(sum x - Y*)^2``."""
    n = spec.n_agents
    y = float(spec.params.get("y_star", 10.0))
    nodes = [ddag.agent(k, lab, a.dim) for k, (lab, a) in enumerate(zip(_labels(n), spec.agents))]
    nodes.append(ddag.source(n, "y_star", [y]))
    nodes.append(ddag.function(n + 1, "total", lambda ins: tc.add(*map(_flat_sum, ins))))
    nodes.append(ddag.loss(n + 2, "loss", lambda ins: tc.square(ins[1] - ins[0])))
    edges = [(k, n + 1) for k in range(n)] + [(n, n + 2), (n + 1, n + 2)]

    def ref(X):
        return (X.sum(axis=1) - y) ** 2

    return Template(ddag.GraphSpec(nodes, edges), list(range(n)), ref)


def separable_targets(n: int) -> np.ndarray:
    return 1.0 + (np.arange(n) % 10) / 10.0


def _separable(spec: ScenarioSpec) -> Template:
    """Independent agents, each pulled to its own target: ``sum |x_i - c_i|^2``."""
    n = spec.n_agents
    if any(a.dim != 1 for a in spec.agents):
        raise ValueError("separable template uses scalar agents")
    targets = np.asarray(spec.params.get("targets", separable_targets(n)), dtype=float)
    if targets.size != n:
        raise ValueError("need one target per agent")

    def body(ins):
        return tc.add(*(tc.sqnorm(x - tc.const(c)) for x, c in zip(ins, targets)))

    nodes = [ddag.agent(k, lab) for k, lab in enumerate(_labels(n))]
    nodes.append(ddag.loss(n, "loss", body))
    edges = [(k, n) for k in range(n)]

    def ref(X):
        d = X - targets
        return np.sum(d * d, axis=1)

    return Template(ddag.GraphSpec(nodes, edges), list(range(n)), ref)


def _double_well(spec: ScenarioSpec) -> Template:
    """``(x1^2 - 1)^2 + (x1 + x2 - Y*)^2``: two minima at ``(+-1, Y* -+ 1)``."""
    if spec.n_agents != 2 or spec.dims != [1, 1]:
        raise ValueError("double-well template needs two scalar agents")
    y = float(spec.params.get("y_star", 10.0))
    one = tc.const([1.0])

    def body(ins):
        x1, x2, target = ins
        return tc.square(tc.square(x1) - one) + tc.square(x1 + x2 - target)

    nodes = [ddag.agent(0, "x1"), ddag.agent(1, "x2"), ddag.source(2, "y_star", [y]), ddag.loss(3, "loss", body)]
    edges = [(0, 3), (1, 3), (2, 3)]

    def ref(X):
        x1, x2 = X[:, 0], X[:, 1]
        return (x1 * x1 - 1.0) ** 2 + (x1 + x2 - y) ** 2

    return Template(ddag.GraphSpec(nodes, edges), [0, 1], ref)


def _cross_term(spec: ScenarioSpec) -> Template:
    """Summed-output target plus neighbour couplings ``w_i (x_i + x_{i+1}/2)^2``."""
    n = spec.n_agents
    if n < 2 or any(a.dim != 1 for a in spec.agents):
        raise ValueError("cross-term template needs at least two scalar agents")
    y = float(spec.params.get("y_star", 10.0))
    w = np.asarray(spec.params.get("coupling", [1.0] * (n - 1)), dtype=float)
    if w.size != n - 1 or (w < 0).any():
        raise ValueError("need n-1 non-negative coupling weights")

    def body(ins):
        xs, target, total = ins[:n], ins[n], ins[n + 1]
        terms = [tc.square(total - target)]
        for k in range(n - 1):
            terms.append(tc.scale(w[k], tc.square(xs[k] + tc.scale(0.5, xs[k + 1]))))
        return tc.add(*terms)

    nodes = [ddag.agent(k, lab) for k, lab in enumerate(_labels(n))]
    nodes.append(ddag.source(n, "y_star", [y]))
    nodes.append(ddag.function(n + 1, "total", lambda ins: tc.add(*ins)))
    nodes.append(ddag.loss(n + 2, "loss", body))
    edges = [(k, n + 1) for k in range(n)] + [(k, n + 2) for k in range(n)] + [(n, n + 2), (n + 1, n + 2)]

    def ref(X):
        pair = X[:, :-1] + 0.5 * X[:, 1:]
        return (X.sum(axis=1) - y) ** 2 + (pair * pair) @ w

    return Template(ddag.GraphSpec(nodes, edges), list(range(n)), ref)


TEMPLATES: dict[str, Callable[[ScenarioSpec], Template]] = {
    "assembly": _assembly,
    "quadratic": _quadratic,
    "separable": _separable,
    "double_well": _double_well,
    "cross_term": _cross_term,
}


# ------------------------------------------------------ reference losses

def _cost_batch(a: AgentSpec, X: np.ndarray, lam: float) -> np.ndarray:
    if a.cost == "zero":
        return np.zeros(X.shape[0])
    if a.cost in ("shifted", "logcosh") and a.center is not None:
        X = X - np.asarray(a.center, dtype=float)
    if a.cost in ("quadratic", "shifted"):
        return lam * np.sum(X * X, axis=1)
    if a.cost == "logcosh":
        return lam * np.sum(np.logaddexp(X, -X) - math.log(2.0), axis=1)
    raise ValueError(f"no reference formula for cost {a.cost!r}")


def reference_loss(spec: ScenarioSpec, lambdas=None) -> Callable[[np.ndarray], np.ndarray]:
    """Batched numpy ``L_global`` over stacked actions, costs priced at ``lambdas``.

    ``lambdas`` defaults to the agents' reports (what the planner uses).
    """
    tpl = TEMPLATES[spec.template](spec)
    lam = [a.lam if a.reported is None else a.reported for a in spec.agents] if lambdas is None else list(lambdas)
    splits = _splits(spec.dims)
    # plain quadratic costs collapse into one weighted sum of squares
    plain = np.concatenate([np.full(a.dim, a.cost == "quadratic") for a in spec.agents])
    weights = np.concatenate([np.full(a.dim, l) for a, l in zip(spec.agents, lam)])[plain]
    rest = [(k, a, l) for k, (a, l) in enumerate(zip(spec.agents, lam)) if a.cost != "quadratic"]

    def f(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = tpl.system_loss(X)
        if weights.size:
            Q = X[:, plain]
            out = out + (Q * Q) @ weights
        if rest:
            parts = np.split(X, splits, axis=1)
            for k, a, l in rest:
                out = out + _cost_batch(a, parts[k], l)
        return out

    return f


def true_loss(spec: ScenarioSpec, lambdas=None) -> Callable[[np.ndarray], np.ndarray]:
    lam = [a.lam for a in spec.agents] if lambdas is None else lambdas
    return reference_loss(spec, lam)


def stack(spec: ScenarioSpec, actions: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([actions[lab] for lab in _labels(spec.n_agents)])


# ------------------------------------------------------------- building

def _shared(cache, cls, *args):
    key = (cls, *args)
    if key not in cache:
        cache[key] = cls(*args)
    return cache[key]


def build_mechanism(spec: ScenarioSpec, true_lambdas=None, beliefs=None, corrupt=None,
                    record_agents: bool = True) -> Mechanism:
    tpl = TEMPLATES[spec.template](spec)
    graph = ddag.build_graph(tpl.graph)
    states = []
    shared: dict = {}   # identical cost and effort models are shared across agents
    for k, (node, a) in enumerate(zip(tpl.agent_ids, spec.agents)):
        lam = a.lam if true_lambdas is None else float(true_lambdas[k])
        init = np.zeros(a.dim) if a.init is None else np.broadcast_to(np.asarray(a.init, dtype=float), (a.dim,))
        states.append(AgentState(
            node=node, action=init, true_lambda=lam, reported_lambda=a.reported,
            cost=_shared(shared, CostSpec, a.cost, tuple(a.center) if a.center is not None else None),
            effort_model=_shared(shared, EffortModel, a.rho), strategy=a.strategy,
            eta=a.eta if a.eta is not None else spec.eta, inner_eta=a.inner_eta,
            max_effort=a.max_effort, lo=a.lo, hi=a.hi))
    cost_beliefs = None
    if beliefs is not None:
        cost_beliefs = {node: float(b) for node, b in zip(tpl.agent_ids, beliefs)}
    cfg = PlannerConfig(spec.epsilon, spec.tau, spec.max_cycles, cost_beliefs, record_agents)
    schedule, settle = None, 0
    if spec.schedule is not None:
        sched = spec.schedule
        cache: dict[float, dict] = {}

        def schedule(cycle):
            v = sched.value(cycle)
            if v not in cache:
                cache[v] = {"y_star": tc.vector([v])}
            return cache[v]

        settle = sched.at if sched.kind == "step" else spec.max_cycles
    return Mechanism(graph, states, cfg, NoiseSpec(spec.noise_sigma), schedule, settle, corrupt)


# -------------------------------------------------------------- oracles

def _scipy_minimize(f, n, x0):
    from scipy.optimize import minimize

    res = minimize(lambda x: float(f(x[None, :])[0]), x0, method="BFGS", options={"gtol": 1e-10})
    return np.asarray(res.x), float(res.fun)


def oracle_solution(spec: ScenarioSpec, lambdas=None, start=None) -> tuple[np.ndarray, float] | None:
    """Global minimiser and minimum of the planner's loss, or ``None`` when non-convex.

    Quadratic templates with plain quadratic costs use the closed form;
    other quadratics are solved from an exact quadratic fit; the rest go to
    a quasi-Newton solver.
    """
    if spec.template == "double_well":
        return None
    f = reference_loss(spec, lambdas)
    lam = [a.lam if a.reported is None else a.reported for a in spec.agents] if lambdas is None else list(lambdas)
    costs = {a.cost for a in spec.agents}
    n = sum(spec.dims)
    if spec.template == "quadratic" and costs == {"quadratic"} and spec.dims == [1] * spec.n_agents:
        x = quadratic_kkt_solution(lam, float(spec.params.get("y_star", 10.0)))
        return x, float(f(x[None, :])[0])
    if spec.template == "separable" and costs == {"quadratic"}:
        c = np.asarray(spec.params.get("targets", separable_targets(spec.n_agents)), dtype=float)
        x = c / (1.0 + np.asarray(lam))
        return x, float(f(x[None, :])[0])
    if costs <= {"quadratic", "shifted", "zero"}:
        return quadratic_minimizer(f, n)
    return _scipy_minimize(f, n, np.zeros(n) if start is None else start)


def oracle_actions(spec: ScenarioSpec, mech: Mechanism) -> dict[int, np.ndarray] | None:
    """Oracle minimiser of the mechanism's planner loss, split per agent node."""
    sol = oracle_solution(spec, [mech.belief[i] for i in mech.order])
    if sol is None:
        return None
    parts = np.split(sol[0], _splits(spec.dims))
    return {i: tc.vector(p) for i, p in zip(mech.order, parts)}


def double_well_minima(spec: ScenarioSpec, resolution: int = 801) -> list[np.ndarray]:
    """Local minima of the double-well loss found by grid search alone."""
    y = float(spec.params.get("y_star", 10.0))
    grid = GridSpec([(-2.0, 2.0), (y - 3.0, y + 3.0)], resolution)
    return grid_local_minima(reference_loss(spec), grid)


# ------------------------------------------------------------------ run

@dataclass
class ScenarioRun:
    result: RunResult
    report: dict


def run_scenario(spec: ScenarioSpec | str, seed: int = 0) -> ScenarioRun:
    """Run a scenario and attach its scenario-specific report."""
    if isinstance(spec, str):
        spec = get(spec)
    runner = _RUNNERS.get(spec.name, _run_plain)
    return runner(spec, seed)


def _basic_report(spec, mech, res, with_oracle=True) -> dict:
    x = stack(spec, res.final_actions)
    if spec.schedule is not None:
        y = spec.schedule.value(res.traces[-1].cycle)
        spec = spec.copy(params={**spec.params, "y_star": y})
    rep = {
        "converged": res.converged,
        "cycles_used": res.cycles_used,
        "final_loss": res.final_loss,
        "final_grad_norm": res.traces[-1].grad_norm,
        "true_loss": float(true_loss(spec, [mech.agents[i].true_lambda for i in mech.order])(x[None, :])[0]),
    }
    if with_oracle:
        sol = oracle_solution(spec, [mech.belief[i] for i in mech.order], start=x)
        if sol is not None:
            xs, ls = sol
            rep["oracle_loss"] = ls
            rep["oracle_gap"] = abs(res.final_loss - ls)
            rep["oracle_distance"] = float(np.max(np.abs(x - xs)))
    return rep


def _run_plain(spec, seed):
    mech = build_mechanism(spec)
    res = mech.run(seed)
    return ScenarioRun(res, _basic_report(spec, mech, res))


def _run_tracking(spec, seed):
    mech = build_mechanism(spec)
    res = mech.run(seed)
    rep = _basic_report(spec, mech, res)
    rep["tracking_loss_mean"] = float(res.losses.mean())
    if spec.schedule.kind == "step":
        post = [t.loss for t in res.traces if t.cycle >= spec.schedule.at]
        rep["post_step_tracking_loss_mean"] = float(np.mean(post)) if post else float("nan")
        rep["final_target"] = spec.schedule.value(res.traces[-1].cycle)
    return ScenarioRun(res, rep)


def _run_nonconvex(spec, seed):
    starts = spec.extra.get("starts", [(0.5, 9.5), (-0.5, 10.5)])
    minima = double_well_minima(spec)
    runs, points = [], []
    for s in starts:
        sub = spec.copy()
        for a, v in zip(sub.agents, s):
            a.init = (float(v),)
        mech = build_mechanism(sub)
        res = mech.run(seed)
        runs.append(res)
        points.append(stack(sub, res.final_actions))
    rep = _basic_report(spec, mech, runs[0], with_oracle=False)
    rep["stationary_points"] = [p.tolist() for p in points]
    rep["grad_norms"] = [r.traces[-1].grad_norm for r in runs]
    rep["stationary"] = [r.traces[-1].grad_norm <= spec.tau for r in runs]
    rep["grid_minima"] = [m.tolist() for m in minima]
    rep["oracle_match"] = [float(min(np.max(np.abs(p - m)) for m in minima)) if minima else float("inf")
                           for p in points]
    rep["distinct"] = bool(len(points) < 2 or np.max(np.abs(points[0] - points[1])) > 1e-3)
    return ScenarioRun(runs[0], rep)


def converged_true_loss(spec: ScenarioSpec, truth, beliefs, seed: int = 0) -> float:
    """True global loss at the point the mechanism converges to when pricing costs at ``beliefs``."""
    mech = build_mechanism(spec, true_lambdas=truth, beliefs=beliefs, record_agents=False)
    res = mech.run(seed)
    return float(true_loss(spec, truth)(stack(spec, res.final_actions)[None, :])[0])


def _run_asymmetric(spec, seed):
    prior = spec.prior
    rng = np.random.default_rng([seed, 0x7E])
    truth = prior.sample(rng, spec.n_agents)
    mean = np.full(spec.n_agents, prior.mean)
    wrong = np.full(spec.n_agents, spec.extra.get("misspecified", prior.support[0]))
    mech = build_mechanism(spec, true_lambdas=truth, beliefs=mean)
    res = mech.run(seed)
    rep = _basic_report(spec, mech, res, with_oracle=False)
    rep["true_lambdas"] = truth.tolist()
    rep["bmbi_loss"] = rep["true_loss"]
    rep["full_info_loss"] = converged_true_loss(spec, truth, truth, seed)
    rep["misspecified_loss"] = converged_true_loss(spec, truth, wrong, seed)
    return ScenarioRun(res, rep)


def effort_sweep(spec: ScenarioSpec, rhos, seed: int = 0) -> list[dict]:
    """Run the scenario once per effort rate; total inner steps per agent and final loss."""
    rows = []
    for rho in rhos:
        sub = spec.copy()
        for a in sub.agents:
            a.rho = float(rho)
        mech = build_mechanism(sub)
        res = mech.run(seed)
        per_agent = [sum(t.record(i).effort for t in res.traces) for i in mech.order]
        rows.append({"rho": float(rho), "effort": per_agent, "final_loss": res.final_loss,
                     "converged": res.converged, "cycles_used": res.cycles_used})
    return rows


def _run_effort(spec, seed):
    mech = build_mechanism(spec)
    res = mech.run(seed)
    rep = _basic_report(spec, mech, res)
    rep["effort_per_agent"] = [sum(t.record(i).effort for t in res.traces) for i in mech.order]
    rep["rho_sweep"] = effort_sweep(spec, spec.extra.get("rho_grid", (0.0, 0.01, 0.1, 1.0)), seed)
    return ScenarioRun(res, rep)


_RUNNERS = {
    "tracking": _run_tracking,
    "nonconvex": _run_nonconvex,
    "asymmetric_info": _run_asymmetric,
    "effort_tradeoff": _run_effort,
}


def family_of(spec: ScenarioSpec) -> QuadraticFamily:
    if spec.template != "quadratic" or spec.dims != [1] * spec.n_agents:
        raise ValueError(f"scenario {spec.name!r} is not in the scalar quadratic family")
    return QuadraticFamily(spec.n_agents, float(spec.params.get("y_star", 10.0)))


# -------------------------------------------------------------- catalog

def _catalog() -> list[ScenarioSpec]:
    q = AgentSpec
    return [
        ScenarioSpec(
            "assembly_line", "two-agent assembly line; x1 costly, x2 free",
            "assembly", {"y_star": 10.0},
            [q(lam=0.5, init=(1.0,)), q(cost="zero", init=(1.0,))],
            eta=0.4),
        ScenarioSpec(
            "quadratic_n", "100 heterogeneous quadratic agents sharing one target",
            "quadratic", {"y_star": 50.0},
            [q(lam=1.0 + k / 100) for k in range(100)],
            eta=0.009, max_cycles=5000),
        ScenarioSpec(
            "scaling_bench", "separable quadratic agents for timing",
            "separable", {},
            [q(lam=1.0 + (k % 7) / 7) for k in range(1000)],
            eta=0.2, max_cycles=500),
        ScenarioSpec(
            "noisy", "assembly line with Gaussian noise on every incentive",
            "assembly", {"y_star": 10.0},
            [q(lam=0.5, init=(1.0,)), q(cost="zero", init=(1.0,))],
            eta=0.4, noise_sigma=0.1, seeds=tuple(range(50)),
            extra={"sigma_grid": (0.0, 0.01, 0.1, 1.0)}),
        ScenarioSpec(
            "nonconvex", "double-well coupled to a summed target; two starts",
            "double_well", {"y_star": 10.0},
            [q(cost="zero"), q(cost="zero")],
            eta=0.05, extra={"starts": [(0.5, 9.5), (-0.5, 10.5)]}),
        ScenarioSpec(
            "tracking", "assembly line whose target steps from 10 to 20 at cycle 200",
            "assembly", {"y_star": 10.0},
            [q(lam=0.5, init=(1.0,)), q(cost="zero", init=(1.0,))],
            eta=0.4, max_cycles=600, schedule=ScheduleSpec("step", at=200, before=10.0, after=20.0)),
        ScenarioSpec(
            "heterogeneous", "mixed dimensions and cost shapes, two best-responding agents",
            "quadratic", {"y_star": 10.0},
            [q(lam=0.5, dim=1),
             q(lam=4.0, dim=2, cost="shifted", center=(1.0, -1.0), strategy="best_response"),
             q(lam=2.0, dim=3, cost="logcosh"),
             q(lam=8.0, dim=1, strategy="best_response")],
            eta=0.05, max_cycles=3000),
        ScenarioSpec(
            "asymmetric_info", "five agents with hidden costs drawn from a uniform prior",
            "quadratic", {"y_star": 10.0},
            [q(lam=1.0) for _ in range(5)],
            eta=0.12, prior=TypePrior.uniform(0.5, 1.5), seeds=tuple(range(20)),
            extra={"misspecified": 0.5}),
        ScenarioSpec(
            "effort_tradeoff", "best-response agents paying for search effort",
            "quadratic", {"y_star": 10.0},
            [q(lam=l, strategy="best_response", rho=0.1, inner_eta=0.05, max_effort=100) for l in (3.0, 4.0, 5.0)],
            max_cycles=300, extra={"rho_grid": (0.0, 0.01, 0.1, 1.0)}),
        ScenarioSpec(
            "nonorthogonal_costs", "summed target plus neighbour cross terms (x_i + x_j/2)^2",
            "cross_term", {"y_star": 10.0, "coupling": [1.0, 1.0]},
            [q(lam=l) for l in (1.0, 2.0, 3.0)],
            eta=0.05),
        ScenarioSpec(
            "bic_quadratic", "three quadratic agents with types from uniform(1, 2)",
            "quadratic", {"y_star": 10.0},
            [q(lam=1.5) for _ in range(3)],
            eta=0.1, prior=TypePrior.uniform(1.0, 2.0)),
    ]


def catalog() -> list[ScenarioSpec]:
    """Fresh copies of every built-in scenario."""
    return _catalog()


def names() -> list[str]:
    return [s.name for s in _catalog()]


def get(name: str) -> ScenarioSpec:
    for s in _catalog():
        if s.name == name:
            return s
    raise UnknownScenario(f"unknown scenario {name!r}; known: {', '.join(names())}")
