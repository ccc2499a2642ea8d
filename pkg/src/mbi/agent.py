"""Boundedly-rational agents.

Two strategies are supported:

``gradient``
    Follows the delivered incentive for one step, ``x <- x + eta * G``.  The
    incentive is the full ``-dL_global/dx``, which already contains the
    agent's own cost, so the agent does not subtract its cost again.

``best_response``
    Receives the system-only price ``-dL_system/dx`` and maximises
    ``price . x - C(x)`` with its private cost.  Quadratic costs with zero
    effort cost are solved in closed form; otherwise an inner gradient
    ascent runs until the satisficing rule halts it.

Both strategies share the fixed point ``dL_global/dx = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import tensorcore as tc
from .errors import NonConvexCost, NonFiniteAction

DEFAULT_ETA = 0.1
DEFAULT_BOUND = 1e6
DEFAULT_MAX_EFFORT = 100


# ---------------------------------------------------------------- costs

# name -> (value(x, lam, params), grad(x, lam, params), expr(x_expr, lam, params))
_NAMED_COSTS: dict[str, tuple[Callable, Callable, Callable]] = {}


def register_cost(name: str, value: Callable, grad: Callable, expr: Callable,
                  probe_dim: int = 2, seed: int = 0) -> None:
    """Register a named convex cost; rejects it if a midpoint-convexity probe fails."""
    from .oracle import GridSpec, convexity_probe

    def f(x):
        return value(np.asarray(x, dtype=float), 1.0, {})

    domain = GridSpec([(-3.0, 3.0)] * probe_dim, 3)
    report = convexity_probe(f, 200, domain, seed)
    if report.violations:
        raise NonConvexCost(f"cost {name!r} failed the convexity probe "
                            f"({report.violations} of {report.samples} pairs)")
    _NAMED_COSTS[name] = (value, grad, expr)


def _logcosh_value(x, lam, p):
    return lam * float(np.sum(tc._logcosh(x - p.get("center", 0.0))))


def _logcosh_grad(x, lam, p):
    return lam * np.tanh(x - p.get("center", 0.0))


def _logcosh_expr(xe, lam, p):
    shift = tc.const(np.full(xe.dim, float(p.get("center", 0.0))))
    return tc.scale(lam, tc.sum_(tc.unary("logcosh", xe - shift)))


register_cost("logcosh", _logcosh_value, _logcosh_grad, _logcosh_expr)


@dataclass(frozen=True)
class CostSpec:
    """Private action cost ``C(x)`` of one agent.

    ``kind`` is ``"quadratic"`` (``lam * |x|^2``), ``"shifted"``
    (``lam * |x - center|^2``), ``"zero"`` (no private cost; only valid for
    gradient followers) or the name of a registered convex cost.
    """

    kind: str = "quadratic"
    center: tuple[float, ...] | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("quadratic", "shifted", "zero") and self.kind not in _NAMED_COSTS:
            raise NonConvexCost(f"unknown or unregistered cost kind {self.kind!r}")

    @property
    def strictly_convex(self) -> bool:
        return self.kind != "zero"

    def _c(self, dim):
        if self.center is None:
            return np.zeros(dim)
        c = np.asarray(self.center, dtype=float)
        return np.broadcast_to(c, (dim,)) if c.size == 1 else c

    def value(self, x: np.ndarray, lam: float) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "quadratic":
            return lam * float(np.dot(x, x))
        if self.kind == "shifted":
            d = x - self._c(x.size)
            return lam * float(np.dot(d, d))
        return _NAMED_COSTS[self.kind][0](x, lam, self.params)

    def grad(self, x: np.ndarray, lam: float) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "quadratic":
            return 2.0 * lam * x
        if self.kind == "shifted":
            return 2.0 * lam * (x - self._c(x.size))
        return _NAMED_COSTS[self.kind][1](x, lam, self.params)

    def expr(self, x: tc.Expr, lam: float) -> tc.Expr | None:
        """Cost as a loss expression, or ``None`` for the zero cost."""
        if self.kind == "zero":
            return None
        if self.kind == "quadratic":
            return tc.scale(lam, tc.sqnorm(x))
        if self.kind == "shifted":
            d = x - tc.const(self._c(x.dim))
            return tc.scale(lam, tc.sqnorm(d))
        return _NAMED_COSTS[self.kind][2](x, lam, self.params)

    def best_response(self, price: np.ndarray, lam: float) -> np.ndarray | None:
        """Closed-form maximiser of ``price . x - C(x)`` when one exists."""
        if self.kind == "quadratic":
            return price / (2.0 * lam)
        if self.kind == "shifted":
            return self._c(price.size) + price / (2.0 * lam)
        return None


# --------------------------------------------------------------- effort

_KAPPAS: dict[str, Callable[[float, int], float]] = {
    "linear": lambda rho, t: rho * t,
    "quadratic": lambda rho, t: rho * t * t,
}


def register_kappa(name: str, kappa: Callable[[float, int], float]) -> None:
    """Register an effort cost ``kappa(rho, T)``; must be 0 at T=0 and non-decreasing."""
    if kappa(1.0, 0) != 0.0:
        raise ValueError("kappa(0) must be 0")
    if any(kappa(1.0, t + 1) < kappa(1.0, t) for t in range(100)):
        raise ValueError("kappa must be non-decreasing in T")
    _KAPPAS[name] = kappa


@dataclass(frozen=True)
class EffortModel:
    """Cost of search effort, ``kappa(T)``, parameterised by the rate ``rho``."""

    rho: float = 0.0
    kind: str = "linear"

    def __post_init__(self):
        if self.rho < 0 or not math.isfinite(self.rho):
            raise ValueError(f"rho must be a finite non-negative real, got {self.rho}")
        if self.kind not in _KAPPAS:
            raise ValueError(f"unknown effort model {self.kind!r}")

    def kappa(self, T: int) -> float:
        return _KAPPAS[self.kind](self.rho, T)

    def marginal(self, T: int) -> float:
        """Cost of taking step ``T + 1``."""
        return self.kappa(T + 1) - self.kappa(T)


def satisficing_stop(marginal_gain: float, effort: EffortModel, T: int) -> bool:
    """True when the next step's gain does not pay for its effort."""
    return marginal_gain <= effort.marginal(T)


def satisficing_effort(gains, effort: EffortModel) -> int:
    """Effort ``T*`` at which a search with per-step ``gains`` halts."""
    T = 0
    for g in gains:
        if satisficing_stop(g, effort, T):
            break
        T += 1
    return T


# ---------------------------------------------------------------- state

class IncentiveSignal(NamedTuple):
    grad: np.ndarray
    cycle: int


@dataclass(slots=True)
class AgentState:
    node: int
    action: np.ndarray
    true_lambda: float = 1.0
    reported_lambda: float | None = None
    cost: CostSpec = field(default_factory=CostSpec)
    effort_model: EffortModel = field(default_factory=EffortModel)
    strategy: str = "gradient"
    eta: float = DEFAULT_ETA
    inner_eta: float = 0.05
    max_effort: int = DEFAULT_MAX_EFFORT
    lo: float = -DEFAULT_BOUND
    hi: float = DEFAULT_BOUND
    private_info: dict = field(default_factory=dict)
    signal: IncentiveSignal | None = None

    def __post_init__(self):
        self.action = tc.vector(self.action)
        if not self.true_lambda > 0:
            raise ValueError(f"agent {self.node}: true_lambda must be positive")
        if self.reported_lambda is None:
            self.reported_lambda = self.true_lambda
        if self.strategy not in ("gradient", "best_response"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.strategy == "best_response" and not self.cost.strictly_convex:
            raise NonConvexCost(f"agent {self.node}: best response needs a strictly convex cost")
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    @property
    def dim(self) -> int:
        return self.action.size

    def clamp(self, x: np.ndarray) -> np.ndarray:
        if x.size == 1:
            if self.lo <= x[0] <= self.hi:
                return x
        elif x.max() <= self.hi and x.min() >= self.lo:
            return x
        return np.clip(x, self.lo, self.hi)


def _finite(x: np.ndarray, node) -> np.ndarray:
    if not math.isfinite(x[0] if x.size == 1 else x.sum()):
        raise NonFiniteAction(f"agent {node} produced a non-finite action")
    x.flags.writeable = False
    return x


def gradient_follower_step(state: AgentState, signal: IncentiveSignal) -> tuple[np.ndarray, int]:
    """One step along the incentive; effort is always one step."""
    x = state.clamp(state.action + state.eta * signal.grad)
    return _finite(x, state.node), 1


def local_utility(state: AgentState, price: np.ndarray, x: np.ndarray) -> float:
    return float(np.dot(price, x)) - state.cost.value(x, state.true_lambda)


def best_response(state: AgentState, price: np.ndarray,
                  budget: EffortModel | None = None) -> tuple[np.ndarray, int]:
    """Maximise ``price . x - C(x)`` under the effort budget.

    With zero effort cost and a closed form the exact maximiser is returned
    and the full step budget is reported as spent.  Otherwise an inner
    gradient ascent starts from the current action and proposes one step at
    a time; a step is taken only while its realised utility gain exceeds the
    marginal effort cost.
    """
    effort = budget if budget is not None else state.effort_model
    lam = state.true_lambda
    if effort.rho == 0.0:
        exact = state.cost.best_response(price, lam)
        if exact is not None:
            return _finite(state.clamp(exact), state.node), state.max_effort
    x = state.action
    u = local_utility(state, price, x)
    T = 0
    while T < state.max_effort:
        step = state.inner_eta * (price - state.cost.grad(x, lam))
        cand = state.clamp(x + step)
        u_new = local_utility(state, price, cand)
        if satisficing_stop(u_new - u, effort, T):
            break
        x, u = cand, u_new
        T += 1
    return _finite(np.array(x, dtype=float), state.node), T


def agent_utility(state: AgentState, payment: float, T: int) -> float:
    """Realised utility of a cycle: payment minus effort cost."""
    return payment - state.effort_model.kappa(T)
