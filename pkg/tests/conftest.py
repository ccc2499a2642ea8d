from __future__ import annotations

import numpy as np
import pytest

from mbi import ddag
from mbi import tensorcore as tc
from mbi.agent import AgentState, CostSpec


def toy_expr(lam: float = 0.5) -> tc.Expr:
    """``(x1 + x2 - Y*)^2 + lam * x1^2`` built directly from primitives."""
    x1, x2, y = tc.var("x1"), tc.var("x2"), tc.var("y_star")
    return tc.square(x1 + x2 - y) + tc.scale(lam, tc.square(x1))


def toy_bindings(x1, x2, y):
    return {"x1": tc.vector([x1]), "x2": tc.vector([x2]), "y_star": tc.vector([y])}


def toy_graph(y_star: float = 3.0) -> ddag.Graph:
    nodes = [
        ddag.agent(0, "x1"),
        ddag.agent(1, "x2"),
        ddag.source(2, "y_star", [y_star]),
        ddag.loss(3, "loss", lambda ins: tc.square(ins[0] + ins[1] - ins[2])),
    ]
    return ddag.build_graph(ddag.GraphSpec(nodes, [(0, 3), (1, 3), (2, 3)]))


def toy_agents(x1=1.0, x2=1.0, lam=0.5, eta=0.2) -> list[AgentState]:
    return [
        AgentState(0, [x1], true_lambda=lam, eta=eta),
        AgentState(1, [x2], cost=CostSpec("zero"), eta=eta),
    ]


def quadratic_graph(n: int, y_star: float) -> ddag.Graph:
    nodes = [ddag.agent(k, f"x{k + 1}") for k in range(n)]
    nodes.append(ddag.source(n, "y_star", [y_star]))
    nodes.append(ddag.loss(n + 1, "loss", lambda ins: tc.square(tc.add(*ins[:n]) - ins[n])))
    edges = [(k, n + 1) for k in range(n + 1)]
    return ddag.build_graph(ddag.GraphSpec(nodes, edges))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
