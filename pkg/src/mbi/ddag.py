"""Differentiable DAG of sources, agents, function nodes and one loss node.

A graph is built from a :class:`GraphSpec` and validated once; afterwards it
is immutable.  :func:`compose_loss` turns a validated graph into a single
scalar :class:`~mbi.tensorcore.Expr` by walking the nodes in topological
order, so reverse-mode differentiation of that expression is exactly the
backward pass over the graph.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensorcore as tc
from .errors import (
    CycleDetected,
    DanglingEdge,
    DisconnectedNode,
    DuplicateNode,
    MultipleLossNodes,
    NoLossNode,
)

SOURCE, AGENT, FUNCTION, LOSS = "source", "agent", "function", "loss"

# Function/loss templates receive the expressions of their inputs (in-edge
# tails in ascending id order) and return the node's output expression.
Template = Callable[[list], "tc.Expr"]


@dataclass(frozen=True, slots=True)
class Node:
    id: int
    kind: str
    label: str
    dim: int = 1
    value: np.ndarray | None = None     # sources only
    template: Template | None = None    # function and loss nodes

    def __post_init__(self):
        if self.id < 0:
            raise ValueError("node ids are non-negative")
        if self.kind not in (SOURCE, AGENT, FUNCTION, LOSS):
            raise ValueError(f"unknown node kind {self.kind!r}")
        if self.kind == AGENT and self.dim < 1:
            raise ValueError(f"agent {self.label} needs dim >= 1")
        if self.kind == SOURCE:
            if self.value is None:
                raise ValueError(f"source {self.label} has no value")
            object.__setattr__(self, "value", tc.vector(self.value))
            object.__setattr__(self, "dim", self.value.size)
        if self.kind in (FUNCTION, LOSS) and self.template is None:
            raise ValueError(f"{self.kind} node {self.label} needs a template")


def source(id, label, value):
    return Node(id, SOURCE, label, value=value)


def agent(id, label, dim=1):
    return Node(id, AGENT, label, dim=dim)


def function(id, label, template):
    return Node(id, FUNCTION, label, template=template)


def loss(id, label, template):
    return Node(id, LOSS, label, template=template)


@dataclass
class GraphSpec:
    nodes: list[Node] = field(default_factory=list)
    edges: list[tuple[int, int]] = field(default_factory=list)


class Graph:
    """Validated, immutable D-DAG.  Construct through :func:`build_graph`."""

    def __init__(self, nodes: dict[int, Node], edges: tuple, preds: dict, topo: tuple):
        self.nodes = nodes
        self.edges = edges
        self._preds = preds
        self._topo = topo
        self.loss_id = next(i for i, n in nodes.items() if n.kind == LOSS)
        self._agents = tuple(i for i in topo if nodes[i].kind == AGENT)

    def inputs(self, node_id: int) -> tuple[int, ...]:
        """In-edge tails of ``node_id`` in ascending id order."""
        return self._preds[node_id]

    def __len__(self):
        return len(self.nodes)

    def __repr__(self):
        return f"Graph({len(self.nodes)} nodes, {len(self.edges)} edges, {len(self._agents)} agents)"


def build_graph(spec: GraphSpec) -> Graph:
    """Validate ``spec`` and return a :class:`Graph` with its topological order.

    Checks run in a fixed order so that a malformed spec maps to exactly one
    error: duplicate ids or labels, missing loss node, several loss nodes,
    edges with unknown endpoints, cycles, and finally nodes that cannot
    reach the loss node.
    """
    nodes: dict[int, Node] = {}
    labels = set()
    for n in spec.nodes:
        if n.id in nodes:
            raise DuplicateNode(f"duplicate node id {n.id}")
        if n.label in labels:
            raise DuplicateNode(f"duplicate node label {n.label!r}")
        nodes[n.id] = n
        labels.add(n.label)

    n_loss = sum(1 for n in nodes.values() if n.kind == LOSS)
    if n_loss == 0:
        raise NoLossNode("graph has no loss node")
    if n_loss > 1:
        raise MultipleLossNodes(f"graph has {n_loss} loss nodes; pre-sum objectives into one")

    edges = []
    seen = set()
    for u, v in spec.edges:
        if u not in nodes or v not in nodes:
            raise DanglingEdge(f"edge ({u}, {v}) references an unknown node")
        if (u, v) not in seen:
            seen.add((u, v))
            edges.append((u, v))

    succs: dict[int, list[int]] = {i: [] for i in nodes}
    preds: dict[int, list[int]] = {i: [] for i in nodes}
    for u, v in edges:
        succs[u].append(v)
        preds[v].append(u)

    topo = _kahn(nodes, succs, preds)
    if len(topo) != len(nodes):
        stuck = sorted(set(nodes) - set(topo))
        raise CycleDetected(f"cycle through nodes {stuck[:10]}")

    loss_id = next(i for i, n in nodes.items() if n.kind == LOSS)
    reach = {loss_id}
    stack = [loss_id]
    while stack:
        for u in preds[stack.pop()]:
            if u not in reach:
                reach.add(u)
                stack.append(u)
    if len(reach) != len(nodes):
        lost = sorted(set(nodes) - reach)
        raise DisconnectedNode(f"nodes {lost[:10]} have no path to the loss node")

    for n in nodes.values():
        if n.kind == SOURCE and preds[n.id]:
            raise DanglingEdge(f"source {n.label} cannot have inputs")

    frozen_preds = {i: tuple(sorted(p)) for i, p in preds.items()}
    return Graph(nodes, tuple(edges), frozen_preds, tuple(topo))


def _kahn(nodes, succs, preds) -> list[int]:
    indeg = {i: len(preds[i]) for i in nodes}
    ready = [i for i, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        u = heapq.heappop(ready)
        order.append(u)
        for v in succs[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(ready, v)
    return order


def topological_order(graph: Graph) -> tuple[int, ...]:
    """Node ids with every edge pointing forward; ties go to the smaller id."""
    return graph._topo


def reverse_topological_order(graph: Graph) -> tuple[int, ...]:
    return graph._topo[::-1]


def agent_nodes(graph: Graph) -> tuple[int, ...]:
    return graph._agents


def source_bindings(graph: Graph, overrides: dict[str, np.ndarray] | None = None) -> dict[str, np.ndarray]:
    """Variable bindings for every source node, optionally overridden by label."""
    out = {}
    for i in graph._topo:
        n = graph.nodes[i]
        if n.kind == SOURCE:
            out[n.label] = overrides[n.label] if overrides and n.label in overrides else n.value
    return out


def compose_loss(graph: Graph) -> "tc.Expr":
    """Fold the graph into the loss node's scalar expression.

    Sources and agents become variables named by their labels; function and
    loss nodes apply their templates to their inputs' expressions.
    """
    exprs: dict[int, tc.Expr] = {}
    for i in graph._topo:
        n = graph.nodes[i]
        if n.kind in (SOURCE, AGENT):
            exprs[i] = tc.var(n.label, n.dim)
        else:
            exprs[i] = n.template([exprs[j] for j in graph._preds[i]])
    out = exprs[graph.loss_id]
    if out.dim != 1:
        raise ValueError(f"loss template must produce a scalar, got dim {out.dim}")
    return out


def edges_respect_order(edges: Sequence[tuple[int, int]], order: Sequence[int]) -> bool:
    pos = {v: k for k, v in enumerate(order)}
    return all(pos[u] < pos[v] for u, v in edges)
