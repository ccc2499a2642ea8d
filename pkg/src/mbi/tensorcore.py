"""Dense vectors and a small reverse-mode differentiation engine.

Loss expressions are trees (or DAGs, when sub-expressions are shared) of
:class:`Expr` nodes built from a closed set of primitives.  An expression is
compiled once into a :class:`Tape`; the tape evaluates the loss for a set of
variable bindings and then propagates adjoints back to every bound variable.

Vectors are plain 1-D ``float64`` numpy arrays.  A dim-1 operand broadcasts
against any other dimension in the elementwise primitives.
"""

from __future__ import annotations

import math
from typing import Callable, Mapping, NamedTuple

import numpy as np

from .errors import NonFiniteResult, StaleCache, UnboundVariable

Vector = np.ndarray

# opcodes
CONST, VAR, ADD, SUB, MUL, SQUARE, SCALE, DOT, SUM, UNARY = range(10)
OP_NAMES = ("const", "var", "add", "sub", "mul", "square", "scale", "dot", "sum", "unary")


def vector(data) -> Vector:
    """Return ``data`` as a read-only, finite, 1-D float64 array."""
    arr = np.array(data, dtype=np.float64, ndmin=1)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"vector must be 1-D and non-empty, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFiniteResult(f"non-finite entry in {arr!r}")
    arr.flags.writeable = False
    return arr


# Registered elementwise unary functions: name -> (f, df).
_UNARY: dict[str, tuple[Callable, Callable]] = {}


def register_unary(name: str, f: Callable, df: Callable) -> None:
    """Register a named elementwise function with its analytic derivative."""
    _UNARY[name] = (f, df)


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _logcosh(x):
    a = np.abs(x)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


register_unary("softplus", _softplus, _sigmoid)
register_unary("logcosh", _logcosh, np.tanh)
register_unary("tanh", np.tanh, lambda x: 1.0 - np.tanh(x) ** 2)


def _bdim(a: int, b: int) -> int:
    if a == b or b == 1:
        return a
    if a == 1:
        return b
    raise ValueError(f"incompatible dims {a} and {b}")


class Expr:
    """Immutable node of a loss expression.

    Build expressions with the module-level constructors (:func:`const`,
    :func:`var`, :func:`add`, ...) or with the arithmetic operators, which map
    ``+``, ``-``, ``*`` and ``**2`` onto the primitives.
    """

    __slots__ = ("op", "children", "param", "dim", "_tape", "_ix")

    def __init__(self, op: int, children: tuple = (), param=None, dim: int = 1):
        self.op = op
        self.children = children
        self.param = param
        self.dim = dim
        self._tape = None
        self._ix = -1   # scratch slot used while a tape is being compiled

    def __repr__(self):
        if self.op == VAR:
            return f"var({self.param!r}, dim={self.dim})"
        if self.op == CONST:
            return f"const({self.param.tolist()!r})"
        return f"{OP_NAMES[self.op]}({', '.join(map(repr, self.children))})"

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(other, self)
        return mul(self, _lift(other))

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return scale(other, self)
        return mul(_lift(other), self)

    def __neg__(self):
        return scale(-1.0, self)

    def __pow__(self, k):
        if k != 2:
            raise ValueError("only **2 is a primitive")
        return square(self)

    def tape(self) -> "Tape":
        """Tape shared by the module-level :func:`forward_eval`/:func:`backward_eval`."""
        if self._tape is None:
            self._tape = Tape(self)
        return self._tape


def _lift(x) -> Expr:
    return x if isinstance(x, Expr) else const(x)


def const(value) -> Expr:
    v = vector(value)
    return Expr(CONST, (), v, v.size)


def var(name: str, dim: int = 1) -> Expr:
    if dim < 1:
        raise ValueError("variable dim must be >= 1")
    return Expr(VAR, (), name, dim)


def add(*terms: Expr) -> Expr:
    """n-ary sum (at least one term)."""
    if not terms:
        raise ValueError("add needs at least one term")
    if len(terms) == 1:
        return terms[0]
    d = 1
    for t in terms:
        d = _bdim(d, t.dim)
    return Expr(ADD, tuple(terms), None, d)


def sub(a: Expr, b: Expr) -> Expr:
    return Expr(SUB, (a, b), None, _bdim(a.dim, b.dim))


def mul(a: Expr, b: Expr) -> Expr:
    return Expr(MUL, (a, b), None, _bdim(a.dim, b.dim))


def square(a: Expr) -> Expr:
    return Expr(SQUARE, (a,), None, a.dim)


def scale(c: float, a: Expr) -> Expr:
    c = float(c)
    if not math.isfinite(c):
        raise NonFiniteResult(f"non-finite scale factor {c}")
    return Expr(SCALE, (a,), c, a.dim)


def dot(a: Expr, b: Expr) -> Expr:
    if a.dim != b.dim:
        raise ValueError(f"dot of dims {a.dim} and {b.dim}")
    return Expr(DOT, (a, b), None, 1)


def sum_(a: Expr) -> Expr:
    """Sum-reduce the components of ``a`` to a scalar."""
    return Expr(SUM, (a,), None, 1)


def unary(name: str, a: Expr) -> Expr:
    if name not in _UNARY:
        raise KeyError(f"unregistered unary function {name!r}")
    return Expr(UNARY, (a,), name, a.dim)


def sqnorm(a: Expr) -> Expr:
    """``‖a‖²`` as ``dot(a, a)``."""
    return dot(a, a)


class _Code(NamedTuple):
    ops: list
    kids: list
    params: list


class _Group:
    """Instructions with a common grouping key, run as one numpy call."""

    __slots__ = ("op", "param", "dim", "out", "kids", "unique", "stacked")

    def __init__(self, op, param, dim, out, kids, unique, stacked):
        self.op = op
        self.param = param      # unary name, or (G, 1) scale factors
        self.dim = dim
        self.out = out          # (G, dim) buffer indices
        self.kids = kids        # per operand position: (G, d_k) indices; stacked add: one (G, K, d)
        self.unique = unique    # per entry of kids: no repeated index, so fancy += is exact
        self.stacked = stacked


def _reduce_to(g: np.ndarray, d: int) -> np.ndarray:
    """Adjoint of broadcasting a (G, d) operand up to ``g``'s width."""
    return g if g.shape[-1] == d else g.sum(axis=-1, keepdims=True)


def _scatter(adj: np.ndarray, idx: np.ndarray, vals, unique: bool) -> None:
    if unique:
        adj[idx] += vals
    else:
        np.add.at(adj, idx, np.broadcast_to(vals, idx.shape))


class Tape:
    """Compiled evaluation order of one expression plus its value cache.

    Every node gets a slot in one flat value buffer.  Nodes at the same
    depth with the same opcode and operand shapes form a group that is
    evaluated (and differentiated) by a single vectorised numpy call, so the
    per-node interpreter overhead disappears on wide, shallow losses.

    The expression itself is immutable; the cache belongs to the tape, so
    independent tapes over the same expression may be evaluated
    concurrently.
    """

    def __init__(self, root: Expr):
        if root.dim != 1:
            raise ValueError(f"loss expression must be scalar, got dim {root.dim}")
        ops: list[int] = []
        kids_of: list[tuple] = []
        params: list = []
        dims: list[int] = []
        variables: dict[str, int] = {}
        visited: list[Expr] = []
        # iterative post-order walk; children are emitted before parents.
        # Instruction numbers live in each node's scratch slot during the walk.
        stack = [root]
        expanded = [False]
        try:
            while stack:
                node = stack.pop()
                done = expanded.pop()
                if node._ix >= 0:
                    continue
                if not done:
                    stack.append(node)
                    expanded.append(True)
                    for ch in reversed(node.children):
                        if ch._ix < 0:
                            stack.append(ch)
                            expanded.append(False)
                    continue
                visited.append(node)
                if node.op == VAR:
                    prev = variables.get(node.param)
                    if prev is not None and dims[prev] != node.dim:
                        raise ValueError(f"variable {node.param!r} used with dims {dims[prev]} and {node.dim}")
                    if prev is not None:
                        node._ix = prev
                        continue
                    variables[node.param] = len(ops)
                node._ix = len(ops)
                ops.append(node.op)
                kids_of.append(tuple(ch._ix for ch in node.children))
                params.append(node.param)
                dims.append(node.dim)
        finally:
            for node in visited:
                node._ix = -1
            del visited, stack
        code = _Code(ops, kids_of, params)
        n = len(ops)
        offs = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(dims, out=offs[1:])
        self._size = int(offs[-1])
        self._n = n
        self._root = int(offs[n - 1])
        init = np.zeros(self._size)
        depth = [0] * n
        buckets: dict[tuple, list[int]] = {}
        for i, op in enumerate(ops):
            kids, p = kids_of[i], params[i]
            if op == CONST:
                init[offs[i]:offs[i + 1]] = p
                continue
            if op == VAR:
                continue
            depth[i] = 1 + max(depth[k] for k in kids)
            kd = tuple(dims[k] for k in kids)
            shape = ("n", kd[0], len(kd)) if op == ADD and len(set(kd)) == 1 else kd
            key = (depth[i], op, p if op == UNARY else None, dims[i], shape)
            buckets.setdefault(key, []).append(i)
        self._init = init
        self._groups = [self._group(key, members, code, dims, offs)
                        for key, members in sorted(buckets.items(), key=lambda kv: (kv[0][0], kv[1][0]))]
        self.variables = {name: (int(offs[i]), dims[i]) for name, i in variables.items()}
        self._scalar_names = [name for name, i in variables.items() if dims[i] == 1]
        self._scalar_offs = np.array([offs[variables[name]] for name in self._scalar_names], dtype=np.int64)
        self._wide = [(name, int(offs[i]), dims[i]) for name, i in variables.items() if dims[i] > 1]
        self._buf: np.ndarray | None = None
        self._bound: list | None = None

    @staticmethod
    def _group(key, members, code, dims, offs) -> _Group:
        _, op, uname, d, _ = key
        m = np.asarray(members)

        def idx(nodes, width):
            return offs[nodes][:, None] + np.arange(width)

        out = idx(m, d)
        first = code.kids[members[0]]
        kid_nodes = np.array([code.kids[i] for i in members], dtype=np.int64)      # (G, K)
        K = kid_nodes.shape[1]
        stacked = op == ADD and len({dims[k] for k in first}) == 1
        if stacked:
            dk = dims[first[0]]
            kids = [offs[kid_nodes][:, :, None] + np.arange(dk)]
        else:
            kids = [idx(kid_nodes[:, k], dims[first[k]]) for k in range(K)]
        del kid_nodes
        unique = [np.unique(a).size == a.size for a in kids]
        param = uname
        if op == SCALE:
            param = np.array([code.params[i] for i in members])[:, None]
        return _Group(op, param, d, out, kids, unique, stacked)

    def __len__(self):
        return self._n

    def forward(self, bindings: Mapping[str, Vector]) -> float:
        """Evaluate the loss and cache every intermediate value."""
        buf = self._init.copy()
        names = self._scalar_names
        try:
            scalars = [bindings[p] for p in names]
        except KeyError as e:
            raise UnboundVariable(e.args[0]) from None
        if scalars:
            flat = None
            try:
                flat = np.concatenate(scalars)
            except ValueError:
                pass
            if flat is None or flat.shape != (len(names),):
                for p, v in zip(names, scalars):
                    if np.shape(v) != (1,):
                        raise ValueError(f"binding {p!r} has shape {np.shape(v)}, expected (1,)")
            buf[self._scalar_offs] = flat
        wide = []
        for p, o, d in self._wide:
            try:
                v = bindings[p]
            except KeyError:
                raise UnboundVariable(p) from None
            if np.shape(v) != (d,):
                raise ValueError(f"binding {p!r} has shape {np.shape(v)}, expected ({d},)")
            buf[o:o + d] = v
            wide.append(v)
        # overflow surfaces as a non-finite loss below
        with np.errstate(over="ignore", invalid="ignore"):
            for g in self._groups:
                op, kids = g.op, g.kids
                if op == ADD:
                    if g.stacked:
                        v = buf[kids[0]].sum(axis=1)
                    else:
                        v = np.zeros((g.out.shape[0], g.dim))
                        for a in kids:
                            v = v + buf[a]
                elif op == SUB:
                    v = buf[kids[0]] - buf[kids[1]]
                elif op == MUL:
                    v = buf[kids[0]] * buf[kids[1]]
                elif op == SQUARE:
                    a = buf[kids[0]]
                    v = a * a
                elif op == SCALE:
                    v = g.param * buf[kids[0]]
                elif op == DOT:
                    v = np.einsum("ij,ij->i", buf[kids[0]], buf[kids[1]])[:, None]
                elif op == SUM:
                    v = buf[kids[0]].sum(axis=1, keepdims=True)
                else:
                    v = _UNARY[g.param][0](buf[kids[0]])
                buf[g.out] = v
        loss = float(buf[self._root])
        if not math.isfinite(loss):
            raise NonFiniteResult(f"loss evaluated to {loss}")
        self._buf = buf
        self._bound = [scalars, wide]
        return loss

    def _check_fresh(self, bindings: Mapping[str, Vector] | None) -> None:
        if self._buf is None:
            raise StaleCache("backward pass requested before any forward pass")
        if bindings is None:
            return
        scalars, wide = self._bound
        pairs = [*zip(self._scalar_names, scalars), *zip((w[0] for w in self._wide), wide)]
        for name, v in pairs:
            w = bindings.get(name)
            if w is not v and (w is None or not np.array_equal(w, v)):
                raise StaleCache(f"binding {name!r} changed since the forward pass")

    def adjoint_buffer(self, bindings: Mapping[str, Vector] | None = None) -> np.ndarray:
        """Adjoint of every buffer slot; variable ``v`` lives at ``self.variables[v]``."""
        self._check_fresh(bindings)
        buf = self._buf
        adj = np.zeros(self._size)
        adj[self._root] = 1.0
        for g in reversed(self._groups):
            gO = adj[g.out]
            op, kids, uq = g.op, g.kids, g.unique
            if op == ADD:
                if g.stacked:
                    _scatter(adj, kids[0], gO[:, None, :], uq[0])
                else:
                    for a, u in zip(kids, uq):
                        _scatter(adj, a, _reduce_to(gO, a.shape[1]), u)
            elif op == SUB:
                a, b = kids
                _scatter(adj, a, _reduce_to(gO, a.shape[1]), uq[0])
                _scatter(adj, b, -_reduce_to(gO, b.shape[1]), uq[1])
            elif op == MUL:
                a, b = kids
                _scatter(adj, a, _reduce_to(gO * buf[b], a.shape[1]), uq[0])
                _scatter(adj, b, _reduce_to(gO * buf[a], b.shape[1]), uq[1])
            elif op == SQUARE:
                a = kids[0]
                _scatter(adj, a, 2.0 * gO * buf[a], uq[0])
            elif op == SCALE:
                _scatter(adj, kids[0], g.param * gO, uq[0])
            elif op == DOT:
                a, b = kids
                _scatter(adj, a, gO * buf[b], uq[0])
                _scatter(adj, b, gO * buf[a], uq[1])
            elif op == SUM:
                _scatter(adj, kids[0], gO, uq[0])
            else:
                a = kids[0]
                _scatter(adj, a, gO * _UNARY[g.param][1](buf[a]), uq[0])
        return adj

    def backward(self, bindings: Mapping[str, Vector] | None = None) -> dict[str, Vector]:
        """Return ``dL/dv`` for every variable of the expression.

        If ``bindings`` is given it must match the bindings of the last
        :meth:`forward` call, otherwise :class:`StaleCache` is raised.
        """
        adj = self.adjoint_buffer(bindings)
        return {name: adj[o:o + d] for name, (o, d) in self.variables.items()}


def forward_eval(expr: Expr, bindings: Mapping[str, Vector]) -> float:
    """Scalar loss of ``expr`` under ``bindings``; caches values on the expression's tape."""
    return expr.tape().forward(bindings)


def backward_eval(expr: Expr, bindings: Mapping[str, Vector]) -> dict[str, Vector]:
    """Gradient ``+dL/dv`` per variable; requires a prior :func:`forward_eval` with the same bindings."""
    return expr.tape().backward(bindings)


def value_and_grad(expr: Expr, bindings: Mapping[str, Vector]) -> tuple[float, dict[str, Vector]]:
    tape = expr.tape()
    loss = tape.forward(bindings)
    return loss, tape.backward()


def finite_diff_grad(f: Callable[[dict], float], point: Mapping[str, Vector],
                     h: float = 1e-5) -> dict[str, Vector]:
    """Central-difference gradient of ``f`` at ``point``, one component at a time."""
    if not h > 0:
        raise ValueError("step h must be positive")
    base = {k: np.array(v, dtype=np.float64) for k, v in point.items()}
    grads = {}
    for name, x in base.items():
        g = np.empty_like(x)
        for k in range(x.size):
            orig = x[k]
            x[k] = orig + h
            fp = f(base)
            x[k] = orig - h
            fm = f(base)
            x[k] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise NonFiniteResult(f"non-finite loss near {name}[{k}]")
            g[k] = (fp - fm) / (2.0 * h)
        grads[name] = g
    return grads
