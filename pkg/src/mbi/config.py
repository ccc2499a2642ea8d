"""Line-based scenario override files.

    # comment
    [planner]
    epsilon = 1e-10
    tau = 1e-6

    [agent.1]          # the agent labelled x1
    lambda = 0.5
    rho = 0.1

Sections: ``planner``, ``graph``, ``agent.<k>``, ``noise``, ``schedule``,
``prior``.  Values are typed per key; lists are comma separated.
"""

from __future__ import annotations

import math
import re
from dataclasses import replace

from .agent import CostSpec
from .bayes import TypePrior
from .errors import NonConvexCost, ParseError, TypeMismatch, UnknownKey
from .scenarios import AgentSpec, ScenarioSpec, ScheduleSpec


def _real(lo=-math.inf, strict_lo=False):
    def conv(text):
        v = float(text)
        if not math.isfinite(v):
            raise ValueError("must be finite")
        if v < lo or (strict_lo and v == lo):
            raise ValueError(f"must be {'>' if strict_lo else '>='} {lo}")
        return v
    return conv


def _integer(lo):
    def conv(text):
        if not re.fullmatch(r"[+-]?\d+", text):
            raise ValueError("not an integer")
        v = int(text)
        if v < lo:
            raise ValueError(f"must be >= {lo}")
        return v
    return conv


def _reals(text):
    return tuple(_real()(t.strip()) for t in text.split(","))


def _choice(*options):
    def conv(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return conv


def _word(text):
    if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", text):
        raise ValueError("not a name")
    return text


POSITIVE = _real(0.0, strict_lo=True)
NONNEG = _real(0.0)

SCHEMA = {
    "planner": {"epsilon": POSITIVE, "tau": POSITIVE, "max_cycles": _integer(1), "eta": POSITIVE},
    "graph": {"y_star": _real(), "coupling": _reals, "targets": _reals, "n_agents": _integer(1)},
    "agent": {"lambda": POSITIVE, "reported_lambda": POSITIVE, "rho": NONNEG,
              "strategy": _choice("gradient", "best_response"), "dim": _integer(1), "eta": POSITIVE,
              "inner_eta": POSITIVE, "max_effort": _integer(0), "lo": _real(), "hi": _real(),
              "init": _reals, "cost": _word, "center": _reals},
    "noise": {"sigma": NONNEG},
    "schedule": {"kind": _choice("none", "step", "sinusoid"), "at": _integer(0), "before": _real(),
                 "after": _real(), "mean": _real(), "amplitude": _real(), "period": POSITIVE},
    "prior": {"kind": _choice("uniform", "discrete", "point"), "lo": POSITIVE, "hi": POSITIVE,
              "values": _reals, "probs": _reals, "misspecified": POSITIVE},
}

_SECTION = re.compile(r"\[\s*([A-Za-z_]+)(?:\.(\d+))?\s*\]")


def parse_config(text: str) -> dict:
    """Parse override text into ``{section: {key: typed value}}``.

    Agent sections are keyed ``"agent.<k>"``.  Each value keeps the line it
    came from in ``overrides["_lines"]`` so later validation can point at it.
    """
    out: dict = {"_lines": {}}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            m = _SECTION.fullmatch(line)
            if not m:
                raise ParseError(lineno, f"malformed section header {line!r}")
            name, idx = m.groups()
            if name not in SCHEMA or (name == "agent") != (idx is not None):
                raise UnknownKey(lineno, f"unknown section [{line[1:-1].strip()}]")
            if idx is not None and int(idx) < 1:
                raise UnknownKey(lineno, "agent sections count from 1")
            section = f"agent.{int(idx)}" if idx is not None else name
            out.setdefault(section, {})
            continue
        if "=" not in line:
            raise ParseError(lineno, f"expected 'key = value', got {line!r}")
        if section is None:
            raise ParseError(lineno, "key outside any section")
        key, _, value = (p.strip() for p in line.partition("="))
        if not key or not value:
            raise ParseError(lineno, "empty key or value")
        schema = SCHEMA[section.split(".")[0]]
        if key not in schema:
            raise UnknownKey(lineno, f"unknown key {key!r} in [{section}]")
        if key in out[section]:
            raise ParseError(lineno, f"duplicate key {key!r} in [{section}]")
        try:
            out[section][key] = schema[key](value)
        except ValueError as e:
            raise TypeMismatch(lineno, f"{section}.{key} = {value!r}: {e}") from None
        out["_lines"][(section, key)] = lineno
    return out


_AGENT_FIELDS = {"lambda": "lam", "reported_lambda": "reported"}


def apply_overrides(spec: ScenarioSpec, overrides: dict) -> ScenarioSpec:
    """A copy of ``spec`` with parsed overrides merged in; raises :class:`TypeMismatch` on invalid combinations."""
    lines = overrides.get("_lines", {})
    new = spec.copy()
    planner = overrides.get("planner", {})
    for key in ("epsilon", "tau", "max_cycles", "eta"):
        if key in planner:
            setattr(new, key, planner[key])
    graph = overrides.get("graph", {})
    if "n_agents" in graph:
        n = graph["n_agents"]
        new.agents = (new.agents + [replace(new.agents[-1]) for _ in range(n - len(new.agents))])[:n]
    for key in ("y_star", "coupling", "targets"):
        if key in graph:
            new.params[key] = list(graph[key]) if isinstance(graph[key], tuple) else graph[key]
    for section, values in overrides.items():
        if not section.startswith("agent."):
            continue
        k = int(section.split(".")[1])
        if k > new.n_agents:
            raise UnknownKey(lines.get((section, next(iter(values), "")), 0),
                             f"[{section}] but scenario {spec.name!r} has {new.n_agents} agents")
        agent: AgentSpec = new.agents[k - 1]
        for key, v in values.items():
            setattr(agent, _AGENT_FIELDS.get(key, key), v)
        if "cost" in values:
            try:
                CostSpec(agent.cost)
            except NonConvexCost as e:
                raise TypeMismatch(lines.get((section, "cost"), 0), str(e)) from None
    if "sigma" in overrides.get("noise", {}):
        new.noise_sigma = overrides["noise"]["sigma"]
    sched = overrides.get("schedule")
    if sched:
        if sched.get("kind") == "none":
            new.schedule = None
        else:
            base = new.schedule or ScheduleSpec()
            new.schedule = replace(base, **sched)
    prior = overrides.get("prior")
    if prior:
        new.prior = _prior(prior, new.prior, lines)
        if "misspecified" in prior:
            new.extra["misspecified"] = prior["misspecified"]
    return new


def _prior(values: dict, current: TypePrior | None, lines) -> TypePrior:
    kind = values.get("kind", current.kind if current else "uniform")
    line = lines.get(("prior", "kind"), 0)
    try:
        if kind == "uniform":
            lo = values.get("lo", current.lo if current and current.kind == "uniform" else None)
            hi = values.get("hi", current.hi if current and current.kind == "uniform" else None)
            if lo is None or hi is None:
                raise ValueError("uniform prior needs lo and hi")
            return TypePrior.uniform(lo, hi)
        if kind == "point":
            return TypePrior.point(values["lo"])
        probs = values.get("probs")
        if probs is None or len(probs) != len(values.get("values", ())):
            raise ValueError("discrete prior needs matching values and probs")
        return TypePrior.discrete(dict(zip(values["values"], probs)))
    except (KeyError, ValueError) as e:
        raise TypeMismatch(line, f"invalid prior: {e}") from None


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
