"""Bayesian extension: planner beliefs over private cost types.

When the planner cannot observe an agent's cost parameter it prices with
the mean of its prior.  For the quadratic family

    L(x) = (sum_j x_j - Y*)^2 + sum_j lam_j x_j^2

this module also builds the envelope-theorem transfer schedule for one
agent and audits, by Monte Carlo over the other agents' types, whether
truthful reporting maximises that agent's expected utility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import SCCViolation
from .oracle import quadratic_kkt_solution


@dataclass(frozen=True)
class TypePrior:
    """Prior over a scalar cost type: ``uniform(lo, hi)`` or a discrete distribution."""

    kind: str
    lo: float = 0.0
    hi: float = 0.0
    values: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == "uniform":
            if not 0 < self.lo < self.hi:
                raise ValueError(f"uniform prior needs 0 < lo < hi, got ({self.lo}, {self.hi})")
        elif self.kind == "discrete":
            if not self.values or len(self.values) != len(self.probs):
                raise ValueError("discrete prior needs matching values and probabilities")
            if min(self.values) <= 0:
                raise ValueError("types must be positive")
            if any(p < 0 for p in self.probs) or not math.isclose(sum(self.probs), 1.0, abs_tol=1e-12):
                raise ValueError("probabilities must be non-negative and sum to 1")
        else:
            raise ValueError(f"unknown prior kind {self.kind!r}")

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "TypePrior":
        return cls("uniform", float(lo), float(hi))

    @classmethod
    def discrete(cls, dist: dict[float, float]) -> "TypePrior":
        items = sorted(dist.items())
        return cls("discrete", values=tuple(float(v) for v, _ in items),
                   probs=tuple(float(p) for _, p in items))

    @classmethod
    def point(cls, value: float) -> "TypePrior":
        return cls.discrete({value: 1.0})

    @classmethod
    def parse(cls, text: str) -> "TypePrior":
        """``uniform:LO:HI``, ``discrete:V=P,V=P`` or ``point:V``."""
        kind, _, rest = text.strip().partition(":")
        try:
            if kind == "uniform":
                lo, hi = rest.split(":")
                return cls.uniform(float(lo), float(hi))
            if kind == "discrete":
                pairs = (item.split("=") for item in rest.split(","))
                return cls.discrete({float(v): float(p) for v, p in pairs})
            if kind == "point":
                return cls.point(float(rest))
        except ValueError as e:
            raise ValueError(f"bad prior {text!r}: {e}") from None
        raise ValueError(f"bad prior {text!r}")

    def __str__(self):
        if self.kind == "uniform":
            return f"uniform:{self.lo!r}:{self.hi!r}"
        return "discrete:" + ",".join(f"{v!r}={p!r}" for v, p in zip(self.values, self.probs))

    @property
    def mean(self) -> float:
        if self.kind == "uniform":
            return 0.5 * (self.lo + self.hi)
        return float(np.dot(self.values, self.probs))

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == "uniform":
            return self.lo, self.hi
        live = [v for v, p in zip(self.values, self.probs) if p > 0]
        return min(live), max(live)

    @property
    def degenerate(self) -> bool:
        lo, hi = self.support
        return lo == hi

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(self.lo, self.hi, size=size)
        return rng.choice(np.asarray(self.values), size=size, p=np.asarray(self.probs))


def expected_lambda(prior: TypePrior) -> float:
    return prior.mean


def bmbi_incentive(graph, agents, beliefs: dict, cfg=None) -> dict:
    """Incentive signals when the planner prices each agent's cost at its prior mean.

    Agents without an entry in ``beliefs`` are priced at their report.
    """
    from .mechanism import Mechanism, PlannerConfig

    cfg = cfg or PlannerConfig()
    means = {i: expected_lambda(p) for i, p in beliefs.items()}
    mech = Mechanism(graph, agents, replace(cfg, cost_beliefs=means))
    return mech.incentives()


# ---------------------------------------------------- quadratic family

@dataclass(frozen=True)
class QuadraticFamily:
    """``(sum x - Y*)^2 + sum lam_j x_j^2`` with ``n_agents`` scalar agents."""

    n_agents: int
    y_star: float

    def allocation(self, types: np.ndarray) -> np.ndarray:
        """Loss-minimising actions for a batch of type profiles of shape (M, N)."""
        types = np.atleast_2d(types)
        c = self.y_star / (1.0 + np.sum(1.0 / types, axis=1, keepdims=True))
        return c / types

    def loss(self, x: np.ndarray, types: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return (x.sum(axis=1) - self.y_star) ** 2 + np.sum(types * x * x, axis=1)

    def check(self) -> None:
        # closed form agrees with the scalar oracle on one profile
        lam = np.linspace(1.0, 2.0, self.n_agents)
        assert np.allclose(self.allocation(lam[None, :])[0], quadratic_kkt_solution(lam, self.y_star))


def _profiles(others: np.ndarray, i: int, own) -> np.ndarray:
    """Insert agent ``i``'s type column into sampled opponent types."""
    m = others.shape[0]
    col = np.broadcast_to(np.asarray(own, dtype=float), (m,))
    return np.insert(others, i, col, axis=1)


def _opponents(family: QuadraticFamily, prior: TypePrior, mc_samples: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return prior.sample(rng, (mc_samples, family.n_agents - 1))


@dataclass
class TransferSchedule:
    grid: np.ndarray
    transfers: np.ndarray             # expected utility schedule, anchored at grid[0]
    expected_sq_action: np.ndarray    # E[x_i(lam)^2]
    expected_action: np.ndarray       # E[x_i(lam)]

    def __post_init__(self):
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("transfer grid must be strictly ascending")
        if not np.isfinite(self.transfers).all():
            raise ValueError("transfers must be finite")

    def at(self, lam) -> np.ndarray:
        return np.interp(lam, self.grid, self.transfers)

    def sq_action_at(self, lam) -> np.ndarray:
        return np.interp(lam, self.grid, self.expected_sq_action)


def myerson_transfer_schedule(family: QuadraticFamily, i: int, prior: TypePrior, grid_size: int = 33,
                              mc_samples: int = 10000, seed: int = 0, anchor: float = 0.0) -> TransferSchedule:
    """Envelope-theorem schedule of agent ``i``'s expected utility over its type.

    With cost ``lam * x^2`` and truthful play, ``dU/dlam = -x_i(lam)^2``, so

        G(lam) = G(lam_min) + integral_{lam_min}^{lam} E[-x_i(s)^2] ds

    The expectation is a Monte-Carlo average over opponent types, reusing
    the same draws at every grid point.  The integral is a trapezoid rule
    on the grid.  Raises :class:`SCCViolation` if the expected allocation
    is not strictly decreasing in the type.
    """
    if grid_size < 8:
        raise ValueError("grid_size must be >= 8")
    lo, hi = prior.support
    others = _opponents(family, prior, mc_samples, seed)
    grid = np.array([lo]) if lo == hi else np.linspace(lo, hi, grid_size)
    mean_x = np.empty(grid.size)
    mean_x2 = np.empty(grid.size)
    for k, lam in enumerate(grid):
        x = family.allocation(_profiles(others, i, lam))[:, i]
        mean_x[k] = x.mean()
        mean_x2[k] = np.dot(x, x) / x.size
    if grid.size > 1 and np.any(np.diff(mean_x) >= 0):
        k = int(np.argmax(np.diff(mean_x) >= 0))
        raise SCCViolation(f"expected allocation rises between types {grid[k]} and {grid[k + 1]}")
    transfers = anchor + cumulative_trapezoid(-mean_x2, grid, initial=0.0) if grid.size > 1 else np.array([anchor])
    return TransferSchedule(grid, transfers, mean_x2, mean_x)


@dataclass
class BICAudit:
    truth: float
    reports: np.ndarray
    expected_utility: np.ndarray
    mechanism: str
    grid_step: float
    rows: list = field(default_factory=list)

    @property
    def argmax(self) -> float:
        return float(self.reports[int(np.argmax(self.expected_utility))])

    @property
    def flat(self) -> bool:
        eu = self.expected_utility
        return float(eu.max() - eu.min()) <= 1e-12 * max(1.0, float(np.abs(eu).max()))

    @property
    def argmax_at_truth(self) -> bool:
        return not self.flat and abs(self.argmax - self.truth) <= self.grid_step * (1 + 1e-9)

    @property
    def verdict(self) -> str:
        if self.flat:
            return "non-informative"
        return "truthful" if self.argmax_at_truth else "violation"


def bic_audit(family: QuadraticFamily, i: int, prior: TypePrior, truth: float, report_grid: Sequence[float],
              mc_samples: int = 10000, seed: int = 0, mechanism: str = "myerson",
              schedule: TransferSchedule | None = None) -> BICAudit:
    """Expected utility of agent ``i`` (true type ``truth``) for every report on ``report_grid``.

    Opponents report truthfully with types drawn from ``prior``.  Mechanisms:

    ``myerson``
        pays ``G(report) + report * x_i^2`` (interim rent plus cost
        reimbursement at the reported type).
    ``vcg``
        pays minus everyone else's loss, i.e. the integrated incentive.
    ``ignore_reports``
        negative control: allocation and payment ignore the report.
    """
    reports = np.asarray(report_grid, dtype=float)
    if reports.ndim != 1 or reports.size < 2 or np.any(np.diff(reports) <= 0):
        raise ValueError("report grid must be strictly ascending with at least two points")
    if not np.any(np.isclose(reports, truth, rtol=0, atol=1e-12)):
        raise ValueError("report grid must contain the true type")
    if mc_samples < 1000:
        raise ValueError("mc_samples must be >= 1000")
    others = _opponents(family, prior, mc_samples, seed)
    eu = np.empty(reports.size)
    if mechanism == "myerson":
        lo, hi = prior.support
        if reports[0] < lo - 1e-12 or reports[-1] > hi + 1e-12:
            raise ValueError("myerson audit needs reports inside the prior support")
        sched = schedule or myerson_transfer_schedule(family, i, prior, grid_size=max(8, 4 * (reports.size - 1) + 1),
                                                      mc_samples=mc_samples, seed=seed)
        for k, r in enumerate(reports):
            x = family.allocation(_profiles(others, i, r))[:, i]
            x2 = x * x
            pay = sched.at(r) + r * x2
            eu[k] = float(np.mean(pay - truth * x2))
    elif mechanism == "vcg":
        for k, r in enumerate(reports):
            x = family.allocation(_profiles(others, i, r))
            true_types = _profiles(others, i, truth)
            eu[k] = float(np.mean(-family.loss(x, true_types)))
    elif mechanism == "ignore_reports":
        x = family.allocation(_profiles(others, i, prior.mean))[:, i]
        base = float(np.mean(-truth * x * x))
        eu[:] = base
    else:
        raise ValueError(f"unknown mechanism {mechanism!r}")
    step = float(np.max(np.diff(reports)))
    rows = [(float(r), float(u)) for r, u in zip(reports, eu)]
    return BICAudit(float(truth), reports, eu, mechanism, step, rows)


# ----------------------------------------------- asymmetric information

@dataclass
class AsymmetricInfoReport:
    full_info: float
    bmbi: float
    misspecified: float
    per_seed: list = field(default_factory=list)

    @property
    def ordered(self) -> bool:
        return self.full_info <= self.bmbi + 1e-12 and self.bmbi <= self.misspecified + 1e-12

    @property
    def bmbi_excess(self) -> float:
        """Relative loss increase of the belief-priced mechanism over full information."""
        return self.bmbi / self.full_info - 1.0 if self.full_info else 0.0

    @property
    def misspecified_excess(self) -> float:
        return self.misspecified / self.full_info - 1.0 if self.full_info else 0.0


def asymmetric_info_experiment(scenario, prior: TypePrior | None = None, seeds: Sequence[int] = range(20),
                               misspecified: float | None = None) -> AsymmetricInfoReport:
    """Mean converged true loss for each way the planner can price hidden costs.

    For each seed the agents' true types are drawn from ``prior``; the
    mechanism runs to convergence with the planner pricing costs at (a) the
    true types, (b) the prior mean, (c) ``misspecified`` (default: the
    lowest type in the prior's support).  Each outcome is scored by the
    true global loss.
    """
    from .scenarios import converged_true_loss

    prior = prior or scenario.prior
    if prior is None:
        raise ValueError("scenario has no prior; pass one")
    wrong = prior.support[0] if misspecified is None else float(misspecified)
    rows = []
    for seed in seeds:
        rng = np.random.default_rng([seed, 0x7E])
        truth = prior.sample(rng, len(scenario.agents))
        full = converged_true_loss(scenario, truth, truth, seed)
        mean_belief = np.full(truth.size, prior.mean)
        bm = converged_true_loss(scenario, truth, mean_belief, seed)
        ms = converged_true_loss(scenario, truth, np.full(truth.size, wrong), seed)
        rows.append((seed, full, bm, ms))
    arr = np.array([r[1:] for r in rows])
    return AsymmetricInfoReport(*map(float, arr.mean(axis=0)), per_seed=rows)
