"""Command-line entry point.

    mbi list
    mbi run assembly_line --seed 0 --out runs/
    mbi run noisy --config overrides.cfg --audit
    mbi bench --n 100,1000,10000 --cycles 1
    mbi audit bic_quadratic --prior uniform:1:2 --truth 1.5

Exit status is 0 when the command completed (a run that exhausts its cycle
budget still completes) and 1 with a one-line diagnostic otherwise.
"""

from __future__ import annotations

import argparse
import contextlib
import gc
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import scenarios
from .bayes import TypePrior, bic_audit
from .config import apply_overrides, load_config
from .errors import MBIError
from .mechanism import RunResult, vcg_equivalence_audit

TRACE_HEADER = "cycle,loss,grad_norm,total_effort,wall_nanos"
MAX_SEED = 2**64 - 1
MAX_BENCH_N = 10**6
MAX_AUDIT_DIMS = 50


# -------------------------------------------------------------- writers

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def trace_rows(result: RunResult) -> list[str]:
    return [f"{t.cycle},{t.loss!r},{t.grad_norm!r},{t.total_effort},{t.wall_nanos}" for t in result.traces]


def emit_trace_csv(result: RunResult, path) -> None:
    """One row per cycle; reals use the shortest round-trip decimal form."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(TRACE_HEADER + "\n")
        for row in trace_rows(result):
            fh.write(row + "\n")


def _flatten(prefix: str, value, out: list) -> None:
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(value, (list, tuple)) and any(isinstance(v, (dict, list, tuple)) for v in value):
        for k, v in enumerate(value):
            _flatten(f"{prefix}.{k}", v, out)
    elif isinstance(value, (list, tuple, np.ndarray)):
        out.append((prefix, ",".join(_fmt(v) for v in np.asarray(value).ravel().tolist())))
    else:
        out.append((prefix, _fmt(value)))


def summary_lines(result: RunResult, reports: dict) -> list[str]:
    pairs = [("converged", _fmt(result.converged)), ("cycles_used", str(result.cycles_used)),
             ("final_loss", _fmt(float(result.final_loss)))]
    seen = {k for k, _ in pairs}
    flat: list = []
    _flatten("", reports, flat)
    pairs += [(k, v) for k, v in flat if k not in seen]
    return [f"{k}: {v}" for k, v in pairs]


def emit_summary(result: RunResult, reports: dict, path) -> None:
    """Machine-parsable ``key: value`` lines: convergence, budget, losses, oracle gap, audit verdicts."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in summary_lines(result, reports):
            fh.write(line + "\n")


# ---------------------------------------------------------------- bench

@dataclass
class BenchResult:
    n_values: list[int]
    median_nanos: list[float]
    slope: float | None

    def csv(self) -> str:
        lines = ["n,median_cycle_nanos"]
        lines += [f"{n},{t!r}" for n, t in zip(self.n_values, self.median_nanos)]
        return "\n".join(lines) + "\n"


@contextlib.contextmanager
def _gc_paused():
    # building millions of small objects triggers repeated full collections
    was = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was:
            gc.enable()


def log_log_slope(n_values, times) -> float | None:
    n = np.asarray(n_values, dtype=float)
    if np.unique(n).size < 2:
        return None
    slope, _ = np.polyfit(np.log(n), np.log(np.asarray(times, dtype=float)), 1)
    return float(slope)


def bench_scaling(n_values: Sequence[int], cycles: int = 1, seed: int = 0, reps: int = 5,
                  progress=None) -> BenchResult:
    """Median per-cycle wall time of the separable scenario at each ``N``, and the log-log slope.

    Each ``N`` is built once and warmed up with one cycle; each of ``reps``
    repetitions then times ``cycles`` consecutive cycles with the garbage
    collector paused.
    """
    ns = [int(n) for n in n_values]
    if not ns or any(n < 1 or n > MAX_BENCH_N for n in ns) or ns != sorted(ns):
        raise ValueError(f"n values must be ascending integers in [1, {MAX_BENCH_N}]")
    if cycles < 1 or reps < 5:
        raise ValueError("need cycles >= 1 and reps >= 5")
    base = scenarios.get("scaling_bench")
    medians = []
    for n in ns:
        agent = base.agents[0]
        agents = [scenarios.AgentSpec(lam=1.0 + (k % 7) / 7, eta=agent.eta) for k in range(n)]
        spec = base.copy(agents=agents, params={})
        with _gc_paused():
            mech = scenarios.build_mechanism(spec, record_agents=False)
        del agents, spec
        gc.collect()
        cycle = 1
        per_rep = []
        # like timeit, keep collector pauses out of the timed region
        with _gc_paused():
            mech.run_cycle(cycle, seed)
            for _ in range(reps):
                total = 0
                for _ in range(cycles):
                    cycle += 1
                    total += mech.run_cycle(cycle, seed).wall_nanos
                per_rep.append(total / cycles)
        medians.append(float(np.median(per_rep)))
        if progress:
            progress(n, medians[-1])
        del mech
        gc.collect()
    return BenchResult(ns, medians, log_log_slope(ns, medians))


# ------------------------------------------------------------- commands

def _seed(value) -> int:
    try:
        s = int(value)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {value!r}") from None
    if not 0 <= s <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return s


def _default_seed() -> int:
    env = os.environ.get("MBI_SEED")
    if env is None or env == "":
        return 0
    try:
        return _seed(env)
    except argparse.ArgumentTypeError as e:
        raise ValueError(f"MBI_SEED: {e}") from None


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")
    return out


def _load(name: str, config) -> scenarios.ScenarioSpec:
    spec = scenarios.get(name)
    if config:
        spec = apply_overrides(spec, load_config(config))
    return spec


def cmd_list(args) -> int:
    for spec in scenarios.catalog():
        print(f"{spec.name:22s} {spec.description}")
    return 0


def cmd_run(args) -> int:
    spec = _load(args.scenario, args.config)
    seed = args.seed if args.seed is not None else _default_seed()
    out = _out_dir(args.out)
    run = scenarios.run_scenario(spec, seed)
    reports = dict(run.report)
    if args.audit:
        mech = scenarios.build_mechanism(spec)
        optimum = scenarios.oracle_actions(spec, mech)
        if optimum is None or sum(spec.dims) > MAX_AUDIT_DIMS:
            raise ValueError(f"the externality audit needs a convex scenario with at most "
                             f"{MAX_AUDIT_DIMS} action dimensions")
        audit = vcg_equivalence_audit(mech, seed=seed, optimum=optimum)
        reports["vcg_verdict"] = audit.verdict
        reports["vcg_max_residual"] = audit.max_residual
    stem = f"{spec.name}_seed{seed}"
    if not args.no_trace:
        emit_trace_csv(run.result, out / f"{stem}_trace.csv")
    if not args.no_summary:
        emit_summary(run.result, reports, out / f"{stem}_summary.txt")
    print(f"{spec.name}: converged={_fmt(run.result.converged)} cycles={run.result.cycles_used} "
          f"loss={run.result.final_loss!r}")
    return 0


def cmd_bench(args) -> int:
    ns = [int(float(t)) for t in args.n.split(",")]
    seed = args.seed if args.seed is not None else _default_seed()

    def progress(n, t):
        print(f"n={n} median_cycle_nanos={t:.0f}", flush=True)

    res = bench_scaling(ns, args.cycles, seed, args.reps, progress)
    out = _out_dir(args.out)
    (out / "bench.csv").write_text(res.csv(), encoding="utf-8")
    print(f"slope: {'absent' if res.slope is None else repr(res.slope)}")
    return 0


def cmd_audit(args) -> int:
    spec = _load(args.scenario, args.config)
    family = scenarios.family_of(spec)
    prior = TypePrior.parse(args.prior)
    seed = args.seed if args.seed is not None else _default_seed()
    lo, hi = prior.support
    truth = args.truth if args.truth is not None else prior.mean
    grid = np.linspace(lo, hi, args.grid) if hi > lo else np.linspace(truth - 0.5, truth + 0.5, args.grid)
    if not np.any(np.isclose(grid, truth, rtol=0, atol=1e-12)):
        grid = np.unique(np.append(grid, truth))
    mechanism = args.mechanism or ("myerson" if hi > lo else "vcg")
    audit = bic_audit(family, args.agent - 1, prior, truth, grid, args.samples, seed, mechanism)
    out = _out_dir(args.out)
    lines = ["report,expected_utility"] + [f"{r!r},{u!r}" for r, u in audit.rows]
    (out / f"{spec.name}_bic_audit.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    summary = {"bic_mechanism": mechanism, "bic_truth": float(truth), "bic_argmax": audit.argmax,
               "bic_argmax_at_truth": audit.argmax_at_truth, "bic_verdict": audit.verdict}
    text = "".join(f"{k}: {_fmt(v)}\n" for k, v in summary.items())
    (out / f"{spec.name}_bic_summary.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mbi", description="Gradient-priced coordination of agents on a DAG")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("list", help="list built-in scenarios")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("run", help="run one scenario and write its trace and summary")
    p.add_argument("scenario")
    p.add_argument("--config", help="override file")
    p.add_argument("--seed", type=_seed, help="default: $MBI_SEED or 0")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--audit", action="store_true", help="attach the externality-integral audit")
    p.add_argument("--no-trace", action="store_true")
    p.add_argument("--no-summary", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="per-cycle timing over agent counts")
    p.add_argument("--n", required=True, help="comma-separated agent counts, ascending")
    p.add_argument("--cycles", type=int, default=1, help="cycles per timed repetition")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=_seed)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("audit", help="Bayesian truth-telling audit on a quadratic scenario")
    p.add_argument("scenario")
    p.add_argument("--prior", required=True, help="uniform:LO:HI, discrete:V=P,... or point:V")
    p.add_argument("--truth", type=float)
    p.add_argument("--agent", type=int, default=1)
    p.add_argument("--grid", type=int, default=17, help="report grid points")
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--mechanism", choices=("myerson", "vcg", "ignore_reports"))
    p.add_argument("--config")
    p.add_argument("--seed", type=_seed)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_audit)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MBIError, ValueError, KeyError, OSError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"mbi: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
