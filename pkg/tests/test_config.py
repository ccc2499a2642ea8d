from __future__ import annotations

import pytest

from mbi import scenarios
from mbi.bayes import TypePrior
from mbi.config import apply_overrides, load_config, parse_config
from mbi.errors import ParseError, TypeMismatch, UnknownKey


def test_planner_tolerances():
    cfg = parse_config("[planner]\nepsilon = 1e-10\ntau = 1e-6")
    assert cfg["planner"] == {"epsilon": 1e-10, "tau": 1e-6}


def test_agent_section():
    cfg = parse_config("[agent.1]\nlambda = 0.5\nrho = 0.1")
    assert cfg["agent.1"] == {"lambda": 0.5, "rho": 0.1}


def test_comments_and_blank_lines():
    cfg = parse_config("# header\n\n[noise]   # trailing\nsigma = 0.1  # note\n")
    assert cfg["noise"] == {"sigma": 0.1}
    assert cfg["_lines"][("noise", "sigma")] == 4


def test_type_mismatch_reports_line():
    with pytest.raises(TypeMismatch) as ei:
        parse_config("[planner]\ntau = 1e-6\nepsilon = fast\n")
    assert ei.value.line == 3
    assert "line 3" in str(ei.value)


@pytest.mark.parametrize("text,exc,line", [
    ("[planner]\nspeed = 2", UnknownKey, 2),
    ("[plannr]\n", UnknownKey, 1),
    ("[agent]\nrho = 1", UnknownKey, 1),
    ("[agent.0]\n", UnknownKey, 1),
    ("[planner\n", ParseError, 1),
    ("tau = 1", ParseError, 1),
    ("[planner]\njust words", ParseError, 2),
    ("[planner]\ntau =", ParseError, 2),
    ("[planner]\ntau = 1\ntau = 2", ParseError, 3),
    ("[planner]\nmax_cycles = 2.5", TypeMismatch, 2),
    ("[planner]\ntau = -1", TypeMismatch, 2),
    ("[planner]\ntau = nan", TypeMismatch, 2),
    ("[agent.2]\nstrategy = greedy", TypeMismatch, 2),
    ("[graph]\ncoupling = 1, x", TypeMismatch, 2),
])
def test_errors_carry_line(text, exc, line):
    with pytest.raises(exc) as ei:
        parse_config(text)
    assert ei.value.line == line


def test_list_values():
    cfg = parse_config("[graph]\ncoupling = 1, 0.5 ,2\n[agent.1]\ninit = -1,2")
    assert cfg["graph"]["coupling"] == (1.0, 0.5, 2.0)
    assert cfg["agent.1"]["init"] == (-1.0, 2.0)


def test_apply_planner_and_agent_overrides():
    spec = scenarios.get("assembly_line")
    new = apply_overrides(spec, parse_config("[planner]\neta = 0.2\nmax_cycles = 50\n[agent.1]\nlambda = 2\nrho = 0.1"))
    assert new.eta == 0.2 and new.max_cycles == 50
    assert new.agents[0].lam == 2.0 and new.agents[0].rho == 0.1
    # the catalog entry is untouched
    assert spec.eta != 0.2 and spec.agents[0].lam == 0.5


def test_apply_graph_noise_schedule():
    spec = scenarios.get("tracking")
    cfg = parse_config("[graph]\ny_star = 4\n[noise]\nsigma = 0.5\n[schedule]\nat = 10\nafter = 7")
    new = apply_overrides(spec, cfg)
    assert new.params["y_star"] == 4.0 and new.noise_sigma == 0.5
    assert new.schedule.at == 10 and new.schedule.after == 7.0 and new.schedule.kind == "step"
    off = apply_overrides(spec, parse_config("[schedule]\nkind = none"))
    assert off.schedule is None


def test_resize_agent_count():
    new = apply_overrides(scenarios.get("quadratic_n"), parse_config("[graph]\nn_agents = 7"))
    assert new.n_agents == 7
    assert scenarios.build_mechanism(new).run().converged


def test_agent_index_beyond_scenario():
    with pytest.raises(UnknownKey) as ei:
        apply_overrides(scenarios.get("assembly_line"), parse_config("\n[agent.3]\nlambda = 1"))
    assert ei.value.line == 3


def test_unknown_cost_is_a_type_mismatch():
    with pytest.raises(TypeMismatch) as ei:
        apply_overrides(scenarios.get("assembly_line"), parse_config("[agent.1]\ncost = wiggly"))
    assert ei.value.line == 2


def test_prior_overrides():
    spec = scenarios.get("asymmetric_info")
    new = apply_overrides(spec, parse_config("[prior]\nlo = 0.5\nhi = 3\nmisspecified = 2.5"))
    assert new.prior == TypePrior.uniform(0.5, 3.0) and new.extra["misspecified"] == 2.5
    disc = apply_overrides(spec, parse_config("[prior]\nkind = discrete\nvalues = 1, 2\nprobs = 0.5, 0.5"))
    assert disc.prior == TypePrior.discrete({1.0: 0.5, 2.0: 0.5})
    with pytest.raises(TypeMismatch):
        apply_overrides(spec, parse_config("[prior]\nkind = discrete\nvalues = 1, 2\nprobs = 1"))
    with pytest.raises(TypeMismatch):
        apply_overrides(spec, parse_config("[prior]\nlo = 3\nhi = 1"))


def test_load_config(tmp_path):
    p = tmp_path / "o.cfg"
    p.write_text("[planner]\ntau = 1e-7\n", encoding="utf-8")
    assert load_config(p)["planner"]["tau"] == 1e-7
