import numpy as np
import pytest
from conftest import small_instance, two_node

from dfn.energy import hess_E
from dfn.errors import InfeasibleScenario, NotConverged
from dfn.network import FlowState, Network, Scenario
from dfn.nf_solver import kkt_check
from dfn.throughput_energy import (EnergySettings, _Penalty, certify, solve_penalty, solve_throughput_energy)
from dfn.throughput_micp import BnbSettings, mccormick_violation, solve_micp


def test_two_node_closed_form_optimum():
    net, sc = two_node()
    sol = solve_throughput_energy(net, sc)
    assert sol.feasible
    assert sol.x[1] == pytest.approx(-2.0, abs=1e-6)
    assert sol.objective == pytest.approx(-2.0, abs=1e-6)
    assert sol.max_violation <= 1e-10


def test_injection_box_binds():
    net, sc = two_node(x_lo=-1.0)
    sol = solve_throughput_energy(net, sc)
    assert sol.x[1] == pytest.approx(-1.0, abs=1e-8) and sol.feasible


def test_zero_costs_give_certified_zero():
    net, sc = two_node(cost=0.0)
    sol = solve_throughput_energy(net, sc)
    assert sol.feasible and sol.objective == 0.0


def test_certify_examples():
    net, sc = two_node()
    wide = Scenario.build(net, pi_lo=-100.0, pi_hi=100.0, x_lo=-5.0, x_hi=5.0, cost=[0.0, 1.0])
    zero = certify(net, wide, [0.0])
    assert zero.feasible and zero.objective == 0.0
    best = certify(net, sc, [-2.0])
    assert best.feasible and best.objective == pytest.approx(-2.0)
    bad = certify(net, sc, [-3.0])
    assert not bad.feasible and bad.pi[1] == pytest.approx(-5.0)


def test_formulation1_meets_epsilon():
    net, sc = two_node()
    sol = solve_throughput_energy(net, sc, EnergySettings(method="formulation1", epsilon=1e-3))
    assert sol.feasible and sol.objective == pytest.approx(-2.0, abs=1e-6)


def test_infeasible_scenario():
    net = Network(2, [(0, 1, 1.0, 2.0)], slack=0, slack_potential=4.0)
    sc = Scenario.build(net, pi_lo=[4.0, 0.0], pi_hi=[4.0, 3.0], x_lo=[0.0, -0.5], x_hi=[0.0, 0.0],
                        cost=[0.0, 1.0])
    with pytest.raises(InfeasibleScenario):
        solve_throughput_energy(net, sc)


def test_not_converged_carries_best():
    net, sc = small_instance(np.random.default_rng(4), max_edges=6)
    with pytest.raises(NotConverged) as info:
        solve_throughput_energy(net, sc, EnergySettings(max_outer=1, continuation=False))
    assert info.value.best is not None and info.value.best.status == "not_converged"


def test_settings_validation():
    with pytest.raises(ValueError):
        EnergySettings(big_m=0.0)
    with pytest.raises(ValueError):
        EnergySettings(method="formulation3")


@pytest.mark.parametrize("engine", ["alternating", "reduced"])
def test_penalty_objective_monotone(engine, gas16):
    net, sc = gas16.columns[0].apply(gas16.network, gas16.scenario)
    raw = solve_penalty(net, sc, EnergySettings(engine=engine, big_m=100.0))
    h = np.array(raw["history"])
    assert np.all(np.diff(h) <= 1e-9 * (1 + np.abs(h[:-1])))


def test_block_hessians_are_psd(gas16):
    net, sc = gas16.columns[1].apply(gas16.network, gas16.scenario)
    raw = solve_penalty(net, sc, EnergySettings(big_m=1e3))
    pen = _Penalty(net, sc, 1e3, EnergySettings().newton)
    assert np.linalg.eigvalsh(hess_E(net, raw["pi"], raw["b"]).toarray()).min() > 0
    ev = pen.conj(raw["x"], raw["b"])
    assert np.linalg.eigvalsh(np.linalg.inv(hess_E(net, ev.pi_star, raw["b"]).toarray())).min() > 0


@pytest.mark.parametrize("seed", range(6))
def test_certified_points_are_valid_upper_bounds(seed):
    net, sc = small_instance(np.random.default_rng(100 + seed))
    sol = solve_throughput_energy(net, sc)
    assert sol.feasible
    x = sol.x[1:]
    assert kkt_check(net, x, sol.b, FlowState(sol.phi, sol.pi)) <= 1e-8
    lo, hi = sc.effective_pi_bounds(net)
    assert np.all(sol.pi >= lo - 1e-6) and np.all(sol.pi <= hi + 1e-6)
    assert np.all(x >= sc.x_lo[1:] - 1e-6) and np.all(x <= sc.x_hi[1:] + 1e-6)
    assert mccormick_violation(net, sc, sol.pi, sol.phi, sol.b).max() <= 1e-9
    lower = solve_micp(net, sc, BnbSettings(abs_gap_tol=1e-9, rel_gap_tol=1e-9))
    assert lower.lower_bound <= sol.objective + 1e-8


def test_penalty_consistency_across_big_m(gas16):
    net, sc = gas16.columns[0].apply(gas16.network, gas16.scenario)
    lower = solve_micp(net, sc).lower_bound
    gaps = [solve_throughput_energy(net, sc, EnergySettings(big_m=m)).objective - lower for m in (1e2, 1e3, 1e4)]
    assert all(g >= -1e-8 for g in gaps)
    assert gaps[0] >= gaps[1] >= gaps[2]


def test_variable_compression_never_hurts(gas16):
    net, sc = gas16.columns[2].apply(gas16.network, gas16.scenario)
    fixed = solve_throughput_energy(net, sc)
    free = solve_throughput_energy(net, sc.with_variable_b(True))
    assert free.objective <= fixed.objective + 1e-6
    assert np.all(free.b >= sc.b_lo - 1e-12) and np.all(free.b <= sc.b_hi + 1e-12)
