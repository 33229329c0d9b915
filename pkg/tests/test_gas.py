import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dfn.checks import random_network
from dfn.dissipation import g
from dfn.energy import E, hess_E
from dfn.errors import NegativePressureBound, NotGasNetwork, ZeroFriction
from dfn.gas import (GasNetworkInput, Pipe, gas_energy_closed_form, gas_hessian_closed_form,
                     potential_to_pressure, pressure_to_potential, to_dissipative)
from dfn.network import Network


def gas_input(**kw):
    base = dict(nodes=("s", "a", "b"), pipes=(Pipe("s", "a", 1.0), Pipe("a", "b", 4.0, 0.0, 1.0)),
                slack="s", slack_pressure=np.sqrt(5.0),
                p_lo={"s": np.sqrt(0.5), "a": np.sqrt(0.5), "b": np.sqrt(0.5)},
                p_hi={"s": np.sqrt(5.0), "a": np.sqrt(5.0), "b": np.sqrt(5.0)})
    base.update(kw)
    return GasNetworkInput(**base)


def test_pressure_bounds_become_squared():
    net, sc = to_dissipative(gas_input(), demands={"b": 3.0})
    assert sc.pi_lo == pytest.approx([0.5] * 3) and sc.pi_hi == pytest.approx([5.0] * 3)
    assert net.slack_potential == pytest.approx(5.0)
    assert np.all(net.alpha == 2.0)
    b = net.node_index("b")
    assert sc.x_lo[b] == -3.0 and sc.x_hi[b] == 0.0 and sc.cost[b] == 3.0


def test_no_compressor_edge_is_pinned():
    net, sc = to_dissipative(gas_input())
    assert sc.b_lo[0] == sc.b_hi[0] == 0.0 and not sc.b_is_variable[0]
    assert sc.b_hi[1] == 1.0 and sc.b_is_variable[1]


def test_delta_four_flow():
    net, _ = to_dissipative(gas_input())
    assert g(net.law(1), 1.0) == pytest.approx(0.5)


def test_errors():
    with pytest.raises(NegativePressureBound):
        to_dissipative(gas_input(p_lo={"a": -1.0}))
    with pytest.raises(NegativePressureBound):
        to_dissipative(gas_input(slack_pressure=-1.0))
    with pytest.raises(ZeroFriction):
        to_dissipative(gas_input(pipes=(Pipe("s", "a", 0.0), Pipe("a", "b", 1.0))))
    mixed = Network(2, [(0, 1, 1.0, 1.5)], slack=0)
    with pytest.raises(NotGasNetwork):
        gas_energy_closed_form(mixed, [0.0, 1.0])
    with pytest.raises(NotGasNetwork):
        gas_hessian_closed_form(mixed, [0.0, 1.0])


def test_closed_form_examples():
    one = Network(2, [(0, 1, 1.0, 2.0)], slack=0, slack_potential=4.0)
    four = Network(2, [(0, 1, 4.0, 2.0)], slack=0, slack_potential=1.0)
    assert gas_energy_closed_form(one, [4.0, 0.0]) == pytest.approx(16 / 3)
    assert gas_energy_closed_form(one, [4.0, 4.0]) == 0.0
    assert gas_energy_closed_form(four, [1.0, 0.0]) == pytest.approx(1 / 3)
    assert gas_hessian_closed_form(one, [4.0, 0.0]) == pytest.approx(np.array([[0.25]]))
    assert gas_hessian_closed_form(four, [1.0, 0.0]) == pytest.approx(np.array([[0.25]]))
    capped = gas_hessian_closed_form(one, [4.0, 4.0], smooth_eps=1e-4)
    assert capped == pytest.approx(np.array([[50.0]]))


@given(st.integers(0, 10**6))
def test_closed_forms_match_generic(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, alphas=(2.0,), b_scale=0.5)
    pi = rng.normal(scale=2.0, size=net.n_nodes)
    pi[0] = net.slack_potential
    e1, e2 = gas_energy_closed_form(net, pi), E(net, pi)
    assert abs(e1 - e2) <= 1e-12 * abs(e2) + 1e-300
    h1, h2 = gas_hessian_closed_form(net, pi), hess_E(net, pi).toarray()
    assert np.max(np.abs(h1 - h2)) <= 1e-12 * np.max(np.abs(h2))


@given(st.lists(st.floats(0.0, 1e6), min_size=1, max_size=10))
def test_pressure_round_trip_and_order(ps):
    p = np.array(ps)
    back = potential_to_pressure(pressure_to_potential(p))
    assert np.all(np.abs(back - p) <= 1e-15 * np.maximum(p, 1.0))
    order = np.argsort(p, kind="stable")
    assert np.all(np.diff(pressure_to_potential(p)[order]) >= 0)
