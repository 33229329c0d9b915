"""Natural-gas front end: pressures, quadratic friction and additive compressors.

Gas networks are dissipative networks with potential ``pi = p**2`` and law
``f(phi) = delta * phi * |phi|`` (``alpha = 2``).  Compressors add a boost ``b``
in pressure-squared units to the drop of their edge.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import dissipation as dis
from .dissipation import DissipationLaw
from .errors import NegativePressureBound, NotGasNetwork, ZeroFriction
from .network import Edge, Network, Scenario, validate
from .nf_solver import _b, reduced_laplacian


def pressure_to_potential(p):
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise NegativePressureBound("pressures must be nonnegative")
    return p * p


def potential_to_pressure(pi):
    pi = np.asarray(pi, dtype=float)
    if np.any(pi < 0):
        raise NegativePressureBound("pressure-squared values must be nonnegative")
    return np.sqrt(pi)


@dataclass(frozen=True)
class Pipe:
    source: object
    target: object
    delta: float
    b_lo: float = 0.0
    b_hi: float = 0.0
    name: object = None

    @property
    def has_compressor(self) -> bool:
        return self.b_hi > self.b_lo


@dataclass(frozen=True)
class GasNetworkInput:
    """Gas network in physical variables.

    ``p_lo``/``p_hi`` map node labels to pressure bounds (missing entries are
    unbounded above and ``0`` below).  Compressor ranges are in
    pressure-squared units; a pipe without a compressor has ``b_lo == b_hi == 0``.
    """

    nodes: tuple
    pipes: tuple
    slack: object
    slack_pressure: float
    p_lo: Mapping = field(default_factory=dict)
    p_hi: Mapping = field(default_factory=dict)


def to_dissipative(gas: GasNetworkInput, demands: Mapping | None = None, supplies: Mapping | None = None,
                   costs: Mapping | None = None, compressors_variable: bool = True):
    """Build ``(Network, Scenario)`` with ``alpha = 2`` and ``pi = p**2``.

    ``demands`` maps consumers to their nominal demand ``d >= 0``; a consumer may
    withdraw up to ``d`` (``-d <= x <= 0``) and, unless ``costs`` overrides it, has
    cost ``c = d`` so that minimising ``c^T x`` maximises demand-weighted delivery.
    ``supplies`` maps sources to their maximum injection.  Other nodes are
    pure junctions with ``x = 0``.
    """
    if gas.slack_pressure < 0:
        raise NegativePressureBound(f"slack pressure {gas.slack_pressure} is negative")
    for k, (lo, hi) in {**{n: (v, None) for n, v in gas.p_lo.items()},
                        **{n: (None, v) for n, v in gas.p_hi.items()}}.items():
        for v in (lo, hi):
            if v is not None and v < 0:
                raise NegativePressureBound(f"negative pressure bound at node {k!r}")
    edges = []
    for k, p in enumerate(gas.pipes):
        if not np.isfinite(p.delta) or p.delta <= 0:
            raise ZeroFriction(f"pipe {k if p.name is None else p.name!r} has friction {p.delta}")
        edges.append(Edge(p.source, p.target, DissipationLaw(float(p.delta), 2.0), 0.0, p.name))
    net = Network(gas.nodes, edges, slack=gas.slack,
                  slack_potential=float(pressure_to_potential(gas.slack_pressure)))

    pi_lo = {n: float(pressure_to_potential(v)) for n, v in gas.p_lo.items()}
    pi_hi = {n: float(pressure_to_potential(v)) for n, v in gas.p_hi.items()}
    demands = dict(demands or {})
    supplies = dict(supplies or {})
    x_lo = {n: 0.0 for n in gas.nodes}
    x_hi = {n: 0.0 for n in gas.nodes}
    cost = {n: 0.0 for n in gas.nodes}
    for n, d in demands.items():
        if d < 0:
            raise ValueError(f"nominal demand at {n!r} must be nonnegative")
        x_lo[n] = -float(d)
        cost[n] = float(d)
    for n, s in supplies.items():
        x_hi[n] = float(s)
    if costs is not None:
        cost.update({n: float(v) for n, v in costs.items()})
    sc = Scenario.build(
        net, pi_lo=_fill(net, pi_lo, 0.0), pi_hi=_fill(net, pi_hi, np.inf),
        x_lo=x_lo, x_hi=x_hi, cost=cost,
        b_lo=[p.b_lo for p in gas.pipes], b_hi=[p.b_hi for p in gas.pipes],
        b_is_variable=[compressors_variable and p.has_compressor for p in gas.pipes],
    )
    validate(net, sc)
    return net, sc


def _fill(net: Network, values: Mapping, default: float) -> np.ndarray:
    out = np.full(net.n_nodes, default)
    for k, v in values.items():
        out[net.node_index(k)] = v
    return out


def _require_gas(network: Network):
    if not network.is_gas:
        bad = np.flatnonzero(network.alpha != 2.0)
        raise NotGasNetwork(f"edge {network.edge_names[bad[0]]!r} has alpha {network.alpha[bad[0]]}, not 2")


def gas_energy_closed_form(network: Network, pi, b=None) -> float:
    """``(2/3) * sum |pi_i - pi_j + b_ij|**1.5 / sqrt(delta_ij)``."""
    _require_gas(network)
    y = network.drops(network.node_array(pi), _b(network, b))
    return float((2.0 / 3.0) * np.sum(np.abs(y) ** 1.5 / np.sqrt(network.delta)))


def gas_hessian_closed_form(network: Network, pi, b=None,
                            smooth_eps: float = dis.DEFAULT_SMOOTH_EPS) -> np.ndarray:
    """Reduced Laplacian with weights ``1 / (2 sqrt(delta |drop|))``, drops capped below at ``smooth_eps``."""
    _require_gas(network)
    y = network.drops(network.node_array(pi), _b(network, b))
    w = 1.0 / (2.0 * np.sqrt(network.delta * np.maximum(np.abs(y), smooth_eps)))
    return np.asarray(reduced_laplacian(network, w, sparse=False))
