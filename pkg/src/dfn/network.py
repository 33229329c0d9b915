"""Graph, scenario and flow-state containers shared by every solver.

Nodes and edges are stored as dense integer indices.  The slack node is always
index 0 internally; original labels are kept in ``node_names``/``edge_names``
for reporting and for dict-style inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .dissipation import DissipationLaw
from .errors import DisconnectedGraph, InvalidBounds, NoSlack, ValidationError


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Edge:
    source: object
    target: object
    law: DissipationLaw = DissipationLaw()
    b: float | None = None
    name: object = None


class Network:
    """Immutable dissipative flow network.

    Parameters
    ----------
    nodes : int or sequence of labels
        Either a node count (labels ``0..n-1``) or the node labels.
    edges : sequence of :class:`Edge` or tuples ``(source, target[, delta, alpha[, b]])``
        Edge endpoints are node labels.  The listed order fixes the nominal
        direction: positive flow runs ``source -> target``.
    slack : label
        Node whose potential is pinned to ``slack_potential``.
    """

    def __init__(self, nodes, edges, slack=None, slack_potential: float = 0.0):
        labels = list(range(nodes)) if isinstance(nodes, (int, np.integer)) else list(nodes)
        if len(set(labels)) != len(labels):
            raise ValidationError("duplicate node labels")
        if slack is None:
            raise NoSlack("network needs exactly one slack node")
        if slack not in labels:
            raise NoSlack(f"slack node {slack!r} is not a node of the network")
        if not np.isfinite(slack_potential):
            raise InvalidBounds("slack potential must be finite")
        order = [slack] + [v for v in labels if v != slack]
        index = {v: k for k, v in enumerate(order)}

        tails, heads, deltas, alphas, bs, names = [], [], [], [], [], []
        for k, e in enumerate(edges):
            if not isinstance(e, Edge):
                e = _edge_from_tuple(e)
            for end in (e.source, e.target):
                if end not in index:
                    raise ValidationError(f"edge {k} references unknown node {end!r}")
            if e.source == e.target:
                raise ValidationError(f"edge {k} is a self-loop on node {e.source!r}")
            tails.append(index[e.source])
            heads.append(index[e.target])
            deltas.append(e.law.delta)
            alphas.append(e.law.alpha)
            bs.append(0.0 if e.b is None else float(e.b))
            names.append(k if e.name is None else e.name)
        if len(set(names)) != len(names):
            raise ValidationError("duplicate edge names")

        self.node_names = tuple(order)
        self.edge_names = tuple(names)
        self.slack_name = slack
        self.slack_potential = float(slack_potential)
        self.tail = _readonly(tails, int)
        self.head = _readonly(heads, int)
        self.delta = _readonly(deltas)
        self.alpha = _readonly(alphas)
        self.b_fixed = _readonly(bs)
        self._node_index = index
        self._edge_index = {n: k for k, n in enumerate(names)}

    # -- sizes and lookups -------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return len(self.node_names)

    @property
    def n_edges(self) -> int:
        return len(self.edge_names)

    @property
    def n_free(self) -> int:
        return self.n_nodes - 1

    def node_index(self, label) -> int:
        return self._node_index[label]

    def edge_index(self, name) -> int:
        return self._edge_index[name]

    def law(self, e: int) -> DissipationLaw:
        return DissipationLaw(float(self.delta[e]), float(self.alpha[e]))

    def with_slack_potential(self, value: float) -> "Network":
        clone = object.__new__(Network)
        clone.__dict__.update({k: v for k, v in self.__dict__.items() if k not in ("incidence", "incidence_dense", "components")})
        clone.slack_potential = float(value)
        return clone

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """Node-by-edge incidence: +1 at the tail, -1 at the head."""
        m = self.n_edges
        rows = np.concatenate([self.tail, self.head])
        cols = np.concatenate([np.arange(m), np.arange(m)])
        vals = np.concatenate([np.ones(m), -np.ones(m)])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_nodes, m))

    @cached_property
    def incidence_dense(self) -> np.ndarray:
        a = self.incidence.toarray()
        a.setflags(write=False)
        return a

    @cached_property
    def components(self) -> list[list]:
        n = self.n_nodes
        adj = sp.csr_matrix((np.ones(self.n_edges), (self.tail, self.head)), shape=(n, n))
        count, labels = connected_components(adj, directed=False)
        return [[self.node_names[i] for i in np.flatnonzero(labels == c)] for c in range(count)]

    @property
    def is_gas(self) -> bool:
        return bool(np.all(self.alpha == 2.0))

    # -- conversions -------------------------------------------------------
    def node_array(self, values, default: float = 0.0) -> np.ndarray:
        """Full node vector from a mapping keyed by label or an internal-order array."""
        if isinstance(values, Mapping):
            out = np.full(self.n_nodes, float(default))
            for k, v in values.items():
                out[self._node_index[k]] = v
            return out
        if np.isscalar(values):
            return np.full(self.n_nodes, float(values))
        arr = np.asarray(values, dtype=float)
        if arr.shape != (self.n_nodes,):
            raise ValueError(f"expected {self.n_nodes} node values, got shape {arr.shape}")
        return arr.copy()

    def edge_array(self, values, default: float = 0.0) -> np.ndarray:
        if values is None:
            return np.full(self.n_edges, float(default))
        if isinstance(values, Mapping):
            out = np.full(self.n_edges, float(default))
            for k, v in values.items():
                out[self._edge_index[k]] = v
            return out
        if np.isscalar(values):
            return np.full(self.n_edges, float(values))
        arr = np.asarray(values, dtype=float)
        if arr.shape != (self.n_edges,):
            raise ValueError(f"expected {self.n_edges} edge values, got shape {arr.shape}")
        return arr.copy()

    def free_injections(self, q) -> np.ndarray:
        """Injections over the non-slack nodes (length ``n_nodes - 1``).

        Accepts a mapping by label (a slack entry is ignored), a free-node array,
        or a full node array whose slack entry is ignored.
        """
        if isinstance(q, Mapping):
            q = {k: v for k, v in q.items() if k != self.slack_name}
            return self.node_array(q)[1:]
        arr = np.asarray(q, dtype=float)
        if arr.shape == (self.n_free,):
            return arr.copy()
        if arr.shape == (self.n_nodes,):
            return arr[1:].copy()
        raise ValueError(f"injections must have {self.n_free} or {self.n_nodes} entries")

    def full_injections(self, q) -> np.ndarray:
        """Free injections plus the slack entry implied by total balance."""
        qf = self.free_injections(q)
        return np.concatenate([[-qf.sum()], qf])

    def drops(self, pi, b) -> np.ndarray:
        """Potential drop ``pi_i - pi_j + b_ij`` that drives each edge."""
        return pi[self.tail] - pi[self.head] + b

    def outflow(self, phi) -> np.ndarray:
        return self.incidence @ phi

    def __repr__(self):
        return f"Network(n_nodes={self.n_nodes}, n_edges={self.n_edges}, slack={self.slack_name!r})"


def _edge_from_tuple(t) -> Edge:
    t = tuple(t)
    if len(t) == 2:
        return Edge(t[0], t[1])
    if len(t) == 4:
        return Edge(t[0], t[1], DissipationLaw(t[2], t[3]))
    if len(t) == 5:
        return Edge(t[0], t[1], DissipationLaw(t[2], t[3]), t[4])
    raise ValueError(f"cannot build an edge from {t!r}")


@dataclass(frozen=True)
class Scenario:
    """Bounds and costs of a max-throughput instance, all in internal order."""

    pi_lo: np.ndarray
    pi_hi: np.ndarray
    x_lo: np.ndarray
    x_hi: np.ndarray
    b_lo: np.ndarray
    b_hi: np.ndarray
    cost: np.ndarray
    b_is_variable: np.ndarray

    @classmethod
    def build(cls, network: Network, *, pi_lo=-np.inf, pi_hi=np.inf, x_lo=-np.inf,
              x_hi=np.inf, cost=0.0, b_lo=None, b_hi=None, b_is_variable=False) -> "Scenario":
        n = network
        blo = n.b_fixed.copy() if b_lo is None else n.edge_array(b_lo)
        bhi = n.b_fixed.copy() if b_hi is None else n.edge_array(b_hi)
        var = np.broadcast_to(np.asarray(b_is_variable, dtype=bool), (n.n_edges,)) if not isinstance(
            b_is_variable, Mapping) else n.edge_array(b_is_variable).astype(bool)
        xlo, xhi = n.node_array(x_lo, -np.inf), n.node_array(x_hi, np.inf)
        xlo[0], xhi[0] = -np.inf, np.inf
        return cls(
            pi_lo=_readonly(n.node_array(pi_lo, -np.inf)),
            pi_hi=_readonly(n.node_array(pi_hi, np.inf)),
            x_lo=_readonly(xlo),
            x_hi=_readonly(xhi),
            b_lo=_readonly(blo),
            b_hi=_readonly(bhi),
            cost=_readonly(n.node_array(cost, 0.0)),
            b_is_variable=_readonly(var, bool),
        )

    def b_box(self, network: Network, variable: bool | None = None):
        """Effective compressor box; non-variable edges are pinned to the network's fixed ``b``."""
        var = self.b_is_variable if variable is None else np.full(network.n_edges, bool(variable))
        lo = np.where(var, self.b_lo, network.b_fixed)
        hi = np.where(var, self.b_hi, network.b_fixed)
        return lo, hi

    def effective_pi_bounds(self, network: Network):
        """Potential box with the slack node pinned to its fixed value."""
        lo, hi = self.pi_lo.copy(), self.pi_hi.copy()
        lo[0] = hi[0] = network.slack_potential
        return lo, hi

    def with_pi_hi(self, value, network: Network) -> "Scenario":
        hi = network.node_array(value)
        return Scenario(self.pi_lo, _readonly(hi), self.x_lo, self.x_hi, self.b_lo, self.b_hi,
                        self.cost, self.b_is_variable)

    def with_variable_b(self, flag: bool) -> "Scenario":
        return Scenario(self.pi_lo, self.pi_hi, self.x_lo, self.x_hi, self.b_lo, self.b_hi,
                        self.cost, _readonly(np.full(len(self.b_lo), bool(flag)), bool))

    def same_as(self, other: "Scenario") -> bool:
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in self.__dataclass_fields__)


@dataclass
class FlowState:
    phi: np.ndarray
    pi: np.ndarray


@dataclass(frozen=True)
class ValidationReport:
    n_nodes: int
    n_edges: int
    n_components: int
    slack: object
    ok: bool = True
    notes: tuple = field(default_factory=tuple)


def validate(network: Network, scenario: Scenario | None = None) -> ValidationReport:
    """Check connectivity and bound consistency; raise on the first violation class."""
    comps = network.components
    if len(comps) != 1:
        raise DisconnectedGraph(comps)
    notes = []
    if scenario is not None:
        _check_bounds(network, scenario)
        if np.isfinite(scenario.x_lo[0]) or np.isfinite(scenario.x_hi[0]):
            notes.append("slack injection bounds are ignored")
    return ValidationReport(network.n_nodes, network.n_edges, 1, network.slack_name, True, tuple(notes))


def _check_bounds(network: Network, s: Scenario):
    n, m = network.n_nodes, network.n_edges
    for name, arr, size in [("pi_lo", s.pi_lo, n), ("pi_hi", s.pi_hi, n), ("x_lo", s.x_lo, n),
                            ("x_hi", s.x_hi, n), ("cost", s.cost, n), ("b_lo", s.b_lo, m),
                            ("b_hi", s.b_hi, m)]:
        if arr.shape != (size,):
            raise InvalidBounds(f"{name} has shape {arr.shape}, expected ({size},)")
        if np.isnan(arr).any():
            raise InvalidBounds(f"{name} contains NaN")
    for lo, hi, what, names in [(s.pi_lo, s.pi_hi, "potential", network.node_names),
                                (s.x_lo, s.x_hi, "injection", network.node_names),
                                (s.b_lo, s.b_hi, "compression", network.edge_names)]:
        bad = np.flatnonzero(lo > hi)
        if bad.size:
            raise InvalidBounds(f"inverted {what} bounds at {names[bad[0]]!r}: {lo[bad[0]]} > {hi[bad[0]]}")
    if not np.isfinite(s.cost).all():
        raise InvalidBounds("costs must be finite")
    p0 = network.slack_potential
    if not (s.pi_lo[0] <= p0 <= s.pi_hi[0]):
        raise InvalidBounds(
            f"slack potential {p0} outside its bounds [{s.pi_lo[0]}, {s.pi_hi[0]}] at {network.slack_name!r}")
    fixed = ~s.b_is_variable
    outside = fixed & ((network.b_fixed < s.b_lo - 1e-12) | (network.b_fixed > s.b_hi + 1e-12))
    if outside.any():
        e = np.flatnonzero(outside)[0]
        raise InvalidBounds(f"fixed compression on edge {network.edge_names[e]!r} lies outside its bounds")


def node_balance_residual(network: Network, injections, state: FlowState) -> np.ndarray:
    """``q_i - sum_j phi_ij`` per node; the slack injection is derived from total balance."""
    q = network.full_injections(injections)
    return q - network.outflow(np.asarray(state.phi, dtype=float))
