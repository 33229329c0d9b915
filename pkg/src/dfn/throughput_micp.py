"""Max-throughput lower bounds from the mixed-integer McCormick relaxation.

Each edge gets a direction ``s_e`` in {-1, +1}.  With ``d = pi_i - pi_j + b_e``
ranging over ``[L, U]``, the relaxation keeps

    delta |phi|^alpha <= s U - d + U
    delta |phi|^alpha <= s L + d - L

and, for fixed ``s``, the sign coupling ``s phi >= 0``.  For fixed ``s = +1``
this reads ``f(phi) <= d``: the drop may exceed what friction needs.  Relaxed
``s`` in ``[-1, 1]`` makes the program convex; branch-and-bound over the
directions then solves the mixed-integer problem exactly.
"""
from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .barrier import BarrierSettings, ConvexProgram, solve_barrier
from .errors import BarrierNonconvergence, InvalidBounds, MismatchedScenario, NodeLimit
from .network import Network, Scenario, validate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DirectionAssignment:
    """Edge directions: +1 / -1 fixed, 0 free (relaxed to [-1, 1])."""

    s: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=int)
        if not np.all(np.isin(s, (-1, 0, 1))):
            raise ValueError("directions must be -1, +1 or 0 (free)")
        object.__setattr__(self, "s", s)

    @classmethod
    def free(cls, n_edges: int) -> "DirectionAssignment":
        return cls(np.zeros(n_edges, dtype=int))

    @property
    def free_edges(self) -> np.ndarray:
        return np.flatnonzero(self.s == 0)

    @property
    def complete(self) -> bool:
        return not np.any(self.s == 0)

    def fix(self, edge: int, sign: int) -> "DirectionAssignment":
        s = self.s.copy()
        s[edge] = sign
        return DirectionAssignment(s)


@dataclass(frozen=True)
class BnbSettings:
    abs_gap_tol: float = 1e-6
    rel_gap_tol: float = 1e-6
    max_nodes: int = 1_000_000
    barrier: BarrierSettings = BarrierSettings()
    b_variable: bool | None = None

    def __post_init__(self):
        if self.abs_gap_tol <= 0 or self.rel_gap_tol <= 0 or self.max_nodes < 1:
            raise ValueError("gap tolerances must be positive and max_nodes >= 1")


@dataclass
class MicpPoint:
    x: np.ndarray
    pi: np.ndarray
    phi: np.ndarray
    b: np.ndarray
    s: np.ndarray
    objective: float


@dataclass
class MicpResult:
    lower_bound: float
    objective: float
    best_assignment: DirectionAssignment | None
    best_point: MicpPoint | None
    nodes_explored: int
    status: str
    bound_history: list = field(default_factory=list, repr=False)


def mccormick_bounds(network: Network, scenario: Scenario):
    """``(L, U)``: range of ``pi_i - pi_j + b_e`` per edge over the boxes (slack pinned)."""
    lo, hi = scenario.effective_pi_bounds(network)
    b_lo, b_hi = scenario.b_box(network)
    t, h = network.tail, network.head
    return lo[t] - hi[h] + b_lo, hi[t] - lo[h] + b_hi


def mccormick_violation(network: Network, scenario: Scenario, pi, phi, b, s=None) -> np.ndarray:
    """Per-edge violation (>= 0) of both McCormick inequalities; ``s`` defaults to sgn(phi), ties +1."""
    phi = np.asarray(phi, dtype=float)
    s = np.where(phi < 0, -1.0, 1.0) if s is None else np.asarray(s, dtype=float)
    low, up = mccormick_bounds(network, scenario)
    d = network.drops(pi, b)
    lhs = network.delta * np.abs(phi) ** network.alpha
    v1 = lhs - (s * up - d + up)
    v2 = lhs - (s * low + d - low)
    return np.maximum(np.maximum(v1, v2), 0.0)


class _Builder:
    """Assembles the relaxed convex program for one (network, scenario)."""

    def __init__(self, network: Network, scenario: Scenario):
        pi_lo, pi_hi = scenario.effective_pi_bounds(network)
        b_lo, b_hi = scenario.b_box(network)
        if not (np.all(np.isfinite(pi_lo)) and np.all(np.isfinite(pi_hi))):
            raise InvalidBounds("the relaxation needs finite potential bounds on every node")
        if not (np.all(np.isfinite(b_lo)) and np.all(np.isfinite(b_hi))):
            raise InvalidBounds("the relaxation needs finite compressor bounds")
        self.net, self.sc = network, scenario
        self.low, self.up = mccormick_bounds(network, scenario)
        n, m = network.n_free, network.n_edges
        self.n, self.m = n, m
        # compressors with a degenerate box are constants
        self.b_idx = np.flatnonzero(b_hi > b_lo)
        self.b_const = np.where(b_hi > b_lo, 0.0, b_lo)
        self.k = self.b_idx.size
        self.pi_lo, self.pi_hi, self.b_lo, self.b_hi = pi_lo, pi_hi, b_lo, b_hi
        self.a_full = network.incidence_dense
        self.cost_phi = self.a_full.T @ scenario.cost

        # drops as affine maps of [pi_free, phi, b_var]: d = D v + d0
        nv = n + m + self.k
        dmat = np.zeros((m, nv))
        d0 = self.b_const.copy()
        for e, (i, j) in enumerate(zip(network.tail, network.head)):
            for node, sign in ((i, 1.0), (j, -1.0)):
                if node == 0:
                    d0[e] += sign * network.slack_potential
                else:
                    dmat[e, node - 1] += sign
        dmat[self.b_idx, n + m + np.arange(self.k)] = 1.0
        self.dmat, self.d0 = dmat, d0

        rows, rhs, eq_rows, eq_rhs = [], [], [], []

        def box(row, lo_v, hi_v):
            if lo_v == hi_v:
                eq_rows.append(row)
                eq_rhs.append(lo_v)
                return
            if np.isfinite(hi_v):
                rows.append(row)
                rhs.append(hi_v)
            if np.isfinite(lo_v):
                rows.append(-row)
                rhs.append(-lo_v)

        for i in range(n):
            row = np.zeros(nv)
            row[i] = 1.0
            box(row, pi_lo[i + 1], pi_hi[i + 1])
        a_free = self.a_full[1:, :]
        for i in range(n):
            row = np.zeros(nv)
            row[n:n + m] = a_free[i]
            box(row, scenario.x_lo[i + 1], scenario.x_hi[i + 1])
        for c, e in enumerate(self.b_idx):
            row = np.zeros(nv)
            row[n + m + c] = 1.0
            box(row, b_lo[e], b_hi[e])
        self.rows, self.rhs = rows, rhs
        self.eq_rows, self.eq_rhs = eq_rows, eq_rhs

    def program(self, assign: DirectionAssignment) -> tuple[ConvexProgram, np.ndarray]:
        n, m, k = self.n, self.m, self.k
        free = assign.free_edges
        r = free.size
        nv = n + m + k + r

        def widen(mat):
            mat = np.atleast_2d(mat)
            return np.hstack([mat, np.zeros((mat.shape[0], r))])

        g = [widen(np.array(self.rows))] if self.rows else []
        h = list(self.rhs)
        for c in range(r):
            row = np.zeros(nv)
            row[n + m + k + c] = 1.0
            g += [row[None, :], -row[None, :]]
            h += [1.0, 1.0]
        fixed = np.flatnonzero(assign.s != 0)
        for e in fixed:
            # sign coupling s * phi >= 0
            row = np.zeros(nv)
            row[n + e] = -float(assign.s[e])
            g.append(row[None, :])
            h.append(0.0)

        dm = widen(self.dmat)
        svar = np.zeros((m, nv))
        svar[free, n + m + k + np.arange(r)] = 1.0
        s_fixed = assign.s.astype(float)
        up, low = self.up, self.low
        # delta|phi|^alpha <= s U - d + U  and  <= s L + d - L
        q1 = up[:, None] * svar - dm
        q1c = s_fixed * up - self.d0 + up
        q2 = low[:, None] * svar + dm
        q2c = s_fixed * low + self.d0 - low
        pmat = np.zeros((m, nv))
        pmat[np.arange(m), n + np.arange(m)] = 1.0
        prog = ConvexProgram(
            c=np.concatenate([np.zeros(n), self.cost_phi, np.zeros(k + r)]),
            G=np.vstack(g) if g else np.zeros((0, nv)),
            h=np.array(h, dtype=float),
            P=np.vstack([pmat, pmat]), p=np.zeros(2 * m),
            Q=np.vstack([q1, q2]), q=np.concatenate([q1c, q2c]),
            delta=np.concatenate([self.net.delta, self.net.delta]),
            alpha=np.concatenate([self.net.alpha, self.net.alpha]),
            E=widen(np.array(self.eq_rows)) if self.eq_rows else np.zeros((0, nv)),
            e=np.array(self.eq_rhs, dtype=float),
        )
        return prog, free

    def point(self, v, assign: DirectionAssignment, free, value) -> MicpPoint:
        n, m, k = self.n, self.m, self.k
        pi = np.concatenate([[self.net.slack_potential], v[:n]])
        phi = v[n:n + m]
        b = self.b_const.copy()
        b[self.b_idx] = v[n + m:n + m + k]
        s = assign.s.astype(float)
        s[free] = v[n + m + k:]
        return MicpPoint(x=self.a_full @ phi, pi=pi, phi=phi, b=b, s=s, objective=value)


def _prepare(network: Network, scenario: Scenario, settings: BnbSettings) -> Scenario:
    if settings.b_variable is not None:
        scenario = scenario.with_variable_b(settings.b_variable)
    validate(network, scenario)
    return scenario


def _solve_node(builder: _Builder, assign: DirectionAssignment, barrier: BarrierSettings):
    prog, free = builder.program(assign)
    res = None
    for attempt in range(3):
        try:
            res = solve_barrier(prog, barrier)
            break
        except BarrierNonconvergence:
            # near-degenerate interiors: a wider relaxation keeps the bound valid and the
            # Newton systems well conditioned
            barrier = replace(barrier, relax=max(barrier.relax, 1e-12) * 1e3,
                              shrink=barrier.shrink ** 0.5, max_newton=2 * barrier.max_newton)
    if res is None:
        log.warning("barrier failed on a node; using -inf as its bound")
        return -np.inf, None
    if not res.feasible:
        return np.inf, None
    return res.bound, builder.point(res.v, assign, free, res.value)


def relaxed_subproblem(network: Network, scenario: Scenario, s: DirectionAssignment | None = None,
                       settings: BnbSettings = BnbSettings(), _builder=None):
    """Lower bound over the directions compatible with ``s`` (``inf`` when infeasible).

    Returns ``(value, point)``; ``point`` is ``None`` when infeasible.
    """
    if _builder is None:
        scenario = _prepare(network, scenario, settings)
        _builder = _Builder(network, scenario)
    s = DirectionAssignment.free(network.n_edges) if s is None else s
    if s.s.size != network.n_edges:
        raise ValueError("direction assignment has the wrong number of edges")
    return _solve_node(_builder, s, settings.barrier)


def _branch_edge(builder: _Builder, assign: DirectionAssignment, point: MicpPoint) -> int:
    """Free edge with the largest relaxed flow, weighted by how much the direction matters."""
    free = assign.free_edges
    d = builder.net.drops(point.pi, point.b)[free]
    up, low = builder.up[free], builder.low[free]
    plus = np.minimum(2 * up - d, d)
    minus = np.minimum(-d, d - 2 * low)
    score = np.abs(point.phi[free]) * (1.0 + np.abs(plus - minus))
    return int(free[np.argmax(score)])


def _closed(upper, lower, settings: BnbSettings) -> bool:
    return upper - lower <= max(settings.abs_gap_tol, settings.rel_gap_tol * abs(upper))


def solve_micp(network: Network, scenario: Scenario, settings: BnbSettings = BnbSettings(),
               seed_upper: float | None = None) -> MicpResult:
    """Best-first branch-and-bound over edge directions.

    ``seed_upper`` (a known feasible objective, e.g. from the energy heuristic)
    only prunes nodes whose bound exceeds it; the incumbent always comes from
    fully assigned leaves.  Raises :class:`NodeLimit` (result attached) when
    ``max_nodes`` subproblems did not close the gap.
    """
    scenario = _prepare(network, scenario, settings)
    builder = _Builder(network, scenario)
    counter = itertools.count()
    root = DirectionAssignment.free(network.n_edges)
    bound, point = _solve_node(builder, root, settings.barrier)
    nodes = 1
    incumbent, best_assign, best_point = np.inf, None, None
    prune_at = np.inf if seed_upper is None else float(seed_upper)
    heap = []
    if np.isfinite(bound):
        heapq.heappush(heap, (bound, next(counter), root, point, bound))
    history = []

    def global_lower():
        return min(incumbent, heap[0][0]) if heap else incumbent

    while heap:
        history.append(global_lower())
        bound, _, assign, point, own = heap[0]
        if np.isfinite(incumbent) and _closed(incumbent, bound, settings):
            break
        heapq.heappop(heap)
        if bound > prune_at:
            # the relaxed optimum is never above a feasible objective
            continue
        if assign.complete:
            if own < incumbent:
                incumbent, best_assign, best_point = own, assign, point
            continue
        if nodes >= settings.max_nodes:
            heapq.heappush(heap, (bound, next(counter), assign, point, own))
            result = MicpResult(global_lower(), incumbent, best_assign, best_point, nodes, "node_limit", history)
            raise NodeLimit(f"node limit {settings.max_nodes} reached", result=result)
        e = _branch_edge(builder, assign, point)
        for sign in (1, -1):
            child = assign.fix(e, sign)
            cb, cp = _solve_node(builder, child, settings.barrier)
            nodes += 1
            if np.isfinite(cb):
                # a child's feasible set is contained in its parent's
                heapq.heappush(heap, (max(cb, bound), next(counter), child, cp, cb))
    lower = global_lower()
    history.append(lower)
    status = "optimal" if np.isfinite(incumbent) else "infeasible"
    return MicpResult(lower, incumbent, best_assign, best_point, nodes, status, history)


def enumerate_directions(network: Network, scenario: Scenario, settings: BnbSettings = BnbSettings()):
    """Brute force: the best fully assigned relaxed subproblem over all 2^M directions."""
    scenario = _prepare(network, scenario, settings)
    builder = _Builder(network, scenario)
    best, best_s = np.inf, None
    for signs in itertools.product((1, -1), repeat=network.n_edges):
        assign = DirectionAssignment(np.array(signs))
        val, _ = _solve_node(builder, assign, settings.barrier)
        if val < best:
            best, best_s = val, assign
    return best, best_s


def optimality_gap(upper, lower: MicpResult, network: Network | None = None,
                   scenario: Scenario | None = None, lower_scenario: Scenario | None = None) -> float:
    """Certified suboptimality ``upper.objective - lower.lower_bound``.

    When scenarios are given they must describe the same instance.
    """
    if scenario is not None and lower_scenario is not None and not scenario.same_as(lower_scenario):
        raise MismatchedScenario("upper and lower bounds come from different scenarios")
    if network is not None and upper.x.size != network.n_nodes:
        raise MismatchedScenario("upper bound point does not match the network")
    if lower.best_point is not None and lower.best_point.x.size != upper.x.size:
        raise MismatchedScenario("upper and lower bound points have different sizes")
    if not np.isfinite(lower.lower_bound):
        raise MismatchedScenario("lower bound is not finite")
    return float(upper.objective - lower.lower_bound)
