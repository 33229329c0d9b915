"""Max-throughput upper bounds from the energy-function (penalty) formulation.

The penalised objective is

    c^T x + M * (E(pi, b) + E*(x, b) - pi^T x)

minimised over the potential box and the injection box.  It is biconvex in
``(pi, x)`` for fixed ``b``, so it is minimised by alternating exact block
solves.  The penalty term only pins ``pi`` to ``pi*(x)`` up to ``O(1/M)``, so the
final point is certified by an exact NF solve and, if needed, pulled back
along the segment towards a feasible anchor until every bound holds.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as la

from .boxnewton import projected_newton
from .energy import ConjugateEval, E_star
from .errors import InfeasibleScenario, MaxIterationsExceeded, NotConverged
from .network import Network, Scenario, validate
from .nf_solver import NewtonSettings, edge_flows, energy, laplacian_weights, solve_nf

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6
INNER_TOL = 1e-6
# reported points are pulled back until they violate no bound by more than this
STRICT_TOL = 1e-10


@dataclass(frozen=True)
class EnergySettings:
    method: str = "formulation2"
    epsilon: float = 1e-6
    big_m: float = 1e4
    outer_tol: float = 1e-7
    max_outer: int = 500
    b_variable: bool | None = None
    engine: str = "alternating"
    continuation: bool = True
    m_start: float = 1.0
    max_tighten: int = 4
    newton: NewtonSettings = NewtonSettings()

    def __post_init__(self):
        if self.method not in ("formulation1", "formulation2"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.engine not in ("reduced", "alternating"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.epsilon <= 0 or self.big_m <= 0:
            raise ValueError("epsilon and big_m must be positive")
        if self.m_start <= 0 or self.max_tighten < 0:
            raise ValueError("m_start must be positive and max_tighten >= 0")
        if self.outer_tol <= 0 or self.max_outer < 1:
            raise ValueError("outer_tol must be positive and max_outer >= 1")


@dataclass
class ThroughputSolution:
    x: np.ndarray
    pi: np.ndarray
    b: np.ndarray
    phi: np.ndarray
    objective: float
    penalty_gap: float
    feasible: bool
    max_violation: float = 0.0
    kkt_residual: float = 0.0
    outer_iterations: int = 0
    status: str = "certified"
    history: list = field(default_factory=list, repr=False)

    @property
    def delivered(self) -> float:
        return float(-self.x[1:][self.x[1:] < 0].sum())


def _boxes(network: Network, scenario: Scenario):
    pi_lo, pi_hi = scenario.effective_pi_bounds(network)
    b_lo, b_hi = scenario.b_box(network)
    return pi_lo[1:], pi_hi[1:], scenario.x_lo[1:], scenario.x_hi[1:], b_lo, b_hi


def certify(network: Network, scenario: Scenario, x, b=None, settings: NewtonSettings = NewtonSettings(),
            feas_tol: float = FEAS_TOL) -> ThroughputSolution:
    """Exact NF solve at ``(x, b)`` and a check of every box; the authoritative upper bound."""
    xf = network.free_injections(x)
    b = network.b_fixed.copy() if b is None else network.edge_array(b)
    try:
        sol = solve_nf(network, xf, b, settings)
    except MaxIterationsExceeded as exc:
        # a stalled solve is still usable when its residual is far below the feasibility tolerance
        if exc.best is None or exc.best.kkt_residual > 1e-2 * feas_tol:
            raise
        sol = exc.best
    pi = sol.state.pi
    pi_lo, pi_hi = scenario.effective_pi_bounds(network)
    b_lo, b_hi = scenario.b_box(network)
    viol = max(
        np.max(pi_lo - pi, initial=0.0), np.max(pi - pi_hi, initial=0.0),
        np.max(scenario.x_lo[1:] - xf, initial=0.0), np.max(xf - scenario.x_hi[1:], initial=0.0),
        np.max(b_lo - b, initial=0.0), np.max(b - b_hi, initial=0.0),
    )
    xfull = network.full_injections(xf)
    return ThroughputSolution(
        x=xfull, pi=pi, b=b, phi=sol.state.phi,
        objective=float(scenario.cost @ xfull),
        penalty_gap=0.0,
        feasible=bool(viol <= feas_tol),
        max_violation=float(viol),
        kkt_residual=sol.kkt_residual,
    )


class _Penalty:
    """Blocks of the penalised objective for one (network, scenario, M)."""

    def __init__(self, network: Network, scenario: Scenario, big_m: float, newton: NewtonSettings):
        self.net = network
        self.m = big_m
        self.newton = newton
        # slack injection is -sum(x_free), so its cost folds into the free costs
        self.cost = scenario.cost[1:] - scenario.cost[0]
        self.b_var = scenario.b_is_variable
        self.b_idx = np.flatnonzero(self.b_var)
        self.pi_lo, self.pi_hi, self.x_lo, self.x_hi, self.b_lo, self.b_hi = _boxes(network, scenario)
        self.a = network.incidence_dense[1:, :]
        self._conj = {}
        self._reduced = {}

    def full(self, p):
        return np.concatenate([[self.net.slack_potential], p])

    def conj(self, x, b, hint=None):
        key = (x.tobytes(), b.tobytes())
        hit = self._conj.get(key)
        if hit is None:
            try:
                hit = E_star(self.net, x, b, self.newton, hint=hint)
            except MaxIterationsExceeded as exc:
                # round-off stall on a far-off iterate; the penalty only needs a good estimate
                if exc.best is None or exc.best.kkt_residual > INNER_TOL:
                    raise
                hit = _conj_from(self.net, x, b, exc.best)
            if len(self._conj) > 256:
                self._conj.clear()
            self._conj[key] = hit
        return hit

    def value(self, p, x, b, conj=None):
        conj = conj or self.conj(x, b)
        gap = energy(self.net, self.full(p), b) + conj.value - p @ x
        return float(self.cost @ x + self.m * gap), float(gap)

    def weights(self, pi_full, b):
        return laplacian_weights(self.net, pi_full, b, self.newton.smooth_eps)

    def lap(self, w):
        return (self.a * w) @ self.a.T

    # -- exact blocks --------------------------------------------------------
    def pi_block(self, x, b, p0=None):
        """argmin over the potential box of ``E(pi, b) - pi^T x`` (convex)."""
        net = self.net

        def fun(p):
            return energy(net, self.full(p), b) - p @ x

        def grad_hess(p):
            pf = self.full(p)
            return self.a @ edge_flows(net, pf, b) - x, self.lap(self.weights(pf, b))

        star = self.conj(x, b).pi_star[1:]
        if np.all(star >= self.pi_lo) and np.all(star <= self.pi_hi):
            return star.copy()
        start = np.clip(star if p0 is None else p0, self.pi_lo, self.pi_hi)
        return projected_newton(fun, grad_hess, start, self.pi_lo, self.pi_hi, tol=1e-12, max_iter=200).z

    def x_block(self, p, b, x0):
        """argmin over the injection box of ``c^T x + M (E*(x, b) - pi^T x)`` (convex)."""
        net, m = self.net, self.m
        hint = [self.full(p)]

        def fun(x):
            c = self.conj(x, b, hint[0])
            hint[0] = c.pi_star
            return float(self.cost @ x + m * (c.value - p @ x))

        def grad_hess(x):
            c = self.conj(x, b, hint[0])
            hinv = _inv_spd(self.lap(self.weights(c.pi_star, b)))
            return self.cost + m * (c.pi_star[1:] - p), m * hinv

        # unconstrained minimiser: the injections whose NF potentials are p - cost/M
        guess = self.a @ edge_flows(net, self.full(p - self.cost / m), b)
        start = min([np.clip(guess, self.x_lo, self.x_hi), np.clip(x0, self.x_lo, self.x_hi)], key=fun)
        tol = 1e-10 * (m + np.max(np.abs(self.cost), initial=0.0))
        return projected_newton(fun, grad_hess, start, self.x_lo, self.x_hi, tol=tol, max_iter=100).z

    def b_block(self, p, x, b0):
        """Descent on ``M (E(pi, b) + E*(x, b))`` over the compressor box (not convex)."""
        idx = self.b_idx
        if idx.size == 0:
            return b0
        net, m = self.net, self.m

        def expand(bv):
            b = b0.copy()
            b[idx] = bv
            return b

        def fun(bv):
            b = expand(bv)
            return float(m * (energy(net, self.full(p), b) + self.conj(x, b).value))

        def grad_hess(bv):
            b = expand(bv)
            pf = self.full(p)
            c = self.conj(x, b)
            w_here, w_star = self.weights(pf, b), self.weights(c.pi_star, b)
            aw = self.a * w_star
            h = np.diag(w_here - w_star) + aw.T @ _solve(self.lap(w_star), aw)
            gr = edge_flows(net, pf, b) - c.phi_star
            return m * gr[idx], m * h[np.ix_(idx, idx)]

        res = projected_newton(fun, grad_hess, b0[idx], self.b_lo[idx], self.b_hi[idx],
                               tol=1e-10 * m, max_iter=50)
        return expand(res.z)

    # -- pi eliminated -------------------------------------------------------
    def split(self, z):
        n = self.net.n_free
        b = self.net.b_fixed.copy()
        b = np.clip(b, self.b_lo, self.b_hi)
        b[self.b_idx] = z[n:]
        return z[:n], b

    def reduced_state(self, z):
        key = z.tobytes()
        st = self._reduced.get(key)
        if st is None:
            x, b = self.split(z)
            conj = self.conj(x, b)
            p = self.pi_block(x, b)
            val, gap = self.value(p, x, b, conj)
            st = dict(x=x, b=b, p=p, conj=conj, value=val, gap=gap)
            if len(self._reduced) > 256:
                self._reduced.clear()
            self._reduced[key] = st
        return st

    def reduced_value(self, z):
        return self.reduced_state(z)["value"]

    def reduced_grad_hess(self, z):
        """Gradient and Hessian of ``min_pi P(pi, x, b)`` in ``(x, b_variable)``.

        The potential response is that of the box-constrained pi-block: nodes
        pinned at a bound do not move, the others follow the Laplacian.
        """
        st = self.reduced_state(z)
        x, b, p, conj = st["x"], st["b"], st["p"], st["conj"]
        m, a = self.m, self.a
        n = x.size
        pf = self.full(p)
        w_hat, w_star = self.weights(pf, b), self.weights(conj.pi_star, b)
        l_star_inv = _inv_spd(self.lap(w_star))
        tol = 1e-12 * (1.0 + np.abs(p))
        free = (p > self.pi_lo + tol) & (p < self.pi_hi - tol)
        k = np.zeros((n, n))
        if free.any():
            l_hat = self.lap(w_hat)
            k[np.ix_(free, free)] = _inv_spd(l_hat[np.ix_(free, free)])
        g_x = self.cost + m * (conj.pi_star[1:] - p)
        h_xx = m * (l_star_inv - k)
        idx = self.b_idx
        if idx.size == 0:
            return g_x, 0.5 * (h_xx + h_xx.T)
        aw_hat, aw_star = a * w_hat, a * w_star
        dpi_hat_db = -k @ aw_hat
        dpi_star_db = -l_star_inv @ aw_star
        g_b = m * (edge_flows(self.net, pf, b) - conj.phi_star)
        h_xb = m * (dpi_star_db - dpi_hat_db)
        h_bb = m * (np.diag(w_hat) + aw_hat.T @ dpi_hat_db - np.diag(w_star) - aw_star.T @ dpi_star_db)
        h = np.block([[h_xx, h_xb[:, idx]], [h_xb[:, idx].T, h_bb[np.ix_(idx, idx)]]])
        return np.concatenate([g_x, g_b[idx]]), 0.5 * (h + h.T)


def _conj_from(network, x, b, sol):
    pi = sol.state.pi
    value = float(pi[1:] @ x - energy(network, pi, b))
    return ConjugateEval(value, pi, sol.state.phi, sol.iterations, value - network.slack_potential * x.sum())


def _solve(h, rhs):
    return la.cho_solve(la.cho_factor(h), rhs)


def _inv_spd(h):
    inv = _solve(h, np.eye(h.shape[0]))
    return 0.5 * (inv + inv.T)


def _initial_x(lo, hi):
    both = np.isfinite(lo) & np.isfinite(hi)
    x = np.where(both, 0.5 * (lo + hi), 0.0)
    return np.clip(x, lo, hi)


def _step_cap(lo, hi):
    width = (hi - lo)[np.isfinite(hi - lo)]
    return float(np.max(width)) if width.size and np.max(width) > 0 else 1.0


def _anchor(lo, hi):
    return np.clip(np.zeros_like(lo), lo, hi)


def solve_penalty(network: Network, scenario: Scenario, settings: EnergySettings = EnergySettings(),
                  big_m: float | None = None, start=None):
    """Minimise the penalised objective; returns the raw (uncertified) iterate.

    ``engine="alternating"`` cycles the exact pi, x and b blocks.
    ``engine="reduced"`` keeps the exact pi-block inside every evaluation and
    takes projected Newton steps in ``(x, b)``.  Both decrease the objective
    monotonically.  Result keys: ``x, pi, b, value, gap, history, iterations,
    converged``.
    """
    if settings.b_variable is not None:
        scenario = scenario.with_variable_b(settings.b_variable)
    pen = _Penalty(network, scenario, settings.big_m if big_m is None else big_m, settings.newton)
    if start is None:
        x = _initial_x(pen.x_lo, pen.x_hi)
        b = np.clip(network.b_fixed, pen.b_lo, pen.b_hi)
    else:
        x = np.clip(start[0], pen.x_lo, pen.x_hi)
        b = np.clip(start[1], pen.b_lo, pen.b_hi)
    if settings.engine == "reduced":
        z0 = np.concatenate([x, b[pen.b_idx]])
        lo = np.concatenate([pen.x_lo, pen.b_lo[pen.b_idx]])
        hi = np.concatenate([pen.x_hi, pen.b_hi[pen.b_idx]])
        history = [pen.reduced_value(np.clip(z0, lo, hi))]
        res = projected_newton(pen.reduced_value, pen.reduced_grad_hess, z0, lo, hi,
                               tol=1e-9 * pen.m, max_iter=settings.max_outer, reg=1e-10,
                               ftol=settings.outer_tol, max_step=_step_cap(lo, hi),
                               callback=lambda z, v: history.append(v))
        st = pen.reduced_state(res.z)
        return dict(x=st["x"], pi=pen.full(st["p"]), b=st["b"], value=st["value"], gap=st["gap"],
                    history=history, iterations=res.iterations, converged=res.converged)

    p = pen.pi_block(x, b)
    val, gap = pen.value(p, x, b)
    history = [val]
    converged = False
    it = 0
    for it in range(1, settings.max_outer + 1):
        x = pen.x_block(p, b, x)
        p = pen.pi_block(x, b, p)
        if pen.b_idx.size:
            b = pen.b_block(p, x, b)
            p = pen.pi_block(x, b, p)
        new, gap = pen.value(p, x, b)
        history.append(new)
        log.debug("outer %d: objective %.10g gap %.3e", it, new, gap)
        if history[-2] - new < settings.outer_tol:
            converged = True
            break
    return dict(x=x, pi=pen.full(p), b=b, value=history[-1], gap=gap, history=history,
                iterations=it, converged=converged)


def restore(network: Network, scenario: Scenario, x, b, newton: NewtonSettings = NewtonSettings(),
            bisect_tol: float = 1e-13, anchor=None, feas_tol: float = FEAS_TOL) -> ThroughputSolution:
    """Certify ``(x, b)``; if infeasible, bisect towards a feasible anchor and certify that.

    The default anchor withdraws nothing (``x`` clipped to 0).  It keeps ``b``
    when that is feasible, otherwise ``b`` is pulled back too.  An explicit
    ``anchor=(x, b)`` must certify as feasible.
    """
    cand = certify(network, scenario, x, b, newton, feas_tol)
    if cand.feasible:
        return cand
    xf = network.free_injections(x)
    b = np.asarray(b, dtype=float)
    if anchor is not None:
        starts = [(network.free_injections(anchor[0]), np.asarray(anchor[1], dtype=float))]
    else:
        x0 = _anchor(scenario.x_lo[1:], scenario.x_hi[1:])
        starts = [(x0, b), (x0, np.clip(np.zeros_like(b), *scenario.b_box(network)))]
    found = None
    for xa, ba in starts:
        trial = certify(network, scenario, xa, ba, newton, feas_tol)
        if trial.feasible:
            found = (xa, ba, trial)
            break
    if found is None:
        raise InfeasibleScenario("no feasible anchor: the zero-withdrawal profile violates the potential bounds")
    xa, ba, best = found
    lo_t, hi_t = 0.0, 1.0
    while hi_t - lo_t > bisect_tol:
        mid = 0.5 * (lo_t + hi_t)
        trial = certify(network, scenario, xa + mid * (xf - xa), ba + mid * (b - ba), newton, feas_tol)
        if trial.feasible:
            lo_t, best = mid, trial
        else:
            hi_t = mid
    best.status = "restored"
    return best


def _tightened(network: Network, scenario: Scenario, margin: float) -> Scenario:
    """Shrink the free nodes' potential boxes by ``margin`` (never past their midpoint)."""
    lo, hi = scenario.pi_lo.copy(), scenario.pi_hi.copy()
    with np.errstate(invalid="ignore"):
        mid = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), np.where(np.isfinite(lo), np.inf, -np.inf))
    lo[1:] = np.minimum(lo[1:] + margin, mid[1:])
    hi[1:] = np.maximum(hi[1:] - margin, mid[1:])
    return replace(scenario, pi_lo=lo, pi_hi=hi)


def _m_schedule(settings: EnergySettings):
    levels = [settings.big_m]
    while settings.continuation and levels[0] / 10.0 >= settings.m_start:
        levels.insert(0, levels[0] / 10.0)
    return levels


def _penalty_path(network, scenario, settings, big_m, start=None):
    """Warm-started penalty solves over the M schedule ending at ``big_m``."""
    raw, iters = None, 0
    levels = _m_schedule(replace(settings, big_m=big_m))
    if start is not None:
        levels = levels[-1:]
    for m in levels:
        raw = solve_penalty(network, scenario, settings, m, start=start)
        start = (raw["x"], raw["b"])
        iters += raw["iterations"]
    raw["iterations"] = iters
    return raw


def solve_throughput_energy(network: Network, scenario: Scenario,
                            settings: EnergySettings = EnergySettings()) -> ThroughputSolution:
    """Feasible (upper-bound) point of the max-throughput problem.

    The penalty problem is solved along an increasing M schedule (each level
    warm-starts the next).  Its fixed point violates the potential bounds by
    ``O(c/M)``; when certification fails the potential boxes are shrunk by the
    observed violation and the last level is re-solved, a few times, before
    falling back to bisection towards a feasible anchor.

    Raises :class:`NotConverged` (certified best iterate attached) when the
    outer loop hits ``max_outer``, and :class:`InfeasibleScenario` when no
    feasible anchor exists.
    """
    if settings.b_variable is not None:
        scenario = scenario.with_variable_b(settings.b_variable)
    validate(network, scenario)
    big_m = settings.big_m
    for _ in range(8):
        raw = _penalty_path(network, scenario, settings, big_m)
        if settings.method == "formulation2" or raw["gap"] <= settings.epsilon:
            break
        big_m *= 10.0
    converged = raw["converged"]
    first = raw
    sol = certify(network, scenario, raw["x"], raw["b"], settings.newton)
    margin = 0.0
    for _ in range(settings.max_tighten):
        if sol.feasible:
            break
        margin += 1.5 * sol.max_violation
        raw = _penalty_path(network, _tightened(network, scenario, margin), settings, big_m,
                            start=(raw["x"], raw["b"]))
        converged = converged and raw["converged"]
        sol = certify(network, scenario, raw["x"], raw["b"], settings.newton)
    if not sol.feasible:
        sol = restore(network, scenario, raw["x"], raw["b"], settings.newton, feas_tol=STRICT_TOL)
    elif margin > 0:
        # the tightened point is feasible but conservative: walk back towards the untightened one
        strict = sol.max_violation <= STRICT_TOL
        sol = restore(network, scenario, first["x"], first["b"], settings.newton,
                      anchor=(raw["x"], raw["b"]) if strict else None, feas_tol=STRICT_TOL)
        sol.status = "tightened"
    elif sol.max_violation > STRICT_TOL:
        sol = restore(network, scenario, raw["x"], raw["b"], settings.newton, feas_tol=STRICT_TOL)
    sol.penalty_gap = float(raw["gap"])
    sol.outer_iterations = raw["iterations"]
    sol.history = raw["history"]
    if not converged:
        sol.status = "not_converged"
        raise NotConverged(f"outer loop hit max_outer={settings.max_outer}", best=sol)
    return sol
