"""Network-flow (NF) equations solved by Newton's method on the dual energy.

The free potentials minimise ``E(pi, b) - sum_i pi_i q_i`` (slack pinned).  The
Hessian of that objective is the weighted graph Laplacian with the slack row
and column removed, so each Newton step is one SPD solve.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import dissipation as dis
from .errors import InfeasibleFlow, MaxIterationsExceeded, SingularHessian
from .network import FlowState, Network, node_balance_residual, validate

log = logging.getLogger(__name__)

DENSE_LIMIT = 50


@dataclass(frozen=True)
class NewtonSettings:
    grad_tol: float = 1e-10
    max_iter: int = 200
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    smooth_eps: float = dis.DEFAULT_SMOOTH_EPS
    # accepted KKT residual when progress stops at round-off before grad_tol
    stall_tol: float = 1e-8

    def __post_init__(self):
        if self.grad_tol <= 0 or self.smooth_eps <= 0 or self.stall_tol <= 0:
            raise ValueError("grad_tol and smooth_eps must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not (0 < self.armijo_c < 1 and 0 < self.armijo_shrink < 1):
            raise ValueError("armijo_c and armijo_shrink must lie in (0, 1)")


@dataclass
class NfSolution:
    state: FlowState
    kkt_residual: float
    dual_value: float
    primal_value: float
    iterations: int
    converged: bool = True
    history: list = field(default_factory=list, repr=False)

    @property
    def pi(self):
        return self.state.pi

    @property
    def phi(self):
        return self.state.phi


def _b(network: Network, b):
    return network.b_fixed.copy() if b is None else network.edge_array(b)


def energy(network: Network, pi, b) -> float:
    """``E(pi, b)``: sum of drop energies over the edges."""
    y = network.drops(pi, b)
    return float(dis.drop_energy(network.delta, network.alpha, y).sum())


def edge_flows(network: Network, pi, b) -> np.ndarray:
    return dis.drop_to_flow(network.delta, network.alpha, network.drops(pi, b))


def reduced_laplacian(network: Network, weights, sparse: bool | None = None):
    """Weighted Laplacian restricted to the non-slack nodes."""
    if sparse is None:
        sparse = network.n_free >= DENSE_LIMIT
    if not sparse:
        a = network.incidence_dense[1:, :]
        return (a * weights) @ a.T
    a = network.incidence[1:, :]
    return (a @ sp.diags(weights) @ a.T).tocsc()


def laplacian_weights(network: Network, pi, b, smooth_eps):
    return dis.drop_to_flow_slope(network.delta, network.alpha, network.drops(pi, b), smooth_eps)


def _solve_spd(h, rhs):
    if sp.issparse(h):
        try:
            return spla.splu(h.tocsc()).solve(rhs)
        except RuntimeError as exc:
            raise SingularHessian(str(exc)) from exc
    try:
        return la.cho_solve(la.cho_factor(h), rhs)
    except la.LinAlgError as exc:
        raise SingularHessian(str(exc)) from exc


def solve_nf(network: Network, injections, b=None, settings: NewtonSettings = NewtonSettings(),
             pi0=None) -> NfSolution:
    """Unique solution of the NF equations for the given injections and compressions.

    ``pi0`` optionally warm-starts the free potentials (full node vector; the
    slack entry is overwritten).  Raises :class:`MaxIterationsExceeded` with the
    last iterate attached when ``grad_tol`` is not reached.
    """
    validate(network)
    q = network.free_injections(injections)
    b = _b(network, b)
    p0 = network.slack_potential
    pi = np.full(network.n_nodes, p0) if pi0 is None else np.array(pi0, dtype=float)
    pi[0] = p0
    delta, alpha = network.delta, network.alpha
    sparse = network.n_free >= DENSE_LIMIT
    a_free = network.incidence[1:, :] if sparse else network.incidence_dense[1:, :]

    def objective(p):
        return energy(network, p, b) - p[1:] @ q

    def gradient(p):
        return a_free @ edge_flows(network, p, b) - q

    val, grad = objective(pi), gradient(pi)
    history = [val]
    it = 0
    flat = 0
    converged = network.n_free == 0 or np.max(np.abs(grad)) < settings.grad_tol
    while not converged and it < settings.max_iter:
        it += 1
        w = laplacian_weights(network, pi, b, settings.smooth_eps)
        h = reduced_laplacian(network, w, sparse)
        d = -_solve_spd(h, grad)
        slope = grad @ d
        gnorm = np.max(np.abs(grad))
        t, accepted = 1.0, False
        while t > 1e-20:
            trial = pi.copy()
            trial[1:] += t * d
            tval = objective(trial)
            if tval <= val + settings.armijo_c * t * slope:
                accepted = True
            elif abs(tval - val) <= 1e-13 * (1.0 + abs(val)):
                # Objective differences are below round-off: fall back to gradient decrease.
                accepted = np.max(np.abs(gradient(trial))) < gnorm
            if accepted:
                break
            t *= settings.armijo_shrink
        if not accepted:
            log.debug("line search stalled at iteration %d", it)
            break
        # Keep shrinking while it still pays: full Newton steps on |y|^(1+1/alpha)
        # energies overshoot through zero drops and can oscillate forever.
        while t > 1e-12:
            short = pi.copy()
            short[1:] += t * settings.armijo_shrink * d
            sval = objective(short)
            if sval >= tval - 1e-14 * (1.0 + abs(tval)):
                break
            trial, tval, t = short, sval, t * settings.armijo_shrink
        log.debug("iter %d step %.3e value %.12g", it, t, tval)
        same = abs(tval - val) <= 1e-14 * (1.0 + abs(val))
        pi, val = trial, tval
        grad = gradient(pi)
        history.append(val)
        gnew = np.max(np.abs(grad))
        # a flat objective is only a stall once the gradient stops shrinking too
        flat = flat + 1 if same and gnew > 0.5 * gnorm else 0
        converged = gnew < settings.grad_tol
        if flat >= 3:
            log.debug("objective flat at round-off after %d iterations", it)
            break

    if not converged and network.n_free and it < settings.max_iter:
        pi, it = _refine(network, q, b, pi, gradient, settings, sparse, it)
        grad = gradient(pi)
        converged = np.max(np.abs(grad)) < settings.grad_tol

    phi = dis.drop_to_flow(delta, alpha, network.drops(pi, b))
    state = FlowState(phi=phi, pi=pi)
    kkt = kkt_check(network, q, b, state)
    if network.n_free and kkt > 0:
        polished = FlowState(phi=_polish_flows(network, q, b, pi, phi, settings.smooth_eps), pi=pi)
        kkt_pol = kkt_check(network, q, b, polished)
        if kkt_pol < kkt:
            state, kkt = polished, kkt_pol
    converged = converged or kkt < settings.grad_tol or (flat >= 3 and kkt < settings.stall_tol * (1.0 + np.max(np.abs(q), initial=0.0)))
    qfull = np.concatenate([[-q.sum()], q])
    sol = NfSolution(
        state=state,
        kkt_residual=kkt,
        dual_value=float(pi @ qfull - energy(network, pi, b)),
        primal_value=primal_objective(network, q, b, state.phi, feas_tol=np.inf),
        iterations=it,
        converged=converged,
        history=history,
    )
    if not converged:
        raise MaxIterationsExceeded(
            f"Newton stopped after {it} iterations with KKT residual {kkt:.3e}", best=sol)
    return sol


def _refine(network, q, b, pi, gradient, settings, sparse, it, steps: int = 30):
    """Newton steps with a much smaller g' cap, accepted on gradient decrease only.

    The capped Hessian converges only linearly on edges whose drop sits inside
    the cap (tiny but nonzero flows).  Once the objective is flat at round-off
    the gradient is the only usable merit function.
    """
    eps = settings.smooth_eps * 1e-12
    g = np.max(np.abs(gradient(pi)))
    for _ in range(min(steps, settings.max_iter - it)):
        if g < settings.grad_tol:
            break
        w = laplacian_weights(network, pi, b, eps)
        try:
            d = -_solve_spd(reduced_laplacian(network, w, sparse), gradient(pi))
        except SingularHessian:
            break
        t, moved = 1.0, False
        while t > 1e-6:
            trial = pi.copy()
            trial[1:] += t * d
            gt = np.max(np.abs(gradient(trial)))
            if gt < g:
                pi, g, moved = trial, gt, True
                break
            t *= 0.5
        if not moved:
            break
        it += 1
    return pi, it


def _polish_flows(network, q, b, pi, phi, smooth_eps):
    """Weighted projection of the flows onto exact conservation.

    Near-zero flows cannot be resolved through ``g(drop)`` in double precision
    (``g`` has infinite slope at 0 for alpha > 1); the correction is spread with
    the Laplacian weights, i.e. mostly onto edges where ``f`` is flat, so the
    drop law stays satisfied.
    """
    w = laplacian_weights(network, pi, b, smooth_eps)
    sparse = network.n_free >= DENSE_LIMIT
    a = network.incidence[1:, :] if sparse else network.incidence_dense[1:, :]
    r = q - a @ phi
    d = _solve_spd(reduced_laplacian(network, w, sparse), r)
    return phi + w * (a.T @ d)


def primal_objective(network: Network, injections, b, phi, feas_tol: float = 1e-8) -> float:
    """Primal energy ``sum F(phi) - b * phi``; the flow must conserve the injections."""
    phi = np.asarray(phi, dtype=float)
    b = _b(network, b)
    res = node_balance_residual(network, injections, FlowState(phi=phi, pi=np.zeros(network.n_nodes)))
    if np.max(np.abs(res), initial=0.0) > feas_tol:
        raise InfeasibleFlow(f"flow conservation violated by {np.max(np.abs(res)):.3e}")
    return float((dis.flow_energy(network.delta, network.alpha, phi) - b * phi).sum())


def kkt_check(network: Network, injections, b, state: FlowState) -> float:
    """Largest violation of node balance or of the (unsmoothed) potential-drop law."""
    b = _b(network, b)
    bal = node_balance_residual(network, injections, state)
    law = dis.flow_to_drop(network.delta, network.alpha, state.phi) - network.drops(state.pi, b)
    return float(max(np.max(np.abs(bal), initial=0.0), np.max(np.abs(law), initial=0.0)))


def solve_primal(network: Network, injections, b=None, tol: float = 1e-12, max_iter: int = 200):
    """Minimise the primal energy over conserving flows by Newton in cycle space.

    Independent of the dual path: uses only ``f`` and ``F`` and never forms
    potentials.  Returns ``(phi, value)``.
    """
    validate(network)
    qfull = network.full_injections(injections)
    b = _b(network, b)
    a = network.incidence_dense[1:, :]
    phi0 = np.linalg.lstsq(a, qfull[1:], rcond=None)[0]
    z = la.null_space(a)
    delta, alpha = network.delta, network.alpha

    def value(phi):
        return float((dis.flow_energy(delta, alpha, phi) - b * phi).sum())

    if z.shape[1] == 0:
        return phi0, value(phi0)
    y = np.zeros(z.shape[1])
    phi = phi0.copy()
    for _ in range(max_iter):
        grad = z.T @ (dis.flow_to_drop(delta, alpha, phi) - b)
        if np.max(np.abs(grad)) < tol:
            break
        curv = np.maximum(dis.flow_slope(delta, alpha, phi), 1e-12)
        h = z.T @ (curv[:, None] * z)
        d = -np.linalg.solve(h, grad)
        t, v0 = 1.0, value(phi)
        while t > 1e-16:
            trial = phi0 + z @ (y + t * d)
            if value(trial) <= v0 + 1e-4 * t * (grad @ d) or abs(value(trial) - v0) < 1e-15 * (1 + abs(v0)):
                break
            t *= 0.5
        y = y + t * d
        phi = phi0 + z @ y
    return phi, value(phi)
