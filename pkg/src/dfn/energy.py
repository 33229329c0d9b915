"""Energy function ``E(pi, b)``, its conjugate ``E*(x, b)`` and their derivatives.

Conventions: the slack potential is a constant, so ``E*`` is the supremum over
the free potentials of ``sum_{i free} pi_i x_i - E(pi, b)``.  With that choice
``grad_x E* = pi*`` and ``grad_b E* = -phi*`` hold literally on the free
coordinates.  ``ConjugateEval.full_value`` adds the slack term
``pi_slack * x_slack`` (``x_slack = -sum x``) and equals the optimum of the
primal energy problem.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from . import dissipation as dis
from .network import Network
from .nf_solver import (NewtonSettings, edge_flows, energy, laplacian_weights, reduced_laplacian,
                        solve_nf, solve_primal, _b)


@dataclass
class ConjugateEval:
    value: float
    pi_star: np.ndarray
    phi_star: np.ndarray
    inner_iterations: int
    full_value: float


def E(network: Network, pi, b=None) -> float:
    pi = network.node_array(pi)
    return energy(network, pi, _b(network, b))


def grad_E(network: Network, pi, b=None):
    """Gradient of ``E`` in the free potentials and in ``b``."""
    pi = network.node_array(pi)
    phi = edge_flows(network, pi, _b(network, b))
    return network.outflow(phi)[1:], phi


def E_star(network: Network, x, b=None, settings: NewtonSettings = NewtonSettings(), hint=None) -> ConjugateEval:
    """Conjugate value with the maximising potentials and flows (one NF solve).

    ``hint`` is a full potential vector used to warm-start the inner solve.
    """
    x = network.free_injections(x)
    b = _b(network, b)
    sol = solve_nf(network, x, b, settings, pi0=hint)
    pi = sol.state.pi
    value = float(pi[1:] @ x - energy(network, pi, b))
    full = value - network.slack_potential * x.sum()
    return ConjugateEval(value, pi, sol.state.phi, sol.iterations, full)


def grad_E_star(network: Network, x, b=None, settings: NewtonSettings = NewtonSettings(), hint=None):
    """``(pi*, -phi*)``: gradients in the free injections and in ``b``."""
    ev = E_star(network, x, b, settings, hint)
    return ev.pi_star[1:].copy(), -ev.phi_star


def hess_E(network: Network, pi, b=None, smooth_eps: float = dis.DEFAULT_SMOOTH_EPS) -> sp.csr_matrix:
    """Reduced weighted Laplacian with weights ``g'(pi_i - pi_j + b_ij)``."""
    pi = network.node_array(pi)
    w = laplacian_weights(network, pi, _b(network, b), smooth_eps)
    return sp.csr_matrix(reduced_laplacian(network, w, sparse=True))


def full_laplacian(network: Network, pi, b=None, smooth_eps: float = dis.DEFAULT_SMOOTH_EPS) -> np.ndarray:
    pi = network.node_array(pi)
    w = laplacian_weights(network, pi, _b(network, b), smooth_eps)
    a = network.incidence_dense
    return (a * w) @ a.T


def hess_E_star(network: Network, x, b=None, settings: NewtonSettings = NewtonSettings(), hint=None,
                pi_star=None) -> np.ndarray:
    """Hessian of ``E*`` in the free injections: the inverse reduced Laplacian at ``pi*(x)``."""
    if pi_star is None:
        pi_star = E_star(network, x, b, settings, hint).pi_star
    h = hess_E(network, pi_star, b, settings.smooth_eps).toarray()
    inv = la.cho_solve(la.cho_factor(h), np.eye(h.shape[0]))
    return 0.5 * (inv + inv.T)


def fenchel_gap(network: Network, pi, x, b=None, settings: NewtonSettings = NewtonSettings(),
                conjugate: ConjugateEval | None = None) -> float:
    """``E(pi, b) + E*(x, b) - pi^T x`` over the free nodes; nonnegative, zero only at ``pi*(x)``."""
    pi = network.node_array(pi)
    pi[0] = network.slack_potential
    x = network.free_injections(x)
    b = _b(network, b)
    if conjugate is None:
        conjugate = E_star(network, x, b, settings, hint=pi)
    return float(energy(network, pi, b) + conjugate.value - pi[1:] @ x)


def monotonicity_check(network: Network, b, q1, q2, settings: NewtonSettings = NewtonSettings(),
                       tol: float = 1e-9) -> bool:
    """True when ``q1 <= q2`` (free nodes) yields ``pi(q1) <= pi(q2)`` componentwise."""
    q1 = network.free_injections(q1)
    q2 = network.free_injections(q2)
    if np.any(q1 > q2):
        raise ValueError("monotonicity_check needs q1 <= q2 componentwise")
    b = _b(network, b)
    p1 = solve_nf(network, q1, b, settings).state.pi[1:]
    p2 = solve_nf(network, q2, b, settings).state.pi[1:]
    return bool(np.all(p1 <= p2 + tol))


def F_star(network: Network, b, q) -> float:
    """``sup_phi b^T phi - F(phi)`` over conserving flows, by the independent primal path."""
    _, value = solve_primal(network, q, b)
    return -value
