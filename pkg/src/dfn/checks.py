"""Randomised property suites for the NF solver and the energy oracle.

Used by ``dfn check`` and by the test suite.  Every suite takes a numpy
``Generator`` so runs are reproducible from a single seed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import E_star, fenchel_gap, hess_E, hess_E_star, monotonicity_check
from .network import Network
from .nf_solver import NewtonSettings, kkt_check, solve_nf, solve_primal


@dataclass
class CheckResult:
    name: str
    passed: bool
    trials: int
    worst: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: worst {self.worst:.3e} (threshold {self.threshold:.1e}, {self.trials} trials){self.detail}"


def random_network(rng: np.random.Generator, n_max: int = 12, alphas=(1.0, 1.5, 2.0), n_min: int = 2,
                   extra_edges: int | None = None, b_scale: float = 0.0) -> Network:
    """Random connected network: a random spanning tree plus a few chords."""
    n = int(rng.integers(n_min, n_max + 1))
    edges = []
    for v in range(1, n):
        u = int(rng.integers(0, v))
        edges.append((u, v) if rng.random() < 0.5 else (v, u))
    k = int(rng.integers(0, n)) if extra_edges is None else extra_edges
    for _ in range(k):
        u, v = rng.choice(n, size=2, replace=False)
        edges.append((int(u), int(v)))
    full = []
    for u, v in edges:
        b = float(rng.normal(scale=b_scale)) if b_scale > 0 else 0.0
        full.append((u, v, float(rng.uniform(0.5, 2.0)), float(rng.choice(alphas)), b))
    return Network(n, full, slack=0, slack_potential=float(rng.uniform(-2.0, 2.0)))


def _injections(rng, net: Network, min_drop: float = 1e-4, settings=NewtonSettings()):
    """Random injections whose NF solution keeps every drop away from zero."""
    for _ in range(50):
        q = rng.normal(size=net.n_free)
        sol = solve_nf(net, q, None, settings)
        if np.min(np.abs(net.drops(sol.pi, net.b_fixed)), initial=np.inf) >= min_drop:
            return q, sol
    return q, sol


def check_solver(rng, trials: int = 200, max_iter: int = 50, tol: float = 1e-8) -> CheckResult:
    worst, iters = 0.0, 0
    settings = NewtonSettings(max_iter=max_iter)
    for _ in range(trials):
        net = random_network(rng)
        q = rng.normal(size=net.n_free)
        sol = solve_nf(net, q, None, settings)
        worst = max(worst, kkt_check(net, q, None, sol.state))
        iters = max(iters, sol.iterations)
    return CheckResult("nf-solver", worst < tol, trials, worst, tol, f", max {iters} Newton iterations")


def check_duality(rng, trials: int = 50, tol: float = 1e-8) -> CheckResult:
    """Primal and dual optima coincide; the Fenchel gap is nonnegative."""
    worst, worst_fy = 0.0, 0.0
    for _ in range(trials):
        net = random_network(rng, b_scale=0.5)
        q = rng.normal(size=net.n_free)
        ev = E_star(net, q)
        _, primal = solve_primal(net, q, net.b_fixed)
        worst = max(worst, abs(primal - ev.full_value) / (1.0 + abs(ev.full_value)))
        pi = ev.pi_star + np.concatenate([[0.0], rng.normal(scale=0.1, size=net.n_free)])
        worst_fy = max(worst_fy, -fenchel_gap(net, pi, q, conjugate=ev))
    ok = worst < tol and worst_fy <= 1e-10
    return CheckResult("duality", ok, trials, worst, tol, f", most negative Fenchel gap {-worst_fy:.1e}")


def check_gradients(rng, trials: int = 30, tol: float = 1e-5) -> CheckResult:
    """``grad_x E* = pi*`` and ``grad_b E* = -phi*`` against central differences."""
    worst = 0.0
    for _ in range(trials):
        net = random_network(rng, n_max=8, b_scale=0.3)
        q, sol = _injections(rng, net)
        b = net.b_fixed.copy()
        gx, gb = sol.pi[1:], -sol.phi
        fd_x = np.empty_like(gx)
        for i in range(q.size):
            h = 1e-5 * (1.0 + abs(q[i]))
            e = np.zeros_like(q)
            e[i] = h
            fd_x[i] = (E_star(net, q + e, b, hint=sol.pi).value - E_star(net, q - e, b, hint=sol.pi).value) / (2 * h)
        fd_b = np.empty_like(gb)
        for k in range(b.size):
            h = 1e-5 * (1.0 + abs(b[k]))
            e = np.zeros_like(b)
            e[k] = h
            fd_b[k] = (E_star(net, q, b + e, hint=sol.pi).value - E_star(net, q, b - e, hint=sol.pi).value) / (2 * h)
        err = max(np.max(np.abs(fd_x - gx)) / max(1.0, np.max(np.abs(gx))),
                  np.max(np.abs(fd_b - gb)) / max(1.0, np.max(np.abs(gb))))
        worst = max(worst, err)
    return CheckResult("gradients", worst < tol, trials, worst, tol)


def check_hessians(rng, trials: int = 50, tol: float = 1e-8) -> CheckResult:
    """``hess_E_star`` inverts ``hess_E`` and is entrywise nonnegative."""
    worst, most_negative = 0.0, 0.0
    for _ in range(trials):
        net = random_network(rng, n_max=8)
        q, sol = _injections(rng, net)
        h = hess_E(net, sol.pi).toarray()
        hs = hess_E_star(net, q, pi_star=sol.pi)
        worst = max(worst, np.linalg.norm(hs @ h - np.eye(h.shape[0]), 2))
        most_negative = min(most_negative, hs.min())
    ok = worst < tol and most_negative >= -1e-12
    return CheckResult("hessians", ok, trials, worst, tol, f", smallest inverse-Hessian entry {most_negative:.1e}")


def check_monotonicity(rng, trials: int = 200) -> CheckResult:
    """Ordered injections give ordered potentials."""
    failures, worst = 0, 0.0
    for _ in range(trials):
        net = random_network(rng, b_scale=0.3)
        q1 = rng.normal(size=net.n_free)
        q2 = q1 + rng.exponential(size=net.n_free) * (rng.random(net.n_free) < 0.7)
        if not monotonicity_check(net, net.b_fixed, q1, q2):
            failures += 1
        p1 = solve_nf(net, q1).pi[1:]
        p2 = solve_nf(net, q2).pi[1:]
        worst = max(worst, np.max(p1 - p2, initial=0.0))
    return CheckResult("monotonicity", failures == 0, trials, worst, 1e-9, f", {failures} failures")


SUITES = {
    "solver": check_solver,
    "gradients": check_gradients,
    "hessians": check_hessians,
    "monotonicity": check_monotonicity,
    "duality": check_duality,
}
