"""Acceptance criteria 1-10, one PASS/FAIL line each.

Run with pytest (the lines are repeated in the terminal summary) or directly
with ``python3 tests/test_acceptance.py``.
"""
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES, small_instance, two_node

from dfn.checks import _injections, random_network
from dfn.energy import E, E_star, fenchel_gap, hess_E, hess_E_star, monotonicity_check
from dfn.gas import GasNetworkInput, Pipe, gas_energy_closed_form, gas_hessian_closed_form, to_dissipative
from dfn.io import data_path, load_network
from dfn.nf_solver import NewtonSettings, kkt_check, solve_nf, solve_primal
from dfn.throughput_energy import solve_throughput_energy
from dfn.throughput_micp import BnbSettings, enumerate_directions, mccormick_violation, optimality_gap, solve_micp

TIGHT = BnbSettings(abs_gap_tol=1e-9, rel_gap_tol=1e-9)
CERTIFIED = []


def report(number, ok, text):
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {text}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_01_nf_solver():
    rng = np.random.default_rng(1)
    cases = []
    for _ in range(200):
        net = random_network(rng, n_max=12)
        cases.append((net, rng.normal(size=net.n_free)))
    settings = NewtonSettings(max_iter=50)
    solve_nf(*cases[0], None, settings)
    t0 = time.perf_counter()
    sols = [solve_nf(net, q, None, settings) for net, q in cases]
    elapsed = time.perf_counter() - t0
    worst = max(kkt_check(net, q, None, s.state) for (net, q), s in zip(cases, sols))
    iters = max(s.iterations for s in sols)
    report(1, worst < 1e-8 and iters <= 50 and elapsed < 1.0,
           f"200 networks, worst KKT {worst:.1e}, max {iters} iterations, {elapsed:.2f} s")


def test_criterion_02_uniqueness_and_duality():
    rng = np.random.default_rng(2)
    spread, gap = 0.0, 0.0
    for _ in range(20):
        net = random_network(rng, n_max=12, b_scale=0.3)
        q = rng.normal(size=net.n_free)
        ref = solve_nf(net, q).pi
        for _ in range(20):
            start = rng.normal(scale=10.0, size=net.n_nodes)
            spread = max(spread, np.max(np.abs(solve_nf(net, q, None, pi0=start).pi - ref)))
        ev = E_star(net, q)
        _, primal = solve_primal(net, q, net.b_fixed)
        gap = max(gap, abs(primal - ev.full_value) / (1.0 + abs(ev.full_value)))
    report(2, spread < 1e-8 and gap < 1e-8,
           f"20 networks x 20 restarts, potential spread {spread:.1e}, primal-dual gap {gap:.1e}")


def test_criterion_03_gradients_and_hessians():
    rng = np.random.default_rng(3)
    fd_err, inv_err = 0.0, 0.0
    for _ in range(30):
        net = random_network(rng, n_max=8, b_scale=0.3)
        q, sol = _injections(rng, net)
        b = net.b_fixed.copy()

        def val(x, bb):
            return E_star(net, x, bb, hint=sol.pi).value

        for grad, base, fn in ((sol.pi[1:], q, lambda v: val(v, b)), (-sol.phi, b, lambda v: val(q, v))):
            fd = np.empty_like(grad)
            for i in range(base.size):
                h = 1e-5 * (1.0 + abs(base[i]))
                e = np.zeros_like(base)
                e[i] = h
                fd[i] = (fn(base + e) - fn(base - e)) / (2 * h)
            fd_err = max(fd_err, np.max(np.abs(fd - grad)) / max(1.0, np.max(np.abs(grad))))
        h = hess_E(net, sol.pi).toarray()
        inv_err = max(inv_err, np.max(np.abs(hess_E_star(net, q, pi_star=sol.pi) @ h - np.eye(net.n_free))))
    report(3, fd_err < 1e-5 and inv_err < 1e-8,
           f"30 networks, gradient rel. error {fd_err:.1e}, |hess_E_star hess_E - I| {inv_err:.1e}")


def test_criterion_04_fenchel_gap():
    rng = np.random.default_rng(4)
    most_negative, smallest_off = np.inf, np.inf
    for _ in range(50):
        net = random_network(rng, n_max=10, b_scale=0.3)
        q = rng.normal(size=net.n_free)
        ev = E_star(net, q)
        most_negative = min(most_negative, fenchel_gap(net, ev.pi_star, q, conjugate=ev))
        for scale in (1e-3, 1e-2, 1e-1, 1.0):
            d = rng.normal(size=net.n_free)
            pi = ev.pi_star.copy()
            pi[1:] += scale * d / np.linalg.norm(d)
            g = fenchel_gap(net, pi, q, conjugate=ev)
            most_negative = min(most_negative, g)
            smallest_off = min(smallest_off, g)
    report(4, most_negative >= -1e-10 and smallest_off >= 1e-8,
           f"50 networks, min gap {most_negative:.1e}, min gap off the optimum {smallest_off:.1e}")


def test_criterion_05_monotonicity():
    rng = np.random.default_rng(5)
    failures, min_entry = 0, np.inf
    for k in range(200):
        net = random_network(rng, n_max=12, b_scale=0.3)
        q1 = rng.normal(size=net.n_free)
        q2 = q1 + rng.exponential(size=net.n_free) * (rng.random(net.n_free) < 0.7)
        failures += not monotonicity_check(net, net.b_fixed, q1, q2)
        if k % 4 == 0:
            min_entry = min(min_entry, hess_E_star(net, q1).min(), hess_E_star(net, q2).min())
    report(5, failures == 0 and min_entry >= -1e-12,
           f"200 ordered pairs, {failures} failures, smallest inverse-Hessian entry {min_entry:.1e}")


def test_criterion_06_two_node_closed_form():
    net, sc = two_node()
    exact = np.sqrt(4.0 - 0.0)
    energy = solve_throughput_energy(net, sc)
    micp = solve_micp(net, sc, TIGHT)
    gap = optimality_gap(energy, micp, net, sc, sc)
    err_e = abs(-energy.x[1] - exact)
    err_m = abs(-micp.lower_bound - exact)
    CERTIFIED.append((net, sc, energy))
    report(6, err_e < 1e-6 and err_m < 1e-6 and abs(gap) < 1e-6,
           f"withdrawal {exact:g}: energy error {err_e:.1e}, MIQP error {err_m:.1e}, gap {gap:.1e}")


def test_criterion_07_brute_force():
    rng = np.random.default_rng(7)
    cases = [small_instance(rng, max_edges=6) for _ in range(50)]
    t0 = time.perf_counter()
    results = [solve_micp(net, sc, TIGHT) for net, sc in cases]
    elapsed = time.perf_counter() - t0
    worst = 0.0
    for (net, sc), res in zip(cases, results):
        brute, _ = enumerate_directions(net, sc, TIGHT)
        worst = max(worst, abs(res.objective - brute))
    edges = max(net.n_edges for net, _ in cases)
    report(7, worst < 1e-7 and elapsed < 30.0,
           f"50 instances (M <= {edges}), worst difference {worst:.1e}, branch-and-bound {elapsed:.1f} s")


@pytest.fixture(scope="module")
def shipped():
    return load_network(data_path("gas16.json"))


def test_criterion_08_bound_ordering(shipped):
    rows, ok = [], True
    for compress in (False, True):
        for col in shipped.columns:
            net, sc = col.apply(shipped.network, shipped.scenario)
            if compress:
                sc = sc.with_variable_b(True)
            t0 = time.perf_counter()
            energy = solve_throughput_energy(net, sc)
            micp = solve_micp(net, sc, seed_upper=energy.objective)
            elapsed = time.perf_counter() - t0
            gap = optimality_gap(energy, micp, net, sc, sc)
            ok &= energy.feasible and micp.lower_bound <= energy.objective and gap >= 0 and elapsed < 60.0
            CERTIFIED.append((net, sc, energy))
            rows.append(f"{col.label}{'+b' if compress else ''}: {micp.lower_bound:.2f} <= "
                        f"{energy.objective:.2f} ({elapsed:.1f} s)")
    report(8, ok, "; ".join(rows))


def test_criterion_09_mccormick_validity():
    rng = np.random.default_rng(9)
    cases = list(CERTIFIED)
    for _ in range(30):
        net, sc = small_instance(rng)
        cases.append((net, sc, solve_throughput_energy(net, sc)))
    worst, count = 0.0, 0
    for net, sc, sol in cases:
        if sol.feasible:
            count += 1
            worst = max(worst, mccormick_violation(net, sc, sol.pi, sol.phi, sol.b).max(initial=0.0))
    report(9, worst <= 1e-9 and count == len(cases),
           f"{count} certified energy solutions, worst McCormick violation {worst:.1e}")


def test_criterion_10_gas_closed_forms():
    rng = np.random.default_rng(10)
    e_err, h_err = 0.0, 0.0
    for _ in range(50):
        n = int(rng.integers(2, 10))
        pipes = [Pipe(int(rng.integers(0, v)), v, float(rng.uniform(0.05, 2.0)), 0.0, float(rng.uniform(0, 1)))
                 for v in range(1, n)]
        gas = GasNetworkInput(tuple(range(n)), tuple(pipes), 0, float(rng.uniform(2.0, 6.0)))
        net, _ = to_dissipative(gas, demands={k: 1.0 for k in range(1, n)})
        pi = net.node_array(rng.uniform(1.0, 36.0, n))
        b = rng.uniform(0.0, 1.0, net.n_edges)
        generic = E(net, pi, b)
        e_err = max(e_err, abs(gas_energy_closed_form(net, pi, b) - generic) / abs(generic))
        h = hess_E(net, pi, b).toarray()
        h_err = max(h_err, np.max(np.abs(gas_hessian_closed_form(net, pi, b) - h)) / np.max(np.abs(h)))
    report(10, e_err < 1e-12 and h_err < 1e-12,
           f"50 gas networks, energy rel. error {e_err:.1e}, Hessian rel. error {h_err:.1e}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
