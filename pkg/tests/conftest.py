import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dfn.io import data_path, load_network
from dfn.network import Network, Scenario

settings.register_profile("dfn", derandomize=True, deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("dfn")


def two_node(x_lo=-10.0, pi_hi0=4.0, cost=1.0, delta=1.0):
    """Slack at potential 4 feeding one load with potential in [0, 4]."""
    net = Network(2, [(0, 1, delta, 2.0)], slack=0, slack_potential=pi_hi0)
    sc = Scenario.build(net, pi_lo=[pi_hi0, 0.0], pi_hi=[pi_hi0, 4.0], x_lo=[0.0, x_lo], x_hi=[0.0, 0.0],
                        cost=[0.0, cost])
    return net, sc


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def gas16():
    return load_network(data_path("gas16.json"))


def small_instance(rng, max_edges=6, alphas=(1.0, 1.5, 2.0)):
    """Random small throughput instance with finite boxes; withdrawing nothing is always feasible."""
    while True:
        n = int(rng.integers(2, 6))
        edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
        for _ in range(int(rng.integers(0, max_edges - len(edges) + 1))):
            i, j = rng.choice(n, 2, replace=False)
            edges.append((int(i), int(j)))
        if len(edges) <= max_edges:
            break
    law = rng.choice(alphas, len(edges))
    full = [(i, j, float(rng.uniform(0.2, 2.0)), float(a)) for (i, j), a in zip(edges, law)]
    hi = float(rng.uniform(3.0, 6.0))
    net = Network(n, full, slack=0, slack_potential=hi)
    x_lo, x_hi, cost = np.zeros(n), np.zeros(n), np.zeros(n)
    for k in range(1, n):
        r = rng.random()
        if r < 0.6:
            x_lo[k] = -rng.uniform(0.5, 4.0)
            cost[k] = rng.uniform(0.5, 2.0)
        elif r < 0.8:
            x_hi[k] = rng.uniform(0.0, 2.0)
    m = len(full)
    b_hi = np.where(rng.random(m) < 0.3, rng.uniform(0.0, 1.5, m), 0.0)
    sc = Scenario.build(net, pi_lo=0.5, pi_hi=hi, x_lo=x_lo, x_hi=x_hi, cost=cost, b_lo=np.zeros(m),
                        b_hi=b_hi, b_is_variable=bool(rng.random() < 0.5))
    return net, sc


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
