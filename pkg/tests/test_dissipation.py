import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dfn.dissipation import DissipationLaw, F_anti, G_anti, f, g, g_prime
from dfn.errors import InvalidLaw

GAS = DissipationLaw(1.0, 2.0)
laws = st.builds(DissipationLaw, st.floats(0.1, 10.0), st.sampled_from([1.0, 1.3, 1.5, 2.0, 2.5]))
reals = st.floats(-1e3, 1e3)


@pytest.mark.parametrize("law,x,expected", [
    (GAS, 0.0, 0.0), (GAS, -3.0, -9.0), (DissipationLaw(2.0, 2.0), 3.0, 18.0)])
def test_f_examples(law, x, expected):
    assert f(law, x) == pytest.approx(expected)


@pytest.mark.parametrize("law,y,expected", [
    (GAS, 9.0, 3.0), (DissipationLaw(3.0, 1.5), 0.0, 0.0), (DissipationLaw(2.0, 2.0), -18.0, -3.0)])
def test_g_examples(law, y, expected):
    assert g(law, y) == pytest.approx(expected)


@pytest.mark.parametrize("law,x,expected", [
    (GAS, 3.0, 9.0), (DissipationLaw(2.0, 1.5), 0.0, 0.0), (DissipationLaw(3.0, 2.0), 1.0, 1.0)])
def test_F_examples(law, x, expected):
    assert F_anti(law, x) == pytest.approx(expected)


@pytest.mark.parametrize("law,y,expected", [
    (GAS, 4.0, 16.0 / 3.0), (DissipationLaw(2.0, 1.5), 0.0, 0.0), (DissipationLaw(4.0, 2.0), 1.0, 1.0 / 3.0)])
def test_G_examples(law, y, expected):
    assert G_anti(law, y) == pytest.approx(expected)


def test_g_prime_examples():
    assert g_prime(GAS, 4.0, 1e-8) == pytest.approx(0.25)
    assert g_prime(GAS, 0.0, 1e-4) == pytest.approx(50.0)
    assert g_prime(DissipationLaw(1.0, 1.0), 7.3) == pytest.approx(1.0)
    assert g_prime(DissipationLaw(1.0, 1.0), 0.0) == pytest.approx(1.0)


def test_g_prime_cap_is_finite_and_positive():
    vals = g_prime(DissipationLaw(0.5, 2.5), np.array([0.0, 1e-30, -1e-12, 1e-3]))
    assert np.all(np.isfinite(vals)) and np.all(vals > 0)
    with pytest.raises(ValueError):
        g_prime(GAS, 1.0, 0.0)


@pytest.mark.parametrize("delta,alpha", [(0.0, 2.0), (-1.0, 2.0), (1.0, 0.5), (np.nan, 2.0)])
def test_invalid_law(delta, alpha):
    with pytest.raises(InvalidLaw):
        DissipationLaw(delta, alpha)


@given(laws, reals)
def test_round_trip(law, v):
    assert abs(f(law, g(law, v)) - v) <= 1e-12 * (1 + abs(v))
    assert abs(g(law, f(law, v)) - v) <= 1e-12 * (1 + abs(v))


@given(laws, reals)
def test_oddness_and_evenness(law, v):
    assert f(law, -v) == -f(law, v)
    assert g(law, -v) == -g(law, v)
    assert F_anti(law, -v) == F_anti(law, v)
    assert G_anti(law, -v) == G_anti(law, v)


@given(laws, st.floats(1e-3, 1e3), st.sampled_from([-1.0, 1.0]))
def test_antiderivatives_by_central_differences(law, a, sign):
    v = sign * a
    h = 1e-6 * a
    dF = (F_anti(law, v + h) - F_anti(law, v - h)) / (2 * h)
    dG = (G_anti(law, v + h) - G_anti(law, v - h)) / (2 * h)
    assert dF == pytest.approx(f(law, v), rel=1e-6)
    assert dG == pytest.approx(g(law, v), rel=1e-6)


@given(laws, reals, reals)
def test_midpoint_convexity(law, a, b):
    for fun in (F_anti, G_anti):
        mid = fun(law, 0.5 * (a + b))
        assert mid <= 0.5 * (fun(law, a) + fun(law, b)) + 1e-9 * (1 + abs(mid))


@given(laws, reals, reals)
def test_strictly_increasing(law, a, b):
    if b - a > 1e-6:
        assert f(law, a) < f(law, b)
        assert g(law, a) < g(law, b)


@pytest.mark.parametrize("law", [GAS, DissipationLaw(0.7, 1.5), DissipationLaw(2.0, 1.0), DissipationLaw(1.3, 3.0)])
def test_fenchel_pair_by_grid_search(law):
    x = np.linspace(-6.0, 6.0, 240001)
    step = x[1] - x[0]
    for y in (-3.0, -0.4, 0.0, 0.9, 2.5):
        sup = np.max(x * y - F_anti(law, x))
        # grid maximum misses the true supremum by at most O(step^2 * f')
        assert sup <= G_anti(law, y) + 1e-12
        assert G_anti(law, y) - sup <= 10 * step ** 2 * (1 + abs(y)) * law.delta * law.alpha * 36
