"""Power-law dissipation ``f(x) = delta * sgn(x) * |x|**alpha`` and its calculus.

All functions broadcast: ``delta``/``alpha`` may be scalars or per-edge arrays,
which is how the solver kernels call them.  The ``DissipationLaw`` wrappers are
the scalar, one-edge view.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidLaw

DEFAULT_SMOOTH_EPS = 1e-8


@dataclass(frozen=True)
class DissipationLaw:
    delta: float = 1.0
    alpha: float = 2.0

    def __post_init__(self):
        if not np.isfinite(self.delta) or self.delta <= 0:
            raise InvalidLaw(f"delta must be positive, got {self.delta}")
        if not np.isfinite(self.alpha) or self.alpha < 1:
            raise InvalidLaw(f"alpha must be >= 1, got {self.alpha}")


def _params(law):
    if isinstance(law, DissipationLaw):
        return law.delta, law.alpha
    delta, alpha = law
    return np.asarray(delta, dtype=float), np.asarray(alpha, dtype=float)


def flow_to_drop(delta, alpha, x):
    x = np.asarray(x, dtype=float)
    return delta * np.sign(x) * np.abs(x) ** alpha


def drop_to_flow(delta, alpha, y):
    y = np.asarray(y, dtype=float)
    return np.sign(y) * (np.abs(y) / delta) ** (1.0 / alpha)


def flow_energy(delta, alpha, x):
    x = np.asarray(x, dtype=float)
    return delta * np.abs(x) ** (alpha + 1.0) / (alpha + 1.0)


def drop_energy(delta, alpha, y):
    y = np.asarray(y, dtype=float)
    return (alpha / (alpha + 1.0)) * np.abs(y) ** ((alpha + 1.0) / alpha) / delta ** (1.0 / alpha)


def drop_to_flow_slope(delta, alpha, y, smooth_eps=DEFAULT_SMOOTH_EPS):
    """Derivative of the inverse law; capped at ``|y| = smooth_eps`` so it stays finite."""
    if smooth_eps <= 0:
        raise ValueError("smooth_eps must be positive")
    y = np.maximum(np.abs(np.asarray(y, dtype=float)), smooth_eps)
    return (1.0 / alpha) * delta ** (-1.0 / alpha) * y ** (1.0 / alpha - 1.0)


def flow_slope(delta, alpha, x):
    x = np.asarray(x, dtype=float)
    return alpha * delta * np.abs(x) ** (alpha - 1.0)


# Single-law API -------------------------------------------------------------


def f(law, x):
    """Potential drop produced by flow ``x``."""
    return flow_to_drop(*_params(law), x)


def g(law, y):
    """Flow driven by potential drop ``y``; exact inverse of :func:`f`."""
    return drop_to_flow(*_params(law), y)


def F_anti(law, x):
    """Convex antiderivative of ``f`` with ``F_anti(0) == 0``."""
    return flow_energy(*_params(law), x)


def G_anti(law, y):
    """Convex antiderivative of ``g`` with ``G_anti(0) == 0``; the Fenchel conjugate of ``F_anti``."""
    return drop_energy(*_params(law), y)


def g_prime(law, y, smooth_eps=DEFAULT_SMOOTH_EPS):
    return drop_to_flow_slope(*_params(law), y, smooth_eps)
