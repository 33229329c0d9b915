"""Projected Newton for smooth convex objectives over a box (Bertsekas-style)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la


@dataclass
class BoxResult:
    z: np.ndarray
    value: float
    iterations: int
    converged: bool
    pg_norm: float


def projected_newton(fun, grad_hess, z0, lo, hi, tol=1e-10, max_iter=100, sigma=1e-4, shrink=0.5,
                     reg=0.0, callback=None, ftol=0.0, max_step=np.inf):
    """Minimise ``fun`` over ``lo <= z <= hi``.

    ``grad_hess(z)`` returns ``(gradient, dense Hessian)``.  Variables sitting on
    a bound with the gradient pushing outward are held fixed for the Newton
    solve; the step is projected and backtracked (Armijo along the projection arc).
    ``ftol`` stops (as converged) once an accepted step lowers the objective by
    less than ``ftol``.  ``reg`` adds ``reg * max|diag|`` to the free Hessian block, which keeps steps
    finite along flat directions; indefinite blocks get a growing shift.
    Steps longer than ``max_step`` (infinity norm) are scaled back.
    """
    z = np.clip(np.asarray(z0, dtype=float), lo, hi)
    val = fun(z)
    pg = np.inf
    for it in range(1, max_iter + 1):
        g, h = grad_hess(z)
        pg = float(np.max(np.abs(z - np.clip(z - g, lo, hi)), initial=0.0))
        if pg < tol:
            return BoxResult(z, val, it - 1, True, pg)
        eps = min(1e-9 * (1.0 + np.max(np.abs(z), initial=0.0)), pg)
        active = ((z <= lo + eps) & (g > 0)) | ((z >= hi - eps) & (g < 0))
        free = ~active
        d = -g.copy()
        if free.any():
            hf = h[np.ix_(free, free)]
            if reg:
                hf = hf + reg * max(np.max(np.abs(np.diag(hf))), 1e-300) * np.eye(hf.shape[0])
            try:
                d[free] = -la.cho_solve(la.cho_factor(hf), g[free])
            except la.LinAlgError:
                shift = 1e-10 * (1.0 + np.max(np.abs(np.diag(hf))))
                while True:
                    try:
                        d[free] = -la.cho_solve(la.cho_factor(hf + shift * np.eye(hf.shape[0])), g[free])
                        break
                    except la.LinAlgError:
                        shift *= 10
        if not np.all(np.isfinite(d)):
            d = -g.copy()
        size = np.max(np.abs(d), initial=0.0)
        if size > max_step:
            d *= max_step / size
        t = 1.0
        accepted = False
        while t > 1e-14:
            trial = np.clip(z + t * d, lo, hi)
            tval = fun(trial)
            pred = t * g[free] @ d[free] + g[active] @ (trial - z)[active]
            if tval <= val + sigma * pred or (tval <= val and abs(tval - val) <= 1e-14 * (1 + abs(val))):
                accepted = True
                break
            t *= shrink
        if not accepted or np.array_equal(trial, z):
            return BoxResult(z, val, it, pg < 1e3 * tol, pg)
        decrease = val - tval
        z, val = trial, tval
        if callback is not None:
            callback(z, val)
        if decrease < ftol:
            return BoxResult(z, val, it, True, pg)
    g, _ = grad_hess(z)
    pg = float(np.max(np.abs(z - np.clip(z - g, lo, hi)), initial=0.0))
    return BoxResult(z, val, max_iter, pg < tol, pg)
