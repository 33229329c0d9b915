"""Primal log-barrier method for small convex programs with power-law constraints.

Problem form, over ``v``::

    minimise    c^T v
    subject to  G v <= h
                delta_k |P_k v + p_k|^alpha_k - (Q_k v + q_k) <= 0
                E v = e

The feasible set must be bounded; the barrier has no minimiser otherwise.
Equalities are removed by a null-space parametrisation ``v = v0 + Z w``.  A
phase-1 problem (minimise the worst constraint value) finds a strictly
feasible start or proves infeasibility.  Every inequality is relaxed by a
small ``relax`` so that problems whose feasible set has an empty interior
(tight boxes, flows forced to zero) still have one; the relaxed optimum can
only be lower, so reported bounds stay valid lower bounds.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as la

from .errors import BarrierNonconvergence


@dataclass(frozen=True)
class BarrierSettings:
    mu0: float = 10.0
    shrink: float = 0.2
    inner_tol: float = 1e-9
    gap_tol: float = 1e-9
    loose_gap_tol: float = 1e-7
    path_tol: float = 1e-4
    interior: float = 1e-6
    flat_tol: float = 1e-9
    flat_flow: float = 1e-4
    tight_ratio: float = 1e-3
    max_reductions: int = 4
    relax: float = 1e-9
    max_newton: int = 80
    hess_floor: float = 1e-10

    def __post_init__(self):
        if not (self.mu0 > 0 and 0 < self.shrink < 1 and self.inner_tol > 0 and self.gap_tol > 0):
            raise ValueError("barrier settings must be positive with 0 < shrink < 1")
        if self.relax < 0:
            raise ValueError("relax must be nonnegative")


@dataclass
class ConvexProgram:
    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    P: np.ndarray
    p: np.ndarray
    Q: np.ndarray
    q: np.ndarray
    delta: np.ndarray
    alpha: np.ndarray
    E: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        n = self.c.size
        self.G = np.asarray(self.G, dtype=float).reshape(-1, n)
        self.P = np.asarray(self.P, dtype=float).reshape(-1, n)
        self.Q = np.asarray(self.Q, dtype=float).reshape(-1, n)
        self.E = np.asarray(self.E, dtype=float).reshape(-1, n)
        linear = self.alpha == 1.0
        if linear.any():
            # alpha = 1 edges are two linear inequalities: +-delta*u - aff <= 0
            d = self.delta[linear, None]
            rows = np.vstack([d * self.P[linear] - self.Q[linear], -d * self.P[linear] - self.Q[linear]])
            rhs = np.concatenate([self.q[linear] - self.delta[linear] * self.p[linear],
                                  self.q[linear] + self.delta[linear] * self.p[linear]])
            self.G = np.vstack([self.G, rows])
            self.h = np.concatenate([self.h, rhs])
            keep = ~linear
            self.P, self.p, self.Q, self.q = self.P[keep], self.p[keep], self.Q[keep], self.q[keep]
            self.delta, self.alpha = self.delta[keep], self.alpha[keep]

    def constraint_values(self, v):
        lin = self.G @ v - self.h
        u = self.P @ v + self.p
        pw = self.delta * np.abs(u) ** self.alpha - (self.Q @ v + self.q)
        return np.concatenate([lin, pw])

    @property
    def n_ineq(self):
        return self.h.size + self.q.size


@dataclass
class BarrierResult:
    v: np.ndarray
    value: float
    bound: float
    feasible: bool
    newton_steps: int
    max_violation: float
    relax: float = 0.0


class _Reduced:
    """Constraints in null-space coordinates ``w``, shifted by ``-relax``.

    ``phase_one`` appends a variable ``s`` subtracted from every constraint and
    the extra row ``-s <= 1``.
    """

    def __init__(self, prog: ConvexProgram, v0, z, relax, hess_floor):
        self.c = z.T @ prog.c
        self.c0 = float(prog.c @ v0)
        self.G = prog.G @ z
        self.h = prog.h - prog.G @ v0 + relax
        self.P = prog.P @ z
        self.p = prog.P @ v0 + prog.p
        self.Q = prog.Q @ z
        self.q = prog.Q @ v0 + prog.q + relax
        self.delta, self.alpha = prog.delta, prog.alpha
        self.floor = hess_floor
        self.lin_idx = np.arange(self.h.size)
        self.pw_idx = np.arange(self.q.size)

    def drop_constant(self, w, tol=0.0):
        """Remove constraints that do not depend on ``w``; False if one of them fails."""
        lin, pw, _ = self.values(w)
        cl = np.all(np.abs(self.G) < 1e-12, axis=1)
        cp = np.all(np.abs(self.P) < 1e-12, axis=1) & np.all(np.abs(self.Q) < 1e-12, axis=1)
        if np.any(lin[cl] > tol) or np.any(pw[cp] > tol):
            return False
        self.lin_idx, self.pw_idx = self.lin_idx[~cl], self.pw_idx[~cp]
        self.G, self.h = self.G[~cl], self.h[~cl]
        self.P, self.p, self.Q, self.q = self.P[~cp], self.p[~cp], self.Q[~cp], self.q[~cp]
        self.delta, self.alpha = self.delta[~cp], self.alpha[~cp]
        return True

    @property
    def n_ineq(self):
        return self.h.size + self.q.size

    def phase_one(self):
        aug = object.__new__(_Reduced)
        n = self.G.shape[1]
        e_s = np.zeros(n + 1)
        e_s[n] = 1.0
        aug.c, aug.c0 = e_s, 0.0
        aug.G = np.vstack([np.hstack([self.G, -np.ones((self.h.size, 1))]), -e_s])
        aug.h = np.concatenate([self.h, [1.0]])
        aug.P = np.hstack([self.P, np.zeros((self.q.size, 1))])
        aug.p = self.p
        aug.Q = np.hstack([self.Q, np.ones((self.q.size, 1))])
        aug.q = self.q
        aug.delta, aug.alpha, aug.floor = self.delta, self.alpha, self.floor
        return aug

    def values(self, w):
        u = self.P @ w + self.p
        return self.G @ w - self.h, self.delta * np.abs(u) ** self.alpha - (self.Q @ w + self.q), u

    def max_value(self, w):
        lin, pw, _ = self.values(w)
        return max(np.max(lin, initial=-np.inf), np.max(pw, initial=-np.inf))

    def objective(self, w, t):
        """``t c^T w - sum log(-g)``; ``inf`` outside the domain."""
        lin, pw, _ = self.values(w)
        if np.any(lin >= 0) or np.any(pw >= 0):
            return np.inf
        return t * (self.c @ w) - np.log(-lin).sum() - np.log(-pw).sum()

    def derivatives(self, w, t):
        lin, pw, u = self.values(w)
        gl = self.G / (-lin)[:, None]
        dg = (self.delta * self.alpha * np.abs(u) ** (self.alpha - 1) * np.sign(u))[:, None] * self.P - self.Q
        gp = dg / (-pw)[:, None]
        grad = t * self.c + gl.sum(axis=0) + gp.sum(axis=0)
        curv = self.delta * self.alpha * (self.alpha - 1) * np.maximum(np.abs(u), self.floor) ** (self.alpha - 2)
        hess = gl.T @ gl + gp.T @ gp + (self.P * (curv / -pw)[:, None]).T @ self.P
        return grad, hess

    def max_linear_step(self, w, d):
        """Largest step keeping the linear constraints strictly satisfied (times 0.99)."""
        rate = self.G @ d
        slack = self.h - self.G @ w
        pos = rate > 0
        if not pos.any():
            return np.inf
        return 0.99 * float(np.min(slack[pos] / rate[pos]))


def _newton_center(red: _Reduced, z, t, tol, max_newton, stop=None):
    """Damped Newton on ``t c^T z + barrier(z)``; ``stop(z)`` may end it early.

    Returns ``(z, steps, centred)``.
    """
    val = red.objective(z, t)
    for k in range(max_newton):
        grad, hess = red.derivatives(z, t)
        hess.flat[::z.size + 1] += 1e-14 * np.trace(hess)
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            return z, k, False
        dec = float(-grad @ step)
        if dec / 2 <= tol:
            return z, k, True
        s = min(1.0, red.max_linear_step(z, step))
        while s > 1e-16:
            tval = red.objective(z + s * step, t)
            if tval <= val - 0.25 * s * dec:
                break
            s *= 0.5
        if s <= 1e-16 or val - tval <= 1e-15 * (1.0 + abs(val)):
            # no progress above round-off: centred as well as double precision allows
            return z, k, dec < 1e-6
        z, val = z + s * step, tval
        if stop is not None and stop(z):
            return z, k + 1, True
    return z, max_newton, False


def _null_space(prog: ConvexProgram, tol=1e-10):
    n = prog.c.size
    if prog.E.shape[0] == 0:
        return np.zeros(n), np.eye(n), 0.0
    v0 = np.linalg.lstsq(prog.E, prog.e, rcond=None)[0]
    resid = float(np.max(np.abs(prog.E @ v0 - prog.e), initial=0.0))
    z = la.null_space(prog.E, rcond=tol)
    return v0, z, resid


def solve_barrier(prog: ConvexProgram, settings: BarrierSettings = BarrierSettings()) -> BarrierResult:
    """Minimise ``prog``; ``feasible=False`` (value ``inf``) when phase 1 proves infeasibility.

    ``bound`` is the duality-gap lower bound ``c^T v - m * mu`` on the relaxed
    optimum.  Raises :class:`BarrierNonconvergence` if a centering step fails.

    Phase 1 runs on the unrelaxed constraints.  When their feasible set is flat
    (``min max g = 0``) the constraints carrying the phase-1 multipliers are
    implicit equalities; they are moved into ``E`` and phase 1 is repeated in
    the smaller space.  A set that is thin but not flat is widened instead.
    """
    eq_rows, eq_rhs = [prog.E], [prog.e]
    steps = 0
    for _ in range(settings.max_reductions + 1):
        e_mat, e_vec = np.vstack(eq_rows), np.concatenate(eq_rhs)
        v0, z, resid = _null_space(replace(prog, E=e_mat, e=e_vec) if len(eq_rows) > 1 else prog)
        infeasible = BarrierResult(v0, np.inf, np.inf, False, steps, np.inf, settings.relax)
        if resid > 1e-8 * (1.0 + np.max(np.abs(e_vec), initial=0.0)):
            return infeasible
        red = _Reduced(prog, v0, z, 0.0, settings.hess_floor)
        w = np.zeros(z.shape[1])
        if not red.drop_constant(w, tol=settings.relax):
            return infeasible
        if red.n_ineq == 0 or red.max_value(w) < -settings.interior:
            relax = settings.relax
            break
        w, status, sigma, lam, k = _phase_one(red, w, settings)
        steps += k
        if status == "infeasible":
            return BarrierResult(v0 + z @ w, np.inf, np.inf, False, steps, np.inf, settings.relax)
        if status == "interior":
            relax = settings.relax
            break
        new_rows = _implicit_equalities(prog, red, w, lam, settings) if sigma > -settings.flat_tol else None
        if not new_rows:
            # thin but not flat: widen every constraint so the start has slack `interior`
            relax = max(settings.relax, sigma + settings.interior)
            break
        for row, rhs in new_rows:
            eq_rows.append(row[None, :])
            eq_rhs.append(np.array([rhs]))
    else:
        relax = max(settings.relax, red.max_value(w) + settings.interior)

    red.h = red.h + relax
    red.q = red.q + relax
    m = red.n_ineq
    if z.shape[1] == 0 or m == 0:
        if m == 0 and np.any(np.abs(red.c) > 1e-14):
            raise BarrierNonconvergence("unbounded program: objective direction without constraints")
        v = v0 + z @ w
        val = float(prog.c @ v)
        return BarrierResult(v, val, val, True, steps, _violation(prog, v), relax)

    mu = settings.mu0
    last = None
    while True:
        final = m * mu <= settings.gap_tol * (1.0 + abs(red.c @ w + red.c0))
        tol = settings.inner_tol if final else max(settings.inner_tol, settings.path_tol)
        w_new, k, ok = _newton_center(red, w, 1.0 / mu, tol, settings.max_newton)
        steps += k
        if not ok:
            # round-off stall late on the path: the previous centred point is good enough
            if last is not None and m * last[1] <= settings.loose_gap_tol * (1.0 + abs(last[2])):
                w, mu, val = last
                break
            raise BarrierNonconvergence(f"centering failed at mu={mu:.3e}")
        w = w_new
        val = float(red.c @ w) + red.c0
        last = (w, mu, val)
        if m * mu <= settings.gap_tol * (1.0 + abs(val)):
            if final:
                break
            continue
        mu *= settings.shrink
    v = v0 + z @ w
    return BarrierResult(v, val, val - m * mu, True, steps, _violation(prog, v), relax)


def _implicit_equalities(prog: ConvexProgram, red: _Reduced, w, lam, settings):
    """Equality rows (in ``v``) for the constraints that carry the phase-1 multipliers.

    A power constraint can only be flat with ``u = 0`` and a zero affine part;
    anything else returns ``None`` (the caller then widens instead).
    """
    tight = lam >= settings.tight_ratio * lam.max()
    n_lin = red.h.size
    lin, pw, u = red.values(w)
    rows = []
    for i in np.flatnonzero(tight[:n_lin]):
        k = red.lin_idx[i]
        rows.append((prog.G[k], prog.h[k]))
    for i in np.flatnonzero(tight[n_lin:]):
        aff = red.Q[i] @ w + red.q[i]
        if abs(u[i]) > settings.flat_flow or abs(aff) > settings.flat_flow:
            return None
        k = red.pw_idx[i]
        rows.append((prog.P[k], -prog.p[k]))
        rows.append((prog.Q[k], -prog.q[k]))
    return rows


def _violation(prog, v):
    return float(max(np.max(prog.constraint_values(v), initial=0.0), 0.0))


def _phase_one(red: _Reduced, w, settings):
    """Minimise ``s`` subject to ``g(w) <= s`` and ``s >= -1``.

    Returns ``(w, status, s, multipliers, steps)``.  Status is ``"interior"``
    once every constraint has slack ``settings.interior``, ``"infeasible"``
    when the dual bound proves ``min s > 0``, and ``"thin"`` when ``min s`` is
    pinned within ``interior`` of zero.  The multipliers ``mu / (s - g)`` of the
    last centred point identify the constraints that pin it.
    """
    aug = red.phase_one()
    n = w.size
    zvec = np.concatenate([w, [red.max_value(w) + 1.0]])
    target = -settings.interior

    def inside(zz):
        return red.max_value(zz[:n]) < target

    m = aug.n_ineq
    mu = settings.mu0
    steps = 0
    while True:
        zvec, k, ok = _newton_center(aug, zvec, 1.0 / mu, settings.path_tol, settings.max_newton, stop=inside)
        steps += k
        if inside(zvec):
            zc, k, _ = _newton_center(aug, zvec, 1.0 / mu, settings.path_tol, settings.max_newton)
            steps += k
            zvec = zc if inside(zc) else zvec
            return zvec[:n], "interior", red.max_value(zvec[:n]), None, steps
        if not ok:
            raise BarrierNonconvergence(f"phase 1 centering failed at mu={mu:.3e}")
        sigma = zvec[n]
        # min s >= s - m*mu
        if sigma - m * mu > settings.relax:
            return zvec[:n], "infeasible", sigma, None, steps
        if m * mu < settings.flat_tol:
            lin, pw, _ = red.values(zvec[:n])
            lam = mu / (sigma - np.concatenate([lin, pw]))
            return zvec[:n], "thin", red.max_value(zvec[:n]), lam, steps
        mu *= settings.shrink
