"""Log-barrier interior-point method for small dense problems with linear inequalities.

Minimises a smooth convex ``f`` subject to ``A x <= b`` from a strictly
feasible start. For each barrier weight ``mu`` the barrier function
``f - mu * sum(log(b - A x))`` is minimised by primal-dual Newton steps with
an Armijo backtracking search on that function; ``mu`` then shrinks by a
fixed factor. Multipliers are carried as variables instead of being read off
as ``mu / s``, so stationarity resolves to full precision even when an active
slack sits below the rounding level of ``b - A x``. One kernel serves both
TDMA problem adapters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverStall

TINY = 1e-300
EPS = np.finfo(float).eps


@dataclass
class BarrierResult:
    x: np.ndarray
    fun: float
    lam: np.ndarray
    slack: np.ndarray
    newton_steps: int
    outer_steps: int
    kkt: float
    stationarity: float
    gap: float


def kkt_residual(grad_f, A, b, x, lam, f):
    """Relative KKT residual: max of stationarity, complementarity, primal and dual violation.

    Complementarity is measured against ``|f|``, which callers may floor.
    """
    g = grad_f(x)
    atl = A.T @ lam
    stat = float(np.max(np.abs(g + atl)) / max(np.max(np.abs(g)), np.max(np.abs(atl)), TINY))
    s = b - A @ x
    comp = float(np.sum(np.abs(lam * s))) / max(abs(f), TINY)
    primal = float(np.max(np.maximum(-s, 0.0)) / max(np.max(np.abs(b)), TINY))
    dual = float(np.max(np.maximum(-lam, 0.0))) if lam.size else 0.0
    return max(stat, comp, primal, dual), stat, comp


def barrier_minimize(fun, grad, hess, A, b, x0, *, gap_rtol=1e-10, stat_rtol=1e-11, mu_factor=10.0,
                     armijo=1e-4, shrink=0.5, max_newton=400, max_outer=80, f_floor_rtol=1e-9) -> BarrierResult:
    """Solve ``min fun(x) s.t. A x <= b``.

    ``fun`` must return ``inf`` (or nan) outside its domain. Stops once the
    duality measure ``m * mu`` is below ``gap_rtol * max(|f|, f_floor)`` and
    the relative stationarity residual is below ``stat_rtol``, where
    ``f_floor = f_floor_rtol * |f(x0)|`` keeps the target reachable when the
    optimum is zero. Raises :class:`SolverStall` when the Newton budget runs
    out.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    x = np.array(x0, dtype=float)
    m = b.size
    s = b - A @ x
    if not np.all(s > 0):
        raise ValueError("barrier start must be strictly feasible")
    fx = fun(x)
    if not np.isfinite(fx):
        raise ValueError("objective is not finite at the start point")

    mu = abs(fx) / m
    f_floor = max(f_floor_rtol * abs(fx), TINY)
    lam = mu / s
    newton = 0
    outer = 0
    while True:
        outer += 1
        final = m * mu <= gap_rtol * max(abs(fx), f_floor)
        while True:
            gx = grad(x)
            atl = A.T @ lam
            stat = np.max(np.abs(gx + atl)) / max(np.max(np.abs(gx)), np.max(np.abs(atl)), TINY)
            inv_s = 1.0 / s
            grad_phi = gx + mu * (A.T @ inv_s)
            H = hess(x) + (A.T * (lam * inv_s)) @ A
            try:
                dx = np.linalg.solve(H, -grad_phi)
            except np.linalg.LinAlgError:
                dx = np.linalg.lstsq(H, -grad_phi, rcond=None)[0]
            dec2 = float(-grad_phi @ dx)
            comp = np.max(np.abs(lam * s - mu)) / mu
            phi0 = fx - mu * np.sum(np.log(s))
            centred = dec2 <= 0.1 * mu * m
            # On the last weight lam * s can no longer be resolved for active rows,
            # so only stationarity and the decrement are tested.
            if final:
                if stat <= stat_rtol and centred:
                    break
            elif centred and comp <= 0.5:
                break
            if newton >= max_newton:
                raise SolverStall(f"interior point exhausted {max_newton} Newton steps")
            newton += 1
            ds = -(A @ dx)
            dlam = mu * inv_s - lam - lam * inv_s * ds

            step = 1.0
            neg = ds < 0
            if np.any(neg):
                step = min(1.0, 0.99 * float(np.min(-s[neg] / ds[neg])))
            slack_tol = 10 * EPS * (abs(phi0) + mu * np.sum(np.abs(np.log(s))))
            while True:
                xn = x + step * dx
                sn = b - A @ xn
                if np.all(sn > 0):
                    fn = fun(xn)
                    if np.isfinite(fn):
                        phin = fn - mu * np.sum(np.log(sn))
                        if phin <= phi0 + armijo * step * float(grad_phi @ dx) + slack_tol:
                            break
                step *= shrink
                if step < 1e-16:
                    raise SolverStall("line search failed to decrease the barrier function")
            dstep = 1.0
            neg = dlam < 0
            if np.any(neg):
                dstep = min(1.0, 0.99 * float(np.min(-lam[neg] / dlam[neg])))
            x, s, fx = xn, sn, fn
            lam = lam + dstep * dlam
        if final:
            break
        if outer >= max_outer:
            raise SolverStall("interior point exhausted its outer iteration budget")
        mu = max(mu / mu_factor, 0.5 * gap_rtol * max(abs(fx), f_floor) / m)

    kkt, stat, _ = kkt_residual(grad, A, b, x, lam, max(abs(fx), f_floor))
    return BarrierResult(x=x, fun=fx, lam=lam, slack=s, newton_steps=newton, outer_steps=outer,
                         kkt=kkt, stationarity=stat, gap=float(m * mu))
