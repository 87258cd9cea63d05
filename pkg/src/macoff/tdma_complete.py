"""Optimal rates and powers for completely offloading users under TDMA.

Users transmit in ascending order of L_tilde. In the transmit durations
t_k = T_s B_k / R_k (seconds) the cumulative deadlines are linear and each
energy term (t / (T_s alpha)) (2^(T_s B / t) - 1) is a convex perspective,
so the problem goes to the barrier kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .barrier import barrier_minimize
from .errors import InfeasibleUser
from .model import Allocation, EnergyReport, SystemParams, as_arrays, l_tilde

LN2 = np.log(2.0)


@dataclass(frozen=True)
class TdmaSchedule:
    """``order`` are positions in the offload set, ``t`` the durations in that order."""

    order: np.ndarray
    t: np.ndarray


def tdma_power(rate, alpha):
    """Single-user capacity inverse, (2^R - 1) / alpha."""
    return np.expm1(LN2 * np.asarray(rate, dtype=float)) / alpha


def transmit_order(L_tilde) -> np.ndarray:
    return np.argsort(np.asarray(L_tilde, dtype=float), kind="stable")


def time_energy(t, c, w):
    """Energy terms w t (2^(c/t) - 1) with c = T_s B and w = 1 / (T_s alpha)."""
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        return w * t * np.expm1(LN2 * c / t)


def time_energy_grad(t, c, w):
    r = c / t
    return w * (np.expm1(LN2 * r) - LN2 * r * np.exp2(r))


def time_energy_hess(t, c, w):
    r = c / t
    return w * LN2 ** 2 * r ** 2 / t * np.exp2(r)


def cumulative_constraints(n):
    """Rows for cumsum(t) <= L and -t <= 0."""
    return np.vstack([np.tril(np.ones((n, n))), -np.eye(n)])


def interior_start(L_sorted):
    """Half of each deadline gap plus a small common margin; strictly feasible."""
    L_sorted = np.asarray(L_sorted, dtype=float)
    n = L_sorted.size
    gaps = np.diff(L_sorted, prepend=0.0)
    return gaps / 2 + L_sorted[0] / (4 * n)


def equal_rate_start(L_sorted, c, slack=0.9):
    """Durations proportional to c, scaled so every cumulative deadline has ``slack`` margin."""
    c = np.asarray(c, dtype=float)
    rate = np.max(np.cumsum(c) / np.asarray(L_sorted, dtype=float))
    return slack * c / rate


def best_start(fun, candidates):
    vals = [fun(x) for x in candidates]
    return candidates[int(np.nanargmin(vals))]


def tdma_complete_arrays(B, alpha, L_tilde, T_s):
    """Array kernel. Returns (R, P, schedule, energy, info) in input order."""
    B = np.asarray(B, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    L_tilde = np.asarray(L_tilde, dtype=float)
    bad = np.flatnonzero(~(L_tilde > 0))
    if bad.size:
        raise InfeasibleUser(f"users {bad.tolist()} have no latency left for complete offloading",
                             users=bad.tolist())
    n = B.size
    order = transmit_order(L_tilde)
    Ls = L_tilde[order]
    c = T_s * B[order]
    w = 1.0 / (T_s * alpha[order])

    if n == 1:
        ts = Ls.copy()
        info = {"kkt": 0.0, "newton_steps": 0}
    else:
        fun = lambda t: float(np.sum(time_energy(t, c, w)))  # noqa: E731
        res = barrier_minimize(
            fun,
            lambda t: time_energy_grad(t, c, w),
            lambda t: np.diag(time_energy_hess(t, c, w)),
            cumulative_constraints(n),
            np.concatenate([Ls, np.zeros(n)]),
            best_start(fun, [interior_start(Ls), equal_rate_start(Ls, c)]),
            gap_rtol=1e-10,
        )
        ts = res.x
        info = {"kkt": res.kkt, "newton_steps": res.newton_steps}

    t = np.empty(n)
    t[order] = ts
    R = T_s * B / t
    P = tdma_power(R, alpha)
    E = B / R * P
    return R, P, TdmaSchedule(order=order, t=ts), E, info


def solve_complete_tdma(offload_set, users, params: SystemParams):
    """Optimal TDMA allocation when exactly ``offload_set`` offloads.

    Returns ``(Allocation, EnergyReport)`` over the full user list, with
    non-offloading users charged their local energy. ``allocation.info``
    carries the barrier statistics and the KKT residual.
    """
    arr = as_arrays(users)
    K = len(arr)
    idx = np.asarray(sorted(set(int(i) for i in offload_set)), dtype=int)
    R, P, gamma, tx = np.zeros(K), np.zeros(K), np.zeros(K), np.zeros(K)
    local = arr.M / arr.L ** 2 * arr.B ** 3
    order, info = (), {"kkt": 0.0, "newton_steps": 0}
    if idx.size:
        r, p, sched, e, info = tdma_complete_arrays(arr.B[idx], arr.alpha[idx],
                                                    l_tilde(arr, params)[idx], params.T_s)
        R[idx], P[idx], tx[idx] = r, p, e
        gamma[idx] = 1.0
        local[idx] = 0.0
        order = tuple(int(i) for i in idx[sched.order])
    return Allocation(R, P, gamma, order, "tdma-complete", info=info), EnergyReport(tx, local)
