"""Partial offloading under TDMA as a jointly convex program.

Users are served in ascending L_bar. With gamma_k the offloaded fraction and
tau_k the uplink duration in seconds, the problem is

    min  sum  tau_k / (T_s a_k) (2^(T_s B_k gamma_k / tau_k) - 1) + (M_k / L_k^2) (B_k (1 - gamma_k))^3
    s.t. sum_{i<=k} tau_i + delta_c B_k gamma_k <= L_bar_k,   0 <= gamma_k <= 1,   tau_k >= 0.

In offloaded bits B' = gamma B and channel uses t = tau / T_s the transmit
term is the perspective t (2^(B'/t) - 1) / a, which the Hessian check below
works with directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .barrier import barrier_minimize
from .errors import InfeasibleUser
from .model import Allocation, EnergyReport, SystemParams, as_arrays, l_bar
from .tdma_complete import tdma_power

LN2 = np.log(2.0)
GAMMA_ZERO = 1e-10


@dataclass(frozen=True)
class TdmaPartialPoint:
    """Offloaded bits and uplink durations (channel uses), both in user index order."""

    B_prime: np.ndarray
    t: np.ndarray


@dataclass(frozen=True)
class HessianBlocks:
    H11: np.ndarray  # d2f/dt2
    H22: np.ndarray  # d2f/dB'2
    H12: np.ndarray  # d2f/dt dB'

    def assemble(self) -> np.ndarray:
        """The 2K x 2K Hessian in variable order (t_1..t_K, B'_1..B'_K)."""
        return np.block([[np.diag(self.H11), np.diag(self.H12)],
                         [np.diag(self.H12), np.diag(self.H22)]])


@dataclass
class PsdReport:
    passed: bool
    h11_positive: bool
    det_ok: bool
    min_eig: float
    scale: float
    fd_max_rel: float
    details: dict = field(default_factory=dict)


class _Objective:
    """Objective, gradient and Hessian in x = (gamma, tau) for users pre-sorted by L_bar."""

    def __init__(self, B, alpha, cl, T_s):
        self.c = T_s * B
        self.w = 1.0 / (T_s * alpha)
        self.cl = cl
        self.B3 = B ** 3
        self.n = B.size

    def split(self, x):
        return x[:self.n], x[self.n:]

    def __call__(self, x) -> float:
        g, tau = self.split(x)
        if np.any(tau <= 0):
            return np.inf
        with np.errstate(over="ignore"):
            tx = self.w * tau * np.expm1(LN2 * self.c * g / tau)
        return float(np.sum(tx) + np.sum(self.cl * self.B3 * (1.0 - g) ** 3))

    def grad(self, x):
        g, tau = self.split(x)
        r = self.c * g / tau
        p = np.exp2(r)
        dg = self.w * self.c * LN2 * p - 3.0 * self.cl * self.B3 * (1.0 - g) ** 2
        dt = self.w * (np.expm1(LN2 * r) - LN2 * r * p)
        return np.concatenate([dg, dt])

    def hess(self, x):
        g, tau = self.split(x)
        r = self.c * g / tau
        p = np.exp2(r)
        hgg = self.w * self.c ** 2 * LN2 ** 2 * p / tau + 6.0 * self.cl * self.B3 * (1.0 - g)
        htt = self.w * LN2 ** 2 * r ** 2 * p / tau
        hgt = -self.w * self.c * LN2 ** 2 * r * p / tau
        n = self.n
        H = np.zeros((2 * n, 2 * n))
        i = np.arange(n)
        H[i, i] = hgg
        H[n + i, n + i] = htt
        H[i, n + i] = hgt
        H[n + i, i] = hgt
        return H


def partial_constraints(B, delta_c, Lb):
    """Rows of A x <= b for x = (gamma, tau), users sorted by L_bar."""
    n = B.size
    eye = np.eye(n)
    zero = np.zeros((n, n))
    A = np.block([[delta_c * np.diag(B), np.tril(np.ones((n, n)))],
                  [eye, zero],
                  [-eye, zero],
                  [zero, -eye]])
    b = np.concatenate([Lb, np.ones(n), np.zeros(n), np.zeros(n)])
    return A, b


def _start(fun, c, B, delta_c, Lb):
    """Strictly feasible starts for a few common gamma levels; keep the cheapest."""
    best = None
    for level in (0.5, 0.25, 0.75, 0.1, 0.9):
        g = np.full(B.size, level)
        if delta_c > 0:
            g = np.minimum(g, 0.5 * Lb / (delta_c * B))
        rem = Lb - delta_c * B * g
        rate = np.max(np.cumsum(c * g) / rem)
        tau = 0.9 * c * g / rate
        x = np.concatenate([g, tau])
        fx = fun(x)
        if np.isfinite(fx) and (best is None or fx < best[0]):
            best = (fx, x)
    return best[1]


def tdma_partial_arrays(B, alpha, cl, Lb, params: SystemParams):
    """Array kernel for users with L_bar > 0.

    Returns (gamma, tau, R, P, tx, local, order, info) with all per-user
    arrays in input order; ``order`` is the transmit order.
    """
    B = np.asarray(B, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    cl = np.asarray(cl, dtype=float)
    Lb = np.asarray(Lb, dtype=float)
    bad = np.flatnonzero(~(Lb > 0))
    if bad.size:
        raise InfeasibleUser(f"users {bad.tolist()} have no uplink latency left", users=bad.tolist())
    n = B.size
    order = np.argsort(Lb, kind="stable")
    Bs, als, cls, Ls = B[order], alpha[order], cl[order], Lb[order]
    fun = _Objective(Bs, als, cls, params.T_s)
    A, b = partial_constraints(Bs, params.delta_c, Ls)
    res = barrier_minimize(fun, fun.grad, fun.hess, A, b, _start(fun, fun.c, Bs, params.delta_c, Ls),
                           gap_rtol=1e-10)
    gs, ts = res.x[:n], res.x[n:]
    gamma, tau = np.empty(n), np.empty(n)
    gamma[order], tau[order] = gs, ts
    gamma = np.clip(gamma, 0.0, 1.0)
    off = gamma >= GAMMA_ZERO
    gamma = np.where(off, gamma, 0.0)
    R = np.where(off, params.T_s * B * gamma / np.where(off, tau, 1.0), 0.0)
    P = np.where(off, tdma_power(R, alpha), 0.0)
    tx = np.where(off, tau / params.T_s * P, 0.0)
    local = cl * (B * (1.0 - gamma)) ** 3
    info = {"kkt": res.kkt, "newton_steps": res.newton_steps, "objective": res.fun}
    return gamma, tau, R, P, tx, local, order, info


def solve_partial_tdma(users, params: SystemParams):
    """Optimal TDMA partial offloading. Returns ``(Allocation, EnergyReport)``.

    Raises :class:`InfeasibleUser` if some user has L_bar <= 0. Users ending
    with a negligible fraction are reported with R = P = gamma = 0.
    """
    arr = as_arrays(users)
    gamma, tau, R, P, tx, local, order, info = tdma_partial_arrays(
        arr.B, arr.alpha, arr.M / arr.L ** 2, l_bar(arr), params)
    info = dict(info, tau=tau.tolist())
    alloc = Allocation(R, P, gamma, tuple(int(i) for i in order), "tdma-partial", info=info)
    return alloc, EnergyReport(tx, local)


def point_from_solution(alloc: Allocation, users, params: SystemParams) -> TdmaPartialPoint:
    arr = as_arrays(users)
    return TdmaPartialPoint(B_prime=alloc.gamma * arr.B, t=np.asarray(alloc.info["tau"]) / params.T_s)


def perspective_energy(point: TdmaPartialPoint, users) -> float:
    """Objective in (B', t): sum t (2^(B'/t) - 1) / a + (M / L^2) (B - B')^3."""
    arr = as_arrays(users)
    Bp, t = np.asarray(point.B_prime, dtype=float), np.asarray(point.t, dtype=float)
    tx = t * np.expm1(LN2 * Bp / t) / arr.alpha
    return float(np.sum(tx) + np.sum(arr.M / arr.L ** 2 * (arr.B - Bp) ** 3))


def perspective_grad(point: TdmaPartialPoint, users):
    """(df/dt, df/dB') per user."""
    arr = as_arrays(users)
    Bp, t = np.asarray(point.B_prime, dtype=float), np.asarray(point.t, dtype=float)
    r = Bp / t
    with np.errstate(over="ignore", invalid="ignore"):
        p = np.exp2(r)
        dt = (np.expm1(LN2 * r) - LN2 * r * p) / arr.alpha
        dB = LN2 * p / arr.alpha - 3.0 * arr.M / arr.L ** 2 * (arr.B - Bp) ** 2
    return dt, dB


def hessian_blocks(point: TdmaPartialPoint, users) -> HessianBlocks:
    arr = as_arrays(users)
    Bp, t = np.asarray(point.B_prime, dtype=float), np.asarray(point.t, dtype=float)
    p = np.exp2(Bp / t)
    h11 = LN2 ** 2 * Bp ** 2 / t ** 3 * p / arr.alpha
    h22 = LN2 ** 2 / (arr.alpha * t) * p + 6.0 * arr.M / arr.L ** 2 * (arr.B - Bp)
    h12 = -LN2 ** 2 * Bp / t ** 2 * p / arr.alpha
    return HessianBlocks(h11, h22, h12)


def hessian_psd_check(point: TdmaPartialPoint, users, params: SystemParams | None = None,
                      *, fd_rtol=1e-5, eig_rtol=1e-10, det_rtol=1e-12) -> PsdReport:
    """Check positive semidefiniteness of the objective Hessian at ``point``.

    Verifies H11 > 0 wherever B' > 0, the per-user 2x2 determinant, the
    smallest eigenvalue of the assembled matrix, and each analytic second
    derivative against central differences of the analytic gradient.
    """
    arr = as_arrays(users)
    Bp, t = np.asarray(point.B_prime, dtype=float), np.asarray(point.t, dtype=float)
    hb = hessian_blocks(point, users)
    H = hb.assemble()
    scale = float(np.max(np.abs(H))) if H.size else 0.0
    scale = scale if scale > 0 else 1.0

    pos = Bp > 0
    h11_ok = bool(np.all(hb.H11[pos] > 0))
    det = hb.H11 * hb.H22 - hb.H12 ** 2
    det_scale = np.maximum(np.abs(hb.H11 * hb.H22), np.abs(hb.H12) ** 2)
    det_ok = bool(np.all(det >= -det_rtol * np.maximum(det_scale, 1e-300)))
    min_eig = float(np.min(np.linalg.eigvalsh(H)))
    eig_ok = min_eig >= -eig_rtol * scale

    # central differences of the gradient, one variable at a time
    worst = 0.0
    ht = 1e-4 * t
    # 2^(B'/t) varies on the scale of t, so the B' step follows t as well
    hB = 1e-4 * np.maximum(np.minimum(Bp, t), 1e-3 * t)
    up = TdmaPartialPoint(Bp, t + ht)
    dn = TdmaPartialPoint(Bp, t - ht)
    gt_up, gB_up = perspective_grad(up, users)
    gt_dn, gB_dn = perspective_grad(dn, users)
    fd11 = (gt_up - gt_dn) / (2 * ht)
    fd12a = (gB_up - gB_dn) / (2 * ht)
    lo = np.maximum(Bp - hB, 0.0)
    hi = np.minimum(Bp + hB, arr.B)
    gt_up, gB_up = perspective_grad(TdmaPartialPoint(hi, t), users)
    gt_dn, gB_dn = perspective_grad(TdmaPartialPoint(lo, t), users)
    fd22 = (gB_up - gB_dn) / (hi - lo)
    fd12b = (gt_up - gt_dn) / (hi - lo)
    # with B' = 0 the t-derivatives vanish identically; only the exact zero is checked there
    everyone = np.ones_like(pos)
    pairs = {"H11": (hb.H11, fd11, pos), "H22": (hb.H22, fd22, everyone),
             "H12_t": (hb.H12, fd12a, pos), "H12_B": (hb.H12, fd12b, pos)}
    fd_err = {}
    for name, (an, fd, mask) in pairs.items():
        ref = np.maximum(np.abs(an[mask]), 1e-12 * scale)
        err = float(np.max(np.abs(an[mask] - fd[mask]) / ref)) if np.any(mask) else 0.0
        fd_err[name] = err
        worst = max(worst, err)
    zero_ok = bool(np.all(hb.H11[~pos] == 0) and np.all(hb.H12[~pos] == 0))
    passed = h11_ok and zero_ok and det_ok and eig_ok and worst <= fd_rtol
    return PsdReport(passed=passed, h11_positive=h11_ok, det_ok=det_ok, min_eig=min_eig, scale=scale,
                     fd_max_rel=worst, details={"fd": fd_err, "det_min": float(np.min(det))})
