"""Partial offloading under FullMA by coordinate descent over the uplink rates.

For fixed rates the offloaded fraction and the powers have closed forms:
each user spends its whole uplink budget, gamma_k = Lbar_k R_k / (B_k (T_s +
delta_c R_k)), and the powers follow the capacity-region vertex picked by
sorting rho'_k = Lbar_k / (alpha_k (T_s + delta_c R_k)). What remains is a
function of the rates alone that is quasi-convex in each coordinate, so each
coordinate step is a one-dimensional root search on the sign of the
derivative factor F_r. Sweeps run to stationarity for a fixed decode
order, then the order is re-sorted and the process repeats.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleUser, NonMonotone, OutOfBracket
from .fullma_complete import ordered_powers
from .model import Allocation, EnergyReport, SystemParams, UserArrays, as_arrays, l_bar

LN2 = np.log(2.0)
R_CAP = 60.0
REL_TOL = 1e-8
MAX_OUTER = 50
MAX_SWEEPS = 500
MONO_TOL = 1e-10


@dataclass(frozen=True)
class RhoPrimeOrder:
    """``pi[0]`` has the largest rho' and is decoded last."""

    rho_prime: np.ndarray
    pi: np.ndarray


@dataclass(frozen=True)
class CoordinateSubproblem:
    """Data of the one-dimensional problem in R_k with the other rates held fixed."""

    k: int
    Lambda: float
    Omega: float
    R_lo: float
    R_hi: float
    L_bar: float
    B: float
    c_loc: float  # M / L^2
    T_s: float
    delta_c: float

    def f(self, R):
        """Rate-dependent part of the objective (constants in the other users dropped)."""
        R = np.asarray(R, dtype=float)
        d = self.T_s + self.delta_c * R
        left = self.B - self.L_bar * R / d
        return self.Lambda * np.expm1(LN2 * R) / d + self.Omega * np.exp2(R) + self.c_loc * left ** 3

    def F_r(self, R):
        """(T_s + delta_c R)^2 times df/dR."""
        R = np.asarray(R, dtype=float)
        d = self.T_s + self.delta_c * R
        p = np.exp2(R)
        left = self.B - self.L_bar * R / d
        return (self.Lambda * (LN2 * d * p - self.delta_c * np.expm1(LN2 * R))
                + self.Omega * LN2 * d ** 2 * p
                - 3.0 * self.L_bar * self.T_s * self.c_loc * left ** 2)

    def dF_r(self, R):
        R = np.asarray(R, dtype=float)
        d = self.T_s + self.delta_c * R
        p = np.exp2(R)
        left = self.B - self.L_bar * R / d
        return (self.Lambda * LN2 ** 2 * d * p
                + self.Omega * LN2 * (LN2 * d ** 2 + 2.0 * self.delta_c * d) * p
                + 6.0 * self.L_bar * self.T_s * self.c_loc * left * (self.L_bar * self.T_s / d ** 2))

    def F_scale(self, R):
        """Magnitude of the individual terms of F_r, for relative tolerances."""
        R = np.asarray(R, dtype=float)
        d = self.T_s + self.delta_c * R
        p = np.exp2(R)
        left = self.B - self.L_bar * R / d
        return (self.Lambda * (LN2 * d * p + self.delta_c * p) + self.Omega * LN2 * d ** 2 * p
                + 3.0 * self.L_bar * self.T_s * self.c_loc * left ** 2)


@dataclass
class PartialTrace:
    objective: list = field(default_factory=list)  # after every outer iteration, including the start
    steps: list = field(default_factory=list)  # after every coordinate step and re-sort
    sweeps: int = 0

    def to_csv(self) -> str:
        lines = ["iteration,objective"]
        lines += [f"{i},{v!r}" for i, v in enumerate(self.objective)]
        return "\n".join(lines) + "\n"


def gamma_from_rates(R, B, Lb, T_s, delta_c):
    R = np.asarray(R, dtype=float)
    return Lb * R / (B * (T_s + delta_c * R))


def gamma_opt(rate, user, params: SystemParams) -> float:
    """Fraction of bits offloaded when the uplink budget is used in full at ``rate``."""
    g = float(gamma_from_rates(rate, user.B, user.L - user.t_DL, params.T_s, params.delta_c))
    if g < -1e-12 or g > 1 + 1e-12:
        raise OutOfBracket(f"rate {rate} gives gamma = {g}, outside [0, 1]")
    return min(max(g, 0.0), 1.0)


def rate_brackets(B, Lb, T_s, delta_c) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    Lb = np.asarray(Lb, dtype=float)
    den = Lb - delta_c * B
    with np.errstate(divide="ignore"):
        hi = np.where(den > 0, T_s * B / np.where(den > 0, den, 1.0), R_CAP)
    return np.minimum(hi, R_CAP)


def rate_bracket(user, params: SystemParams) -> tuple:
    """Rates keeping gamma within [0, 1]: (0, R_hi)."""
    Lb = user.L - user.t_DL
    if not Lb > 0:
        raise InfeasibleUser(f"no uplink latency left (L_bar = {Lb})")
    return 0.0, float(rate_brackets(user.B, Lb, params.T_s, params.delta_c))


def rho_prime_order(rates, B, alpha, Lb, T_s, delta_c) -> RhoPrimeOrder:
    rates = np.asarray(rates, dtype=float)
    rp = np.asarray(Lb, dtype=float) / (np.asarray(alpha, dtype=float) * (T_s + delta_c * rates))
    return RhoPrimeOrder(rho_prime=rp, pi=np.argsort(-rp, kind="stable"))


def partial_powers(rates, order: RhoPrimeOrder, users) -> np.ndarray:
    """Vertex powers for the decode order sorted by rho'."""
    return ordered_powers(rates, order.pi, as_arrays(users).alpha)


class _Problem:
    """Rate-domain objective for the active (L_bar > 0) users."""

    def __init__(self, arr: UserArrays, params: SystemParams):
        self.B = arr.B
        self.alpha = arr.alpha
        self.Lb = l_bar(arr)
        self.c_loc = arr.M / arr.L ** 2
        self.T_s = params.T_s
        self.delta_c = params.delta_c
        self.R_hi = rate_brackets(self.B, self.Lb, self.T_s, self.delta_c)

    def order(self, R) -> np.ndarray:
        return rho_prime_order(R, self.B, self.alpha, self.Lb, self.T_s, self.delta_c).pi

    def parts(self, R, pi):
        d = self.T_s + self.delta_c * R
        P = ordered_powers(R, pi, self.alpha)
        gamma = np.clip(self.Lb * R / (self.B * d), 0.0, 1.0)
        tx = self.Lb / d * P
        local = self.c_loc * (self.B * (1.0 - gamma)) ** 3
        return gamma, P, tx, local

    def objective(self, R, pi) -> float:
        _, _, tx, local = self.parts(R, pi)
        return float(np.sum(tx) + np.sum(local))

    def subproblem(self, k, R, pi) -> CoordinateSubproblem:
        pos = np.empty_like(pi)
        pos[pi] = np.arange(pi.size)
        r_pi = R[pi]
        ahead = np.cumsum(r_pi) - r_pi  # exponent S_i of each position
        pk = pos[k]
        Lam = self.Lb[k] / self.alpha[k] * 2.0 ** ahead[pk]
        after = pi[pk + 1:]
        if after.size:
            Ri = R[after]
            terms = (self.Lb[after] / self.alpha[after] * np.expm1(LN2 * Ri)
                     / (self.T_s + self.delta_c * Ri) * np.exp2(ahead[pk + 1:] - R[k]))
            Om = float(np.sum(terms))
        else:
            Om = 0.0
        return CoordinateSubproblem(int(k), float(Lam), Om, 0.0, float(self.R_hi[k]), float(self.Lb[k]),
                                    float(self.B[k]), float(self.c_loc[k]), self.T_s, self.delta_c)


def coordinate_subproblem(k, rates, users, params: SystemParams, pi=None) -> CoordinateSubproblem:
    """Build the one-dimensional problem for user ``k`` (all users need L_bar > 0)."""
    prob = _Problem(as_arrays(users), params)
    R = np.asarray(rates, dtype=float)
    if pi is None:
        pi = prob.order(R)
    return prob.subproblem(int(k), R, np.asarray(pi))


def line_search_rate(sub: CoordinateSubproblem, *, ftol=1e-10, max_iter=200) -> float:
    """Minimise ``sub.f`` over [R_lo, R_hi] using the sign of F_r.

    F_r is non-decreasing, so the minimiser is the lower end if F_r >= 0 there,
    the upper end if F_r <= 0 there, and otherwise the unique root, found by
    Newton steps safeguarded by bisection.
    """
    a, b = sub.R_lo, sub.R_hi
    Fa = float(sub.F_r(a))
    if Fa >= 0:
        return a
    Fb = float(sub.F_r(b))
    if Fb <= 0:
        return b
    x = 0.5 * (a + b)
    for _ in range(max_iter):
        Fx = float(sub.F_r(x))
        if abs(Fx) <= ftol * sub.F_scale(x):
            return x
        if Fx < 0:
            a = x
        else:
            b = x
        if b - a <= 4 * np.finfo(float).eps * max(b, 1e-300):
            return x
        dF = float(sub.dF_r(x))
        xn = x - Fx / dF if dF > 0 else np.nan
        if not (a < xn < b):
            xn = 0.5 * (a + b)
        x = xn
    return x


def _check_mono(new, old, scale, where):
    if new > old + MONO_TOL * scale:
        raise NonMonotone(f"objective rose from {old!r} to {new!r} at {where}")


def solve_partial_fullma_arrays(arr: UserArrays, params: SystemParams, init_rates=None,
                                *, tol=REL_TOL, max_outer=MAX_OUTER, max_sweeps=MAX_SWEEPS):
    """Coordinate descent on users that all have L_bar > 0.

    One outer iteration fixes the decode order, runs coordinate sweeps until
    the relative decrease of a sweep drops below ``tol`` (a stationary point
    for that order), then re-sorts rho'. The outer loop stops when the order
    no longer changes or the outer relative decrease is below ``tol``.

    Returns (R, pi, gamma, P, tx, local, iterations, converged, trace).
    """
    prob = _Problem(arr, params)
    K = len(arr)
    R = prob.R_hi / 2 if init_rates is None else np.clip(np.asarray(init_rates, dtype=float), 0.0, prob.R_hi)
    pi = prob.order(R)
    obj = prob.objective(R, pi)
    scale = max(abs(obj), float(np.sum(prob.c_loc * prob.B ** 3)))
    trace = PartialTrace(objective=[obj], steps=[obj])
    converged = False
    it = 0
    while it < max_outer:
        it += 1
        start = obj
        for sweep in range(max_sweeps):
            before = obj
            for k in range(K):
                R[k] = line_search_rate(prob.subproblem(k, R, pi))
                new = prob.objective(R, pi)
                _check_mono(new, obj, scale, f"iteration {it}, sweep {sweep}, user {k}")
                obj = new
                trace.steps.append(obj)
            trace.sweeps += 1
            if before - obj < tol * abs(before):
                break
        pi_new = prob.order(R)
        new = prob.objective(R, pi_new)
        _check_mono(new, obj, scale, f"re-sort after iteration {it}")
        same = np.array_equal(pi_new, pi)
        pi, obj = pi_new, new
        trace.steps.append(obj)
        trace.objective.append(obj)
        if same or start - obj < tol * abs(start):
            converged = True
            break
    gamma, P, tx, local = prob.parts(R, pi)
    return R, pi, gamma, P, tx, local, it, converged, trace


def solve_partial_fullma(users, params: SystemParams, init_rates=None):
    """Stationary point of the FullMA partial-offloading problem.

    Users with L_bar <= 0 stay fully local (gamma = 0) and are left out of the
    multiple-access channel; if nobody can offload, :class:`InfeasibleUser` is
    raised. Returns ``(Allocation, EnergyReport, iterations)``; the
    allocation's ``info`` holds the per-sweep objective trace.
    """
    arr = as_arrays(users)
    K = len(arr)
    Lb = l_bar(arr)
    act = np.flatnonzero(Lb > 0)
    if act.size == 0:
        raise InfeasibleUser("no user has uplink latency left for offloading", users=list(range(K)))
    init = None if init_rates is None else np.asarray(init_rates, dtype=float)[act]
    r, pi, g, p, tx_a, loc_a, it, converged, trace = solve_partial_fullma_arrays(arr.take(act), params, init)
    R, P, gamma, tx = np.zeros(K), np.zeros(K), np.zeros(K), np.zeros(K)
    local = arr.M / arr.L ** 2 * arr.B ** 3
    R[act], P[act], gamma[act], tx[act], local[act] = r, p, g, tx_a, loc_a
    info = {"iterations": it, "sweeps": trace.sweeps, "converged": converged, "objective_trace": trace.objective, "trace": trace}
    alloc = Allocation(R, P, gamma, tuple(int(i) for i in act[pi]), "fullma-partial", info=info)
    return alloc, EnergyReport(tx, local), it
