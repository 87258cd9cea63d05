"""Brute-force verifiers that share no algebra with the solvers they check.

``lp_min_energy`` solves the power LP for fixed rates by enumerating the
vertices of the capacity polytope. In x = alpha * P the constraint matrix
is a 0/1 matrix that depends only on K', so the inverses of all nonsingular
K'-row subsystems are computed once per K' and reused; each instance then
costs one batched matrix-vector product.

The grid oracles evaluate the partial-offloading objectives on dense,
successively refined grids for one or two users.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from .errors import Degenerate, TooLarge
from .model import SystemParams, as_arrays, l_bar, l_tilde

LN2 = np.log(2.0)
LP_MAX_K = 5
AUDIT_MAX_K = 12
FEAS_RTOL = 1e-9


def subset_masks(n: int) -> np.ndarray:
    """All nonempty subsets of n users as rows of a 0/1 matrix, by bitmask value."""
    codes = np.arange(1, 2 ** n)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(float)


@dataclass(frozen=True)
class PowerPolytope:
    """sum_{i in N} x_i >= 2^(sum_{i in N} R_i) - 1 for every nonempty N, and x >= 0."""

    masks: np.ndarray
    rhs: np.ndarray

    @classmethod
    def from_rates(cls, rates) -> "PowerPolytope":
        rates = np.asarray(rates, dtype=float)
        masks = subset_masks(rates.size)
        return cls(masks=masks, rhs=np.expm1(LN2 * (masks @ rates)))

    @property
    def n_constraints(self) -> int:
        return self.masks.shape[0]


@lru_cache(maxsize=None)
def _vertex_systems(n: int):
    """Row index sets and inverses of every nonsingular n x n subsystem of the polytope rows."""
    rows = np.vstack([subset_masks(n), np.eye(n)])
    combos = np.array(list(combinations(range(rows.shape[0]), n)), dtype=np.int64)
    mats = rows[combos]
    det = np.linalg.det(mats)
    keep = np.abs(det) > 0.5  # integer determinants
    combos, mats = combos[keep], mats[keep]
    inv = np.linalg.inv(mats)
    inv.setflags(write=False)
    combos.setflags(write=False)
    return rows, combos, inv


@lru_cache(maxsize=None)
def _row_order(n: int) -> tuple:
    sizes = subset_masks(n).sum(axis=1)
    return tuple(int(i) for i in np.argsort(-sizes, kind="stable"))


def lp_min_energy(rates, users, B=None):
    """Minimum of sum (B_k / R_k) P_k over the capacity polytope, by vertex enumeration.

    ``users`` is a user list or :class:`UserArrays` restricted to the K' users
    the rates belong to. Returns ``(powers, objective)``.
    """
    rates = np.asarray(rates, dtype=float)
    arr = as_arrays(users)
    n = rates.size
    if n > LP_MAX_K:
        raise TooLarge(f"vertex enumeration is limited to {LP_MAX_K} users, got {n}")
    if np.any(rates <= 0):
        raise ValueError("rates must be positive")
    Bv = arr.B if B is None else np.asarray(B, dtype=float)
    rho = Bv / (rates * arr.alpha)
    rows, combos, inv = _vertex_systems(n)
    b = np.concatenate([np.expm1(LN2 * (rows[:-n] @ rates)), np.zeros(n)])
    x = np.einsum("vij,vj->vi", inv, b[combos])
    cost = x @ rho
    tol = b - FEAS_RTOL * np.maximum(np.abs(b), 1.0)

    # Filter one constraint at a time, largest subsets first; the survivor set
    # shrinks fast, which is much cheaper than testing every row on every vertex.
    cand = np.flatnonzero(np.all(x >= -FEAS_RTOL * np.max(np.abs(b)), axis=1))
    for r in _row_order(n):
        cand = cand[x[cand] @ rows[r] >= tol[r]]
        if cand.size == 0:
            raise Degenerate("no feasible vertex found")
    best = int(cand[np.argmin(cost[cand])])
    return x[best] / arr.alpha, float(cost[best])


def feasible_powers(rates, powers, alpha, rtol=FEAS_RTOL) -> bool:
    """Whether ``powers`` satisfy every capacity-region constraint for ``rates``."""
    poly = PowerPolytope.from_rates(rates)
    x = np.asarray(alpha, dtype=float) * np.asarray(powers, dtype=float)
    lhs = poly.masks @ x
    return bool(np.all(x >= -rtol) and np.all(lhs >= poly.rhs - rtol * np.maximum(poly.rhs, 1.0)))


def class_tightness_audit(rates, powers, users, rtol=FEAS_RTOL) -> np.ndarray:
    """Number of tight constraints in each class |N| = 1..K'.

    A constraint is tight when 1 + sum alpha P and 2^(sum R) agree to ``rtol``
    relative. Returns an integer array of length K'.
    """
    rates = np.asarray(rates, dtype=float)
    n = rates.size
    if n > AUDIT_MAX_K:
        raise TooLarge(f"tightness audit is limited to {AUDIT_MAX_K} users, got {n}")
    alpha = as_arrays(users).alpha if not isinstance(users, np.ndarray) else users
    masks = subset_masks(n)
    lhs = 1.0 + masks @ (np.asarray(alpha, dtype=float) * np.asarray(powers, dtype=float))
    rhs = np.exp2(masks @ rates)
    tight = np.abs(lhs - rhs) <= rtol * rhs
    size = masks.sum(axis=1).astype(int)
    return np.bincount(size[tight], minlength=n + 1)[1:]


@dataclass(frozen=True)
class GridResult:
    objective: float
    point: dict


def _refine(evaluate, lo, hi, resolution, passes):
    """Minimise ``evaluate`` over a box by a dense grid followed by zoomed re-grids.

    ``evaluate`` takes a list of 1-D axes and returns (values on the mesh, extra).
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    best = None
    for _ in range(passes + 1):
        axes = [np.linspace(a, b, resolution) for a, b in zip(lo, hi)]
        vals = evaluate(axes)
        flat = int(np.nanargmin(vals))
        idx = np.unravel_index(flat, vals.shape)
        x = np.array([ax[i] for ax, i in zip(axes, idx)])
        v = float(vals[idx])
        if best is None or v <= best[0]:
            best = (v, x)
        step = (hi - lo) / (resolution - 1)
        lo0, hi0 = lo, hi
        lo = np.maximum(x - 2 * step, lo0)
        hi = np.minimum(x + 2 * step, hi0)
    return best


def _fullma_grid_energy(R1, R2, p):
    """FullMA rate objective on a 2-D mesh, minimised over both capacity-region vertices."""
    Lb, alpha, B, cl, T, dc = p
    d1 = T + dc * R1
    d2 = T + dc * R2
    w1 = Lb[0] / d1  # channel uses spent transmitting
    w2 = Lb[1] / d2
    s = np.expm1(LN2 * (R1 + R2))
    v1_a = np.expm1(LN2 * R1)  # user 0 decoded last
    v2_a = s - v1_a
    v2_b = np.expm1(LN2 * R2)  # user 1 decoded last
    v1_b = s - v2_b
    tx_a = w1 * v1_a / alpha[0] + w2 * v2_a / alpha[1]
    tx_b = w1 * v1_b / alpha[0] + w2 * v2_b / alpha[1]
    g1 = np.clip(Lb[0] * R1 / (B[0] * d1), 0, 1)
    g2 = np.clip(Lb[1] * R2 / (B[1] * d2), 0, 1)
    loc = cl[0] * (B[0] * (1 - g1)) ** 3 + cl[1] * (B[1] * (1 - g2)) ** 3
    return np.minimum(tx_a, tx_b) + loc


def _fullma_bracket(B, Lb, T, dc, cap=60.0):
    den = Lb - dc * B
    return np.where(den > 0, np.minimum(T * B / np.where(den > 0, den, 1.0), cap), cap)


def _tdma_user_energy(gamma, tau, B, alpha, cl, T):
    """Per-user TDMA partial energy; tau <= 0 with gamma > 0 is infeasible."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        tx = np.where(gamma > 0, tau / (T * alpha) * np.expm1(LN2 * T * B * gamma / tau), 0.0)
    tx = np.where((gamma > 0) & (tau <= 0), np.inf, tx)
    return tx + cl * (B * (1 - gamma)) ** 3


def grid_partial_oracle(users, params: SystemParams, resolution=1000, scheme="fullma", passes=2) -> GridResult:
    """Dense-grid minimum of the partial-offloading objective for one or two users.

    FullMA: grid over the rate brackets with the offloaded fraction and the
    powers evaluated directly at every grid point (both decode orders tried).
    TDMA: in transmit order, the last user's duration sits at its deadline;
    for two users the problem separates once the first duration is fixed, so
    two 2-D grids over (tau_1, gamma_k) suffice.
    """
    arr = as_arrays(users)
    K = len(arr)
    if K > 2:
        raise TooLarge("grid oracles handle at most two users")
    if resolution < 1000:
        raise ValueError("resolution must be at least 1000 points per axis")
    T, dc = params.T_s, params.delta_c
    Lb = l_bar(arr)
    cl = arr.M / arr.L ** 2
    if scheme == "fullma":
        hi = _fullma_bracket(arr.B, Lb, T, dc)
        if K == 1:
            def ev(axes):
                R = axes[0]
                d = T + dc * R
                g = np.clip(Lb[0] * R / (arr.B[0] * d), 0, 1)
                return Lb[0] / d * np.expm1(LN2 * R) / arr.alpha[0] + cl[0] * (arr.B[0] * (1 - g)) ** 3
            v, x = _refine(ev, [0.0], hi, resolution, passes)
            return GridResult(v, {"R": x.tolist()})
        p = (Lb, arr.alpha, arr.B, cl, T, dc)

        def ev(axes):
            R1, R2 = np.meshgrid(axes[0], axes[1], indexing="ij")
            return _fullma_grid_energy(R1, R2, p)
        v, x = _refine(ev, [0.0, 0.0], hi, resolution, passes)
        return GridResult(v, {"R": x.tolist()})

    if scheme != "tdma":
        raise ValueError(f"unknown scheme {scheme!r}")
    def gamma_cap(k, tau):
        """Largest fraction user k can offload when tau of its budget goes to the uplink."""
        if dc <= 0:
            return 1.0
        return float(np.clip((Lb[k] - tau) / (dc * arr.B[k]), 0.0, 1.0))

    def user_grid(k, tau_fn, cap):
        return _refine(lambda ax: _tdma_user_energy(ax[0], tau_fn(ax[0]), arr.B[k], arr.alpha[k], cl[k], T),
                       [0.0], [cap], resolution, passes)

    if K == 1:
        v, x = user_grid(0, lambda g: Lb[0] - dc * arr.B[0] * g, gamma_cap(0, 0.0))
        return GridResult(v, {"gamma": x.tolist()})

    o = np.argsort(Lb, kind="stable")
    i, j = int(o[0]), int(o[1])

    def best_over_tau(tau1):
        """Minimum total energy for each first-slot duration; the problem separates given tau_1."""
        g1 = np.linspace(0.0, gamma_cap(i, 0.0), resolution)
        G1, T1 = np.meshgrid(g1, tau1, indexing="ij")
        e1 = _tdma_user_energy(G1, T1, arr.B[i], arr.alpha[i], cl[i], T)
        e1 = np.where(T1 + dc * arr.B[i] * G1 <= Lb[i], e1, np.inf)
        g2 = np.linspace(0.0, gamma_cap(j, 0.0), resolution)
        G2, T2 = np.meshgrid(g2, tau1, indexing="ij")
        tau2 = Lb[j] - dc * arr.B[j] * G2 - T2
        e2 = _tdma_user_energy(G2, tau2, arr.B[j], arr.alpha[j], cl[j], T)
        e2 = np.where((tau2 >= 0) | (G2 == 0), e2, np.inf)
        return np.min(e1, axis=0) + np.min(e2, axis=0)

    lo_t, hi_t = 0.0, float(Lb[i])
    best = None
    for _ in range(passes + 1):
        tau1 = np.linspace(lo_t, hi_t, resolution)
        vals = best_over_tau(tau1)
        k = int(np.argmin(vals))
        if best is None or vals[k] <= best[0]:
            best = (float(vals[k]), float(tau1[k]))
        step = (hi_t - lo_t) / (resolution - 1)
        lo_t, hi_t = max(tau1[k] - 2 * step, 0.0), min(tau1[k] + 2 * step, float(Lb[i]))
    # the fraction grids were not refined; polish both inner problems at the best duration
    t1 = best[1]
    e_i = user_grid(i, lambda g: np.full_like(g, t1), gamma_cap(i, t1))
    e_j = user_grid(j, lambda g: Lb[j] - dc * arr.B[j] * g - t1, gamma_cap(j, t1))
    v = min(best[0], e_i[0] + e_j[0])
    return GridResult(v, {"tau1": t1, "gamma": {i: float(e_i[1][0]), j: float(e_j[1][0])}})


def grid_complete_tdma_oracle(users, params: SystemParams, resolution=100001) -> GridResult:
    """Complete-offloading TDMA energy for one or two users by a grid over the first duration."""
    arr = as_arrays(users)
    K = len(arr)
    if K > 2:
        raise TooLarge("grid oracles handle at most two users")
    Lt = l_tilde(arr, params)
    T = params.T_s

    def e(t, k):
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            return t / (T * arr.alpha[k]) * np.expm1(LN2 * T * arr.B[k] / t)

    if K == 1:
        return GridResult(float(e(Lt[0], 0)), {"t": [float(Lt[0])]})
    o = np.argsort(Lt, kind="stable")
    i, j = int(o[0]), int(o[1])
    lo, hi = 0.0, float(Lt[i])
    best = None
    for _ in range(3):
        t1 = np.linspace(lo, hi, resolution)[1:]
        vals = e(t1, i) + e(Lt[j] - t1, j)
        vals = np.where(Lt[j] - t1 > 0, vals, np.inf)
        k = int(np.nanargmin(vals))
        if best is None or vals[k] <= best[0]:
            best = (float(vals[k]), float(t1[k]))
        step = (hi - lo) / (resolution - 1)
        lo, hi = max(t1[k] - 2 * step, 0.0), min(t1[k] + 2 * step, float(Lt[i]))
    return GridResult(best[0], {"t1": best[1], "first": i})
