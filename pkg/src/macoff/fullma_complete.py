"""Closed-form optimal rates and powers for completely offloading users under FullMA.

Rates sit at their latency floor, users are sorted by rho = B / (alpha R)
and powers follow from peeling off one capacity-region constraint per
class, which is also the successive-decoding order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleUser, OverflowDomain
from .model import Allocation, EnergyReport, SystemParams, as_arrays, l_tilde

LN2 = np.log(2.0)
# 2**1000 is still finite in double precision; beyond that the powers are meaningless.
MAX_SUM_RATE = 1000.0


@dataclass(frozen=True)
class RhoOrder:
    """``pi[0]`` is pi(1) (largest rho, decoded last); ``pi[-1]`` is decoded first."""

    rho: np.ndarray
    pi: np.ndarray


def min_rates(B, L_tilde, T_s) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    L_tilde = np.asarray(L_tilde, dtype=float)
    bad = np.flatnonzero(~(L_tilde > 0))
    if bad.size:
        raise InfeasibleUser(f"users {bad.tolist()} have no latency left for complete offloading",
                             users=bad.tolist())
    return T_s * B / L_tilde


def optimal_rates(offload_set, users, params: SystemParams) -> np.ndarray:
    """Smallest rates meeting each deadline, R_k = T_s B_k / L_tilde_k.

    Returned in the order of ``offload_set``. Raises :class:`InfeasibleUser`
    listing the offending *user indices* if any L_tilde_k <= 0.
    """
    arr = as_arrays(users)
    idx = np.asarray(list(offload_set), dtype=int)
    lt = l_tilde(arr, params)[idx]
    bad = idx[~(lt > 0)]
    if bad.size:
        raise InfeasibleUser(f"users {bad.tolist()} have no latency left for complete offloading",
                             users=bad.tolist())
    return params.T_s * arr.B[idx] / lt


def rho_order(rates, B, alpha) -> RhoOrder:
    """Sort by rho non-increasing; equal rho keeps ascending index (stable)."""
    rho = np.asarray(B, dtype=float) / (np.asarray(alpha, dtype=float) * np.asarray(rates, dtype=float))
    pi = np.argsort(-rho, kind="stable")
    return RhoOrder(rho=rho, pi=pi)


def ordered_powers(rates, pi, alpha) -> np.ndarray:
    """P_pi(k) = (2^R_pi(k) - 1) / alpha_pi(k) * 2^(sum of rates ahead of it in pi).

    Positions refer to the arrays passed in; the exponent is accumulated as a
    running sum rather than as a product of factors.
    """
    rates = np.asarray(rates, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    r_pi = rates[pi]
    total = float(np.sum(r_pi))
    if not total <= MAX_SUM_RATE:
        raise OverflowDomain(f"sum rate {total:.4g} exceeds {MAX_SUM_RATE} bits per channel use")
    ahead = np.cumsum(r_pi) - r_pi
    P = np.empty_like(rates)
    P[pi] = np.expm1(LN2 * r_pi) / alpha[pi] * np.exp2(ahead)
    return P


def optimal_powers(rates, order: RhoOrder, alpha) -> np.ndarray:
    return ordered_powers(rates, order.pi, alpha)


def complete_fullma_arrays(B, alpha, L_tilde, T_s):
    """Array kernel for the four steps. Returns (R, P, pi, energy)."""
    B = np.asarray(B, dtype=float)
    R = min_rates(B, L_tilde, T_s)
    order = rho_order(R, B, alpha)
    P = optimal_powers(R, order, alpha)
    E = B / R * P
    return R, P, order.pi, E


def solve_complete_fullma(offload_set, users, params: SystemParams):
    """Optimal allocation when exactly ``offload_set`` offloads under FullMA.

    Returns ``(Allocation, EnergyReport)`` over the full user list; users
    outside the set compute locally with gamma = 0 and are charged their
    DVS local energy, so ``report.total`` is the system energy and
    ``report.tx_total`` the offloading energy alone.
    """
    arr = as_arrays(users)
    K = len(arr)
    idx = np.asarray(sorted(set(int(i) for i in offload_set)), dtype=int)
    R = np.zeros(K)
    P = np.zeros(K)
    gamma = np.zeros(K)
    tx = np.zeros(K)
    local = arr.M / arr.L ** 2 * arr.B ** 3
    order = ()
    if idx.size:
        r, p, pi, e = complete_fullma_arrays(arr.B[idx], arr.alpha[idx], l_tilde(arr, params)[idx], params.T_s)
        R[idx], P[idx], tx[idx] = r, p, e
        gamma[idx] = 1.0
        local[idx] = 0.0
        order = tuple(int(i) for i in idx[pi])
    return Allocation(R, P, gamma, order, "fullma-complete"), EnergyReport(tx, local)
