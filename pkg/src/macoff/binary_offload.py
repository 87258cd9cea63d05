"""Choosing which users offload indivisible tasks.

All searches score a candidate set by solving the complete-offloading
problem for it (closed form under FullMA, convex program under TDMA) and
adding the local energy of everyone else.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import InfeasibleUser, OverflowDomain, SolverStall, TooLarge
from .fullma_complete import solve_complete_fullma
from .model import Allocation, EnergyReport, SystemParams, as_arrays, l_tilde
from .tdma_complete import solve_complete_tdma

EXHAUSTIVE_MAX_K = 20

COMPLETE_SOLVERS = {"fullma": solve_complete_fullma, "tdma": solve_complete_tdma}


def _solver(scheme):
    try:
        return COMPLETE_SOLVERS[scheme.lower()]
    except KeyError:
        raise ValueError(f"unknown multiple-access scheme {scheme!r}") from None


@dataclass
class OffloadDecision:
    offload_set: tuple
    local_set: tuple
    allocation: Allocation
    report: EnergyReport
    scheme: str

    @property
    def total_energy(self) -> float:
        return self.report.total

    @property
    def offload_energy(self) -> float:
        return self.report.tx_total

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "offload_set": list(self.offload_set),
            "local_set": list(self.local_set),
            "total_energy": self.total_energy,
            "allocation": self.allocation.to_dict(),
            "energy": self.report.to_dict(),
        }


@dataclass
class GreedyIteration:
    iteration: int
    candidates: dict  # user -> offloading energy of S' + {user} (inf if unsolvable)
    pruned: list
    selected: int | None
    E_off: float


@dataclass
class GreedyTrace:
    iterations: list = field(default_factory=list)
    excluded: list = field(default_factory=list)  # never candidates (no latency left)

    def to_dict(self) -> dict:
        def num(v):
            return v if np.isfinite(v) else None
        return {
            "excluded": list(self.excluded),
            "iterations": [
                {"iteration": it.iteration,
                 "candidates": {str(k): num(v) for k, v in it.candidates.items()},
                 "pruned": list(it.pruned), "selected": it.selected, "E_off": num(it.E_off)}
                for it in self.iterations
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def offload_candidates(users, params: SystemParams) -> np.ndarray:
    """Users with some latency left for complete offloading."""
    return np.flatnonzero(l_tilde(as_arrays(users), params) > 0)


def evaluate_offload_set(offload_set, users, params: SystemParams, scheme="fullma") -> OffloadDecision:
    """Decision for a given offload set; raises the solver's error if the set cannot be served."""
    K = len(as_arrays(users))
    s = tuple(sorted(int(i) for i in offload_set))
    alloc, rep = _solver(scheme)(s, users, params)
    local = tuple(i for i in range(K) if i not in set(s))
    return OffloadDecision(s, local, alloc, rep, scheme.lower())


def all_local(users, params: SystemParams, scheme="fullma") -> OffloadDecision:
    return evaluate_offload_set((), users, params, scheme)


def _offload_energy(solve, s, users, params) -> float:
    try:
        return solve(s, users, params)[1].tx_total
    except (OverflowDomain, SolverStall, InfeasibleUser):
        return np.inf


def greedy_binary(users, params: SystemParams, scheme="fullma", *, prune=True):
    """Greedy selection of offloading users with deterministic pruning.

    Each round scores S' + {k} for every undecided k, drops users whose
    offloading would cost more than computing locally, and adds the user
    giving the largest system-energy reduction (smallest index on ties).
    With ``prune=False`` nobody is dropped and the search stops once no user
    reduces the energy; used to check that pruning is safe.

    Returns ``(OffloadDecision, GreedyTrace)``.
    """
    arr = as_arrays(users)
    K = len(arr)
    solve = _solver(scheme)
    E_loc = arr.M / arr.L ** 2 * arr.B ** 3
    cand = offload_candidates(arr, params)
    trace = GreedyTrace(excluded=[i for i in range(K) if i not in set(cand.tolist())])
    U = [int(i) for i in cand]
    S: list[int] = []
    E_off = 0.0
    it = 0
    while U:
        it += 1
        explored = {k: _offload_energy(solve, tuple(sorted(S + [k])), users, params) for k in U}
        if prune:
            pruned = [k for k in U if E_off + E_loc[k] <= explored[k]]
            U = [k for k in U if k not in set(pruned)]
        else:
            pruned = []
        gains = {k: E_off + E_loc[k] - explored[k] for k in U}
        best = None
        for k in U:  # ascending index, strict comparison keeps the smallest on ties
            if best is None or gains[k] > gains[best]:
                best = k
        if best is None or not gains[best] > 0:
            trace.iterations.append(GreedyIteration(it, explored, pruned, None, E_off))
            break
        S.append(best)
        U.remove(best)
        E_off = explored[best]
        trace.iterations.append(GreedyIteration(it, explored, pruned, best, E_off))
    return evaluate_offload_set(S, users, params, scheme), trace


def exhaustive_binary(users, params: SystemParams, scheme="fullma") -> OffloadDecision:
    """Best offload set over all subsets of the users that can offload.

    Subsets are visited by size and then lexicographically, and only a strictly
    lower energy replaces the incumbent, so ties go to the smaller and then
    lexicographically first set.
    """
    arr = as_arrays(users)
    K = len(arr)
    if K > EXHAUSTIVE_MAX_K:
        raise TooLarge(f"exhaustive search is limited to {EXHAUSTIVE_MAX_K} users, got {K}")
    solve = _solver(scheme)
    E_loc = arr.M / arr.L ** 2 * arr.B ** 3
    cand = [int(i) for i in offload_candidates(arr, params)]
    best_set, best_E = (), float(np.sum(E_loc))
    for size in range(1, len(cand) + 1):
        for s in combinations(cand, size):
            E = _offload_energy(solve, s, users, params)
            if not np.isfinite(E):
                continue
            total = E + float(np.sum(E_loc)) - float(np.sum(E_loc[list(s)]))
            if total < best_E:
                best_set, best_E = s, total
    return evaluate_offload_set(best_set, users, params, scheme)


def partial_fractions(users, params: SystemParams, scheme="fullma") -> np.ndarray:
    """gamma* of the partial-offloading problem; users without uplink latency get 0."""
    from .fullma_partial import solve_partial_fullma
    from .tdma_partial import solve_partial_tdma

    arr = as_arrays(users)
    K = len(arr)
    act = np.flatnonzero(arr.L - arr.t_DL > 0)
    gamma = np.zeros(K)
    if act.size == 0:
        return gamma
    sub = arr.take(act)
    if scheme.lower() == "fullma":
        alloc = solve_partial_fullma(sub, params)[0]
    else:
        alloc = solve_partial_tdma(sub, params)[0]
    gamma[act] = alloc.gamma
    return gamma


def rounding_binary(users, params: SystemParams, scheme="fullma", mode="deterministic",
                    n_draws=None, seed=0, gamma=None) -> OffloadDecision:
    """Offload sets obtained by rounding the partial-offloading fractions.

    ``deterministic`` offloads every user with gamma* >= 0.5. ``randomized``
    also draws ``n_draws`` (default K - 1) sets from independent
    Bernoulli(gamma*) trials and keeps the cheapest of all candidates, the
    deterministic one included. Users that cannot offload completely stay
    local in every candidate.
    """
    arr = as_arrays(users)
    K = len(arr)
    g = partial_fractions(arr, params, scheme) if gamma is None else np.asarray(gamma, dtype=float)
    ok = np.zeros(K, dtype=bool)
    ok[offload_candidates(arr, params)] = True
    candidates = [tuple(np.flatnonzero((g >= 0.5) & ok).tolist())]
    if mode == "randomized":
        n = K - 1 if n_draws is None else int(n_draws)
        rng = np.random.default_rng(seed)
        for _ in range(n):
            candidates.append(tuple(np.flatnonzero((rng.random(K) < g) & ok).tolist()))
    elif mode != "deterministic":
        raise ValueError(f"unknown rounding mode {mode!r}")

    best = None
    for s in candidates:
        try:
            d = evaluate_offload_set(s, users, params, scheme)
        except (OverflowDomain, SolverStall, InfeasibleUser):
            continue
        if best is None or d.total_energy < best.total_energy:
            best = d
    if best is None:
        best = all_local(users, params, scheme)
    return best

