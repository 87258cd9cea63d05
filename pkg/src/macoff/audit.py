"""Oracle audit suites: every solver checked against an independent verifier.

Each suite draws its instances from the cell model with one RNG stream per
instance, so a suite's outcome depends only on its seed and instance count.
``inject_fault`` inflates the solver side of the comparison by 10 percent;
the power and grid suites must then fail, which checks the audit itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fullma_complete import complete_fullma_arrays
from .fullma_partial import _Problem, solve_partial_fullma
from .model import CellConfig, generate_scenario, l_tilde
from .oracle import class_tightness_audit, grid_complete_tdma_oracle, grid_partial_oracle, lp_min_energy
from .tdma_complete import solve_complete_tdma
from .tdma_partial import TdmaPartialPoint, hessian_psd_check, solve_partial_tdma

FAULT = 1.1
DEFAULT_INSTANCES = {"lp": 500, "class": 500, "grid": 6, "psd": 100, "quasi": 100}
SUITES = ("lp", "class", "grid", "psd", "quasi")


@dataclass
class SuiteResult:
    name: str
    n: int
    n_failed: int
    worst: float  # worst value of the suite's error measure
    tol: float
    details: list = field(default_factory=list)  # indices of failing instances

    @property
    def passed(self) -> bool:
        return self.n_failed == 0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name:<8} {status}  n={self.n:<5d} failed={self.n_failed:<5d} worst={self.worst:.3e} tol={self.tol:.1e}"


def _streams(seed, n):
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(int(seed)).spawn(n)]


def _binary_instance(s):
    """K' in 2..5 offloading users with deadlines and task sizes drawn per instance."""
    rng = np.random.default_rng(s)
    K = int(rng.integers(2, 6))
    cell = CellConfig(B=rng.uniform(1e6, 6e6, K).tolist(), L=rng.uniform(1.0, 2.5, K).tolist())
    sc = generate_scenario(K, cell, int(rng.integers(2 ** 63)))
    return sc.arrays(), sc.params


def _partial_instance(s, sizes=(2, 4, 8)):
    rng = np.random.default_rng(s)
    K = int(rng.choice(sizes))
    cell = CellConfig(B=rng.uniform(1e6, 6e6, K).tolist(), L=rng.uniform(1.0, 2.5, K).tolist())
    return generate_scenario(K, cell, int(rng.integers(2 ** 63))), rng


def lp_suite(n=500, seed=0, inject_fault=False, rtol=1e-9) -> SuiteResult:
    """Closed-form FullMA energy against vertex enumeration of the power LP."""
    bad, worst = [], 0.0
    for i, s in enumerate(_streams(seed, n)):
        arr, params = _binary_instance(s)
        R, P, pi, E = complete_fullma_arrays(arr.B, arr.alpha, l_tilde(arr, params), params.T_s)
        ours = float(np.sum(E)) * (FAULT if inject_fault else 1.0)
        _, lp = lp_min_energy(R, arr)
        err = abs(ours - lp) / abs(lp)
        worst = max(worst, err)
        if not err <= rtol:
            bad.append(i)
    return SuiteResult("lp", n, len(bad), worst, rtol, bad)


def class_suite(n=500, seed=0, inject_fault=False, rtol=1e-9) -> SuiteResult:
    """Exactly one tight capacity constraint per class at the closed-form powers."""
    bad, worst = [], 0.0
    for i, s in enumerate(_streams(seed, n)):
        arr, params = _binary_instance(s)
        R, P, pi, E = complete_fullma_arrays(arr.B, arr.alpha, l_tilde(arr, params), params.T_s)
        if inject_fault:
            P = P * FAULT
        counts = class_tightness_audit(R, P, arr.alpha, rtol=rtol)
        dev = float(np.max(np.abs(counts - 1)))
        worst = max(worst, dev)
        if dev != 0:
            bad.append(i)
    return SuiteResult("class", n, len(bad), worst, 0.0, bad)


def grid_suite(n=6, seed=0, inject_fault=False, fullma_slack=5e-3, tdma_rtol=1e-3, resolution=1000) -> SuiteResult:
    """One- and two-user solvers against dense-grid minima.

    FullMA partial must come within ``fullma_slack`` of the grid (it returns a
    stationary point); TDMA partial and complete must agree with the grid to
    ``tdma_rtol``. The error measure is the relative excess over the grid.
    """
    bad, worst = [], 0.0
    f = FAULT if inject_fault else 1.0
    for i, s in enumerate(_streams(seed, n)):
        sc, rng = _partial_instance(s, sizes=(1, 2))
        users, params = sc.users, sc.params
        errs = []
        ours = solve_partial_fullma(users, params)[1].total * f
        g = grid_partial_oracle(users, params, resolution, scheme="fullma").objective
        errs.append(((ours - g) / g, fullma_slack))
        ours = solve_partial_tdma(users, params)[1].total * f
        g = grid_partial_oracle(users, params, resolution, scheme="tdma").objective
        errs.append((abs(ours - g) / g, tdma_rtol))
        if np.all(l_tilde(sc.arrays(), params) > 0):
            ours = solve_complete_tdma(range(sc.K), users, params)[1].tx_total * f
            g = grid_complete_tdma_oracle(users, params).objective
            errs.append((abs(ours - g) / g, tdma_rtol))
        worst = max(worst, max(e for e, _ in errs))
        if any(not e <= t for e, t in errs):
            bad.append(i)
    return SuiteResult("grid", n, len(bad), worst, tdma_rtol, bad)


def random_tdma_point(sc, rng, zero_frac=0.1, max_rate=20.0) -> TdmaPartialPoint:
    """A feasible (B', t) for the TDMA partial problem, some users with B' = 0.

    Durations give every user at most ``max_rate`` bits per channel use, so
    the energies stay representable.
    """
    arr, params = sc.arrays(), sc.params
    K = sc.K
    gamma = rng.uniform(0.0, 1.0, K)
    gamma[rng.random(K) < zero_frac] = 0.0
    while True:
        Bp = gamma * arr.B
        budget = 0.9 * np.min(arr.L - arr.t_DL - params.delta_c * Bp)
        tau_min = params.T_s * Bp / max_rate
        if budget > 0 and tau_min.sum() < 0.5 * budget:
            break
        gamma = 0.5 * gamma
    tau = tau_min + rng.dirichlet(np.ones(K)) * (budget - tau_min.sum())
    return TdmaPartialPoint(B_prime=Bp, t=tau / params.T_s)


def psd_suite(n=100, seed=0, inject_fault=False) -> SuiteResult:
    """Hessian of the perspective objective PSD and matching finite differences."""
    bad, worst = [], 0.0
    for i, s in enumerate(_streams(seed, n)):
        sc, rng = _partial_instance(s)
        point = random_tdma_point(sc, rng)
        rep = hessian_psd_check(point, sc.users, sc.params)
        worst = max(worst, rep.fd_max_rel)
        if not rep.passed:
            bad.append(i)
    return SuiteResult("psd", n, len(bad), worst, 1e-5, bad)


def quasi_suite(n=100, seed=0, inject_fault=False, n_grid=10_000, n_fd=5,
                mono_rtol=1e-12, fd_rtol=1e-6) -> SuiteResult:
    """dF_r/dR_k >= 0 on a grid of every rate bracket, and F_r against finite differences.

    Rates for the other users and the decode order come from a random
    point. F_r / (T_s + delta_c R)^2 is compared with central differences of
    the full rate-domain objective in R_k at the same fixed order.
    """
    bad, worst = [], 0.0
    for i, s in enumerate(_streams(seed, n)):
        sc, rng = _partial_instance(s)
        prob = _Problem(sc.arrays(), sc.params)
        R = rng.uniform(0.05, 0.95, sc.K) * prob.R_hi
        pi = prob.order(R)
        ok = True
        for k in range(sc.K):
            sub = prob.subproblem(k, R, pi)
            x = np.linspace(sub.R_lo, sub.R_hi, n_grid)
            dF = sub.dF_r(x)
            sc_x = sub.F_scale(x)
            mono = float(np.max(np.maximum(-dF, 0.0) / sc_x))
            if mono > mono_rtol:
                ok = False
            for r in x[rng.integers(1, n_grid - 1, n_fd)]:
                d = sub.T_s + sub.delta_c * r
                h = 1e-5 * max(r, 1e-3 * sub.R_hi)
                lo, hi = R.copy(), R.copy()
                lo[k], hi[k] = r - h, r + h
                fd = (prob.objective(hi, pi) - prob.objective(lo, pi)) / (2 * h)
                an = float(sub.F_r(r)) / d ** 2
                ref = max(abs(an), float(sub.F_scale(r)) / d ** 2)
                err = abs(fd - an) / ref
                worst = max(worst, err)
                if not err <= fd_rtol:
                    ok = False
        if not ok:
            bad.append(i)
    return SuiteResult("quasi", n, len(bad), worst, fd_rtol, bad)


SUITE_FUNCS = {"lp": lp_suite, "class": class_suite, "grid": grid_suite, "psd": psd_suite, "quasi": quasi_suite}


def run_audit(instances=None, seed=0, inject_fault=False, suites=SUITES) -> list:
    """Run the selected suites. ``instances`` is an int applied to every suite or a dict per suite."""
    out = []
    for name in suites:
        if isinstance(instances, dict):
            n = int(instances.get(name, DEFAULT_INSTANCES[name]))
        elif instances is None:
            n = DEFAULT_INSTANCES[name]
        else:
            n = int(instances)
        if n < 0:
            raise ValueError("instance counts must be non-negative")
        if n == 0:
            out.append(SuiteResult(name, 0, 0, 0.0, 0.0))
            continue
        out.append(SUITE_FUNCS[name](n=n, seed=seed, inject_fault=inject_fault))
    return out
