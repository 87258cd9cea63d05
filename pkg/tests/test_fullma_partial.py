import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import four_user_cell, four_user_scenario, users_from
from macoff.errors import InfeasibleUser, OutOfBracket
from macoff.fullma_complete import LN2
from macoff.fullma_partial import (R_CAP, CoordinateSubproblem, _Problem, coordinate_subproblem, gamma_opt,
                                   line_search_rate, partial_powers, rate_bracket, rho_prime_order,
                                   solve_partial_fullma)
from macoff.model import CellConfig, SystemParams, UserTask, generate_scenario, l_bar
from macoff.oracle import feasible_powers, grid_partial_oracle

# 2-D grid oracle (1000 points per axis, two refinements) for users 0, 1 of four_user_scenario(seed=3)
GRID_TWO_USER_SEED3 = 0.00135562056702355


def _user(B=2e6, L=1.2, t_DL=0.2, M=1e-19, p=SystemParams(delta_c=0.0)):
    return UserTask.create(B, L, M, t_DL, 1e-12, p)


def test_gamma_examples():
    p = SystemParams(delta_c=0.0)
    u = _user(p=p)
    assert gamma_opt(0.0, u, p) == 0.0
    assert gamma_opt(1.0, u, p) == pytest.approx(0.5)
    assert gamma_opt(2.0, u, p) == pytest.approx(1.0)
    with pytest.raises(OutOfBracket):
        gamma_opt(2.5, u, p)


def test_bracket_examples():
    p = SystemParams(delta_c=0.0)
    assert rate_bracket(_user(p=p), p) == pytest.approx((0.0, 2.0))
    p2 = SystemParams(delta_c=1e-6)
    assert rate_bracket(_user(p=p2), p2) == (0.0, R_CAP)  # L_bar <= delta_c B
    with pytest.raises(InfeasibleUser):
        rate_bracket(_user(L=0.2, p=p), p)
    p3 = SystemParams()
    u = _user(B=4e6, L=2.5, p=p3)
    hi = rate_bracket(u, p3)[1]
    assert gamma_opt(hi, u, p3) == pytest.approx(1.0, abs=1e-12)


def test_partial_powers_examples():
    o = rho_prime_order([1.0, 2.0], [1.0, 1.0], [1.0, 1.0], [2.0, 1.0], 1e-6, 0.0)
    assert o.pi.tolist() == [0, 1]
    P = partial_powers(np.array([1.0, 2.0]), o, users_from(SystemParams(), [1e6, 1e6], [1, 1], [1.0, 1.0]))
    assert P.tolist() == pytest.approx([1.0, 6.0])


def _sub(Lam, Om, M, hi=3.0):
    return CoordinateSubproblem(0, Lam, Om, 0.0, hi, 1.0, 2e6, M, 1e-6, 0.0)


def test_line_search_boundaries():
    assert line_search_rate(_sub(1e-9, 1e3, 0.0)) == 0.0
    assert line_search_rate(_sub(1e-9, 0.0, 1e10)) == 3.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), K=st.sampled_from([1, 2, 4]))
def test_line_search_matches_dense_grid(seed, K):
    sc = generate_scenario(K, four_user_cell(), seed)
    prob = _Problem(sc.arrays(), sc.params)
    rng = np.random.default_rng(seed)
    R = rng.uniform(0.1, 0.9, K) * prob.R_hi
    k = int(rng.integers(K))
    sub = prob.subproblem(k, R, prob.order(R))
    r = line_search_rate(sub)
    x = np.linspace(sub.R_lo, sub.R_hi, 100_001)
    xg = x[np.argmin(sub.f(x))]
    assert abs(r - xg) <= 1.5 * (x[1] - x[0])
    if sub.R_lo < r < sub.R_hi:
        assert abs(sub.F_r(r)) <= 1e-10 * sub.F_scale(r)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), K=st.sampled_from([2, 3, 5]))
def test_subproblem_is_objective_slice(seed, K):
    """f_k differs from the full objective in R_k by a constant."""
    sc = generate_scenario(K, four_user_cell(), seed)
    prob = _Problem(sc.arrays(), sc.params)
    rng = np.random.default_rng(seed)
    R = rng.uniform(0.1, 0.9, K) * prob.R_hi
    pi = prob.order(R)
    k = int(rng.integers(K))
    sub = prob.subproblem(k, R, pi)
    assert sub.Lambda > 0 and sub.Omega >= 0
    vals = []
    for r in np.linspace(0.05, 0.95, 7) * prob.R_hi[k]:
        R2 = R.copy()
        R2[k] = r
        vals.append(prob.objective(R2, pi) - float(sub.f(r)))
    assert np.ptp(vals) <= 1e-9 * max(abs(v) for v in vals)


def test_last_in_order_has_zero_omega(four_users):
    R = np.array([1.0, 0.5, 1.5, 1.0])
    prob = _Problem(four_users.arrays(), four_users.params)
    pi = prob.order(R)
    sub = coordinate_subproblem(int(pi[-1]), R, four_users.users, four_users.params)
    assert sub.Omega == 0.0


def test_single_user_matches_direct_search():
    sc = four_user_scenario(seed=3, n=1)
    alloc, rep, it = solve_partial_fullma(sc.users, sc.params)
    sub = coordinate_subproblem(0, [0.5], sc.users, sc.params)
    r = line_search_rate(sub)
    g = grid_partial_oracle(sc.users, sc.params, scheme="fullma")
    assert alloc.R[0] == pytest.approx(r, rel=1e-8)
    assert rep.total == pytest.approx(g.objective, rel=1e-6)
    assert abs(alloc.R[0] - g.point["R"][0]) <= 1e-3 * sub.R_hi


def test_two_user_matches_frozen_grid():
    sc = four_user_scenario(seed=3)
    sub = sc.arrays().take([0, 1])
    _, rep, _ = solve_partial_fullma(sub, sc.params)
    assert rep.total <= GRID_TWO_USER_SEED3 * 1.005
    assert rep.total == pytest.approx(GRID_TWO_USER_SEED3, rel=1e-6)


def test_four_user_converges_quickly():
    for seed in range(10):
        sc = four_user_scenario(seed=seed)
        alloc, rep, it = solve_partial_fullma(sc.users, sc.params)
        assert it <= 10 and alloc.info["converged"]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), K=st.sampled_from([2, 4, 8]))
def test_solution_properties(seed, K):
    sc = generate_scenario(K, four_user_cell(), seed)
    arr, p = sc.arrays(), sc.params
    alloc, rep, it = solve_partial_fullma(sc.users, p)
    trace = alloc.info["trace"]
    steps = np.array(trace.steps)
    assert np.all(np.diff(steps) <= 1e-10 * steps[0])
    # each user spends its whole uplink budget: gamma B (T_s + delta_c R) / R = L_bar
    on = alloc.R > 0
    used = alloc.gamma[on] * arr.B[on] * (p.T_s + p.delta_c * alloc.R[on]) / alloc.R[on]
    np.testing.assert_allclose(used, l_bar(arr)[on], rtol=1e-9)
    assert np.all((alloc.gamma >= 0) & (alloc.gamma <= 1))
    assert feasible_powers(alloc.R[on], alloc.P[on], arr.alpha[on])
    assert rep.total == pytest.approx(rep.tx_total + rep.local_total)


def test_users_without_budget_stay_local():
    p = SystemParams()
    users = users_from(p, B=[2e6, 1e6], L=[1.2, 0.2], alpha=[1e8, 1e8])
    alloc, rep, _ = solve_partial_fullma(users, p)
    assert alloc.gamma[1] == 0.0 and alloc.R[1] == 0.0
    assert rep.local[1] == pytest.approx(1e-19 / 0.04 * 1e18)
    with pytest.raises(InfeasibleUser):
        solve_partial_fullma(users_from(p, B=[1e6], L=[0.2], alpha=[1.0]), p)


def test_trace_csv():
    sc = four_user_scenario(seed=3)
    alloc, _, it = solve_partial_fullma(sc.users, sc.params)
    lines = alloc.info["trace"].to_csv().splitlines()
    assert lines[0] == "iteration,objective" and len(lines) == it + 2


def test_init_rates_respected():
    sc = four_user_scenario(seed=3)
    a, r1, _ = solve_partial_fullma(sc.users, sc.params)
    b, r2, _ = solve_partial_fullma(sc.users, sc.params, init_rates=np.full(4, 0.1))
    assert r2.total == pytest.approx(r1.total, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), K=st.sampled_from([2, 4, 8]))
def test_slope_changes_sign_at_most_once(seed, K):
    sc = generate_scenario(K, four_user_cell(), seed)
    prob = _Problem(sc.arrays(), sc.params)
    rng = np.random.default_rng(seed)
    R = rng.uniform(0.05, 0.95, K) * prob.R_hi
    pi = prob.order(R)
    for k in range(K):
        sub = prob.subproblem(k, R, pi)
        x = np.linspace(sub.R_lo, sub.R_hi, 5001)
        df = np.diff(sub.f(x))
        band = 1e-9 * np.max(np.abs(sub.f(x)))
        s = np.sign(np.where(np.abs(df) <= band, 0.0, df))
        s = s[s != 0]
        assert np.count_nonzero(np.diff(s)) <= 1
