import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macoff.errors import InvalidConfig
from macoff.model import (CellConfig, Scenario, SystemParams, UserArrays, UserTask, effective_latencies,
                          generate_scenario, l_bar, l_tilde, local_energy_dvs)


def user(B=2e6, L=1.2, M=1e-19, t_DL=0.2, h2=1e-12, params=SystemParams()):
    return UserTask.create(B, L, M, t_DL, h2, params)


@pytest.mark.parametrize("L,t_DL,dc,B,Lbar,Ltilde", [
    (1.2, 0.2, 0.0, 2e6, 1.0, 1.0),
    (2.5, 0.2, 1e-8, 4e6, 2.3, 2.26),
    (0.2, 0.2, 0.0, 1.0, 0.0, 0.0),
])
def test_effective_latencies_examples(L, t_DL, dc, B, Lbar, Ltilde):
    p = SystemParams(delta_c=dc)
    e = effective_latencies(user(B=B, L=L, t_DL=t_DL, params=p), p)
    assert e.L_bar == pytest.approx(Lbar, abs=1e-15)
    assert e.L_tilde == pytest.approx(Ltilde, abs=1e-15)


def test_effective_latencies_not_clamped():
    p = SystemParams(delta_c=1e-6)
    e = effective_latencies(user(B=6e6, L=2.0, params=p), p)
    assert e.L_tilde == pytest.approx(2.0 - 0.2 - 6.0)


def test_array_latencies_match_scalar(four_users):
    arr = four_users.arrays()
    for k, u in enumerate(four_users.users):
        e = effective_latencies(u, four_users.params)
        assert l_bar(arr)[k] == e.L_bar
        assert l_tilde(arr, four_users.params)[k] == e.L_tilde


@given(c=st.floats(0.0, 5.0), L=st.floats(0.5, 3.0), t=st.floats(0.0, 0.4), B=st.floats(1e5, 1e7))
def test_latencies_shift_invariant(c, L, t, B):
    p = SystemParams()
    a = effective_latencies(user(B=B, L=L, t_DL=t, params=p), p)
    b = effective_latencies(user(B=B, L=L + c, t_DL=t + c, params=p), p)
    assert b.L_bar == pytest.approx(a.L_bar, abs=1e-12)
    assert b.L_tilde == pytest.approx(a.L_tilde, abs=1e-12)
    assert a.L_tilde <= a.L_bar <= L


def test_local_energy_examples():
    assert local_energy_dvs(user(B=6e6, L=2.0), 0.0) == pytest.approx(5.4, rel=1e-12)
    assert local_energy_dvs(user(B=6e6, L=2.0), 1.0) == 0.0
    assert local_energy_dvs(user(B=2e6, L=1.2), 0.5) == pytest.approx(6.944444444444e-2, rel=1e-10)


def test_local_energy_rejects_bad_gamma():
    with pytest.raises(ValueError):
        local_energy_dvs(user(), 1.5)


def test_local_energy_decreasing_convex():
    g = np.linspace(0, 1, 2001)
    e = np.array([local_energy_dvs(user(B=3e6, L=1.8), x) for x in g])
    assert np.all(np.diff(e) < 0)
    assert np.all(np.diff(e, 2) >= -1e-12 * e[0])


def test_user_validation():
    with pytest.raises(InvalidConfig):
        user(B=0)
    with pytest.raises(InvalidConfig):
        user(h2=-1)
    with pytest.raises(InvalidConfig):
        SystemParams(T_s=0)
    with pytest.raises(InvalidConfig):
        SystemParams(delta_c=-1)


def test_alpha_is_gain_over_noise():
    p = SystemParams(sigma2=2e-19)
    u = user(h2=4e-12, params=p)
    assert u.alpha == pytest.approx(2e7)


def test_generate_scenario_reproducible():
    a = generate_scenario(4, seed=42)
    b = generate_scenario(4, seed=42)
    c = generate_scenario(4, seed=43)
    assert a.K == 4
    assert all(u.alpha > 0 for u in a.users)
    assert [u.h2 for u in a.users] == [u.h2 for u in b.users]
    assert [u.h2 for u in a.users] != [u.h2 for u in c.users]


def test_generate_scenario_validation():
    with pytest.raises(InvalidConfig):
        generate_scenario(4, CellConfig(radius=0))
    with pytest.raises(InvalidConfig):
        generate_scenario(4, CellConfig(path_loss_exponent=0))
    with pytest.raises(InvalidConfig):
        generate_scenario(0)


def test_fading_mean_and_placement():
    sc = generate_scenario(1000, seed=5)
    fading = np.array(sc.meta["fading"])
    d = np.array(sc.meta["distance"])
    assert abs(fading.mean() - 1.0) < 0.1
    assert np.all((d >= 1.0) & (d <= 1000.0))
    h2 = np.array([u.h2 for u in sc.users])
    np.testing.assert_allclose(h2, d ** -3.7 * fading, rtol=1e-12)


def test_cell_noise_variance_per_channel_use():
    p = CellConfig().system_params()
    assert p.sigma2 == pytest.approx(1e-13 * 1e-6)


def test_per_user_values_cycle():
    sc = generate_scenario(6, CellConfig(B=[1e6, 2e6], L=[1.0, 2.0, 3.0]), seed=0)
    assert [u.B for u in sc.users] == [1e6, 2e6] * 3
    assert [u.L for u in sc.users] == [1.0, 2.0, 3.0] * 2


def test_scenario_json_roundtrip(four_users):
    text = four_users.to_json()
    doc = json.loads(text)
    assert set(doc) >= {"params", "users", "seed"}
    assert set(doc["users"][0]) == {"B", "L", "M", "t_DL", "h2"}
    back = Scenario.from_json(text)
    assert back.params == four_users.params
    assert back.users == four_users.users
    assert back.seed == four_users.seed


@pytest.mark.parametrize("text", ["{", "[]", '{"params": {}, "users": []}',
                                   '{"params": {"T_s": 1e-6, "sigma2": 1e-19, "delta_c": 0}, "users": [{"B": 1}]}'])
def test_scenario_malformed(text):
    with pytest.raises(InvalidConfig):
        Scenario.from_json(text)


def test_equal_latency_variant(four_users):
    eq = four_users.with_equal_latency()
    assert all(u.L == 1.2 for u in eq.users)
    assert [u.h2 for u in eq.users] == [u.h2 for u in four_users.users]


def test_user_arrays_take_and_latency(four_users):
    arr = UserArrays.from_users(four_users.users)
    sub = arr.take([2, 0])
    assert sub.B.tolist() == [3e6, 2e6]
    assert np.all(arr.with_latency(1.0).L == 1.0)
