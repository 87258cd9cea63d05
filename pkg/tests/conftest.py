import numpy as np
import pytest

from macoff.model import CellConfig, SystemParams, UserTask, generate_scenario

FOUR_B = [2e6, 1e6, 3e6, 4e6]
FOUR_L = [1.2, 1.5, 1.8, 2.5]


def four_user_cell(zeta=1.0, **kw) -> CellConfig:
    """The heterogeneous-latency four-user setup, cycled when more users are drawn."""
    return CellConfig(B=[zeta * b for b in FOUR_B], L=FOUR_L, **kw)


def four_user_scenario(seed=0, zeta=1.0, n=4):
    return generate_scenario(n, four_user_cell(zeta), seed)


def users_from(params: SystemParams, B, L, alpha, M=1e-19, t_DL=0.2):
    """Users with a given per-unit-power gain alpha."""
    n = len(alpha)
    cols = [np.resize(np.asarray(v, dtype=float), n) for v in (B, L, M, t_DL)]
    return [UserTask.create(cols[0][k], cols[1][k], cols[2][k], cols[3][k], alpha[k] * params.sigma2, params)
            for k in range(n)]


@pytest.fixture
def params():
    return SystemParams()


@pytest.fixture
def four_users():
    return four_user_scenario(seed=3)


# acceptance criteria report: criterion number -> list of (passed, detail)
ACCEPTANCE: dict = {}


def record_criterion(number: int, passed: bool, detail: str):
    ACCEPTANCE.setdefault(number, []).append((bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
