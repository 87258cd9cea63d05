"""Domain types, derived latencies, DVS local energy and the cell-model generator."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import InvalidConfig


@dataclass(frozen=True)
class SystemParams:
    """Constants shared by every user.

    Attributes
    ----------
    T_s : float
        Symbol interval, seconds per channel use.
    sigma2 : float
        Receiver noise variance per channel use (linear).
    delta_c : float
        Edge processing time in seconds per bit.
    """

    T_s: float = 1e-6
    sigma2: float = 1e-19
    delta_c: float = 1e-8

    def __post_init__(self):
        if not self.T_s > 0:
            raise InvalidConfig(f"T_s must be positive, got {self.T_s}")
        if not self.sigma2 > 0:
            raise InvalidConfig(f"sigma2 must be positive, got {self.sigma2}")
        if not self.delta_c >= 0:
            raise InvalidConfig(f"delta_c must be non-negative, got {self.delta_c}")

    def to_dict(self) -> dict:
        return {"T_s": self.T_s, "sigma2": self.sigma2, "delta_c": self.delta_c}


@dataclass(frozen=True)
class UserTask:
    """Per-user task and channel data. ``alpha`` is the gain per unit power, h2 / sigma2."""

    B: float
    L: float
    M: float
    t_DL: float
    h2: float
    alpha: float

    def __post_init__(self):
        if not self.B > 0:
            raise InvalidConfig(f"B must be positive, got {self.B}")
        if not self.L > 0:
            raise InvalidConfig(f"L must be positive, got {self.L}")
        if not self.M >= 0:
            raise InvalidConfig(f"M must be non-negative, got {self.M}")
        if not self.t_DL >= 0:
            raise InvalidConfig(f"t_DL must be non-negative, got {self.t_DL}")
        if not self.h2 > 0:
            raise InvalidConfig(f"h2 must be positive, got {self.h2}")
        if not self.alpha > 0:
            raise InvalidConfig(f"alpha must be positive, got {self.alpha}")

    @classmethod
    def create(cls, B, L, M, t_DL, h2, params: SystemParams) -> "UserTask":
        return cls(float(B), float(L), float(M), float(t_DL), float(h2), float(h2) / params.sigma2)

    def to_dict(self) -> dict:
        return {"B": self.B, "L": self.L, "M": self.M, "t_DL": self.t_DL, "h2": self.h2}


@dataclass(frozen=True)
class UserArrays:
    """Struct-of-arrays view of a user list, used by the vectorised kernels."""

    B: np.ndarray
    L: np.ndarray
    M: np.ndarray
    t_DL: np.ndarray
    h2: np.ndarray
    alpha: np.ndarray

    @classmethod
    def from_users(cls, users) -> "UserArrays":
        if isinstance(users, UserArrays):
            return users
        users = list(users)
        return cls(*(np.array([getattr(u, name) for u in users], dtype=float)
                     for name in ("B", "L", "M", "t_DL", "h2", "alpha")))

    def __len__(self):
        return len(self.B)

    def take(self, idx) -> "UserArrays":
        idx = np.asarray(idx, dtype=int)
        return UserArrays(self.B[idx], self.L[idx], self.M[idx], self.t_DL[idx],
                          self.h2[idx], self.alpha[idx])

    def with_latency(self, L) -> "UserArrays":
        L = np.broadcast_to(np.asarray(L, dtype=float), self.B.shape).copy()
        return UserArrays(self.B, L, self.M, self.t_DL, self.h2, self.alpha)


def as_arrays(users) -> UserArrays:
    return UserArrays.from_users(users)


@dataclass(frozen=True)
class EffectiveLatencies:
    L_tilde: float
    L_bar: float


def effective_latencies(user: UserTask, params: SystemParams) -> EffectiveLatencies:
    """Latency budgets left for the uplink.

    ``L_bar`` subtracts only the downlink time (partial offloading); ``L_tilde``
    also subtracts the edge execution time of the whole task (complete
    offloading). Negative values are returned unclamped.
    """
    L_bar = user.L - user.t_DL
    return EffectiveLatencies(L_tilde=L_bar - params.delta_c * user.B, L_bar=L_bar)


def l_bar(users: UserArrays) -> np.ndarray:
    return users.L - users.t_DL


def l_tilde(users: UserArrays, params: SystemParams) -> np.ndarray:
    return users.L - users.t_DL - params.delta_c * users.B


def local_energy_dvs(user, gamma):
    """Minimum local computing energy (M / L^2) ((1 - gamma) B)^3 under DVS.

    Works elementwise when ``user`` is a :class:`UserArrays`.
    """
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0) or np.any(gamma > 1):
        raise ValueError("gamma must lie in [0, 1]")
    retained = (1.0 - gamma) * user.B
    out = user.M / user.L ** 2 * retained ** 3
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class Allocation:
    """A solution over the full user list.

    ``order`` lists user indices in the permutation the solver used: for
    FullMA it is pi(1), ..., pi(K') so the *decoding* order is the reverse
    (pi(K') decoded first); for TDMA it is the transmit order.
    """

    R: np.ndarray
    P: np.ndarray
    gamma: np.ndarray
    order: tuple
    scheme: str
    feasible: bool = True
    info: dict = field(default_factory=dict)

    @property
    def decode_order(self) -> tuple:
        if self.scheme.startswith("tdma"):
            return tuple(self.order)
        return tuple(reversed(self.order))

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "feasible": bool(self.feasible),
            "R": [float(x) for x in self.R],
            "P": [float(x) for x in self.P],
            "gamma": [float(x) for x in self.gamma],
            "order": [int(i) for i in self.order],
            "decode_order": [int(i) for i in self.decode_order],
            "info": {k: v for k, v in self.info.items() if isinstance(v, (int, float, str, bool))},
        }


@dataclass
class EnergyReport:
    tx: np.ndarray
    local: np.ndarray

    @property
    def tx_total(self) -> float:
        return float(np.sum(self.tx))

    @property
    def local_total(self) -> float:
        return float(np.sum(self.local))

    @property
    def total(self) -> float:
        return self.tx_total + self.local_total

    @property
    def per_user(self) -> np.ndarray:
        return self.tx + self.local

    def to_dict(self) -> dict:
        return {
            "tx": [float(x) for x in self.tx],
            "local": [float(x) for x in self.local],
            "tx_total": self.tx_total,
            "local_total": self.local_total,
            "total": self.total,
        }


@dataclass
class Scenario:
    params: SystemParams
    users: list
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.users) < 1:
            raise InvalidConfig("a scenario needs at least one user")

    @property
    def K(self) -> int:
        return len(self.users)

    def arrays(self) -> UserArrays:
        return UserArrays.from_users(self.users)

    def with_equal_latency(self) -> "Scenario":
        """Copy in which every deadline is replaced by the smallest one."""
        L_min = min(u.L for u in self.users)
        users = [UserTask(u.B, L_min, u.M, u.t_DL, u.h2, u.alpha) for u in self.users]
        return Scenario(self.params, users, self.seed, dict(self.meta, equal_latency=True))

    def to_dict(self) -> dict:
        out = {
            "params": self.params.to_dict(),
            "users": [u.to_dict() for u in self.users],
            "seed": self.seed,
        }
        if self.meta:
            out["meta"] = self.meta
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        try:
            params = SystemParams(**{k: float(doc["params"][k]) for k in ("T_s", "sigma2", "delta_c")})
            users = [UserTask.create(u["B"], u["L"], u["M"], u["t_DL"], u["h2"], params)
                     for u in doc["users"]]
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidConfig):
                raise
            raise InvalidConfig(f"malformed scenario document: {exc!r}") from exc
        return cls(params, users, doc.get("seed"), dict(doc.get("meta") or {}))

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"scenario is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise InvalidConfig("scenario JSON must be an object")
        return cls.from_dict(doc)


@dataclass(frozen=True)
class CellConfig:
    """Single-cell deployment with uniform user placement and Rayleigh fading.

    ``noise_power`` is the receiver noise in watts. Transmit powers are
    handled as energy per channel use, so the noise variance stored in the
    scenario is ``noise_power * T_s``.

    ``B`` and ``L`` may be scalars (same for every user) or per-user
    sequences, which are cycled if shorter than the user count.
    """

    radius: float = 1000.0
    r_min: float = 1.0
    path_loss_exponent: float = 3.7
    noise_power: float = 1e-13
    T_s: float = 1e-6
    delta_c: float = 1e-8
    B: Any = 6e6
    L: Any = 2.0
    M: Any = 1e-19
    t_DL: Any = 0.2

    def validate(self):
        if not self.radius > 0:
            raise InvalidConfig(f"radius must be positive, got {self.radius}")
        if not 0 <= self.r_min < self.radius:
            raise InvalidConfig(f"r_min must lie in [0, radius), got {self.r_min}")
        if not self.path_loss_exponent > 0:
            raise InvalidConfig(f"path-loss exponent must be positive, got {self.path_loss_exponent}")
        if not self.noise_power > 0:
            raise InvalidConfig("noise_power must be positive")

    def system_params(self) -> SystemParams:
        return SystemParams(T_s=self.T_s, sigma2=self.noise_power * self.T_s, delta_c=self.delta_c)

    def to_dict(self) -> dict:
        def plain(v):
            return list(v) if isinstance(v, (list, tuple, np.ndarray)) else v
        return {k: plain(getattr(self, k)) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, doc: dict) -> "CellConfig":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidConfig(f"unknown cell-model keys: {sorted(unknown)}")
        return cls(**doc)


def _per_user(value, n, name) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidConfig(f"{name} must be a scalar or a non-empty list")
    return np.resize(arr, n)


def generate_scenario(n_users: int, config: CellConfig | None = None, seed: int = 0) -> Scenario:
    """Draw a cell-model scenario.

    Users are uniform on the annulus r_min <= d <= radius (the uniform-disk law
    conditioned on d >= r_min), and h2 = d^(-exponent) |g|^2 with g a
    unit-variance circular complex Gaussian.
    """
    config = config or CellConfig()
    config.validate()
    if n_users < 1:
        raise InvalidConfig("n_users must be at least 1")
    params = config.system_params()
    rng = np.random.default_rng(seed)
    u = rng.random(n_users)
    d = np.sqrt(config.r_min ** 2 + u * (config.radius ** 2 - config.r_min ** 2))
    g = (rng.standard_normal(n_users) + 1j * rng.standard_normal(n_users)) / np.sqrt(2.0)
    fading = np.abs(g) ** 2
    h2 = d ** (-config.path_loss_exponent) * fading

    B = _per_user(config.B, n_users, "B")
    L = _per_user(config.L, n_users, "L")
    M = _per_user(config.M, n_users, "M")
    t_DL = _per_user(config.t_DL, n_users, "t_DL")
    users = [UserTask.create(B[k], L[k], M[k], t_DL[k], h2[k], params) for k in range(n_users)]
    meta = {"distance": d.tolist(), "fading": fading.tolist()}
    return Scenario(params, users, seed, meta)


def scenario_from_arrays(params: SystemParams, B, L, M, t_DL, h2, seed=None) -> Scenario:
    n = np.broadcast(np.asarray(B), np.asarray(h2)).size
    cols = [np.resize(np.asarray(v, dtype=float), n) for v in (B, L, M, t_DL, h2)]
    users = [UserTask.create(*(c[k] for c in cols), params) for k in range(n)]
    return Scenario(params, users, seed)


def subset_mask(K: int, subset: Sequence[int]) -> np.ndarray:
    mask = np.zeros(K, dtype=bool)
    mask[list(subset)] = True
    return mask
