"""Monte-Carlo experiment runner.

An experiment sweeps either the task-size multiplier ``zeta`` (bits become
zeta times the cell-model bits) or the number of users ``K``. Every
realization draws one channel from its own RNG stream, seeded from
``(seed, realization)``, and all schemes and sweep values at that
realization see the same draw, so comparisons are paired. Scheme names
ending in ``-eqlat`` first replace every deadline by the smallest one.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .binary_offload import all_local, evaluate_offload_set, exhaustive_binary, greedy_binary, rounding_binary
from .errors import InvalidConfig, MacoffError
from .fullma_partial import solve_partial_fullma
from .model import CellConfig, Scenario, generate_scenario
from .tdma_partial import solve_partial_tdma

EQLAT = "-eqlat"
CSV_FIELDS = ["experiment", "scheme", "sweep", "realization", "energy_total", "energy_tx",
              "energy_local", "wall_ms", "iters", "status"]
SUMMARY_FIELDS = ["scheme", "sweep", "n", "n_failed", "mean", "stderr", "min", "max",
                  "mean_wall_ms", "mean_iters"]

ALIASES = {
    "fullma-binary-greedy": "fullma-greedy",
    "fullma-binary-exhaustive": "fullma-exhaustive",
    "tdma-binary-greedy": "tdma-greedy",
    "tdma-binary-exhaustive": "tdma-exhaustive",
    "fullma-optimal": "fullma-exhaustive",
    "tdma-optimal": "tdma-exhaustive",
    "local": "no-offloading",
    "none": "no-offloading",
}


@dataclass
class SchemeResult:
    report: object
    iters: int
    offload: list  # per-user gamma
    allocation: object = None
    extra: dict = field(default_factory=dict)


def _binary(fn):
    def run(sc: Scenario, seed: int):
        d = fn(sc, seed)
        return SchemeResult(d.report, int(d.allocation.info.get("iterations", 0)), d.allocation.gamma.tolist(),
                            d.allocation, {"offload_set": list(d.offload_set)})
    return run


def _greedy(scheme):
    def run(sc, seed):
        d, trace = greedy_binary(sc.users, sc.params, scheme)
        return SchemeResult(d.report, len(trace.iterations), d.allocation.gamma.tolist(), d.allocation,
                            {"offload_set": list(d.offload_set), "greedy_trace": trace.to_dict()})
    return run


def _partial_fullma(sc, seed):
    alloc, rep, it = solve_partial_fullma(sc.users, sc.params)
    return SchemeResult(rep, it, alloc.gamma.tolist(), alloc)


def _partial_tdma(sc, seed):
    alloc, rep = solve_partial_tdma(sc.users, sc.params)
    return SchemeResult(rep, int(alloc.info.get("newton_steps", 0)), alloc.gamma.tolist(), alloc)


def _complete(scheme):
    def run(sc, seed):
        d = evaluate_offload_set(range(sc.K), sc.users, sc.params, scheme)
        return SchemeResult(d.report, int(d.allocation.info.get("newton_steps", 0)), d.allocation.gamma.tolist(),
                            d.allocation, {"offload_set": list(d.offload_set)})
    return run


SCHEMES = {
    "fullma-greedy": _greedy("fullma"),
    "tdma-greedy": _greedy("tdma"),
    "fullma-exhaustive": _binary(lambda sc, s: exhaustive_binary(sc.users, sc.params, "fullma")),
    "tdma-exhaustive": _binary(lambda sc, s: exhaustive_binary(sc.users, sc.params, "tdma")),
    "fullma-rounding": _binary(lambda sc, s: rounding_binary(sc.users, sc.params, "fullma")),
    "tdma-rounding": _binary(lambda sc, s: rounding_binary(sc.users, sc.params, "tdma")),
    "fullma-randomized-rounding": _binary(
        lambda sc, s: rounding_binary(sc.users, sc.params, "fullma", "randomized", seed=s)),
    "tdma-randomized-rounding": _binary(
        lambda sc, s: rounding_binary(sc.users, sc.params, "tdma", "randomized", seed=s)),
    "no-offloading": _binary(lambda sc, s: all_local(sc.users, sc.params)),
    "fullma-complete": _complete("fullma"),
    "tdma-complete": _complete("tdma"),
    "fullma-partial": _partial_fullma,
    "tdma-partial": _partial_tdma,
}


def canonical_scheme(name: str) -> str:
    """Resolve aliases; keeps a trailing equal-latency marker."""
    name = name.strip().lower()
    eq = name.endswith(EQLAT)
    base = name[: -len(EQLAT)] if eq else name
    base = ALIASES.get(base, base)
    if base not in SCHEMES:
        raise InvalidConfig(f"unknown scheme {name!r}; known: {sorted(SCHEMES)}")
    return base + (EQLAT if eq else "")


def solve_scheme(scheme: str, sc: Scenario, seed: int = 0) -> SchemeResult:
    """Run one named scheme on one scenario; errors propagate."""
    scheme = canonical_scheme(scheme)
    if scheme.endswith(EQLAT):
        scheme, sc = scheme[: -len(EQLAT)], sc.with_equal_latency()
    return SCHEMES[scheme](sc, seed)


def realization_seed(seed: int, realization: int) -> int:
    """Independent 64-bit seed for one realization."""
    return int(np.random.SeedSequence([int(seed), int(realization)]).generate_state(1, np.uint64)[0])


@dataclass
class ExperimentSpec:
    experiment: str
    schemes: list
    sweep: str  # "zeta" or "K"
    values: list
    n_realizations: int = 100
    seed: int = 0
    n_users: int = 4  # used by zeta sweeps
    cell: CellConfig = field(default_factory=CellConfig)
    record_timing: bool = False

    def __post_init__(self):
        if not self.experiment:
            raise InvalidConfig("experiment id must be non-empty")
        if self.sweep not in ("zeta", "K"):
            raise InvalidConfig(f"sweep variable must be 'zeta' or 'K', got {self.sweep!r}")
        if int(self.n_realizations) < 1:
            raise InvalidConfig("n_realizations must be at least 1")
        if not self.values:
            raise InvalidConfig("sweep needs at least one value")
        vals = np.asarray(self.values, dtype=float)
        if np.any(np.diff(vals) <= 0):
            raise InvalidConfig("sweep values must be strictly increasing")
        if self.sweep == "K" and (np.any(vals < 1) or np.any(vals != np.round(vals))):
            raise InvalidConfig("user counts must be positive integers")
        if self.sweep == "zeta" and np.any(vals <= 0):
            raise InvalidConfig("zeta values must be positive")
        if not self.schemes:
            raise InvalidConfig("at least one scheme is required")
        self.schemes = [canonical_scheme(s) for s in self.schemes]
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidConfig("seed must be a 64-bit unsigned integer")
        self.cell.validate()

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "schemes": list(self.schemes),
            "sweep": {"variable": self.sweep, "values": list(self.values)},
            "n_realizations": int(self.n_realizations),
            "seed": int(self.seed),
            "n_users": int(self.n_users),
            "cell": self.cell.to_dict(),
            "record_timing": bool(self.record_timing),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        if not isinstance(doc, dict):
            raise InvalidConfig("experiment spec must be a JSON object")
        known = {"experiment", "schemes", "sweep", "n_realizations", "seed", "n_users", "cell", "record_timing"}
        unknown = set(doc) - known
        if unknown:
            raise InvalidConfig(f"unknown experiment keys: {sorted(unknown)}")
        try:
            sweep = doc["sweep"]
            return cls(
                experiment=str(doc["experiment"]),
                schemes=list(doc["schemes"]),
                sweep=str(sweep["variable"]),
                values=[float(v) for v in sweep["values"]],
                n_realizations=int(doc.get("n_realizations", 100)),
                seed=int(doc.get("seed", 0)),
                n_users=int(doc.get("n_users", 4)),
                cell=CellConfig.from_dict(doc.get("cell", {})),
                record_timing=bool(doc.get("record_timing", False)),
            )
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, InvalidConfig):
                raise
            raise InvalidConfig(f"malformed experiment spec: {e!r}") from e

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise InvalidConfig(f"experiment spec is not valid JSON: {e}") from e
        return cls.from_dict(doc)


@dataclass
class ResultRow:
    experiment: str
    scheme: str
    sweep: float
    realization: int
    energy_total: float
    energy_tx: float
    energy_local: float
    wall_ms: float
    iters: int
    status: str = "ok"
    per_user: list = field(default_factory=list)
    offload: list = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return self.status != "ok"

    def csv_record(self) -> list:
        return [self.experiment, self.scheme, repr(float(self.sweep)), str(self.realization),
                repr(float(self.energy_total)), repr(float(self.energy_tx)), repr(float(self.energy_local)),
                repr(float(self.wall_ms)), str(self.iters), self.status]


def _scenario_for(spec: ExperimentSpec, value: float, seed: int) -> Scenario:
    """Scenario at one sweep value; the channel depends only on (K, seed), not on zeta."""
    if spec.sweep == "zeta":
        B = np.asarray(spec.cell.B, dtype=float) * value
        cell = CellConfig.from_dict({**spec.cell.to_dict(), "B": B.tolist() if B.ndim else float(B)})
        return generate_scenario(spec.n_users, cell, seed)
    return generate_scenario(int(value), spec.cell, seed)


def _run_one(spec: ExperimentSpec, scheme: str, value: float, r: int, sc: Scenario, seed: int) -> ResultRow:
    t0 = time.perf_counter()
    try:
        res = solve_scheme(scheme, sc, seed)
    except (MacoffError, FloatingPointError, np.linalg.LinAlgError) as e:
        wall = (time.perf_counter() - t0) * 1e3 if spec.record_timing else 0.0
        nan = float("nan")
        return ResultRow(spec.experiment, scheme, value, r, nan, nan, nan, wall, 0, f"failed:{type(e).__name__}")
    wall = (time.perf_counter() - t0) * 1e3 if spec.record_timing else 0.0
    rep = res.report
    return ResultRow(spec.experiment, scheme, value, r, rep.total, rep.tx_total, rep.local_total, wall,
                     res.iters, "ok", rep.per_user.tolist(), res.offload)


def _run_realization(spec: ExperimentSpec, r: int) -> list:
    seed = realization_seed(spec.seed, r)
    rows = []
    for value in spec.values:
        sc = _scenario_for(spec, value, seed)
        for scheme in spec.schemes:
            rows.append(_run_one(spec, scheme, value, r, sc, seed))
    return rows


def worker_count(threads=None) -> int:
    """Worker threads: explicit value, else MACOFF_THREADS, where 0 means one per CPU."""
    if threads is None:
        raw = os.environ.get("MACOFF_THREADS", "1")
        try:
            threads = int(raw)
        except ValueError:
            raise InvalidConfig(f"MACOFF_THREADS must be an integer, got {raw!r}") from None
    if threads < 0:
        raise InvalidConfig("thread count must be non-negative")
    return threads or (os.cpu_count() or 1)


def run_experiment(spec: ExperimentSpec, threads=None) -> list:
    """All rows, ordered by sweep value, realization and scheme regardless of threading."""
    n = worker_count(threads)
    reals = range(int(spec.n_realizations))
    if n == 1:
        chunks = [_run_realization(spec, r) for r in reals]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            chunks = list(pool.map(lambda r: _run_realization(spec, r), reals))
    rows = [row for chunk in chunks for row in chunk]
    vi = {v: i for i, v in enumerate(spec.values)}
    si = {s: i for i, s in enumerate(spec.schemes)}
    rows.sort(key=lambda x: (vi[x.sweep], x.realization, si[x.scheme]))
    return rows


@dataclass
class SummaryRow:
    scheme: str
    sweep: float
    n: int
    n_failed: int
    mean: float
    stderr: float
    min: float
    max: float
    mean_wall_ms: float
    mean_iters: float

    def csv_record(self) -> list:
        return [self.scheme, repr(float(self.sweep)), str(self.n), str(self.n_failed)] + [
            repr(float(v)) for v in (self.mean, self.stderr, self.min, self.max, self.mean_wall_ms, self.mean_iters)]


def summarize(rows) -> list:
    """Per (scheme, sweep value) statistics over the successful rows."""
    rows = list(rows)
    if not rows:
        raise ValueError("nothing to summarize")
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.scheme, r.sweep), []).append(r)
    out = []
    for (scheme, sweep), grp in groups.items():
        ok = [r for r in grp if not r.failed]
        e = np.array([r.energy_total for r in ok], dtype=float)
        n = e.size
        nan = float("nan")
        out.append(SummaryRow(
            scheme, sweep, n, len(grp) - n,
            float(e.mean()) if n else nan,
            float(e.std(ddof=1) / np.sqrt(n)) if n > 1 else (0.0 if n == 1 else nan),
            float(e.min()) if n else nan,
            float(e.max()) if n else nan,
            float(np.mean([r.wall_ms for r in ok])) if n else nan,
            float(np.mean([r.iters for r in ok])) if n else nan,
        ))
    return out


def _csv_text(header, records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(records)
    return buf.getvalue()


def rows_to_csv(rows) -> str:
    return _csv_text(CSV_FIELDS, (r.csv_record() for r in rows))


def summary_to_csv(summary) -> str:
    return _csv_text(SUMMARY_FIELDS, (s.csv_record() for s in summary))
