"""Closed-loop self-triggered execution and validity checking."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Region
from .plant import PlantModel
from .synthesis import RefinedController

REACHED = "reached-target"
UNSAFE = "safety-violated"
EXHAUSTED = "horizon-exhausted"
INFEASIBLE = "controller-infeasible"


@dataclass
class Trace:
    """Timed record of a closed-loop run.

    Row ``j`` holds the state at step ``k[j]``, the input applied from it
    (NaN on the final row), whether a communication happened there and the
    index of the current communication interval.
    """

    k: np.ndarray
    x: np.ndarray
    u: np.ndarray
    comm: np.ndarray
    ell: np.ndarray
    status: str
    horizons: list[int] = field(default_factory=list)
    levels: list[float] = field(default_factory=list)
    certified: list[bool] = field(default_factory=list)
    detail: str = ""

    def __len__(self) -> int:
        return len(self.k)

    @property
    def rounds(self) -> int:
        """Number of (input, horizon) decisions sent to the plant."""
        return len(self.horizons)

    @property
    def communication_steps(self) -> np.ndarray:
        return self.k[self.comm]

    def to_csv(self, path, header_note: str | None = None) -> Path:
        path = Path(path)
        n, nu = self.x.shape[1], self.u.shape[1]
        cols = ["k"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(nu)] + ["comm", "ell"]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for j in range(len(self.k)):
                w.writerow(
                    [int(self.k[j])]
                    + [f"{v:.9g}" for v in self.x[j]]
                    + [f"{v:.9g}" for v in self.u[j]]
                    + [int(self.comm[j]), int(self.ell[j])]
                )
            fh.write(f"# status={self.status} rounds={self.rounds}")
            if header_note:
                fh.write(f" {header_note}")
            fh.write("\n")
        return path

    @classmethod
    def from_csv(cls, path) -> "Trace":
        lines = Path(path).read_text().splitlines()
        status_line = next(line for line in lines if line.startswith("#"))
        meta = dict(tok.split("=", 1) for tok in status_line[1:].split() if "=" in tok)
        rows = list(csv.reader(line for line in lines if not line.startswith("#")))
        head, body = rows[0], rows[1:]
        n = sum(h.startswith("x") for h in head)
        nu = sum(h.startswith("u") for h in head)
        a = np.array([[float(v) for v in r] for r in body]).reshape(-1, len(head))
        comm = a[:, 1 + n + nu].astype(bool)
        return cls(a[:, 0].astype(np.int64), a[:, 1 : 1 + n], a[:, 1 + n : 1 + n + nu], comm,
                   a[:, -1].astype(np.int64), meta.get("status", ""))


def default_step_cap(rc: RefinedController, n_safe: int | None = None) -> int:
    n = len(rc.nodes) if n_safe is None else n_safe
    return rc.m_max * (n + 1)


def run_closed_loop(
    plant: PlantModel,
    rc: RefinedController,
    x0,
    X_S: Region,
    X_F: Region,
    step_cap: int | None = None,
    X_0: Region | None = None,
    stop_anywhere: bool = False,
    allow_uncertified: bool = False,
) -> Trace:
    """Run the self-triggered loop from ``x0``.

    At each communication instant the refined controller is queried and one
    pair is picked with its tie-break policy; the input is then held for the
    chosen horizon. The loop stops when a communication instant finds the
    state in ``X_F`` (or any step does, with ``stop_anywhere``), when the
    state leaves ``X_S``, when the query fails or is uncertified, or after
    ``step_cap`` steps.
    """
    x = np.asarray(x0, dtype=float)
    if X_0 is not None and not X_0.contains(x):
        raise ValueError(f"initial state {x} is not in the initial set")
    if step_cap is None:
        step_cap = default_step_cap(rc)
    if step_cap < 1:
        raise ValueError("step_cap must be >= 1")
    nu = rc.inputs.shape[1]
    nan_u = np.full(nu, np.nan)
    ks, xs, us, comms, ells = [], [], [], [], []
    horizons, levels, certs = [], [], []

    def record(k, xk, uk, c, ell):
        ks.append(k)
        xs.append(np.array(xk, dtype=float))
        us.append(np.array(uk, dtype=float))
        comms.append(c)
        ells.append(ell)

    k, ell = 0, 0
    status, detail = EXHAUSTED, ""
    if not X_S.contains(x):
        status, detail = UNSAFE, "initial state outside the safety set"
        record(k, x, nan_u, True, ell)
    while status == EXHAUSTED and not detail:
        if X_F.contains(x):
            record(k, x, nan_u, True, ell)
            status = REACHED
            break
        if k >= step_cap:
            record(k, x, nan_u, False, ell)
            detail = f"step cap {step_cap} reached"
            break
        try:
            q = rc.query(x)
        except ValueError as err:
            q, detail = None, str(err)
        if q is not None and not q.pairs:
            detail = f"no admissible pair at {x.tolist()}"
        elif q is not None and not q.certified and not allow_uncertified:
            detail = f"state {x.tolist()} is {q.distance:.6g} from the winning set (eps={rc.eps})"
        if detail:
            record(k, x, nan_u, True, ell)
            status = INFEASIBLE
            break
        i, m = rc.select(q.pairs)
        u = rc.inputs[i]
        horizons.append(m)
        levels.append(q.level)
        certs.append(q.certified)
        for j in range(m):
            record(k, x, u, j == 0, ell)
            x = plant.step(x, u)
            k += 1
            if not X_S.contains(x):
                record(k, x, nan_u, False, ell + 1)
                status, detail = UNSAFE, f"left the safety set at step {k}"
                break
            if stop_anywhere and X_F.contains(x):
                record(k, x, nan_u, False, ell + 1)
                status, detail = REACHED, f"entered the target at step {k} between communications"
                break
        ell += 1
    return Trace(
        np.asarray(ks, dtype=np.int64),
        np.asarray(xs).reshape(len(ks), -1),
        np.asarray(us).reshape(len(ks), nu),
        np.asarray(comms, dtype=bool),
        np.asarray(ells, dtype=np.int64),
        status,
        horizons,
        levels,
        certs,
        detail,
    )


@dataclass
class ValidityReport:
    reached: bool
    k_N: int | None
    safe_prefix: bool
    communications: int
    violation: str = ""

    @property
    def valid(self) -> bool:
        return self.reached and self.safe_prefix


def check_validity(trace: Trace, X_S: Region, X_F: Region) -> ValidityReport:
    """Evaluate reach (first communication instant in ``X_F``) and stay-safe up to it."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    inF = X_F.contains(trace.x) & trace.comm
    hits = np.flatnonzero(inF)
    j_end = int(hits[0]) if len(hits) else len(trace) - 1
    inS = X_S.contains(trace.x[: j_end + 1])
    safe = bool(np.all(inS))
    violation = ""
    if not safe:
        bad = int(np.flatnonzero(~inS)[0])
        violation = f"x_{int(trace.k[bad])} = {trace.x[bad].tolist()} outside the safety set"
    k_N = int(trace.k[j_end]) if len(hits) else None
    comms = int(np.count_nonzero(trace.comm[:j_end] & ~np.isnan(trace.u[:j_end, 0])))
    return ValidityReport(bool(len(hits)) and safe, k_N, safe, comms, violation)


@dataclass
class SweepReport:
    total: int
    passed: int
    histogram: Counter
    level_matches: int
    worst: int | None
    failures: list[tuple[list[float], str]]

    @property
    def pass_rate(self) -> float:
        return self.passed / self.total if self.total else 1.0


def sweep(plant: PlantModel, rc: RefinedController, initial_points, X_S: Region, X_F: Region,
          step_cap: int | None = None) -> SweepReport:
    """Run the loop from each initial point and aggregate validity and round counts."""
    pts = np.asarray(initial_points, dtype=float).reshape(-1, rc.lattice.n)
    hist: Counter = Counter()
    passed = matches = 0
    failures = []
    worst = None
    for x0 in pts:
        tr = run_closed_loop(plant, rc, x0, X_S, X_F, step_cap)
        rep = check_validity(tr, X_S, X_F)
        if rep.valid:
            passed += 1
            hist[tr.rounds] += 1
            worst = tr.rounds if worst is None else max(worst, tr.rounds)
            _, lvl = _start_level(rc, x0)
            matches += int(lvl == tr.rounds)
        else:
            failures.append((x0.tolist(), tr.status + (": " + tr.detail if tr.detail else "")))
    return SweepReport(len(pts), passed, hist, matches, worst, failures)


def _start_level(rc: RefinedController, x0) -> tuple[list[int], float]:
    ids, _ = rc.nearest(x0)
    return ids, float(min(rc.levels[w] for w in ids))


def periodic_baseline(plant: PlantModel, rc_periodic: RefinedController, x0, X_S: Region, X_F: Region,
                      step_cap: int | None = None) -> Trace:
    """Closed loop under a controller synthesized with ``m_max = 1``."""
    if rc_periodic.m_max != 1:
        raise ValueError("the periodic baseline needs a controller synthesized with m_max = 1")
    return run_closed_loop(plant, rc_periodic, x0, X_S, X_F, step_cap)
