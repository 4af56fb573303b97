"""Reachability game over a symbolic model and controller refinement."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .abstraction import NodeIndex, SymbolicModel
from .geometry import LatticeSpec, Region, grid_indices, lattice_in_ball, norm

log = logging.getLogger(__name__)

ARTIFACT_FORMAT = "selftrig-controller"
ARTIFACT_VERSION = 1
TIE_BREAK_POLICIES = ("max_horizon", "min_horizon", "first")


def _as_mask(P, n: int) -> np.ndarray:
    if isinstance(P, np.ndarray) and P.dtype == bool:
        if P.shape != (n,):
            raise ValueError("state mask has the wrong length")
        return P
    mask = np.zeros(n, dtype=bool)
    ids = np.fromiter((int(s) for s in P), dtype=np.int64)
    if len(ids) and (ids.min() < 0 or ids.max() >= n):
        raise ValueError("state id out of range")
    mask[ids] = True
    return mask


def pre_mask(model: SymbolicModel, P: np.ndarray, workers: int = 1) -> np.ndarray:
    """Boolean mask of states with some output-safe ``(u, m)`` whose successors all lie in ``P``."""
    table = model.transition_table(workers)
    outside = ~P
    out = np.zeros(model.n_states, dtype=bool)
    for blocks in table.blocks:
        for blk in blocks:
            if len(blk.rows):
                out[blk.rows[blk.row_counts(outside) == 0]] = True
    return out


def pre(P, model: SymbolicModel) -> set[int]:
    """Controllable predecessor of the state-id set ``P`` (ids into ``model.states``)."""
    mask = _as_mask(P, model.n_states)
    return set(np.flatnonzero(pre_mask(model, mask)).tolist())


@dataclass
class GameSolution:
    """Level map and winning set of the reachability game.

    ``levels[s]`` is the number of communication rounds needed from state
    ``s`` (``inf`` outside the winning set); ``history[n]`` is the size of
    the n-th iterate.
    """

    levels: np.ndarray
    history: list[int]

    @property
    def winning(self) -> np.ndarray:
        return np.isfinite(self.levels)

    @property
    def iterations(self) -> int:
        return len(self.history) - 1

    def winning_ids(self) -> set[int]:
        return set(np.flatnonzero(self.winning).tolist())


def solve(model: SymbolicModel, workers: int = 1) -> GameSolution:
    """Iterate ``P <- P | pre(P)`` from the abstract targets to its fixed point."""
    P = model.target_mask.copy()
    levels = np.full(model.n_states, np.inf)
    levels[P] = 0.0
    history = [int(P.sum())]
    n = 0
    while True:
        nxt = P | pre_mask(model, P, workers)
        if np.array_equal(nxt, P):
            break
        n += 1
        levels[nxt & ~P] = n
        P = nxt
        history.append(int(P.sum()))
        log.debug("iteration %d: %d winning states", n, history[-1])
    return GameSolution(levels, history)


def brute_force_solve(model: SymbolicModel, limit: int = 10**6) -> GameSolution:
    """Reference solver: recompute every transition from scratch each iteration.

    Uses only plant iteration and closed-ball enumeration on Python sets;
    shares no code with the table-based solver.
    """
    N, K, M = model.n_states, model.n_inputs, model.params.m_max
    if N * K * M > limit:
        raise ValueError(f"{N}*{K}*{M} triples exceed the brute-force limit {limit}")
    safe = {model.node(s) for s in range(N)}
    nodes = [model.node(s) for s in range(N)]
    P = {model.node(s) for s in np.flatnonzero(model.target_mask)}
    levels = {p: 0 for p in P}
    history = [len(P)]
    n = 0
    while True:
        new = set()
        for s, node in enumerate(nodes):
            x = model.lattice.embed(node)
            found = False
            for i in range(K):
                u = model.inputs[i]
                for m in range(1, M + 1):
                    ok = True
                    for p in range(1, m + 1):
                        center = model.plant.iterate(x, u, p)
                        ball = lattice_in_ball(center, model.radius(p), model.lattice)
                        if not ball <= safe:
                            ok = False
                            break
                    if ok and ball <= P:
                        found = True
                        break
                if found:
                    break
            if found:
                new.add(node)
        nxt = P | new
        if nxt == P:
            break
        n += 1
        for q in nxt - P:
            levels[q] = n
        P = nxt
        history.append(len(P))
    arr = np.array([levels.get(node, np.inf) for node in nodes], dtype=float)
    return GameSolution(arr, history)


@dataclass
class AbstractController:
    """Admissible ``(input id, horizon)`` pairs per winning state id."""

    pairs: dict[int, list[tuple[int, int]]]

    def __getitem__(self, s: int) -> list[tuple[int, int]]:
        return self.pairs.get(int(s), [])


def abstract_controller(solution: GameSolution, model: SymbolicModel, workers: int = 1) -> AbstractController:
    """All output-safe pairs whose successors have a strictly smaller level."""
    table = model.transition_table(workers)
    levels = solution.levels
    found = []
    for i, blocks in enumerate(table.blocks):
        for m, blk in enumerate(blocks, start=1):
            if not len(blk.rows):
                continue
            own = levels[blk.rows]
            ok = np.isfinite(own) & (own >= 1) & (blk.row_max(levels) < own)
            rows = blk.rows[ok]
            found.append(np.stack([rows, np.full(len(rows), i), np.full(len(rows), m)], axis=1))
    pairs: dict[int, list[tuple[int, int]]] = {}
    if found:
        allp = np.concatenate(found)
        allp = allp[np.lexsort((allp[:, 2], allp[:, 1], allp[:, 0]))]
        for s, i, m in allp.tolist():
            pairs.setdefault(s, []).append((i, m))
    for s in np.flatnonzero(np.isfinite(levels) & (levels >= 1)):
        if int(s) not in pairs:
            raise RuntimeError(f"winning state {model.node(s)} at level {levels[s]} has no admissible pair")
    return AbstractController(pairs)


# -- refinement --------------------------------------------------------------


@dataclass
class ControlQuery:
    """Answer of the refined controller at a concrete state."""

    pairs: list[tuple[int, int]]
    nodes: list[int]
    distance: float
    certified: bool
    level: float


@dataclass
class RefinedController:
    """Nearest-winning-node refinement of an abstract controller.

    Everything is stored as integers (lattice indices, input ids, horizons)
    except the real parameters in ``header``, so it round-trips exactly.
    """

    header: dict
    input_nodes: np.ndarray
    safe_lo: np.ndarray
    safe_hi: np.ndarray
    nodes: np.ndarray
    levels: np.ndarray
    admissible: list[list[tuple[int, int]]]
    _tree: cKDTree | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        h = self.header
        if h["tie_break"] not in TIE_BREAK_POLICIES:
            raise ValueError(f"unknown tie-break policy {h['tie_break']!r}")
        self.lattice = LatticeSpec(h["state_dim"], h["abstraction"]["eta_x"])
        self.input_lattice = LatticeSpec(h["input_dim"], h["abstraction"]["eta_u"])
        self.inputs = self.input_lattice.embed(self.input_nodes)
        self.eps = float(h["abstraction"]["eps"])
        self.m_max = int(h["abstraction"]["m_max"])
        self.points = self.lattice.embed(self.nodes)
        self.index = NodeIndex(self.nodes)
        if len(self.nodes):
            self._tree = cKDTree(self.points)

    @classmethod
    def from_solution(cls, model: SymbolicModel, solution: GameSolution, controller: AbstractController,
                      tie_break: str = "max_horizon", extra: dict | None = None) -> "RefinedController":
        win = np.flatnonzero(solution.winning)
        header = {
            "plant": model.plant.name,
            "plant_params": model.plant.params,
            "lipschitz": model.plant.lipschitz,
            "abstraction": model.params.to_dict(),
            "state_dim": model.lattice.n,
            "input_dim": model.input_lattice.n,
            "tie_break": tie_break,
            **(extra or {}),
        }
        lo = model.states.min(axis=0) if model.n_states else np.zeros(model.lattice.n, dtype=np.int64)
        hi = model.states.max(axis=0) if model.n_states else np.zeros(model.lattice.n, dtype=np.int64)
        return cls(
            header,
            model.input_nodes.copy(),
            lo,
            hi,
            model.states[win].copy(),
            solution.levels[win].astype(np.int64),
            [list(controller[s]) for s in win],
        )

    @property
    def tie_break(self) -> str:
        return self.header["tie_break"]

    def input_vector(self, i: int) -> np.ndarray:
        return self.inputs[i]

    def nearest(self, x) -> tuple[list[int], float]:
        """Winning node ids nearest to ``x`` and their distance."""
        if self._tree is None:
            raise ValueError("the winning set is empty")
        x = np.asarray(x, dtype=float)
        d, _ = self._tree.query(x)
        cand = np.asarray(self._tree.query_ball_point(x, d * (1 + 1e-9) + 1e-9), dtype=np.int64)
        dist = norm(self.points[cand] - x)
        best = dist.min()
        ties = np.sort(cand[dist <= best + 1e-12])
        return ties.tolist(), float(best)

    def query(self, x) -> ControlQuery:
        x = np.asarray(x, dtype=float)
        lo = self.lattice.embed(self.safe_lo)
        hi = self.lattice.embed(self.safe_hi)
        if x.shape != (self.lattice.n,) or np.any(x < lo - self.eps) or np.any(x > hi + self.eps):
            raise ValueError(f"query {x} outside the abstract safe set's bounding box")
        ids, d = self.nearest(x)
        pairs = sorted({p for w in ids for p in self.admissible[w]})
        certified = d <= self.eps
        if not certified:
            log.warning("query at %s is %.4g from the nearest winning node (eps=%g)", x, d, self.eps)
        return ControlQuery(pairs, ids, d, certified, float(min(self.levels[w] for w in ids)))

    def select(self, pairs: list[tuple[int, int]]) -> tuple[int, int]:
        """Pick one pair according to the tie-break policy."""
        if not pairs:
            raise ValueError("no admissible pair to choose from")
        mag = {i: float(norm(self.inputs[i])) for i, _ in pairs}
        if self.tie_break == "max_horizon":
            return min(pairs, key=lambda p: (-p[1], mag[p[0]], p[0]))
        if self.tie_break == "min_horizon":
            return min(pairs, key=lambda p: (p[1], mag[p[0]], p[0]))
        return min(pairs)

    # -- serialization --

    def to_dict(self) -> dict:
        return {
            "format": ARTIFACT_FORMAT,
            "version": ARTIFACT_VERSION,
            "header": self.header,
            "inputs": self.input_nodes.tolist(),
            "safe_bounds": {"lo": self.safe_lo.tolist(), "hi": self.safe_hi.tolist()},
            "nodes": self.nodes.tolist(),
            "levels": self.levels.tolist(),
            "admissible": [[list(p) for p in a] for a in self.admissible],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RefinedController":
        if d.get("format") != ARTIFACT_FORMAT:
            raise ValueError("not a controller artifact")
        if d.get("version") != ARTIFACT_VERSION:
            raise ValueError(f"unsupported artifact version {d.get('version')}")
        h = d["header"]
        n, nu = h["state_dim"], h["input_dim"]
        return cls(
            h,
            np.asarray(d["inputs"], dtype=np.int64).reshape(-1, nu),
            np.asarray(d["safe_bounds"]["lo"], dtype=np.int64),
            np.asarray(d["safe_bounds"]["hi"], dtype=np.int64),
            np.asarray(d["nodes"], dtype=np.int64).reshape(-1, n),
            np.asarray(d["levels"], dtype=np.int64),
            [[(int(i), int(m)) for i, m in a] for a in d["admissible"]],
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), separators=(",", ":")))
        return path

    @classmethod
    def load(cls, path) -> "RefinedController":
        return cls.from_dict(json.loads(Path(path).read_text()))


def refined_controller_query(rc: RefinedController, x) -> ControlQuery:
    return rc.query(x)


# -- initial-set coverage ----------------------------------------------------


@dataclass
class CoverResult:
    ok: bool
    samples: np.ndarray
    certified: np.ndarray
    witness: np.ndarray | None

    def __bool__(self) -> bool:
        return self.ok


def _cover_samples(X_0: Region, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Cell centers and half-widths of a grid of spacing at most ``h`` over each box."""
    centers, halves = [], []
    for b in X_0.allowed:
        lo, hi = np.asarray(b.lo), np.asarray(b.hi)
        w = hi - lo
        k = np.maximum(1, np.ceil(w / h).astype(np.int64))
        cell = w / k
        idx = grid_indices([0] * len(k), k - 1)
        centers.append(lo + (idx + 0.5) * cell)
        halves.append(np.broadcast_to(cell / 2, (len(idx), len(k))))
    return np.concatenate(centers), np.concatenate(halves)


def _certify(rc: RefinedController, samples: np.ndarray, halves: np.ndarray, h: float) -> np.ndarray:
    n = rc.lattice.n
    margin = rc.eps - h * math.sqrt(n) / 2
    if len(rc.nodes) == 0:
        return np.zeros(len(samples), dtype=bool)
    # test 1: a winning node within eps - h*sqrt(n)/2 of the sample
    d, _ = rc._tree.query(samples)
    ok = d <= margin
    # test 2: every lattice node whose Voronoi cell meets the sample's cell is
    # winning; each such cell lies within eta_x <= eps of its node
    s = rc.lattice.spacing
    for r in np.flatnonzero(~ok):
        a = np.ceil((samples[r] - halves[r]) / s - 0.5).astype(np.int64)
        b = np.floor((samples[r] + halves[r]) / s + 0.5).astype(np.int64)
        cells = grid_indices(a, b)
        ok[r] = bool(len(cells)) and bool(np.all(rc.index(cells) >= 0))
    return ok


def verify_initial_cover(X_0: Region, rc: RefinedController, delta: float) -> CoverResult:
    """Sufficient check that every point of ``X_0`` has a winning node within ``eps``.

    ``X_0`` is gridded with cells of side at most ``delta``; a cell is
    certified if its center has a winning node within
    ``eps - delta*sqrt(n)/2`` or if all lattice nodes whose Voronoi cells
    meet it are winning. A ``False`` result is inconclusive and carries the
    first uncertified cell center as witness.
    """
    n = rc.lattice.n
    if not delta > 0:
        raise ValueError("delta must be positive")
    if rc.eps - delta * math.sqrt(n) / 2 <= 0:
        raise ValueError(f"delta={delta} too large: eps - delta*sqrt(n)/2 must be positive")
    samples, halves = _cover_samples(X_0, delta)
    cert = _certify(rc, samples, halves, delta)
    bad = np.flatnonzero(~cert)
    witness = samples[bad[0]] if len(bad) else None
    return CoverResult(not len(bad), samples, cert, witness)


def winning_initial_subset(X_0: Region, rc: RefinedController, delta: float) -> np.ndarray:
    """Grid samples of ``X_0`` certified to lie in the refined controller's domain."""
    res = verify_initial_cover(X_0, rc, delta)
    return res.samples[res.certified]


def abstract_initial_cover(model: SymbolicModel, solution: GameSolution) -> bool:
    """Whether every abstract initial node is winning."""
    ids = model.index(model.initials)
    return bool(np.all(ids >= 0) and np.all(solution.winning[ids[ids >= 0]]))
