"""Finite symbolic model of a plant under held inputs.

Abstract states are lattice nodes of the eps-interior of the safety set.
From node ``x`` under input ``u`` held for ``m`` steps the successors are
the lattice nodes inside the closed ball of radius ``L^m * eps + eta_x``
around ``phi(x, u, m)``.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    LatticePoint,
    LatticeSpec,
    Region,
    grid_indices,
    interior_contains,
    lattice_in_ball,
    lattice_nodes_where,
    nearest_lattice,
    norm,
)
from .plant import PlantModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AbstractionParams:
    eta_x: float
    eta_u: float
    eps: float
    m_max: int

    def __post_init__(self):
        if not (self.eta_x > 0 and self.eta_u > 0):
            raise ValueError("quantization parameters eta_x and eta_u must be positive")
        if self.eps < self.eta_x:
            raise ValueError(
                f"precision eps={self.eps} must be >= eta_x={self.eta_x} "
                "(a symbolic model needs eps >= eta_x)"
            )
        if int(self.m_max) != self.m_max or self.m_max < 1:
            raise ValueError("m_max must be a positive integer")

    def to_dict(self) -> dict:
        return {"eta_x": self.eta_x, "eta_u": self.eta_u, "eps": self.eps, "m_max": int(self.m_max)}


def radius(m: int, params: AbstractionParams, lipschitz: float) -> float:
    """Successor ball radius after holding an input for ``m`` steps."""
    if m < 1:
        raise ValueError("horizon must be >= 1")
    return lipschitz**m * params.eps + params.eta_x


def contained_in(inner: Region, outer: Region) -> bool:
    for b in inner.allowed:
        if not any(o.contains_box(b) for o in outer.allowed):
            return False
        for ob in outer.obstacles:
            if all(lo <= ohi and olo <= hi for lo, hi, olo, ohi in zip(b.lo, b.hi, ob.lo, ob.hi)):
                return False
    return True


def build_state_sets(X_S: Region, X_F: Region, X_0: Region, params: AbstractionParams, lat: LatticeSpec):
    """Abstract safe, target and initial node arrays (each sorted, shape ``(k, n)``).

    Safe and target nodes are taken from the eps-interiors so that any
    concrete state within ``eps`` of one of them lies in the original set.
    Initial nodes are the plain lattice of ``X_0``.
    """
    if not contained_in(X_F, X_S):
        raise ValueError("target set is not contained in the safety set")
    if not contained_in(X_0, X_S):
        raise ValueError("initial set is not contained in the safety set")
    eps = params.eps
    safe = lattice_nodes_where(X_S, lat, lambda p: interior_contains(X_S, p, eps))
    target = lattice_nodes_where(X_F, lat, lambda p: interior_contains(X_F, p, eps))
    initial = lattice_nodes_where(X_0, lat, X_0.contains)
    if len(target) == 0:
        raise ValueError(f"the eps-interior of the target set holds no lattice node (eps={eps})")
    if len(initial) == 0:
        warnings.warn("the initial set holds no lattice node", stacklevel=2)
    return safe, target, initial


class NodeIndex:
    """Dense lookup from lattice index tuples to positions in a sorted node array."""

    def __init__(self, nodes: np.ndarray):
        self.nodes = nodes
        n = nodes.shape[1]
        if len(nodes) == 0:
            self.origin = np.zeros(n, dtype=np.int64)
            self.table = np.full((0,) * n, -1, dtype=np.int64)
            return
        self.origin = nodes.min(axis=0)
        shape = tuple(nodes.max(axis=0) - self.origin + 1)
        self.table = np.full(shape, -1, dtype=np.int64)
        self.table[tuple((nodes - self.origin).T)] = np.arange(len(nodes))

    def __call__(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        rel = idx - self.origin
        ok = np.all((rel >= 0) & (rel < np.array(self.table.shape)), axis=-1)
        out = np.full(idx.shape[:-1], -1, dtype=np.int64)
        out[ok] = self.table[tuple(rel[ok].T)]
        return out


@dataclass
class StepBlock:
    """Successors of every (state, input) pair still safe at step ``p``.

    Row ``r`` is state ``rows[r]``; its successor state ids are
    ``succ[offsets[r]:offsets[r+1]]``.
    """

    rows: np.ndarray
    offsets: np.ndarray
    succ: np.ndarray

    def row_counts(self, bad: np.ndarray) -> np.ndarray:
        """Per-row number of successors flagged in the boolean state mask ``bad``."""
        cs = np.concatenate(([0], np.cumsum(bad[self.succ], dtype=np.int64)))
        return cs[self.offsets[1:]] - cs[self.offsets[:-1]]

    def row_max(self, values: np.ndarray) -> np.ndarray:
        return np.maximum.reduceat(values[self.succ], self.offsets[:-1])


@dataclass
class TransitionTable:
    """All safe transitions of a symbolic model.

    ``first_unsafe[s, i]`` is the first step at which the successor ball from
    state ``s`` under input ``i`` leaves the abstract safe set
    (``m_max + 1`` when it never does), so ``(s, i, m)`` is output-safe iff
    ``m < first_unsafe[s, i]``. ``blocks[i][p - 1]`` holds the successors
    at step ``p`` for the states still safe there.
    """

    first_unsafe: np.ndarray
    blocks: list[list[StepBlock]]

    def output_safe(self, s: int, i: int, m: int) -> bool:
        return m < self.first_unsafe[s, i]

    def successors(self, s: int, i: int, m: int) -> np.ndarray:
        """Successor state ids of a safe triple."""
        blk = self.blocks[i][m - 1]
        r = np.searchsorted(blk.rows, s)
        if r >= len(blk.rows) or blk.rows[r] != s:
            raise KeyError(f"({s}, {i}, {m}) is not an output-safe transition")
        return blk.succ[blk.offsets[r] : blk.offsets[r + 1]]

    @property
    def n_transitions(self) -> int:
        return sum(len(b.rows) for blocks in self.blocks for b in blocks)


def _stencil(radius_: float, spacing: float, n: int) -> np.ndarray:
    R = int(np.ceil(radius_ / spacing)) + 1
    return grid_indices([-R] * n, [R + 1] * n)


class SymbolicModel:
    """Symbolic model over the abstract safe set.

    Parameters
    ----------
    plant : PlantModel
    states, targets, initials : ndarray
        Sorted lattice index arrays for the abstract safe, target and initial
        sets. ``targets`` must be a subset of ``states``.
    input_nodes : ndarray
        Sorted index array of the input lattice.
    params : AbstractionParams
    """

    def __init__(self, plant: PlantModel, states, targets, initials, input_nodes, params: AbstractionParams):
        self.plant = plant
        self.params = params
        self.lattice = LatticeSpec(plant.state_dim, params.eta_x)
        self.input_lattice = LatticeSpec(plant.input_dim, params.eta_u)
        self.states = np.asarray(states, dtype=np.int64).reshape(-1, plant.state_dim)
        self.initials = np.asarray(initials, dtype=np.int64).reshape(-1, plant.state_dim)
        self.input_nodes = np.asarray(input_nodes, dtype=np.int64).reshape(-1, plant.input_dim)
        if len(self.input_nodes) == 0:
            raise ValueError("the input lattice is empty")
        self.inputs = self.input_lattice.embed(self.input_nodes)
        self.index = NodeIndex(self.states)
        tid = self.index(np.asarray(targets, dtype=np.int64).reshape(-1, plant.state_dim))
        if np.any(tid < 0):
            raise ValueError("abstract targets must be abstract safe states")
        self.target_mask = np.zeros(len(self.states), dtype=bool)
        self.target_mask[tid] = True
        self._succ_cache: dict[tuple[int, int, int], frozenset] = {}
        self._table: TransitionTable | None = None

    @classmethod
    def from_regions(cls, plant: PlantModel, X_S: Region, X_F: Region, X_0: Region, U: Region,
                     params: AbstractionParams) -> "SymbolicModel":
        lat = LatticeSpec(plant.state_dim, params.eta_x)
        safe, target, initial = build_state_sets(X_S, X_F, X_0, params, lat)
        ulat = LatticeSpec(plant.input_dim, params.eta_u)
        inputs = lattice_nodes_where(U, ulat, U.contains)
        return cls(plant, safe, target, initial, inputs, params)

    # -- basic accessors --

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_inputs(self) -> int:
        return len(self.inputs)

    @property
    def horizons(self) -> range:
        return range(1, self.params.m_max + 1)

    @property
    def lipschitz(self) -> float:
        return self.plant.lipschitz

    def radius(self, m: int) -> float:
        return radius(m, self.params, self.plant.lipschitz)

    def embed(self, s) -> np.ndarray:
        return self.lattice.embed(self.states[s])

    def node(self, s: int) -> LatticePoint:
        return tuple(int(v) for v in self.states[s])

    def state_id(self, p: LatticePoint) -> int:
        """Position of node ``p`` in the safe set, or -1."""
        return int(self.index(np.asarray(p, dtype=np.int64)))

    # -- per-triple semantics (memoized) --

    def successors(self, s: int, i: int, m: int) -> frozenset:
        """Lattice nodes in the successor ball of ``(s, i, m)`` over the full lattice."""
        if m not in self.horizons:
            raise ValueError(f"horizon {m} outside 1..{self.params.m_max}")
        key = (int(s), int(i), int(m))
        hit = self._succ_cache.get(key)
        if hit is None:
            center = self.plant.iterate(self.embed(s), self.inputs[i], m)
            hit = frozenset(lattice_in_ball(center, self.radius(m), self.lattice))
            self._succ_cache[key] = hit
        return hit

    def output_safe(self, s: int, i: int, m: int) -> bool:
        """All intermediate successor balls up to step ``m`` lie in the abstract safe set."""
        for p in range(1, m + 1):
            if any(self.state_id(q) < 0 for q in self.successors(s, i, p)):
                return False
        return True

    def clear_cache(self):
        self._succ_cache.clear()
        self._table = None

    # -- batched table --

    def transition_table(self, workers: int = 1) -> TransitionTable:
        """Build (once) every output-safe transition, vectorized over states.

        Inputs are processed independently, optionally on ``workers``
        threads; the result does not depend on the worker count.
        """
        if self._table is None:
            if workers > 1:
                with ThreadPoolExecutor(workers) as pool:
                    parts = list(pool.map(self._build_input, range(self.n_inputs)))
            else:
                parts = [self._build_input(i) for i in range(self.n_inputs)]
            first = np.stack([p[0] for p in parts], axis=1)
            self._table = TransitionTable(first, [p[1] for p in parts])
            log.info("transition table: %d states, %d inputs, %d safe transitions",
                     self.n_states, self.n_inputs, self._table.n_transitions)
        return self._table

    def _build_input(self, i: int, chunk: int = 4096):
        N = self.n_states
        m_max = self.params.m_max
        first = np.full(N, m_max + 1, dtype=np.int64)
        blocks: list[StepBlock] = []
        active = np.arange(N)
        x = self.embed(active)
        u = self.inputs[i]
        s = self.lattice.spacing
        for p in range(1, m_max + 1):
            if len(active) == 0:
                blocks.append(StepBlock(active, np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int32)))
                continue
            x = self.plant.step(x, u)
            r = self.radius(p)
            offs = _stencil(r, s, self.lattice.n)
            keep_rows, sizes, succ = [], [], []
            for a in range(0, len(active), chunk):
                c = x[a : a + chunk]
                base = np.floor(c / s).astype(np.int64)
                nodes = base[:, None, :] + offs[None, :, :]
                inside = norm(self.lattice.embed(nodes) - c[:, None, :]) <= r
                sid = np.where(inside, self.index(nodes), 0)
                ok = ~np.any(inside & (sid < 0), axis=1)
                keep_rows.append(ok)
                sizes.append(inside[ok].sum(axis=1))
                succ.append(sid[ok][inside[ok]].astype(np.int32))
            ok = np.concatenate(keep_rows)
            sizes = np.concatenate(sizes)
            if np.any(sizes == 0):
                raise AssertionError("empty successor ball; radius below covering radius")
            first[active[~ok]] = p
            active = active[ok]
            x = x[ok]
            offsets = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
            blocks.append(StepBlock(active.copy(), offsets, np.concatenate(succ)))
        return first, blocks


@dataclass
class ASRReport:
    samples: int
    violations: int
    initial_ok: bool
    max_center_gap: float = float("-inf")
    max_witness_gap: float = float("-inf")
    counterexample: dict | None = field(default=None)

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.initial_ok


def check_asr_samples(
    model: SymbolicModel,
    X_0: Region | None = None,
    count: int = 1000,
    seed: int = 0,
    lipschitz: float | None = None,
    tol: float = 1e-9,
) -> ASRReport:
    """Sample the strong approximate alternating simulation witnesses.

    For random related pairs ``||x_abs - x|| <= eps`` and random ``(u, m)``,
    the concrete run ``x_p`` must have nearest nodes within
    ``L^p eps + eta_x`` of the abstract center and within ``eps`` of ``x_p``.
    Passing a smaller ``lipschitz`` than the plant's gives a negative
    control.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    L = model.lipschitz if lipschitz is None else lipschitz
    eps = model.params.eps
    n = model.lattice.n
    initial_ok = True
    if X_0 is not None and len(model.initials):
        initial_ok = bool(np.all(X_0.contains(model.lattice.embed(model.initials))))
    report = ASRReport(count, 0, initial_ok)
    for k in range(count):
        s = int(rng.integers(model.n_states))
        i = int(rng.integers(model.n_inputs))
        m = int(rng.integers(1, model.params.m_max + 1))
        xa = model.embed(s)
        d = rng.normal(size=n)
        d /= norm(d)
        # half the samples sit on the sphere, where the bound is tight
        rad = eps if k % 2 == 0 else eps * rng.uniform() ** (1.0 / n)
        x = xa + rad * d
        xa_p, x_p = xa, x
        for p in range(1, m + 1):
            xa_p = model.plant.step(xa_p, model.inputs[i])
            x_p = model.plant.step(x_p, model.inputs[i])
            bound = L**p * eps + model.params.eta_x
            for w in nearest_lattice(x_p, model.lattice):
                we = model.lattice.embed(w)
                g_center = float(norm(we - xa_p))
                g_wit = float(norm(we - x_p))
                report.max_center_gap = max(report.max_center_gap, g_center - bound)
                report.max_witness_gap = max(report.max_witness_gap, g_wit - eps)
                if g_center > bound + tol or g_wit > eps + tol:
                    report.violations += 1
                    if report.counterexample is None:
                        report.counterexample = {
                            "state": model.node(s), "x": x.tolist(), "input": model.inputs[i].tolist(),
                            "m": m, "p": p, "witness": w, "center_gap": g_center, "bound": bound,
                            "witness_gap": g_wit,
                        }
                    break
            else:
                continue
            break
    return report
