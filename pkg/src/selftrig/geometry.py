"""Lattices, boxes and box-union regions.

Lattice nodes are identified by tuples of signed integers ``a``; the node
embeds at ``a * spacing`` with ``spacing = 2 * eta / sqrt(n)``, which makes
``eta`` the covering radius of the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

LatticePoint = tuple[int, ...]


def norm(diff: np.ndarray) -> np.ndarray:
    """Euclidean norm over the last axis, summed left to right.

    Every distance in the package goes through this helper so that scalar
    and batched code paths round identically.
    """
    diff = np.asarray(diff, dtype=float)
    acc = diff[..., 0] * diff[..., 0]
    for i in range(1, diff.shape[-1]):
        acc = acc + diff[..., i] * diff[..., i]
    return np.sqrt(acc)


def lattice_spacing(eta: float, n: int) -> float:
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    if int(n) != n or n < 1:
        raise ValueError(f"dimension must be a positive integer, got {n}")
    return 2.0 * eta / math.sqrt(n)


@dataclass(frozen=True)
class LatticeSpec:
    """Origin-anchored grid over R^n with quantization parameter ``eta``."""

    n: int
    eta: float
    spacing: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "spacing", lattice_spacing(self.eta, self.n))

    def embed(self, idx) -> np.ndarray:
        """Coordinates of one node (tuple) or many nodes (``(..., n)`` ints)."""
        return np.asarray(idx, dtype=float) * self.spacing

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"expected a vector of length {self.n}, got shape {x.shape}")
        return x


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box ``[lo, hi]``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi):
            raise ValueError("box bounds have different dimensions")
        if any(not (math.isfinite(a) and math.isfinite(b)) for a, b in zip(lo, hi)):
            raise ValueError("box bounds must be finite")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"box has lo > hi: {lo} {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def n(self) -> int:
        return len(self.lo)

    def contains(self, x) -> np.ndarray:
        """Membership for a point or a batch ``(..., n)`` of points."""
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo) & (x <= self.hi), axis=-1)

    def contains_box(self, other: "Box") -> bool:
        return all(a <= c and d <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}


def dist_point_box(x, b: Box) -> np.ndarray:
    """Euclidean distance from ``x`` (point or batch) to the closed box ``b``."""
    x = np.asarray(x, dtype=float)
    lo = np.asarray(b.lo)
    hi = np.asarray(b.hi)
    deficit = np.maximum(np.maximum(lo - x, 0.0), x - hi)
    return norm(deficit)


@dataclass(frozen=True)
class Region:
    """Union of ``allowed`` boxes minus the union of ``obstacles``."""

    allowed: tuple[Box, ...]
    obstacles: tuple[Box, ...] = ()

    def __post_init__(self):
        allowed = tuple(self.allowed)
        obstacles = tuple(self.obstacles)
        if not allowed:
            raise ValueError("a region needs at least one allowed box")
        dims = {b.n for b in allowed + obstacles}
        if len(dims) != 1:
            raise ValueError(f"boxes of a region have mixed dimensions {sorted(dims)}")
        object.__setattr__(self, "allowed", allowed)
        object.__setattr__(self, "obstacles", obstacles)

    @classmethod
    def box(cls, lo, hi) -> "Region":
        return cls((Box(tuple(np.atleast_1d(lo)), tuple(np.atleast_1d(hi))),))

    @property
    def n(self) -> int:
        return self.allowed[0].n

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = np.zeros(x.shape[:-1], dtype=bool)
        for b in self.allowed:
            inside |= b.contains(x)
        for b in self.obstacles:
            inside &= ~b.contains(x)
        return inside

    def bounding_box(self) -> Box:
        lo = np.min([b.lo for b in self.allowed], axis=0)
        hi = np.max([b.hi for b in self.allowed], axis=0)
        return Box(tuple(lo), tuple(hi))

    def to_dict(self) -> dict:
        return {
            "allowed": [b.to_dict() for b in self.allowed],
            "obstacles": [b.to_dict() for b in self.obstacles],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Region":
        def mk(b):
            return Box(tuple(b["lo"]), tuple(b["hi"]))

        return cls(tuple(mk(b) for b in d["allowed"]), tuple(mk(b) for b in d.get("obstacles", ())))


def interior_contains(reg: Region, x, eps: float) -> np.ndarray:
    """True where the closed ``eps``-ball around ``x`` lies inside ``reg``.

    Ball-in-box is checked with per-axis face margins; obstacles must be at
    distance strictly greater than ``eps`` (a tangent ball touches them).
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    x = np.asarray(x, dtype=float)
    inside = np.zeros(x.shape[:-1], dtype=bool)
    for b in reg.allowed:
        margin_lo = x - np.asarray(b.lo)
        margin_hi = np.asarray(b.hi) - x
        inside |= np.all((margin_lo >= eps) & (margin_hi >= eps), axis=-1)
    for b in reg.obstacles:
        inside &= dist_point_box(x, b) > eps
    return inside


def nearest_lattice(x, lat: LatticeSpec) -> set[LatticePoint]:
    """All nodes of the full lattice at minimal distance from ``x``.

    The nearest node of a cubic grid is found axis by axis, so the floor and
    ceiling neighbors per axis are the only candidates; near-ties within
    1e-12 are all returned.
    """
    x = lat._check(x)
    base = np.floor(x / lat.spacing).astype(np.int64)
    pts = base + grid_indices([0] * lat.n, [1] * lat.n)
    d = norm(lat.embed(pts) - x)
    best = d.min()
    return {tuple(int(v) for v in p) for p in pts[d <= best + 1e-12]}


def lattice_in_ball(center, radius: float, lat: LatticeSpec) -> set[LatticePoint]:
    """Nodes ``p`` with ``||embed(p) - center|| <= radius`` (closed ball)."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    c = lat._check(center)
    lo = np.ceil((c - radius) / lat.spacing).astype(np.int64) - 1
    hi = np.floor((c + radius) / lat.spacing).astype(np.int64) + 1
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lat.n)
    keep = norm(lat.embed(grid) - c) <= radius
    return {tuple(int(v) for v in p) for p in grid[keep]}


def box_index_range(b: Box, lat: LatticeSpec) -> tuple[np.ndarray, np.ndarray]:
    """Inclusive index bounds of nodes whose embedding may lie in ``b``."""
    lo = np.ceil(np.asarray(b.lo) / lat.spacing).astype(np.int64) - 1
    hi = np.floor(np.asarray(b.hi) / lat.spacing).astype(np.int64) + 1
    return lo, hi


def grid_indices(lo: Sequence[int], hi: Sequence[int]) -> np.ndarray:
    """All integer tuples in the inclusive range, as a ``(k, n)`` array in lexicographic order."""
    axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(lo, hi)]
    if any(len(a) == 0 for a in axes):
        return np.zeros((0, len(axes)), dtype=np.int64)
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))


def lattice_nodes_where(reg: Region, lat: LatticeSpec, predicate) -> np.ndarray:
    """Sorted ``(k, n)`` index array of nodes in the bounding box of ``reg`` passing ``predicate``.

    ``predicate`` maps a batch of embedded points to a boolean mask.
    """
    if reg.n != lat.n:
        raise ValueError("region and lattice dimensions differ")
    found = []
    for b in reg.allowed:
        lo, hi = box_index_range(b, lat)
        idx = grid_indices(lo, hi)
        if len(idx):
            found.append(idx[predicate(lat.embed(idx))])
    if not found:
        return np.zeros((0, lat.n), dtype=np.int64)
    allidx = np.concatenate(found)
    if len(allidx) == 0:
        return allidx.reshape(0, lat.n)
    return np.unique(allidx, axis=0)


def lattice_in_region(reg: Region, lat: LatticeSpec) -> set[LatticePoint]:
    idx = lattice_nodes_where(reg, lat, reg.contains)
    return {tuple(int(v) for v in p) for p in idx}


def as_points(nodes: Iterable[LatticePoint], n: int) -> np.ndarray:
    nodes = sorted(nodes)
    if not nodes:
        return np.zeros((0, n), dtype=np.int64)
    return np.array(nodes, dtype=np.int64)
