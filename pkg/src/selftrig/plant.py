"""Discrete-time plants ``x+ = f(x, u)`` and the built-in model registry."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .geometry import Region, norm

# Upper bound on sup ||df/dx||_2 for the vehicle at its default parameters.
# The Jacobian is [[1, dt], [-dt/m * dh/dx1, 1 - dt*d1/m]]; scanning dh/dx1 over
# the grade profile gives 1.6184009745..., rounded up here.
VEHICLE_LIPSCHITZ = 1.6185


@dataclass(frozen=True)
class PlantModel:
    """A deterministic plant with a known Lipschitz constant in the state.

    ``step_fn`` must accept batched arrays, ``x`` of shape ``(..., n_x)`` and
    ``u`` broadcastable to ``(..., n_u)``.
    """

    name: str
    state_dim: int
    input_dim: int
    step_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    lipschitz: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lipschitz > 0:
            raise ValueError("the Lipschitz constant must be positive")

    def step(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if x.shape[-1] != self.state_dim:
            raise ValueError(f"{self.name}: state must have {self.state_dim} entries, got {x.shape}")
        if u.shape[-1] != self.input_dim:
            raise ValueError(f"{self.name}: input must have {self.input_dim} entries, got {u.shape}")
        return self.step_fn(x, u)

    def iterate(self, x, u, m: int) -> np.ndarray:
        """Hold ``u`` for ``m`` steps starting at ``x``."""
        if int(m) != m or m < 1:
            raise ValueError(f"horizon must be a positive integer, got {m}")
        for _ in range(int(m)):
            x = self.step(x, u)
        return x

    def with_lipschitz(self, lipschitz: float) -> "PlantModel":
        return PlantModel(self.name, self.state_dim, self.input_dim, self.step_fn, lipschitz, self.params)


def step(model: PlantModel, x, u) -> np.ndarray:
    return model.step(x, u)


def iterate(model: PlantModel, x, u, m: int) -> np.ndarray:
    return model.iterate(x, u, m)


# -- vehicle on a graded road ------------------------------------------------


@dataclass(frozen=True)
class VehicleParams:
    dt: float = 1.0
    mass: float = 1000.0
    g: float = 9.8
    d1: float = 0.01
    d2: float = 0.1
    elevation0: float = 10.0
    road_length: float = 1400.0
    slope_start: float = 400.0
    slope_end: float = 1000.0

    def __post_init__(self):
        for name in ("dt", "mass", "g"):
            if not getattr(self, name) > 0:
                raise ValueError(f"vehicle parameter {name} must be positive")
        if self.d1 < 0 or self.d2 < 0:
            raise ValueError("drag and rolling coefficients must be non-negative")


def _grade(p: VehicleParams, x1):
    x1 = np.asarray(x1, dtype=float)
    span = p.slope_end - p.slope_start
    on_slope = (x1 >= p.slope_start) & (x1 < p.slope_end)
    lobe = -(math.pi / 120.0) * np.sin((x1 - p.slope_start) / span * math.pi)
    return np.where(on_slope, lobe, 0.0)


def grade(params: VehicleParams, x1: float) -> float:
    """Road grade (radians) at position ``x1`` on ``[0, road_length]``."""
    if not 0.0 <= x1 <= params.road_length:
        raise ValueError(f"position {x1} outside the road [0, {params.road_length}]")
    return float(_grade(params, x1))


def elevation(params: VehicleParams, x1: float) -> float:
    """Road elevation: ``elevation0`` plus the integral of the grade from 0 to ``x1``."""
    if not 0.0 <= x1 <= params.road_length:
        raise ValueError(f"position {x1} outside the road [0, {params.road_length}]")
    breaks = [b for b in (params.slope_start, params.slope_end) if 0.0 < b < x1]
    val, _ = integrate.quad(lambda s: float(_grade(params, s)), 0.0, x1, points=breaks or None, limit=200)
    return params.elevation0 + val


def vehicle_resistance(params: VehicleParams, x1, x2):
    """Drag, rolling and gravity force ``h(x1, x2)``."""
    a = _grade(params, x1)
    mg = params.mass * params.g
    return params.d1 * x2 + params.d2 * mg * np.cos(a) + mg * np.sin(a)


def vehicle(params: VehicleParams | None = None, lipschitz: float = VEHICLE_LIPSCHITZ) -> PlantModel:
    # grade is extended by zero off the road so the map is total on R^2
    p = params or VehicleParams()

    def f(x, u):
        x1 = x[..., 0]
        x2 = x[..., 1]
        h = vehicle_resistance(p, x1, x2)
        nx1 = x1 + x2 * p.dt
        nx2 = x2 + (u[..., 0] - h) / p.mass * p.dt
        return np.stack(np.broadcast_arrays(nx1, nx2), axis=-1)

    return PlantModel("vehicle", 2, 1, f, lipschitz, dict(p.__dict__))


def vehicle_jacobian_bound(params: VehicleParams | None = None, samples: int = 200001) -> float:
    """Spectral-norm bound of the vehicle Jacobian, scanned over the road."""
    p = params or VehicleParams()
    x1 = np.linspace(0.0, p.road_length, samples)
    span = p.slope_end - p.slope_start
    on_slope = (x1 >= p.slope_start) & (x1 < p.slope_end)
    a = _grade(p, x1)
    da = np.where(on_slope, -(math.pi / 120.0) * (math.pi / span) * np.cos((x1 - p.slope_start) / span * math.pi), 0.0)
    mg = p.mass * p.g
    dh = da * (-p.d2 * mg * np.sin(a) + mg * np.cos(a))
    best = 0.0
    # the norm is convex in the single varying entry, so its extremes suffice
    for v in (dh.min(), dh.max()):
        jac = np.array([[1.0, p.dt], [-p.dt / p.mass * v, 1.0 - p.dt * p.d1 / p.mass]])
        best = max(best, float(np.linalg.norm(jac, 2)))
    return best


# -- linear models -----------------------------------------------------------


def scalar_linear(a: float = 1.0, b: float = 1.0, lipschitz: float | None = None) -> PlantModel:
    """``x+ = a x + b u`` in one dimension."""

    def f(x, u):
        return a * x + b * u

    L = abs(a) if lipschitz is None else lipschitz
    return PlantModel("scalar_linear", 1, 1, f, L, {"a": a, "b": b})


def linear(A, B, lipschitz: float | None = None) -> PlantModel:
    """``x+ = A x + B u``; the default Lipschitz constant is ``||A||_2``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or B.ndim != 2 or B.shape[0] != A.shape[0]:
        raise ValueError("A must be square and B must have as many rows as A")

    def f(x, u):
        return x @ A.T + u @ B.T

    L = float(np.linalg.norm(A, 2)) if lipschitz is None else lipschitz
    return PlantModel("linear", A.shape[0], B.shape[1], f, L, {"A": A.tolist(), "B": B.tolist()})


def make_plant(name: str, params: dict | None = None, lipschitz: float | None = None) -> PlantModel:
    """Build a registered plant from a name and a parameter block."""
    params = dict(params or {})
    if name == "vehicle":
        if lipschitz is None:
            raise ValueError("vehicle needs an explicit Lipschitz constant")
        return vehicle(VehicleParams(**params), lipschitz)
    if name == "scalar_linear":
        return scalar_linear(params.get("a", 1.0), params.get("b", 1.0), lipschitz)
    if name == "linear":
        return linear(params["A"], params["B"], lipschitz)
    raise ValueError(f"unknown plant {name!r}; known: vehicle, scalar_linear, linear")


# -- diagnostics -------------------------------------------------------------


def _sample_region(region: Region, count: int, rng: np.random.Generator) -> np.ndarray:
    bb = region.bounding_box()
    lo, hi = np.asarray(bb.lo), np.asarray(bb.hi)
    out = []
    while sum(len(o) for o in out) < count:
        x = rng.uniform(lo, hi, size=(max(count, 16), region.n))
        out.append(x[region.contains(x)])
    return np.concatenate(out)[:count]


def estimate_lipschitz(
    model: PlantModel,
    region: Region,
    inputs,
    samples: int = 10000,
    safety: float = 1.05,
    seed: int = 0,
) -> float:
    """Sampled estimate of the state Lipschitz constant over ``region``.

    Half the pairs are far apart and half are close (relative offset 1e-6),
    so both secant and local slopes are seen. The result is a lower bound on
    the true constant times ``safety``; it is never used in place of the
    configured value.
    """
    rng = np.random.default_rng(seed)
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    x1 = _sample_region(region, samples, rng)
    x2 = _sample_region(region, samples, rng)
    half = samples // 2
    scale = np.ptp(np.asarray([region.bounding_box().lo, region.bounding_box().hi]), axis=0).max() or 1.0
    d = rng.normal(size=(samples - half, region.n))
    d /= norm(d)[:, None]
    x2[half:] = x1[half:] + 1e-6 * scale * d
    u = inputs[rng.integers(len(inputs), size=samples)]
    gap = norm(x1 - x2)
    ok = gap > 0
    ratio = norm(model.step(x1[ok], u[ok]) - model.step(x2[ok], u[ok])) / gap[ok]
    return float(ratio.max()) * safety
