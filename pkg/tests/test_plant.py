import math

import numpy as np
import pytest

from selftrig.geometry import Region
from selftrig.plant import (
    VEHICLE_LIPSCHITZ,
    VehicleParams,
    elevation,
    estimate_lipschitz,
    grade,
    iterate,
    make_plant,
    scalar_linear,
    step,
    vehicle,
    vehicle_jacobian_bound,
)

P = VehicleParams()


def h_by_hand(x1, x2):
    # flat road: cos(0) = 1, sin(0) = 0
    assert not 400 <= x1 < 1000
    return 0.01 * x2 + 0.1 * 1000 * 9.8


def test_vehicle_step_examples():
    car = vehicle()
    assert h_by_hand(0, 0) == pytest.approx(980.0)
    np.testing.assert_allclose(step(car, [0, 0], [0]), [0, -0.98], rtol=0, atol=1e-12)
    np.testing.assert_allclose(step(car, [0, 10], [500]), [10, 9.5199], rtol=0, atol=1e-12)


def test_vehicle_two_steps():
    car = vehicle()
    # by hand: (0, 0) -> (0, -0.98) -> (0 - 0.98, -0.98 - h(0, -0.98)/1000)
    x2 = -0.98 - h_by_hand(0.0, -0.98) / 1000
    np.testing.assert_allclose(iterate(car, [0, 0], [0], 2), [-0.98, x2], rtol=0, atol=1e-12)
    assert x2 == pytest.approx(-1.9599902, abs=1e-12)


def test_scalar_examples():
    assert step(scalar_linear(0.8, 1.0), [1.0], [0.0])[0] == pytest.approx(0.8)
    assert iterate(scalar_linear(0.5, 1.0), [1.0], [0.0], 3)[0] == 0.125


def test_iterate_base_case_and_errors():
    car = vehicle()
    x, u = np.array([123.0, 7.5]), np.array([-200.0])
    np.testing.assert_array_equal(iterate(car, x, u, 1), step(car, x, u))
    with pytest.raises(ValueError):
        iterate(car, x, u, 0)
    with pytest.raises(ValueError):
        step(car, [1.0], u)


def test_position_update_exact():
    car = vehicle()
    rng = np.random.default_rng(3)
    x = rng.uniform([0, -5], [1400, 20], size=(200, 2))
    u = rng.uniform(-500, 500, size=(200, 1))
    nxt = car.step(x, u)
    np.testing.assert_array_equal(nxt[:, 0], x[:, 0] + x[:, 1] * P.dt)


def test_deterministic():
    car = vehicle()
    a = car.iterate([700.0, 3.0], [100.0], 7)
    b = car.iterate([700.0, 3.0], [100.0], 7)
    assert a.tobytes() == b.tobytes()


def test_grade():
    assert grade(P, 100) == 0.0
    assert grade(P, 700) == pytest.approx(-math.pi / 120, rel=1e-14)
    assert grade(P, 1200) == 0.0
    # half-open seams
    assert grade(P, 400) == 0.0
    assert grade(P, 1000) == 0.0
    with pytest.raises(ValueError):
        grade(P, -1)
    with pytest.raises(ValueError):
        grade(P, 1400.5)


def closed_form_elevation(x1):
    if x1 < 400:
        return 10.0
    if x1 < 1000:
        return 10.0 - 5.0 * (1 - math.cos((x1 - 400) * math.pi / 600))
    return 0.0


@pytest.mark.parametrize("x1", [0, 250, 400, 550, 700, 999, 1000, 1400])
def test_elevation_matches_closed_form(x1):
    assert elevation(P, x1) == pytest.approx(closed_form_elevation(x1), abs=1e-9)


def test_elevation_examples():
    assert elevation(P, 0) == 10.0
    assert elevation(P, 400) == pytest.approx(10.0, abs=1e-12)
    assert elevation(P, 1000) == pytest.approx(0.0, abs=1e-9)


def test_estimate_lipschitz_linear_and_identity():
    reg = Region.box([-5], [5])
    est = estimate_lipschitz(scalar_linear(0.8, 1.0), reg, [[0.0], [1.0]], samples=2000)
    assert 0.8 * (1 - 1e-9) * 1.05 <= est <= 0.8 * 1.05 * (1 + 1e-9)
    ident = make_plant("linear", {"A": [[1, 0], [0, 1]], "B": [[1], [0]]}, 1.0)
    est = estimate_lipschitz(ident, Region.box([0, 0], [1, 1]), [[0.0]], samples=500)
    assert est == pytest.approx(1.05, rel=1e-9)


def test_vehicle_lipschitz_pinned():
    road = Region.box([0, 0], [1400, 18])
    est = estimate_lipschitz(vehicle(), road, [[-500.0], [0.0], [500.0]], samples=20000, safety=1.0)
    bound = vehicle_jacobian_bound()
    assert bound == pytest.approx(1.6184009745, abs=1e-9)
    assert est <= bound * (1 + 1e-6)
    assert est >= 1.61
    assert VEHICLE_LIPSCHITZ >= bound


def test_registry():
    assert make_plant("scalar_linear", {"a": 2.0}).lipschitz == 2.0
    with pytest.raises(ValueError):
        make_plant("vehicle", {})
    with pytest.raises(ValueError):
        make_plant("pendulum", {}, 1.0)
