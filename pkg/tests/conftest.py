import numpy as np
import pytest

from selftrig import AbstractionParams, Box, Region, SymbolicModel, scalar_linear
from selftrig.plant import linear
from selftrig.synthesis import RefinedController, abstract_controller, solve


def line_system(m_max=2):
    """x+ = x + u on nodes 0..9, inputs {0, 1, 2}, target nodes 6..9."""
    plant = scalar_linear(1.0, 1.0)
    sets = dict(
        X_S=Region.box([-0.5], [9.5]),
        X_F=Region.box([5.5], [9.5]),
        X_0=Region.box([0.0], [9.0]),
        U=Region.box([0.0], [2.0]),
    )
    model = SymbolicModel.from_regions(plant, sets["X_S"], sets["X_F"], sets["X_0"], sets["U"],
                                       AbstractionParams(0.5, 0.5, 0.5, m_max))
    return plant, model, sets


def plane_system(a=0.9, theta=0.3, m_max=4, eta=0.35):
    """Contracting rotation with a box obstacle; about 200 abstract states."""
    A = a * np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    plant = linear(A, 0.5 * np.eye(2))
    sets = dict(
        X_S=Region((Box((-4, -4), (4, 4)),), (Box((0.5, -1.5), (1.5, 1.5)),)),
        X_F=Region.box((-3.5, -1), (-1.5, 1)),
        X_0=Region.box((2, -3.5), (3.5, 3.5)),
        U=Region.box((-1, -1), (1, 1)),
    )
    model = SymbolicModel.from_regions(plant, sets["X_S"], sets["X_F"], sets["X_0"], sets["U"],
                                       AbstractionParams(eta, 0.5, eta, m_max))
    return plant, model, sets


def synthesized(model, tie_break="max_horizon"):
    sol = solve(model)
    ctrl = abstract_controller(sol, model)
    return sol, ctrl, RefinedController.from_solution(model, sol, ctrl, tie_break)


@pytest.fixture
def line():
    return line_system()


@pytest.fixture(scope="session")
def plane():
    plant, model, sets = plane_system()
    sol, ctrl, rc = synthesized(model)
    return plant, model, sets, sol, ctrl, rc


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
