"""
Self-triggered versus periodic control in the plane
===================================================

A contracting rotation ``x+ = A x + 0.5 u`` must go around a box obstacle
to reach a target on the left. With horizons up to four the controller can
hold an input for several steps and talk to the plant less often than a
periodic controller that communicates at every step.
"""

from collections import Counter

import numpy as np

from selftrig import (
    AbstractionParams,
    Box,
    Region,
    RefinedController,
    SymbolicModel,
    abstract_controller,
    check_validity,
    run_closed_loop,
    solve,
    verify_initial_cover,
    winning_initial_subset,
)
from selftrig.plant import linear

a, theta = 0.9, 0.3
A = a * np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
plant = linear(A, 0.5 * np.eye(2))
X_S = Region((Box((-4, -4), (4, 4)),), (Box((0.5, -1.5), (1.5, 1.5)),))
X_F = Region.box((-3.5, -1), (-1.5, 1))
X_0 = Region.box((2, -3.5), (3.5, 3.5))
U = Region.box((-1, -1), (1, 1))


def build(m_max):
    model = SymbolicModel.from_regions(plant, X_S, X_F, X_0, U, AbstractionParams(0.35, 0.5, 0.35, m_max))
    sol = solve(model)
    rc = RefinedController.from_solution(model, sol, abstract_controller(sol, model))
    return model, sol, rc


model, sol, rc = build(4)
_, sol1, rc1 = build(1)
print(f"{model.n_states} states; winning with horizons <= 4: {int(sol.winning.sum())}, "
      f"with single steps: {int(sol1.winning.sum())}")
print("history", sol.history)

# the concrete initial set is only partly inside the controller's domain
cover = verify_initial_cover(X_0, rc, 0.1)
inside = winning_initial_subset(X_0, rc, 0.1)
print(f"initial cover certified: {cover.ok}; {len(inside)}/{len(cover.samples)} grid cells certified")

# the self-triggered controller from the winning abstract initial nodes
ids = model.index(model.initials)
starts = model.embed(ids[(ids >= 0)][sol.winning[ids[ids >= 0]]])
hist = Counter(check_validity(run_closed_loop(plant, rc, x0, X_S, X_F), X_S, X_F).communications for x0 in starts)
print("self-triggered communications from the initial set:", dict(sorted(hist.items())))

# the periodic controller wins nowhere near the initial set, so compare both
# on the nodes it does win
st, per = [], []
for x0 in rc1.points:
    st.append(check_validity(run_closed_loop(plant, rc, x0, X_S, X_F), X_S, X_F).communications)
    per.append(check_validity(run_closed_loop(plant, rc1, x0, X_S, X_F), X_S, X_F).communications)
print(f"over {len(per)} common starts: self-triggered {sum(st)} communications, periodic {sum(per)}")

# one run in detail
tr = run_closed_loop(plant, rc, starts[0], X_S, X_F)
for k, x, u, c in zip(tr.k, tr.x, tr.u, tr.comm):
    print(f"k={k:2d} x=({x[0]:+.3f}, {x[1]:+.3f}) u={u} {'<- communicate' if c else ''}")
print(tr.status, "levels at communications", tr.levels)
