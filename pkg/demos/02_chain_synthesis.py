"""
Synthesis on a one-dimensional chain
====================================

The plant ``x+ = x + u`` lives on ten nodes 0..9 with inputs {0, 1, 2} and
may hold an input for one or two steps. Nodes 6..9 are the target. The game
is solved twice, once with the fast table-based solver and once with the
brute-force reference, and the closed loop is run from every node.
"""

import numpy as np

from selftrig import (
    AbstractionParams,
    Region,
    RefinedController,
    SymbolicModel,
    abstract_controller,
    brute_force_solve,
    run_closed_loop,
    scalar_linear,
    solve,
)

plant = scalar_linear(1.0, 1.0)
X_S = Region.box([-0.5], [9.5])
X_F = Region.box([5.5], [9.5])
X_0 = Region.box([0.0], [9.0])
U = Region.box([0.0], [2.0])

model = SymbolicModel.from_regions(plant, X_S, X_F, X_0, U, AbstractionParams(0.5, 0.5, 0.5, 2))
print(f"{model.n_states} abstract states, inputs {model.inputs.ravel().tolist()}, horizons {list(model.horizons)}")

sol = solve(model)
ref = brute_force_solve(model)
print("levels          ", sol.levels.tolist())
print("winning history ", sol.history)
print("matches oracle  ", np.array_equal(sol.levels, ref.levels) and sol.history == ref.history)

# every admissible (input id, horizon) pair lowers the level
ctrl = abstract_controller(sol, model)
for s in range(6):
    print(f"node {s} (level {int(sol.levels[s])}): {ctrl[s]}")

rc = RefinedController.from_solution(model, sol, ctrl)

# from each start the number of rounds never exceeds the starting level
for x0 in range(10):
    tr = run_closed_loop(plant, rc, [float(x0)], X_S, X_F)
    print(f"x0 = {x0}: {tr.status:15s} rounds {tr.rounds} horizons {tr.horizons} path {tr.x.ravel().tolist()}")
