"""
The hill-road vehicle
=====================

A car of mass 1000 on a road with a downhill section must travel from the
start of the road to a parking zone near its end. This script builds the
abstraction with the bundled configuration and explains why the game makes
no progress: the maximal engine force cannot overcome rolling resistance, so
the car always slows down and the target is unreachable from rest.
"""

import numpy as np

from selftrig import verify_initial_cover
from selftrig.cli import synthesize
from selftrig.config import bundled_config, load_config
from selftrig.plant import VehicleParams, elevation, grade, vehicle_jacobian_bound, vehicle_resistance

cfg = load_config(bundled_config("vehicle"))
p = VehicleParams(**cfg.raw["plant"]["params"])

# road profile
for x1 in (0, 400, 550, 700, 850, 1000, 1400):
    print(f"position {x1:5d}: elevation {elevation(p, x1):6.3f}, grade {grade(p, x1):+.5f} rad")

# best-case acceleration with full throttle
u_max = 500.0
for x1, x2 in ((0, 0), (700, 0), (700, 10), (1200, 5)):
    acc = (u_max - vehicle_resistance(p, x1, x2)) / p.mass
    print(f"at ({x1}, {x2}) full throttle gives acceleration {acc:+.4f}")

print(f"Jacobian-norm bound on the Lipschitz constant: {vehicle_jacobian_bound(p):.6f} "
      f"(configured {cfg.plant.lipschitz})")
eps, eta = cfg.abstraction.eps, cfg.abstraction.eta_x
print("successor radii L^m eps + eta:", [round(cfg.plant.lipschitz**m * eps + eta, 2) for m in range(1, 8)])

model, sol, rc, summary = synthesize(cfg, workers=4)
print({k: summary[k] for k in ("states", "targets", "inputs", "winning", "iterations", "seconds")})

cover = verify_initial_cover(cfg.initial, rc, cfg.cover_delta)
print(f"initial cover: {cover.ok}, first uncertified cell {cover.witness}")

# the target zone is only two lattice rows tall in velocity
tgt = model.embed(np.flatnonzero(model.target_mask))
print("target node velocities:", sorted(set(np.round(tgt[:, 1], 3).tolist())))
