"""
Lattice geometry
================

The state space is quantized on a cubic lattice whose spacing is chosen so
that every point lies within ``eta`` of some node. This script checks that
covering radius empirically and shows how the eps-interior of a region with
an obstacle shrinks the set of usable nodes.
"""

import numpy as np

from selftrig import Box, LatticeSpec, Region, interior_contains, lattice_in_region, nearest_lattice

# spacing 2*eta/sqrt(n): in the plane with eta = 1 the nodes sit sqrt(2) apart
lat = LatticeSpec(2, 1.0)
print("spacing", lat.spacing)

# random points never sit further than eta from their nearest node
rng = np.random.default_rng(0)
pts = rng.uniform(-10, 10, size=(5000, 2))
dist = [min(np.linalg.norm(lat.embed(p) - x) for p in nearest_lattice(x, lat)) for x in pts]
print(f"largest distance to a node over {len(pts)} points: {max(dist):.4f} (eta = {lat.eta})")

# a lattice point exactly between two nodes has both as nearest neighbours
print("tie at (sqrt(2)/2, 0):", sorted(nearest_lattice([lat.spacing / 2, 0.0], lat)))

# a 20 x 10 field with a 6 x 4 obstacle in the upper middle
field = Region((Box((0, 0), (20, 10)),), (Box((7, 6), (13, 10)),))
all_nodes = lattice_in_region(field, lat)
inner = [p for p in all_nodes if interior_contains(field, lat.embed(p), 1.0)]
print(f"{len(all_nodes)} nodes in the field, {len(inner)} keep a unit ball clear of the boundary and obstacle")

# a crude picture: '#' usable, '.' too close to a boundary, ' ' outside
inner = set(inner)
rows = []
for j in range(max(p[1] for p in all_nodes), -1, -1):
    rows.append("".join("#" if (i, j) in inner else "." if (i, j) in all_nodes else " "
                        for i in range(max(p[0] for p in all_nodes) + 1)))
print("\n".join(rows))
