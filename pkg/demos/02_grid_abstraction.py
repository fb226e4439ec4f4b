"""
From dynamics to interval transition bounds
===========================================

A contracting affine system with Gaussian noise is abstracted onto a grid:
for each cell, the one-step image is a box, and the Gaussian mass reaching
every destination cell is bracketed by evaluating the distribution at the
image corners.  The result is a row of probability intervals per cell, the
object every solver consumes.
"""

import numpy as np

from pwcbarrier.ambiguity import AmbiguitySet, worst_case_value
from pwcbarrier.bounds import Affine, affine_bounds, gaussian_box_prob
from pwcbarrier.geometry import Box, make_grid

# x(k+1) = 0.5 x(k) + noise, noise ~ N(0, 0.1^2 I), kept inside [-1, 1]^2.
model = Affine(A=[[0.5, 0.0], [0.0, 0.5]], c=[0.0, 0.0], sigma=[0.1, 0.1])
safe = Box([-1.0, -1.0], [1.0, 1.0])
initial = Box([-0.2, -0.2], [0.2, 0.2])

partition = make_grid(safe, (8, 8), initial=initial)
bounds = affine_bounds(model, partition)
print(f"{partition.K} cells, {bounds.nnz} stored interval entries")

# Row sums must bracket 1: total mass is a distribution over the cells
# plus the unsafe sink, whatever the true within-cell position is.
print("row lower sums <= 1:", bool(np.all(bounds.row_lower_sums() <= 1 + 1e-12)))
print("row upper sums >= 1:", bool(np.all(bounds.row_upper_sums() >= 1 - 1e-12)))

# Inspect one row: the central cell mostly stays near the center.
i = partition.region_of([0.06, 0.06])
lo, up = bounds.row_dense(i)
print(f"cell {i} keeps mass in its own cell within [{lo[i]:.4f}, {up[i]:.4f}]")
print(f"cell {i} can lose to the unsafe sink at most {bounds.u_upper[i]:.2e}")

# The same machinery one level down: the exact Gaussian mass of a box.
p = gaussian_box_prob(np.zeros(2), [0.1, 0.1], Box([-0.25, -0.25], [0.25, 0.25]))
print(f"N(0, 0.1^2 I) mass of the central cell = {p:.6f}")

# A row plus a barrier candidate give a worst-case expectation: the
# adversary moves interval slack onto the most expensive destinations.
amb = AmbiguitySet(np.append(lo, bounds.u_lower[i]), np.append(up, bounds.u_upper[i]))
b = np.full(partition.K, 0.02)
value, worst_p = worst_case_value(amb, np.append(b, 1.0))
print(f"worst-case expected barrier from cell {i} = {value:.6f} "
      f"(unsafe share {worst_p[-1]:.2e})")
