"""
Moreau weighting versus uniform out-degree weights
==================================================

Uniform push-sum splits a node's value evenly over its out-neighbours.
The Moreau rule gives more weight to neighbours whose buffered parameters
are far away and keeps the rest on the node itself.
"""

import numpy as np

from pushsum_lab import EdgeSet, Moreau, MoreauParams, UniformOutDegree, c_prime, check_definition1

n = 3
full = EdgeSet(n, np.ones((n, n), dtype=bool))
p = MoreauParams(v=0.1, steepness_k=0.01)

# the penalty derivative rises from its floor towards (1-v)/(2γ)
for d in (0.0, 10.0, 100.0, 1000.0):
    print(f"c'({d:6.0f}) = {float(c_prime(d, p)):.5f}")

# identical buffers: every neighbour sits at the floor weight
same = np.zeros((n, n, 2))
print("\nMoreau, identical buffers:\n", Moreau(p).matrix(full, same).entries.round(5))

# node 0 remembers node 2 far away and node 1 close by
buf = np.zeros((n, n, 2))
buf[0, 2] = [20.0, 0.0]
w = Moreau(p).matrix(full, buf)
print("\nnode 0's column when node 2 looks far:", w.entries[:, 0].round(5))
print("uniform column:", UniformOutDegree().matrix(full).entries[:, 0])

delta = Moreau(p).delta(n)
print(f"\nδ for K_max={n}: {delta:.6f}; Definition 1 holds:", check_definition1(w, full, delta))
