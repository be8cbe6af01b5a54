"""
Time-varying directed topologies
================================

Four graph families, one edge set per round. Every round keeps the
self-loops, and every window of B rounds has to be strongly connected.
"""

import numpy as np

from pushsum_lab import GraphSpec, aggregate_window, generate_edges, graph_diameter, validate_assumption1

# Divide: two cliques joined by a single two-way bridge
spec = GraphSpec("Divide", 6)
e = generate_edges(spec, 1)
print("Divide adjacency (row i -> column j):")
print(e.mask.astype(int))
print("diameter:", graph_diameter(e))

# Exp: each node pushes to i + 2^(t mod ceil(log2 N)); one cycle of rounds is needed
spec = GraphSpec("Exp", 8)
print("\nExp period B =", spec.period_b)
for t in range(1, 4):
    e = generate_edges(spec, t)
    print(f"  t={t} node 0 sends to", sorted(j for j in range(8) if e.mask[0, j] and j != 0))
union = aggregate_window([generate_edges(spec, t) for t in range(1, spec.period_b + 1)])
print("  union over one cycle has diameter", graph_diameter(union))

# Random: sparse rounds, with every channel forced open once per period
spec = GraphSpec("Random", 6, p_inner=0.3, p_inter=0.05, seed=4)
sizes = [len(generate_edges(spec, t)) - 6 for t in range(1, 17)]
print("\nRandom non-self edges per round:", sizes)

for kind in ("Full", "Divide", "Exp", "Random"):
    rep = validate_assumption1(GraphSpec(kind, 6), 64)
    print(f"{kind:7s} B-strongly connected={rep.is_b_strongly_connected}  Δ={rep.diameter_delta}")
