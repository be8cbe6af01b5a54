"""
Five optimisers on one problem
==============================

SGP/MSGP use uniform weights, SGAP/MSGAP use Moreau weights, and SADDOPT
tracks the average gradient at twice the payload per link.
"""

from pushsum_lab import GraphSpec, Moreau, OptimizerSpec, ProblemSpec, make_problem, run_experiment

problem = make_problem(ProblemSpec("Quadratic", 10, 6, heterogeneity=1.0, noise_sigma=0.0, seed=1))
graph = GraphSpec("Exp", 6)

print(f"{'kind':8s} {'final loss':>12s} {'grad^2':>10s} {'scalars/round':>14s}")
for kind, beta in (("SGP", 0), ("SGAP", 0), ("MSGP", 0.5), ("MSGAP", 0.5), ("SADDOPT", 0)):
    log = run_experiment(problem, graph, OptimizerSpec(kind, 0.05, beta), Moreau(), 300, seed=0)
    last = log.records[-1]
    print(f"{kind:8s} {last.loss:12.6f} {last.grad_norm_sq:10.2e} {last.scalars_sent:14d}")

print("optimum loss:", round(problem.loss(problem.minimizer()), 6))
