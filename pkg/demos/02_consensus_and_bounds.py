"""Consensus ADMM on a quadratic toy, with and without primal noise.

Every server holds f_i(w) = 0.5 ||w - c_i||^2, so the consensus optimum is the
mean of the centers. Noise added to the broadcast iterates decays like rho^t
and the servers still meet at the mean. The second half asks the bound module
whether the step-size conditions of the convergence analysis can be met on
small graphs: on two servers they can, on any three-server graph they cannot.
"""

import itertools

import numpy as np

from pdml import AdmmConfig, NoiseSchedule, build_graph, run, spectral_profile
from pdml.bounds import ObjectiveConstants, search_convergence_params
from pdml.errors import NoFeasibleParams
from pdml.metrics import consensus_error
from pdml.objective import QuadraticObjective

rng = np.random.default_rng(3)
centers = rng.normal(size=(5, 2)) * 3
graph = build_graph(5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)])
objs = [QuadraticObjective(c) for c in centers]

for label, sched in (("clean", None), ("noisy", NoiseSchedule(V=1.0, rho=0.8, seed=1))):
    res = run(graph, None, AdmmConfig(beta=0.5, T=150, perturb_primal=sched is not None), sched=sched, objectives=objs)
    print(f"{label}: ", end="")
    for t in (1, 10, 50, 150):
        rec = res[t - 1]
        print(f"t={t} gap={consensus_error(rec.w_snapshot):.2e}  ", end="")
    print(f"dist to mean={np.abs(res.w - centers.mean(axis=0)).max():.2e}")

unit = ObjectiveConstants(kappa=1.0, varrho=1.0)
graphs = {
    "two servers": build_graph(2, [(0, 1)]),
    "path of three": build_graph(3, [(0, 1), (1, 2)]),
    "triangle": build_graph(3, [(0, 1), (1, 2), (0, 2)]),
    "K4": build_graph(4, itertools.combinations(range(4), 2)),
}
print()
for name, g in graphs.items():
    try:
        p = search_convergence_params(spectral_profile(g), unit)
        print(f"{name:14s} feasible, C = {p.C:.4f}, beta = {p.beta_theory:.4f}")
    except NoFeasibleParams as exc:
        print(f"{name:14s} infeasible, best margin {exc.closest_margin:.3f}")
