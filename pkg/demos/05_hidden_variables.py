"""
Learning with a hidden variable
===============================

Four observables that share one unobserved cause.  Without a hidden variable
the learner has to wire the observables together; with one it can recover
the common cause.  Restarts perturb the structure to escape local maxima.
"""
import numpy as np

from structem import DirichletPrior, Parameters, SemConfig, Structure, Variable, ancestral_sample, log_loss, sem_with_restarts

variables = [Variable.binary("H", hidden=True)] + [Variable.binary(f"X{i}") for i in range(1, 5)]
truth = Structure.from_edges(variables, [("H", f"X{i}") for i in range(1, 5)])
row = np.array([[0.85, 0.15], [0.15, 0.85]])
params = Parameters((np.array([[0.5, 0.5]]),) + (row,) * 4)

# Sampling drops the hidden column.
train = ancestral_sample(truth, params, 2000, seed=0)
test = ancestral_sample(truth, params, 2000, seed=1)
print("observed columns:", train.names)
print("generator log loss:", round(log_loss((truth, params), test), 4))

config = SemConfig(seed=4, n_edge_perturbations=2, n_random_walks=3)
for k in (0, 1):
    result = sem_with_restarts(train, k, DirichletPrior(1.0), config)
    s = result.structure
    print(f"\n{k} hidden: edges", [f"{s.names[u]}->{s.names[v]}" for u, v in s.edges()])
    print("  held-out log loss:", round(log_loss((s, result.params), test), 4))
    print("  Cheeseman-Stutz:", round(result.diagnostics.final_cheeseman_stutz, 2))
    tried = result.diagnostics.restarts
    print("  restarts tried:", len(tried) - 1, "accepted:", sum(r["accepted"] for r in tried[1:]))

# With one hidden variable the learned graph is the generator's star.  The
# observed-only network needs six edges to mimic it; at 2000 records the two
# predict about equally well, but the hidden model wins on Cheeseman-Stutz.
