"""
Structure learning with missing values
======================================

Bayesian structural EM alternates between completing the data with the
current network and hill climbing on the expected score.
"""
import numpy as np

from structem import DirichletPrior, Parameters, SemConfig, Structure, Variable, ancestral_sample, bayesian_sem, inject_missing_mcar, kl_divergence
from structem.search import random_chain_structure

variables = [Variable.binary(n) for n in "ABCDE"]
truth = Structure.from_edges(variables, [("A", "B"), ("A", "C"), ("B", "D"), ("C", "D"), ("D", "E")])
params = Parameters((
    np.array([[0.6, 0.4]]),
    np.array([[0.8, 0.2], [0.25, 0.75]]),
    np.array([[0.7, 0.3], [0.2, 0.8]]),
    np.array([[0.9, 0.1], [0.4, 0.6], [0.3, 0.7], [0.1, 0.9]]),
    np.array([[0.75, 0.25], [0.2, 0.8]]),
))

data = inject_missing_mcar(ancestral_sample(truth, params, 1000, seed=0), 0.3, seed=1)
start = random_chain_structure(variables, np.random.default_rng(2))
print("start edges:", [f"{variables[u].name}->{variables[v].name}" for u, v in start.edges()])

for score in ("bde", "bic"):
    result = bayesian_sem(data, start, DirichletPrior(1.0), SemConfig(score=score, seed=3))
    print(f"\n{score}: one line per structural iteration")
    print(result.diagnostics.to_tsv(), end="")
    edges = [f"{variables[u].name}->{variables[v].name}" for u, v in result.structure.edges()]
    print("learned edges:", edges)
    print("KL to the generator:", round(kl_divergence((truth, params), (result.structure, result.params)), 4))
