"""
Expected scores with missing data
=================================

With missing cells a family count is random, so the BDe score has to be
averaged over its distribution.  The averaged term is E[log Gamma(N + a)]
and there are several ways to approximate it.
"""
import numpy as np

from structem import (
    EXACT,
    INTEGRATION,
    LAPLACE,
    LINEAR,
    SUMMATION,
    DirichletPrior,
    Parameters,
    Structure,
    Variable,
    accumulate_ess,
    ancestral_sample,
    bde_score_complete,
    bic_score,
    cheeseman_stutz,
    expected_log_gamma,
    expected_model_score,
    inject_missing_mcar,
)
from structem.scoring import exact_expected_log_gamma

# A count that is the sum of 40 independent Bernoullis with these chances.
rng = np.random.default_rng(0)
p = rng.uniform(0.0, 0.4, 40)
mu, var = p.sum(), (p * (1 - p)).sum()
a = 0.5
exact = exact_expected_log_gamma(p, np.ones(len(p), dtype=int), a)
print(f"count mean {mu:.2f}, variance {var:.2f}; exact E[log Gamma(N + {a})] = {exact:.5f}")
for method in (LINEAR, SUMMATION, INTEGRATION, LAPLACE):
    got = expected_log_gamma(mu, var, a, 0, len(p), method)
    print(f"  {method.kind:12s} {got:.5f}  error {got - exact:+.2e}")

# Linear plugs in the mean and ignores the spread, which underestimates the
# convex log Gamma.  The other three account for the variance.

# On a network: complete data makes every method agree with the closed form.
variables = [Variable.binary(n) for n in "ABC"]
structure = Structure.from_edges(variables, [("A", "B"), ("B", "C")])
params = Parameters((np.array([[0.5, 0.5]]), np.array([[0.85, 0.15], [0.2, 0.8]]), np.array([[0.9, 0.1], [0.3, 0.7]])))
prior = DirichletPrior(1.0)
complete = ancestral_sample(structure, params, 300, seed=1)
ess = accumulate_ess(structure, params, complete, structure.families())
print("complete data:", bde_score_complete(structure, complete, prior), expected_model_score(structure, ess, prior, SUMMATION))

# With 25% missing the estimates separate.
holed = inject_missing_mcar(complete, 0.25, seed=2)
ess = accumulate_ess(structure, params, holed, structure.families())
for method in (LINEAR, SUMMATION, INTEGRATION, LAPLACE, EXACT):
    print(f"  expected score, {method.kind:12s} {expected_model_score(structure, ess, prior, method):.4f}")
# The expected scores describe completed data.  Cheeseman-Stutz estimates the
# marginal likelihood of the observed cells alone, so it sits higher.
print("BIC:", round(bic_score(structure, ess, params), 4))
print("Cheeseman-Stutz:", round(cheeseman_stutz(structure, params, holed, prior, ess=ess), 4))
