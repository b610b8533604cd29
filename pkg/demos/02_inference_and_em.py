"""
Inference and parameter EM
==========================

Posterior queries by variable elimination, expected sufficient statistics and
EM for the parameters of a fixed structure.
"""
import numpy as np

from structem import DirichletPrior, EmConfig, Parameters, Structure, Variable, accumulate_ess, ancestral_sample, em_fit, inject_missing_mcar, posterior_marginal

variables = [Variable.binary(n) for n in ("Burglary", "Earthquake", "Alarm", "Call")]
structure = Structure.from_edges(variables, [("Burglary", "Alarm"), ("Earthquake", "Alarm"), ("Alarm", "Call")])
params = Parameters((
    np.array([[0.99, 0.01]]),
    np.array([[0.98, 0.02]]),
    np.array([[0.999, 0.001], [0.06, 0.94], [0.71, 0.29], [0.05, 0.95]]),
    np.array([[0.95, 0.05], [0.1, 0.9]]),
))

# P(Burglary | Call=1) and the joint of the two causes given the call.
print("P(Burglary | Call=1) =", posterior_marginal(structure, params, {"Call": 1}, ["Burglary"]))
print("P(Burglary, Earthquake | Call=1) =\n", posterior_marginal(structure, params, {"Call": 1}, ["Burglary", "Earthquake"]))

# Expected counts under the true parameters, with 30% of cells missing.
# Each cell count is a sum of independent Bernoullis, so it comes with a
# variance and a range as well as a mean.
data = inject_missing_mcar(ancestral_sample(structure, params, 2000, seed=0), 0.3, seed=1)
family = structure.families()[2]
stats = accumulate_ess(structure, params, data, [family])[family]
print("expected counts for Alarm | Burglary, Earthquake:\n", stats.mean.round(1))
print("their standard deviations:\n", np.sqrt(stats.variance).round(2))

# EM from random parameters.  The trace is the log posterior of the
# parameters, which never decreases.
fit = em_fit(structure, data, DirichletPrior(1.0), EmConfig(seed=3))
print("EM iterations:", fit.iterations, "converged:", fit.converged)
print("trace head:", np.round(fit.trace[:4], 2), "tail:", np.round(fit.trace[-1], 2))
assert all(b >= a - 1e-8 for a, b in zip(fit.trace, fit.trace[1:]))
print("learned P(Call | Alarm):\n", fit.params.cpts[3].round(3))
