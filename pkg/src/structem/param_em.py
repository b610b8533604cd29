"""EM for posterior-mean (MAP-style) CPT parameters of a fixed structure."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .inference import CompletionModel
from .model import Parameters, Structure
from .scoring import DirichletPrior, map_parameters


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 100
    tol: float = 1e-6
    init: Parameters | None = None
    seed: int | None = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass
class EmResult:
    params: Parameters
    trace: list[float]
    iterations: int
    converged: bool
    completion: CompletionModel


def random_parameters(structure: Structure, rng: np.random.Generator) -> Parameters:
    """Each CPT row drawn from a flat Dirichlet(1, ..., 1)."""
    return Parameters(
        tuple(rng.dirichlet(np.ones(v.arity), size=structure.n_parent_configs(i)) for i, v in enumerate(structure.variables))
    )


def log_prior_density(structure: Structure, params: Parameters, prior: DirichletPrior) -> float:
    """Log density of the Dirichlet(N' + 1) rows whose mode is the posterior mean.

    This is the prior term for which the posterior-mean M-step is an exact
    maximisation, so the EM objective it completes is monotone.
    """
    total = 0.0
    for i, v in enumerate(structure.variables):
        q = structure.n_parent_configs(i)
        a = prior.cell(v.arity, q) + 1.0
        theta = params.cpts[i]
        with np.errstate(divide="ignore"):
            total += q * (math.lgamma(a * v.arity) - v.arity * math.lgamma(a)) + (a - 1.0) * float(np.log(theta).sum())
    return total


def _m_step(structure: Structure, completion: CompletionModel, prior: DirichletPrior) -> Parameters:
    return Parameters(tuple(map_parameters(completion.family_statistics(k), prior) for k in structure.families()))


def em_fit(structure: Structure, dataset: Dataset, prior: DirichletPrior = DirichletPrior(), config: EmConfig = EmConfig()) -> EmResult:
    """Fit parameters by EM with a posterior-mean M-step.

    ``trace[k]`` is the observed-data log posterior (log-likelihood plus
    :func:`log_prior_density`) after ``k`` M-steps; ``trace[0]`` scores the
    initial parameters.
    """
    if config.init is not None:
        params = config.init
    else:
        params = random_parameters(structure, np.random.default_rng(config.seed))
    completion = CompletionModel(structure, params, dataset)
    trace = [completion.log_likelihood() + log_prior_density(structure, params, prior)]
    complete = dataset.is_complete() and not structure.hidden
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        params = _m_step(structure, completion, prior)
        completion = CompletionModel(structure, params, dataset)
        trace.append(completion.log_likelihood() + log_prior_density(structure, params, prior))
        if complete or trace[-1] - trace[-2] < config.tol:
            # Complete data: the E-step ignores the parameters, one update is final.
            converged = True
            break
    return EmResult(params, trace, it, converged, completion)
