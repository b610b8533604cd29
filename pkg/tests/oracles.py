"""Brute-force reference computations used by the tests."""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.special import logsumexp

from structem import Dataset, Parameters, Structure, Variable, bde_score_complete, log_likelihood_complete
from structem.data import MISSING


def joint_table(structure: Structure, params: Parameters) -> np.ndarray:
    """P(x) for every full assignment, by multiplying CPT entries."""
    out = np.zeros(structure.arities)
    for x in itertools.product(*[range(r) for r in structure.arities]):
        out[x] = math.exp(log_likelihood_complete(structure, params, x))
    return out


def enumerated_marginal(structure, params, evidence: dict, query: list) -> np.ndarray:
    """P(query | evidence) by summing the full joint table."""
    joint = joint_table(structure, params)
    idx = tuple(evidence.get(i, slice(None)) for i in range(len(structure)))
    sub = joint[idx]
    free = [i for i in range(len(structure)) if i not in evidence]
    drop = tuple(k for k, i in enumerate(free) if i not in query)
    table = sub.sum(axis=drop) if drop else sub
    kept = [i for i in free if i in query]
    table = np.transpose(table, [kept.index(q) for q in query])
    return table / table.sum()


def sequential_predictive(counts, priors) -> float:
    """log of the product of sequential predictive probabilities (integer counts)."""
    counts = [int(c) for c in counts]
    priors = [float(p) for p in priors]
    a = sum(priors)
    seen = [0] * len(counts)
    total = 0
    logp = 0.0
    for i, c in enumerate(counts):
        for _ in range(c):
            logp += math.log((priors[i] + seen[i]) / (a + total))
            seen[i] += 1
            total += 1
    return logp


def poisson_binomial_brute(p) -> np.ndarray:
    """Count distribution by enumerating all 2^n outcomes (n small)."""
    p = list(p)
    out = np.zeros(len(p) + 1)
    for bits in itertools.product((0, 1), repeat=len(p)):
        w = 1.0
        for b, q in zip(bits, p):
            w *= q if b else 1.0 - q
        out[sum(bits)] += w
    return out


def full_columns(structure: Structure, dataset: Dataset) -> np.ndarray:
    """Dataset values laid out in structure order, hidden columns MISSING."""
    return dataset.full_matrix(structure)


def completed_datasets(structure: Structure, dataset: Dataset):
    """Every completion of the missing and hidden cells as a complete Dataset over
    all structure variables (hidden ones included)."""
    full = full_columns(structure, dataset)
    miss = np.argwhere(full == MISSING)
    arity = [structure.variables[k].arity for _, k in miss]
    allvars = tuple(Variable(v.name, v.states) for v in structure.variables)
    for comp in itertools.product(*[range(r) for r in arity]):
        v = full.copy()
        for (j, k), x in zip(miss, comp):
            v[j, k] = x
        yield Dataset(allvars, v)


def visible(structure: Structure) -> Structure:
    """Same graph with every variable observed (for complete-data scoring)."""
    return Structure(tuple(Variable(v.name, v.states) for v in structure.variables), structure.parents)


def true_log_marginal(structure: Structure, dataset: Dataset, prior) -> float:
    """log P(o | M): log-sum over completions of the closed-form complete-data score."""
    s = visible(structure)
    return float(logsumexp([bde_score_complete(s, d, prior) for d in completed_datasets(structure, dataset)]))


def completion_weights(structure: Structure, params: Parameters, dataset: Dataset):
    """[(completed dataset, posterior weight)] under (structure, params)."""
    s = visible(structure)
    out = []
    for d in completed_datasets(structure, dataset):
        out.append((d, sum(log_likelihood_complete(s, params, row) for row in d.values)))
    logs = np.array([lw for _, lw in out])
    w = np.exp(logs - logsumexp(logs))
    return [(d, float(x)) for (d, _), x in zip(out, w)]


def all_dags(variables):
    """Every DAG over ``variables`` (25 for three nodes)."""
    n = len(variables)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for states in itertools.product((0, 1, 2), repeat=len(pairs)):
        parents = [[] for _ in range(n)]
        for (i, j), s in zip(pairs, states):
            if s == 1:
                parents[j].append(i)
            elif s == 2:
                parents[i].append(j)
        g = Structure(tuple(variables), tuple(tuple(p) for p in parents))
        if g.is_acyclic():
            yield g


def random_network(rng: np.random.Generator, n: int, max_arity: int = 2, max_parents: int = 2, alpha: float = 1.0, hidden=()):
    """Random DAG (parents drawn from earlier nodes of a random order) with Dirichlet CPTs."""
    variables = []
    for i in range(n):
        r = int(rng.integers(2, max_arity + 1))
        variables.append(Variable(f"V{i}", tuple(f"s{k}" for k in range(r)), i in hidden))
    order = rng.permutation(n)
    parents = [() for _ in range(n)]
    for pos, v in enumerate(order):
        earlier = order[:pos]
        k = int(rng.integers(0, min(max_parents, len(earlier)) + 1))
        parents[v] = tuple(sorted(int(x) for x in rng.choice(earlier, size=k, replace=False))) if k else ()
    s = Structure(tuple(variables), tuple(parents))
    p = Parameters(tuple(rng.dirichlet(np.full(v.arity, alpha), size=s.n_parent_configs(i)) for i, v in enumerate(variables)))
    return s, p
