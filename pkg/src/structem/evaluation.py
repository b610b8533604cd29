"""KL divergence between networks and held-out log loss."""
from __future__ import annotations

import math

import numpy as np

from .data import Dataset, ancestral_sample
from .inference import CompletionModel, posterior_marginal
from .model import Parameters, Structure

EXACT_KL_LIMIT = 2**20


class InfiniteDivergence(ArithmeticError):
    """Q assigns zero probability where P does not."""


def observed_distribution(structure: Structure, params: Parameters, names, max_table: int = EXACT_KL_LIMIT) -> np.ndarray:
    """Joint distribution over the named observed variables, hidden ones summed out."""
    return posterior_marginal(structure, params, None, [structure.index(n) for n in names], max_table=max_table)


def kl_divergence(
    true_net: tuple[Structure, Parameters],
    learned_net: tuple[Structure, Parameters],
    mode: str = "exact",
    n: int = 100_000,
    seed=None,
) -> float:
    """KL(P_true || P_learned) in nats over the observed variables.

    ``mode='exact'`` enumerates the observed joint space; ``mode='mc'``
    averages log P - log Q over ``n`` samples from the true network.
    Raises :class:`InfiniteDivergence` when the divergence is infinite.
    """
    ts, tp = true_net
    ls, lp = learned_net
    names = [ts.names[i] for i in ts.observed]
    if sorted(names) != sorted(ls.names[i] for i in ls.observed):
        raise ValueError("networks must share the same observed variables")
    for name in names:
        if ts.variables[ts.index(name)].arity != ls.variables[ls.index(name)].arity:
            raise ValueError(f"{name}: arity differs between networks")
    if mode == "exact":
        size = math.prod(ts.variables[ts.index(x)].arity for x in names)
        if size > EXACT_KL_LIMIT:
            raise ValueError(f"observed joint space of {size} states exceeds the exact limit {EXACT_KL_LIMIT}")
        p = observed_distribution(ts, tp, names).ravel()
        q = observed_distribution(ls, lp, names).ravel()
        support = p > 0
        if np.any(q[support] <= 0):
            raise InfiniteDivergence("learned network gives probability zero to a possible state")
        return max(0.0, float(np.sum(p[support] * (np.log(p[support]) - np.log(q[support])))))
    if mode == "mc":
        data = ancestral_sample(ts, tp, n, seed)
        lp_true = CompletionModel(ts, tp, data).record_log_probs()
        lp_learned = CompletionModel(ls, lp, data).record_log_probs()
        if not np.all(np.isfinite(lp_learned)):
            raise InfiniteDivergence("learned network gives probability zero to a sampled record")
        return float(np.mean(lp_true - lp_learned))
    raise ValueError(f"unknown KL mode {mode!r}")


def record_log_loss(net: tuple[Structure, Parameters], test: Dataset) -> np.ndarray:
    """-log P(observed cells) per record; ``inf`` for impossible records."""
    structure, params = net
    return -CompletionModel(structure, params, test).record_log_probs()


def log_loss(net: tuple[Structure, Parameters], test: Dataset) -> float:
    """Mean negative log-probability of the test records (nats per record).

    Raises :class:`InfiniteDivergence` naming the first impossible record.
    """
    losses = record_log_loss(net, test)
    if len(losses) == 0:
        return 0.0
    bad = np.flatnonzero(~np.isfinite(losses))
    if len(bad):
        raise InfiniteDivergence(f"record {int(bad[0])} has probability zero under the model")
    return float(losses.mean())
