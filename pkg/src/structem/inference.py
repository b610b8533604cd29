"""Exact inference and expected sufficient statistics.

Two exact paths are provided. :func:`posterior_marginal` runs variable
elimination (min-fill order, ties to the lowest index) on the ancestral
subgraph of the query and evidence. :class:`CompletionModel` is the engine
used by EM and search: it deduplicates records by observation pattern and,
when the joint state space is small, conditions one dense joint table on every
pattern at once; otherwise it falls back to per-pattern elimination.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import MISSING, Dataset
from .model import FamilyKey, ModelError, Parameters, Structure

DEFAULT_MAX_TABLE = 2**20
DENSE_JOINT_LIMIT = 2**16
DENSE_CELL_LIMIT = 2**24
ZERO_TOL = 1e-12

_generations = itertools.count(1)


class InferenceError(RuntimeError):
    """Inference failed; ``zero_probability`` marks impossible evidence."""

    zero_probability = False

    def __init__(self, msg, record: int | None = None):
        if record is not None:
            msg = f"record {record}: {msg}"
        super().__init__(msg)
        self.record = record


class ZeroProbabilityError(InferenceError):
    zero_probability = True


class QueryTooLargeError(InferenceError):
    pass


# --- factor algebra -------------------------------------------------------------

Factor = tuple  # (scope: tuple[int, ...] sorted, table: ndarray with one axis per scope var)


def _einsum_product(factors: Sequence[Factor], keep: Sequence[int]) -> np.ndarray:
    labels = sorted({v for scope, _ in factors for v in scope} | set(keep))
    if len(labels) > 52:
        raise InferenceError("factor scope exceeds 52 variables")
    local = {v: k for k, v in enumerate(labels)}
    args = []
    for scope, table in factors:
        args += [table, [local[v] for v in scope]]
    args.append([local[v] for v in keep])
    return np.einsum(*args)


def _reduce(scope, table, evidence: Mapping[int, int]) -> Factor:
    idx = []
    new_scope = []
    for v in scope:
        if v in evidence:
            idx.append(evidence[v])
        else:
            idx.append(slice(None))
            new_scope.append(v)
    return tuple(new_scope), table[tuple(idx)]


def min_fill_order(scopes: Iterable[Sequence[int]], eliminate: Iterable[int]) -> list[int]:
    """Greedy min-fill elimination order, ties broken by lowest index."""
    eliminate = set(eliminate)
    adj = {v: set() for v in eliminate}
    for scope in scopes:
        for a in scope:
            if a in adj:
                adj[a].update(b for b in scope if b != a)
    order = []
    remaining = set(eliminate)
    while remaining:
        best, best_fill = None, None
        for v in sorted(remaining):
            nb = [u for u in adj[v] if u != v]
            fill = 0
            for i, a in enumerate(nb):
                na = adj.get(a)
                for b in nb[i + 1 :]:
                    if na is None or b not in na:
                        fill += 1
            if best_fill is None or fill < best_fill:
                best, best_fill = v, fill
        order.append(best)
        nb = adj[best] - {best}
        for a in nb:
            if a in adj:
                adj[a].update(nb - {a})
                adj[a].discard(best)
        remaining.discard(best)
    return order


def _normalize_evidence(structure: Structure, evidence) -> dict[int, int]:
    if evidence is None:
        return {}
    if isinstance(evidence, Mapping):
        items = evidence.items()
    else:
        items = ((i, s) for i, s in enumerate(evidence) if s != MISSING and s is not None)
    out = {}
    for k, s in items:
        i = structure.index(k) if isinstance(k, str) else int(k)
        var = structure.variables[i]
        if isinstance(s, str):
            if s not in var.states:
                raise ModelError(f"{var.name}: unknown state {s!r}")
            s = var.states.index(s)
        s = int(s)
        if s == MISSING:
            continue
        if not 0 <= s < var.arity:
            raise ModelError(f"{var.name}: state index {s} out of range")
        out[i] = s
    return out


def _eliminate(structure, params, evidence: dict[int, int], query: Sequence[int]):
    """Unnormalized table over sorted ``query`` and its log scale."""
    relevant = structure.ancestors(set(query) | set(evidence))
    factors = [_reduce(*params.factor(structure, i), evidence) for i in sorted(relevant)]
    hidden = relevant - set(query) - set(evidence)
    log_scale = 0.0
    for v in min_fill_order([s for s, _ in factors], hidden):
        touching = [f for f in factors if v in f[0]]
        rest = [f for f in factors if v not in f[0]]
        scope = tuple(sorted({u for s, _ in touching for u in s} - {v}))
        table = _einsum_product(touching, scope)
        peak = table.max() if table.size else 0.0
        if peak > 0:
            table = table / peak
            log_scale += math.log(peak)
        factors = rest + [(scope, table)]
    q = tuple(sorted(query))
    table = _einsum_product(factors, q) if factors else np.ones(())
    return q, np.asarray(table, dtype=float), log_scale


def posterior_marginal(
    structure: Structure,
    params: Parameters,
    evidence=None,
    query: Sequence = (),
    max_table: int = DEFAULT_MAX_TABLE,
) -> np.ndarray:
    """P(query | evidence) as an array with one axis per query variable.

    Axes follow the order of ``query`` (names or indices). ``evidence`` is a
    mapping variable -> state, or a full-length state vector with ``MISSING``.
    """
    ev = _normalize_evidence(structure, evidence)
    qidx = [structure.index(q) if isinstance(q, str) else int(q) for q in query]
    if len(set(qidx)) != len(qidx):
        raise ValueError("duplicate query variables")
    overlap = set(qidx) & set(ev)
    if overlap:
        raise ValueError(f"query variables {sorted(structure.names[i] for i in overlap)} are in the evidence")
    size = math.prod(structure.variables[i].arity for i in qidx)
    if size > max_table:
        raise QueryTooLargeError(f"query table of {size} entries exceeds limit {max_table}")
    q, table, _ = _eliminate(structure, params, ev, qidx)
    z = table.sum()
    if not z > 0:
        raise ZeroProbabilityError("evidence has probability zero under the model")
    table = np.clip(table / z, 0.0, 1.0)
    return np.transpose(table, [q.index(i) for i in qidx]) if qidx else table


def log_evidence(structure: Structure, params: Parameters, evidence=None) -> float:
    """log P(evidence); ``-inf`` when impossible."""
    ev = _normalize_evidence(structure, evidence)
    _, table, log_scale = _eliminate(structure, params, ev, ())
    z = float(table.sum())
    return math.log(z) + log_scale if z > 0 else -math.inf


def _embed_family(structure: Structure, key: FamilyKey, record: Sequence[int], posterior_fn) -> np.ndarray:
    """Family table of shape (q, r) from observed states + posterior over the rest."""
    order = key.parents + (key.child,)
    shape = tuple(structure.variables[v].arity for v in order)
    unobs = [v for v in order if record[v] == MISSING]
    table = np.zeros(shape)
    idx = tuple(slice(None) if record[v] == MISSING else record[v] for v in order)
    table[idx] = posterior_fn(unobs) if unobs else 1.0
    return table.reshape(-1, shape[-1])


def record_family_posterior(structure: Structure, params: Parameters, record, family: FamilyKey) -> np.ndarray:
    """P(child, parents | record) as a (parent-config, child-state) table."""
    rec = _record_vector(structure, record)
    ev = {i: s for i, s in enumerate(rec) if s != MISSING}
    return _embed_family(structure, family, rec, lambda unobs: posterior_marginal(structure, params, ev, unobs))


def _record_vector(structure: Structure, record) -> list[int]:
    if isinstance(record, Mapping):
        ev = _normalize_evidence(structure, record)
        return [ev.get(i, MISSING) for i in range(len(structure))]
    rec = [int(s) for s in record]
    if len(rec) != len(structure):
        raise ModelError(f"record has {len(rec)} cells for {len(structure)} variables")
    _normalize_evidence(structure, rec)
    return rec


# --- expected sufficient statistics ----------------------------------------------


@dataclass
class FamilyStatistics:
    """Expected counts of one family under a completion model.

    Cell arrays have shape (parent-configs, child-states); ``agg_*`` arrays
    describe the per-parent-configuration total count. ``probs``/``agg_probs``
    keep the per-pattern cell probabilities (one row per distinct record
    pattern, repeated ``weights`` times) so that exact count distributions
    stay available.
    """

    family: FamilyKey
    mean: np.ndarray
    variance: np.ndarray
    min_count: np.ndarray
    max_count: np.ndarray
    agg_mean: np.ndarray
    agg_variance: np.ndarray
    agg_min: np.ndarray
    agg_max: np.ndarray
    n_records: int
    probs: np.ndarray | None = field(default=None, repr=False)
    agg_probs: np.ndarray | None = field(default=None, repr=False)
    weights: np.ndarray | None = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mean.shape


def _count_moments(p: np.ndarray, w: np.ndarray):
    """Poisson-binomial moments and support bounds, reduced over axis 0."""
    p = np.clip(p, 0.0, 1.0)
    one = p >= 1.0 - ZERO_TOL
    pos = p > ZERO_TOL
    wb = w.reshape((-1,) + (1,) * (p.ndim - 1))
    mean = (wb * p).sum(axis=0)
    var = (wb * p * (1.0 - p)).sum(axis=0)
    lo = (wb * one).sum(axis=0).astype(np.int64)
    hi = (wb * pos).sum(axis=0).astype(np.int64)
    var = np.where(lo == hi, 0.0, np.maximum(var, 0.0))
    mean = np.clip(mean, lo, hi)
    return mean, var, lo, hi


def statistics_from_probs(key: FamilyKey, probs: np.ndarray, weights: np.ndarray) -> FamilyStatistics:
    """Build :class:`FamilyStatistics` from per-pattern cell probabilities (P, q, r)."""
    probs = np.clip(probs, 0.0, 1.0)
    weights = np.asarray(weights, dtype=np.int64)
    agg = np.clip(probs.sum(axis=2), 0.0, 1.0)
    mean, var, lo, hi = _count_moments(probs, weights)
    amean, avar, alo, ahi = _count_moments(agg, weights)
    return FamilyStatistics(
        key, mean, var, lo, hi, amean, avar, alo, ahi, int(weights.sum()), probs, agg, weights
    )


def statistics_from_counts(key: FamilyKey, counts: np.ndarray) -> FamilyStatistics:
    """Deterministic statistics from complete-data counts (q, r)."""
    counts = np.asarray(counts, dtype=float)
    c = counts.astype(np.int64)
    agg = c.sum(axis=1)
    z = np.zeros_like(counts)
    return FamilyStatistics(key, counts.copy(), z, c, c.copy(), agg.astype(float), np.zeros(len(agg)), agg, agg.copy(), int(c.sum()))


class CompletionModel:
    """A fixed (structure, parameters) used to complete a dataset.

    One instance corresponds to one cache generation: all family statistics it
    returns are conditioned on the same model. Records are grouped into
    distinct observation patterns; per-record results are independent.
    """

    def __init__(self, structure: Structure, params: Parameters, dataset: Dataset, dense: bool | None = None):
        self.structure = structure
        self.params = params
        self.dataset = dataset
        self.generation = next(_generations)
        full = dataset.full_matrix(structure)
        if len(full):
            patterns, inverse, counts = np.unique(full, axis=0, return_inverse=True, return_counts=True)
        else:
            patterns = np.zeros((0, len(structure)), dtype=np.int64)
            inverse = np.zeros(0, dtype=np.int64)
            counts = np.zeros(0, dtype=np.int64)
        self.patterns = patterns
        self.inverse = np.asarray(inverse).reshape(-1)
        self.weights = counts
        self._first_record = np.zeros(len(patterns), dtype=np.int64)
        if len(full):
            # Smallest record index per pattern, for error messages.
            self._first_record[self.inverse[::-1]] = np.arange(len(full))[::-1]
        joint = math.prod(structure.arities)
        if dense is None:
            dense = joint <= DENSE_JOINT_LIMIT and joint * max(len(patterns), 1) <= DENSE_CELL_LIMIT
        self.dense = dense
        self._family_cache: dict[FamilyKey, FamilyStatistics] = {}
        self._post = None
        self._log_probs = None
        if dense:
            self._build_dense()

    def _build_dense(self):
        s = self.structure
        factors = [self.params.factor(s, i) for i in range(len(s))]
        joint = _einsum_product(factors, tuple(range(len(s)))) if len(s) else np.ones(())
        P = len(self.patterns)
        mask = np.ones((P,) + s.arities)
        for i, r in enumerate(s.arities):
            col = self.patterns[:, i]
            ind = np.ones((P, r))
            obs = col != MISSING
            ind[obs] = 0.0
            ind[np.flatnonzero(obs), col[obs]] = 1.0
            shape = [P] + [1] * len(s)
            shape[i + 1] = r
            mask *= ind.reshape(shape)
        post = mask * joint[None]
        z = post.reshape(P, -1).sum(axis=1) if P else np.zeros(0)
        ok = z > 0
        post[ok] /= z[ok].reshape((-1,) + (1,) * len(s))
        self._post = post
        with np.errstate(divide="ignore"):
            self._log_probs = np.where(ok, np.log(np.where(ok, z, 1.0)), -np.inf)

    def pattern_log_probs(self) -> np.ndarray:
        """log P(observed cells) for every distinct pattern (``-inf`` if impossible)."""
        if self._log_probs is None:
            self._log_probs = np.array([log_evidence(self.structure, self.params, pat) for pat in self.patterns])
        return self._log_probs

    def _check_possible(self) -> None:
        bad = np.flatnonzero(~np.isfinite(self.pattern_log_probs()))
        if len(bad):
            raise ZeroProbabilityError("evidence has probability zero under the model", int(self._first_record[bad[0]]))

    def record_log_probs(self) -> np.ndarray:
        return self.pattern_log_probs()[self.inverse]

    def log_likelihood(self) -> float:
        """Observed-data log-likelihood sum_j log P(o_j)."""
        if not len(self.patterns):
            return 0.0
        self._check_possible()
        return float(np.dot(self.weights, self.pattern_log_probs()))

    def family_probs(self, key: FamilyKey) -> np.ndarray:
        """Per-pattern family posteriors, shape (P, q, r)."""
        s = self.structure
        order = key.parents + (key.child,)
        q = math.prod(s.variables[v].arity for v in key.parents)
        r = s.variables[key.child].arity
        P = len(self.patterns)
        if P == 0:
            return np.zeros((0, q, r))
        if self.dense:
            self._check_possible()
            keep = [v + 1 for v in order]
            drop = tuple(a for a in range(1, len(s) + 1) if a not in keep)
            marg = self._post.sum(axis=drop) if drop else self._post
            # marg axes: pattern then family vars in ascending index order.
            scope = sorted(order)
            marg = np.transpose(marg, [0] + [scope.index(v) + 1 for v in order])
            return marg.reshape(P, q, r)
        out = np.empty((P, q, r))
        for k, pat in enumerate(self.patterns):
            ev = {i: int(x) for i, x in enumerate(pat) if x != MISSING}
            try:
                out[k] = _embed_family(s, key, pat, lambda u: posterior_marginal(s, self.params, ev, u))
            except InferenceError as exc:
                raise type(exc)(str(exc), int(self._first_record[k])) from None
        return out

    def family_statistics(self, key: FamilyKey) -> FamilyStatistics:
        stats = self._family_cache.get(key)
        if stats is None:
            stats = statistics_from_probs(key, self.family_probs(key), self.weights)
            self._family_cache[key] = stats
        return stats


def accumulate_ess(
    structure: Structure, params: Parameters, dataset: Dataset, families: Iterable[FamilyKey]
) -> dict[FamilyKey, FamilyStatistics]:
    """Expected sufficient statistics (means, variances, count bounds) per family."""
    engine = CompletionModel(structure, params, dataset)
    return {key: engine.family_statistics(key) for key in families}
