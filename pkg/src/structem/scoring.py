"""Dirichlet/BDe scores, expected scores under incomplete data, BIC and Cheeseman-Stutz.

Every expected score here reduces to scalar expectations E[log Gamma(N + a)]
of a single count N with a Dirichlet pseudo-count a. Counts are summarised by
their mean, variance and integer support [min, max] (see
:class:`~structem.inference.FamilyStatistics`).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np
from scipy import special, stats as sps

from .data import MISSING, Dataset
from .inference import CompletionModel, FamilyStatistics, statistics_from_counts
from .model import FamilyKey, Parameters, Structure

SUMMATION_MAX_BINS = 10**6
LAPLACE_BISECTION_STEPS = 64
LAPLACE_MIN_VARIANCE = 1e-12
# argmin of log Gamma on the positive axis
_LGAMMA_ARGMIN = 1.4616321449683623


@dataclass(frozen=True)
class DirichletPrior:
    """Uniform BDe prior: ``ess`` pseudo-counts spread evenly over a family's cells."""

    equivalent_sample_size: float = 1.0

    def __post_init__(self):
        if not self.equivalent_sample_size > 0:
            raise ValueError("equivalent sample size must be positive")

    def cell(self, arity: int, n_configs: int) -> float:
        return self.equivalent_sample_size / (arity * n_configs)

    def family_hyper(self, structure: Structure, key: FamilyKey) -> np.ndarray:
        r = structure.variables[key.child].arity
        q = math.prod(structure.variables[p].arity for p in key.parents)
        return np.full((q, r), self.cell(r, q))


@dataclass(frozen=True)
class ExpectedScoreMethod:
    """How E[log Gamma(N + a)] is approximated.

    ``exact`` uses the Poisson-binomial law of the count and needs per-record
    probabilities; it is intended for small instances and testing.
    """

    kind: str
    quadrature_points: int = 16

    KINDS = ("linear", "summation", "integration", "laplace", "exact")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown expected-score method {self.kind!r}")
        if self.quadrature_points < 2:
            raise ValueError("quadrature_points must be >= 2")

    def __str__(self):
        return self.kind


LINEAR = ExpectedScoreMethod("linear")
SUMMATION = ExpectedScoreMethod("summation")
INTEGRATION = ExpectedScoreMethod("integration")
LAPLACE = ExpectedScoreMethod("laplace")
EXACT = ExpectedScoreMethod("exact")
METHODS = {"linear": LINEAR, "summation": SUMMATION, "integration": INTEGRATION, "laplace": LAPLACE, "exact": EXACT}


def parse_method(name: str) -> tuple[str, ExpectedScoreMethod]:
    """``'bde-summation'`` -> ('bde', SUMMATION); ``'bic'`` -> ('bic', LINEAR)."""
    name = name.strip().lower()
    if name == "bic":
        return "bic", LINEAR
    if name.startswith("bde-") and name[4:] in METHODS:
        return "bde", METHODS[name[4:]]
    raise ValueError(f"unknown method {name!r}; expected bic or bde-{{{','.join(METHODS)}}}")


# --- complete data ----------------------------------------------------------------


def log_dirichlet_factor(counts, priors) -> float:
    """log of the Dirichlet-multinomial marginal likelihood of one count vector."""
    counts = np.asarray(counts, dtype=float)
    priors = np.asarray(priors, dtype=float)
    if counts.shape != priors.shape or counts.ndim != 1 or counts.size < 1:
        raise ValueError("counts and priors must be equal-length non-empty vectors")
    if np.any(priors <= 0):
        raise ValueError("Dirichlet hyperparameters must be positive")
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    return float(_dirichlet_rows(counts[None], priors[None]).sum())


def _dirichlet_rows(counts: np.ndarray, priors: np.ndarray) -> np.ndarray:
    a = priors.sum(axis=1)
    n = counts.sum(axis=1)
    return (
        special.gammaln(a)
        - special.gammaln(a + n)
        + (special.gammaln(priors + counts) - special.gammaln(priors)).sum(axis=1)
    )


def family_counts(structure: Structure, dataset: Dataset, key: FamilyKey) -> np.ndarray:
    """Raw (parent-config, child-state) counts; dataset must be complete on the family."""
    full = dataset.full_matrix(structure)
    idx = np.zeros(len(full), dtype=np.int64)
    for p in key.parents:
        idx = idx * structure.variables[p].arity + full[:, p]
    r = structure.variables[key.child].arity
    q = math.prod(structure.variables[p].arity for p in key.parents)
    cells = idx * r + full[:, key.child]
    return np.bincount(cells, minlength=q * r).reshape(q, r).astype(float)


def bde_family_complete(structure: Structure, dataset: Dataset, key: FamilyKey, prior: DirichletPrior) -> float:
    counts = family_counts(structure, dataset, key)
    return float(_dirichlet_rows(counts, prior.family_hyper(structure, key)).sum())


def bde_score_complete(structure: Structure, dataset: Dataset, prior: DirichletPrior = DirichletPrior()) -> float:
    """BDe log marginal likelihood of complete data; a sum of family terms."""
    if not dataset.is_complete():
        raise ValueError("bde_score_complete requires a dataset without missing cells")
    if structure.hidden:
        raise ValueError("bde_score_complete requires every variable to be observed")
    dataset.columns_for(structure)
    return sum(bde_family_complete(structure, dataset, k, prior) for k in structure.families())


# --- expected log Gamma ------------------------------------------------------------


@lru_cache(maxsize=None)
def gauss_hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E[f(Z)], Z ~ N(0, 1): E[f] ~ sum w_k f(z_k)."""
    x, w = np.polynomial.hermite.hermgauss(n)
    return x * math.sqrt(2.0), w / math.sqrt(math.pi)


def _summation(mu, sigma2, a, lo, hi):
    n = np.arange(lo, hi + 1, dtype=float)
    s = math.sqrt(sigma2)
    upper = special.ndtr((n + 0.5 - mu) / s)
    lower = special.ndtr((n - 0.5 - mu) / s)
    # Extreme bins absorb the Gaussian tails.
    upper[-1] = 1.0
    lower[0] = 0.0
    p = np.clip(upper - lower, 0.0, None)
    return float(np.dot(p, special.gammaln(n + a)) / p.sum())


def _integration(mu, sigma2, a, lo, hi, points):
    z, w = gauss_hermite(points)
    x = np.clip(mu + math.sqrt(sigma2) * z + a, lo + a, hi + a)
    return float(np.dot(w, special.gammaln(x)))


def _laplace(mu, sigma2, a, lo, hi):
    # Laplace's method on g(x) = f(x) * phi(x; mu + a, sigma2) with
    # f = log Gamma + shift, shift >= 0 chosen so f >= 1 on the search bracket
    # (log Gamma dips below zero on (1, 2), where log g is undefined).
    center = mu + a
    left = max(lo + a, 1e-6)
    right = max(hi + a, left)
    shift = max(0.0, 1.0 - math.lgamma(min(max(_LGAMMA_ARGMIN, left), right)))

    def dlog(x):
        return special.digamma(x) / (math.lgamma(x) + shift) - (x - center) / sigma2

    if dlog(left) <= 0:
        m = left
    elif dlog(right) >= 0:
        m = right
    else:
        lo_x, hi_x = left, right
        for _ in range(LAPLACE_BISECTION_STEPS):
            mid = 0.5 * (lo_x + hi_x)
            if dlog(mid) > 0:
                lo_x = mid
            else:
                hi_x = mid
        m = 0.5 * (lo_x + hi_x)
    fm = math.lgamma(m) + shift
    d1 = float(special.digamma(m))
    d2 = float(special.polygamma(1, m))
    curvature = 1.0 - sigma2 * (d2 / fm - (d1 / fm) ** 2)
    if curvature <= 0:
        # Not a proper interior maximum; the Gaussian expansion is meaningless.
        return math.lgamma(center)
    return fm * math.exp(-0.5 * (m - center) ** 2 / sigma2) / math.sqrt(curvature) - shift


def expected_log_gamma(mu, sigma2, prior_count, min_count, max_count, method: ExpectedScoreMethod = SUMMATION) -> float:
    """Approximate E[log Gamma(N + prior_count)] for a count N with the given moments."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    if not prior_count > 0:
        raise ValueError("prior_count must be positive")
    if min_count > max_count:
        raise ValueError("min_count exceeds max_count")
    mu = min(max(float(mu), min_count), max_count)
    if sigma2 == 0 or min_count == max_count:
        return math.lgamma(mu + prior_count)
    kind = method.kind
    if kind == "linear":
        return math.lgamma(mu + prior_count)
    if kind == "summation":
        if max_count - min_count > SUMMATION_MAX_BINS:
            warnings.warn("summation over more than 1e6 bins; using integration instead", RuntimeWarning)
            return _integration(mu, sigma2, prior_count, min_count, max_count, method.quadrature_points)
        return _summation(mu, sigma2, prior_count, int(min_count), int(max_count))
    if kind == "integration":
        return _integration(mu, sigma2, prior_count, min_count, max_count, method.quadrature_points)
    if kind == "laplace":
        if sigma2 < LAPLACE_MIN_VARIANCE:
            return math.lgamma(mu + prior_count)
        return _laplace(mu, sigma2, prior_count, min_count, max_count)
    raise ValueError("the exact method needs per-record probabilities; use exact_expected_log_gamma")


def poisson_binomial_pmf(probs, weights=None) -> np.ndarray:
    """Distribution of a sum of independent Bernoullis by convolution.

    ``weights[j]`` repeats ``probs[j]`` that many times.
    """
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, 1.0)
    weights = np.ones(len(probs), dtype=np.int64) if weights is None else np.asarray(weights, dtype=np.int64)
    pmf = np.ones(1)
    for p, w in zip(probs, weights):
        if w == 0 or p == 0.0:
            continue
        if p == 1.0:
            pmf = np.concatenate([np.zeros(w), pmf])
            continue
        pmf = np.convolve(pmf, sps.binom.pmf(np.arange(w + 1), w, p))
    return pmf


def exact_expected_log_gamma(probs, weights, prior_count: float, tol: float = 1e-12) -> float:
    """E[log Gamma(N + prior_count)] with N exactly Poisson-binomial."""
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, 1.0)
    weights = np.asarray(weights, dtype=np.int64)
    base = int(weights[probs >= 1.0 - tol].sum())
    frac = (probs > tol) & (probs < 1.0 - tol)
    pmf = poisson_binomial_pmf(probs[frac], weights[frac])
    n = np.arange(len(pmf)) + base
    return float(np.dot(pmf, special.gammaln(n + prior_count)))


def _expected_log_gamma_cells(mean, var, lo, hi, a, method, probs=None, weights=None) -> np.ndarray:
    mean = np.asarray(mean, dtype=float).ravel()
    out = special.gammaln(mean + np.broadcast_to(a, mean.shape).ravel())
    if method.kind == "linear":
        return out
    a = np.broadcast_to(a, mean.shape).ravel()
    var, lo, hi = np.asarray(var).ravel(), np.asarray(lo).ravel(), np.asarray(hi).ravel()
    todo = np.flatnonzero((var > 0) & (lo != hi))
    if method.kind == "exact":
        if not len(todo):
            return out
        if probs is None:
            raise ValueError("exact method requires per-record probabilities")
        flat = probs.reshape(len(probs), -1)
        for c in todo:
            out[c] = exact_expected_log_gamma(flat[:, c], weights, a[c])
        return out
    for c in todo:
        out[c] = expected_log_gamma(mean[c], var[c], a[c], lo[c], hi[c], method)
    return out


def expected_family_score(stats: FamilyStatistics, prior: DirichletPrior, method: ExpectedScoreMethod = SUMMATION) -> float:
    """E[log F(S)] for one family: per-cell terms minus per-parent-config totals plus the prior constant."""
    q, r = stats.mean.shape
    cell = prior.cell(r, q)
    agg_prior = cell * r
    cells = _expected_log_gamma_cells(
        stats.mean, stats.variance, stats.min_count, stats.max_count, cell, method, stats.probs, stats.weights
    )
    totals = _expected_log_gamma_cells(
        stats.agg_mean, stats.agg_variance, stats.agg_min, stats.agg_max, agg_prior, method, stats.agg_probs, stats.weights
    )
    # Differences against the prior terms, so that empty data scores exactly 0.
    return float((cells - special.gammaln(cell)).sum() - (totals - special.gammaln(agg_prior)).sum())


def expected_model_score(
    structure: Structure,
    ess: Mapping[FamilyKey, FamilyStatistics],
    prior: DirichletPrior = DirichletPrior(),
    method: ExpectedScoreMethod = SUMMATION,
    edge_penalty: float = 0.0,
) -> float:
    """Sum of expected family scores plus the (edge-penalty) log structure prior."""
    total = 0.0
    for key in structure.families():
        if key not in ess:
            raise KeyError(f"no statistics for family {structure.names[key.child]} <- {[structure.names[p] for p in key.parents]}")
        total += expected_family_score(ess[key], prior, method)
    return total - edge_penalty * structure.n_edges


# --- BIC and Cheeseman-Stutz --------------------------------------------------------


def map_parameters(stats: FamilyStatistics, prior: DirichletPrior) -> np.ndarray:
    """Posterior-mean CPT from expected counts."""
    q, r = stats.mean.shape
    post = stats.mean + prior.cell(r, q)
    return post / post.sum(axis=1, keepdims=True)


def _expected_loglik(mean: np.ndarray, theta: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(mean > 0, mean * np.log(theta), 0.0)
    return float(terms.sum())


def bic_family_score(stats: FamilyStatistics, theta: np.ndarray) -> float:
    q, r = stats.mean.shape
    penalty = 0.5 * q * (r - 1) * math.log(stats.n_records) if stats.n_records > 0 else 0.0
    return _expected_loglik(stats.mean, theta) - penalty


def bic_score(structure: Structure, ess: Mapping[FamilyKey, FamilyStatistics], params_hat: Parameters) -> float:
    """Expected log-likelihood at ``params_hat`` minus (d/2) log n."""
    return sum(bic_family_score(ess[k], params_hat.cpts[k.child]) for k in structure.families())


def cheeseman_stutz(
    structure: Structure,
    params_hat: Parameters,
    dataset: Dataset,
    prior: DirichletPrior = DirichletPrior(),
    ess: Mapping[FamilyKey, FamilyStatistics] | None = None,
    completion: CompletionModel | None = None,
) -> float:
    """log P(D_bar | M) - log P(D_bar | M, theta) + log P(D | M, theta).

    ``D_bar`` is the dataset completed fractionally with expected counts under
    (structure, params_hat).
    """
    if completion is None:
        completion = CompletionModel(structure, params_hat, dataset)
    if ess is None:
        ess = {k: completion.family_statistics(k) for k in structure.families()}
    completed = 0.0
    fitted = 0.0
    for key in structure.families():
        st = ess[key]
        completed += float(_dirichlet_rows(st.mean, prior.family_hyper(structure, key)).sum())
        fitted += _expected_loglik(st.mean, params_hat.cpts[key.child])
    return completed - fitted + completion.log_likelihood()


# --- cached family scoring ------------------------------------------------------------


class ScoreCache:
    """Family scores memoised for one completion model (generation).

    Not thread-safe for writes; confine to the search thread.
    """

    def __init__(self, generation=None):
        self.generation = generation
        self._scores: dict = {}
        self.hits = 0
        self.misses = 0

    def reset(self, generation) -> None:
        self.generation = generation
        self._scores.clear()

    def get(self, key: FamilyKey, method, compute: Callable[[], float], generation=None) -> float:
        if generation is not None and generation != self.generation:
            self.reset(generation)
        k = (key, method)
        try:
            value = self._scores[k]
        except KeyError:
            self.misses += 1
            value = self._scores[k] = compute()
            return value
        self.hits += 1
        return value

    def __len__(self):
        return len(self._scores)


class FamilyScorer:
    """Decomposable family score ``scorer(child, parents)`` for one completion model.

    ``score`` is ``'bde'`` (expected BDe with ``method``) or ``'bic'``
    (expected BIC at the posterior-mean parameters of each candidate family).
    """

    def __init__(
        self,
        completion: CompletionModel,
        prior: DirichletPrior = DirichletPrior(),
        method: ExpectedScoreMethod = SUMMATION,
        score: str = "bde",
        edge_penalty: float = 0.0,
        cache: ScoreCache | None = None,
    ):
        if score not in ("bde", "bic"):
            raise ValueError(f"unknown score {score!r}")
        self.completion = completion
        self.prior = prior
        self.method = method
        self.score = score
        self.edge_penalty = edge_penalty
        self.cache = cache if cache is not None else ScoreCache(completion.generation)
        if self.cache.generation != completion.generation:
            self.cache.reset(completion.generation)

    def family_score(self, key: FamilyKey) -> float:
        def compute():
            stats = self.completion.family_statistics(key)
            if self.score == "bic":
                value = bic_family_score(stats, map_parameters(stats, self.prior))
            else:
                value = expected_family_score(stats, self.prior, self.method)
            return value - self.edge_penalty * len(key.parents)

        tag = self.method if self.score == "bde" else "bic"
        return self.cache.get(key, tag, compute, generation=self.completion.generation)

    def __call__(self, child: int, parents=()) -> float:
        return self.family_score(FamilyKey(child, tuple(parents)))

    def total(self, structure: Structure) -> float:
        return sum(self.family_score(k) for k in structure.families())
