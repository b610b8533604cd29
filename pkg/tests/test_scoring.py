import math
import warnings

import numpy as np
import pytest
from oracles import completion_weights, poisson_binomial_brute, random_network, sequential_predictive, true_log_marginal

from structem import (
    EXACT,
    INTEGRATION,
    LAPLACE,
    LINEAR,
    MISSING,
    SUMMATION,
    CompletionModel,
    Dataset,
    DirichletPrior,
    FamilyScorer,
    Parameters,
    ScoreCache,
    Structure,
    Variable,
    accumulate_ess,
    ancestral_sample,
    bde_score_complete,
    bic_score,
    cheeseman_stutz,
    expected_family_score,
    expected_log_gamma,
    expected_model_score,
    inject_missing_mcar,
    log_dirichlet_factor,
)
from structem.inference import statistics_from_counts
from structem.param_em import EmConfig, em_fit
from structem.scoring import (
    ExpectedScoreMethod,
    bde_family_complete,
    exact_expected_log_gamma,
    family_counts,
    gauss_hermite,
    map_parameters,
    parse_method,
    poisson_binomial_pmf,
)

APPROX = [LINEAR, SUMMATION, INTEGRATION, LAPLACE]


class TestDirichletFactor:
    def test_empty_counts(self):
        assert log_dirichlet_factor([0, 0], [1, 1]) == 0.0

    def test_one_each(self):
        assert log_dirichlet_factor([1, 1], [1, 1]) == pytest.approx(math.log(1 / 6), rel=1e-12)

    def test_two_of_one(self):
        assert log_dirichlet_factor([2, 0], [1, 1]) == pytest.approx(math.log(1 / 3), rel=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_sequential_predictive(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, 6))
        counts = rng.integers(0, 21, size=k)
        priors = rng.uniform(0.05, 3.0, size=k)
        assert log_dirichlet_factor(counts, priors) == pytest.approx(sequential_predictive(counts, priors), rel=1e-10, abs=1e-12)

    def test_fractional_counts_allowed(self):
        v = log_dirichlet_factor([0.5, 1.25], [1, 1])
        assert math.isfinite(v)

    @pytest.mark.parametrize("counts,priors", [([1, 1], [1, 0]), ([1, -1], [1, 1]), ([1], [1, 1]), ([], [])])
    def test_errors(self, counts, priors):
        with pytest.raises(ValueError):
            log_dirichlet_factor(counts, priors)


class TestBdeComplete:
    def test_empty_dataset_is_zero(self):
        v = [Variable.binary("A"), Variable.binary("B")]
        s = Structure.from_edges(v, [("A", "B")])
        assert bde_score_complete(s, Dataset(tuple(v), np.zeros((0, 2), dtype=int))) == 0.0

    def test_single_variable_two_records(self):
        v = (Variable.binary("A"),)
        d = Dataset(v, [[0], [1]])
        assert bde_score_complete(Structure(v), d) == pytest.approx(math.log(1 / 8), rel=1e-12)

    def test_decomposes_over_disconnected_variables(self):
        v = (Variable.binary("A"), Variable("B", ("x", "y", "z")))
        d = Dataset(v, [[0, 2], [1, 1], [1, 2], [0, 0]])
        both = bde_score_complete(Structure(v), d)
        a = bde_score_complete(Structure(v[:1]), Dataset(v[:1], d.values[:, :1]))
        b = bde_score_complete(Structure(v[1:]), Dataset(v[1:], d.values[:, 1:]))
        assert both == pytest.approx(a + b, abs=1e-12)

    def test_adding_record_adds_log_predictive(self):
        v = [Variable.binary("A"), Variable.binary("B")]
        s = Structure.from_edges(v, [("A", "B")])
        d = ancestral_sample(s, Parameters((np.array([[0.4, 0.6]]), np.array([[0.7, 0.3], [0.2, 0.8]]))), 30, seed=1)
        new = np.array([1, 0])
        prior = DirichletPrior(1.0)
        # Predictive under the posterior given d, family by family.
        pred = 0.0
        for key in s.families():
            counts = family_counts(s, d, key)
            alpha = prior.family_hyper(s, key) + counts
            row = 0 if not key.parents else int(new[key.parents[0]])
            pred += math.log(alpha[row, new[key.child]] / alpha[row].sum())
        grown = Dataset(tuple(v), np.vstack([d.values, new]))
        assert bde_score_complete(s, grown, prior) - bde_score_complete(s, d, prior) == pytest.approx(pred, abs=1e-10)

    def test_missing_rejected(self):
        v = (Variable.binary("A"),)
        with pytest.raises(ValueError):
            bde_score_complete(Structure(v), Dataset(v, [[MISSING]]))


class TestPrior:
    def test_uniform_cell_hyperparameters(self):
        v = [Variable("A", ("a", "b", "c")), Variable.binary("B")]
        s = Structure.from_edges(v, [("A", "B")])
        h = DirichletPrior(6.0).family_hyper(s, s.family(1))
        assert h.shape == (3, 2) and np.all(h == 1.0)

    def test_ess_must_be_positive(self):
        with pytest.raises(ValueError):
            DirichletPrior(0.0)

    def test_quadrature_points_at_least_two(self):
        with pytest.raises(ValueError):
            ExpectedScoreMethod("integration", 1)

    @pytest.mark.parametrize("name,score,kind", [("bic", "bic", "linear"), ("bde-laplace", "bde", "laplace"), ("BDE-Summation", "bde", "summation")])
    def test_parse_method(self, name, score, kind):
        s, m = parse_method(name)
        assert s == score and m.kind == kind

    def test_parse_method_rejects_unknown(self):
        with pytest.raises(ValueError):
            parse_method("bde-magic")


class TestExpectedLogGamma:
    @pytest.mark.parametrize("method", APPROX)
    def test_degenerate_distribution(self, method):
        assert expected_log_gamma(5, 0.0, 1.0, 5, 5, method) == pytest.approx(math.log(120), rel=1e-14)
        assert expected_log_gamma(5, 0.0, 1.0, 0, 9, method) == pytest.approx(math.log(120), rel=1e-14)

    def test_three_record_example(self):
        # N - 1 ~ Binomial(2, 1/2): N in {1, 2, 3} with mass {1/4, 1/2, 1/4}, mean 2.
        p = np.array([0.5, 0.5, 1.0])
        mu, var = p.sum(), (p * (1 - p)).sum()
        exact = 0.5 * math.log(2) + 0.25 * math.log(6)
        assert exact_expected_log_gamma(p, np.ones(3, dtype=int), 1.0) == pytest.approx(exact, rel=1e-12)
        summ = expected_log_gamma(mu, var, 1.0, 1, 3, SUMMATION)
        assert abs(summ - exact) <= 0.1 * exact
        lin = expected_log_gamma(mu, var, 1.0, 1, 3, LINEAR)
        assert lin == pytest.approx(math.log(2), rel=1e-14) and lin < exact

    @pytest.mark.parametrize("kw", [dict(sigma2=-1.0), dict(prior_count=0.0), dict(min_count=4, max_count=3)])
    def test_errors(self, kw):
        args = dict(mu=2.0, sigma2=1.0, prior_count=1.0, min_count=0, max_count=4)
        args.update(kw)
        with pytest.raises(ValueError):
            expected_log_gamma(method=SUMMATION, **args)

    def test_summation_bounded_by_support(self):
        # Folded tails keep all mass on [min, max].
        v = expected_log_gamma(3.0, 400.0, 0.5, 2, 6, SUMMATION)
        assert math.lgamma(2.5) <= v <= math.lgamma(6.5)

    def test_integration_respects_truncation(self):
        v = expected_log_gamma(3.0, 400.0, 0.5, 2, 6, INTEGRATION)
        assert math.lgamma(2.5) - 1e-12 <= v <= math.lgamma(6.5) + 1e-12

    def test_laplace_tiny_variance_is_linear(self):
        assert expected_log_gamma(4.0, 1e-13, 1.0, 0, 8, LAPLACE) == math.lgamma(5.0)

    def test_summation_bin_cap_falls_back_to_integration(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            v = expected_log_gamma(1e6, 1e5, 1.0, 0, 2_000_001, SUMMATION)
        assert any("integration" in str(w.message) for w in caught)
        assert v == expected_log_gamma(1e6, 1e5, 1.0, 0, 2_000_001, INTEGRATION)

    def test_large_counts_make_linear_accurate(self):
        rng = np.random.default_rng(4)
        p = rng.uniform(0.3, 0.7, size=2000)
        exact = exact_expected_log_gamma(p, np.ones(2000, dtype=int), 1.0)
        lin = expected_log_gamma(p.sum(), (p * (1 - p)).sum(), 1.0, 0, 2000, LINEAR)
        assert abs(lin - exact) / exact < 1e-4

    @pytest.mark.parametrize("method", [SUMMATION, INTEGRATION, LAPLACE])
    def test_moderate_counts_close_to_exact(self, method):
        rng = np.random.default_rng(9)
        p = rng.uniform(0.1, 0.9, size=60)
        exact = exact_expected_log_gamma(p, np.ones(60, dtype=int), 1.0)
        v = expected_log_gamma(p.sum(), (p * (1 - p)).sum(), 1.0, 0, 60, method)
        assert abs(v - exact) / exact < 0.01

    def test_summation_converges_with_record_count(self):
        rng = np.random.default_rng(12)
        err = {10: [], 100: []}
        for _ in range(20):
            for n in err:
                p = np.where(rng.random(n) < 0.7, 1.0, rng.random(n))
                exact = exact_expected_log_gamma(p, np.ones(n, dtype=int), 1.0)
                lo, hi = int((p >= 1 - 1e-12).sum()), int((p > 1e-12).sum())
                v = expected_log_gamma(p.sum(), (p * (1 - p)).sum(), 1.0, lo, hi, SUMMATION)
                err[n].append(abs(v - exact) / max(exact, 1e-12))
        assert np.mean(err[100]) < np.mean(err[10])


class TestPoissonBinomial:
    @pytest.mark.parametrize("seed", range(4))
    def test_dp_matches_brute_force(self, seed):
        p = np.random.default_rng(seed).random(8)
        assert np.allclose(poisson_binomial_pmf(p), poisson_binomial_brute(p), atol=1e-14)

    def test_weights_repeat_probabilities(self):
        p = np.array([0.2, 0.7])
        assert np.allclose(poisson_binomial_pmf(p, [2, 3]), poisson_binomial_brute([0.2, 0.2, 0.7, 0.7, 0.7]), atol=1e-14)


class TestGaussHermite:
    def test_monomials_exact_to_degree_31(self):
        x, w = gauss_hermite(16)
        for k in range(32):
            want = 0.0 if k % 2 else float(math.prod(range(k - 1, 0, -2)))
            got = float(np.dot(w, x**k))
            # Odd moments vanish; measure their error against the moment's scale.
            scale = max(abs(want), float(np.dot(w, np.abs(x) ** k)))
            assert abs(got - want) <= 1e-8 * scale

    def test_weights_sum_to_one(self):
        assert gauss_hermite(16)[1].sum() == pytest.approx(1.0, abs=1e-14)


def _complete_instance(seed):
    rng = np.random.default_rng(seed)
    s, p = random_network(rng, 4, max_arity=3, max_parents=2)
    return s, ancestral_sample(s, p, int(rng.integers(1, 80)), seed)


class TestExpectedFamilyScore:
    @pytest.mark.parametrize("method", APPROX + [EXACT])
    def test_complete_data_equals_bde(self, method):
        s, d = _complete_instance(2)
        prior = DirichletPrior(1.0)
        for key in s.families():
            st = statistics_from_counts(key, family_counts(s, d, key))
            assert expected_family_score(st, prior, method) == pytest.approx(bde_family_complete(s, d, key, prior), abs=1e-9)

    def test_zero_records(self):
        s, _ = _complete_instance(0)
        key = s.family(1)
        st = statistics_from_counts(key, np.zeros((s.n_parent_configs(1), s.variables[1].arity)))
        assert expected_family_score(st, DirichletPrior(), SUMMATION) == 0.0

    def test_two_records_one_missing_cell(self):
        v = [Variable.binary("A"), Variable.binary("B")]
        s = Structure.from_edges(v, [("A", "B")])
        p = Parameters((np.array([[0.5, 0.5]]), np.array([[0.6, 0.4], [0.3, 0.7]])))
        d = Dataset(tuple(v), [[0, 1], [0, MISSING]])
        prior = DirichletPrior(1.0)
        key = s.family(1)
        st = accumulate_ess(s, p, d, [key])[key]
        exact = sum(w * bde_family_complete(s, c, key, prior) for c, w in completion_weights(s, p, d))
        got = expected_family_score(st, prior, SUMMATION)
        assert abs(got - exact) <= 0.1 * abs(exact)
        assert expected_family_score(st, prior, EXACT) == pytest.approx(exact, abs=1e-12)


class TestExpectedModelScore:
    @pytest.mark.parametrize("method", APPROX)
    def test_complete_data_equals_bde(self, method):
        s, d = _complete_instance(5)
        ess = {k: statistics_from_counts(k, family_counts(s, d, k)) for k in s.families()}
        assert expected_model_score(s, ess, DirichletPrior(), method) == pytest.approx(bde_score_complete(s, d), abs=1e-9)

    def test_disconnected_is_sum_of_families(self):
        s, d = _complete_instance(7)
        empty = Structure(s.variables)
        ess = {k: statistics_from_counts(k, family_counts(empty, d, k)) for k in empty.families()}
        total = expected_model_score(empty, ess, DirichletPrior(), SUMMATION)
        assert total == pytest.approx(sum(expected_family_score(ess[k], DirichletPrior(), SUMMATION) for k in empty.families()), abs=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_exact_method_matches_enumerated_q(self, seed):
        rng = np.random.default_rng(seed)
        v = [Variable.binary(n) for n in "ABC"]
        current = Structure.from_edges(v, [("A", "B")])
        params = Parameters(tuple(rng.dirichlet([1, 1], size=current.n_parent_configs(i)) for i in range(3)))
        d = inject_missing_mcar(ancestral_sample(current, params, 6, seed), 0.25, seed + 10)
        candidate = Structure.from_edges(v, [("A", "C"), ("B", "C")])
        prior = DirichletPrior(1.0)
        ess = accumulate_ess(current, params, d, candidate.families())
        q = sum(w * bde_score_complete(candidate, c, prior) for c, w in completion_weights(current, params, d))
        assert expected_model_score(candidate, ess, prior, EXACT) == pytest.approx(q, abs=1e-9)

    def test_missing_family_named(self):
        s, d = _complete_instance(5)
        with pytest.raises(KeyError, match=s.names[0]):
            expected_model_score(s, {}, DirichletPrior(), SUMMATION)

    def test_edge_penalty(self):
        s, d = _complete_instance(5)
        ess = {k: statistics_from_counts(k, family_counts(s, d, k)) for k in s.families()}
        base = expected_model_score(s, ess, DirichletPrior(), LINEAR)
        assert expected_model_score(s, ess, DirichletPrior(), LINEAR, edge_penalty=0.5) == pytest.approx(base - 0.5 * s.n_edges)


class TestBic:
    def test_three_one_split(self):
        v = (Variable.binary("A"),)
        s = Structure(v)
        d = Dataset(v, [[0], [0], [0], [1]])
        prior = DirichletPrior(1.0)
        ess = {k: statistics_from_counts(k, family_counts(s, d, k)) for k in s.families()}
        theta = Parameters(tuple(map_parameters(ess[k], prior) for k in s.families()))
        t = 3.5 / 5.0
        assert theta.cpts[0][0, 0] == pytest.approx(t)
        assert bic_score(s, ess, theta) == pytest.approx(3 * math.log(t) + math.log(1 - t) - 0.5 * math.log(4), abs=1e-12)

    def test_complete_data_classical_bic(self):
        s, d = _complete_instance(3)
        prior = DirichletPrior()
        ess = {k: statistics_from_counts(k, family_counts(s, d, k)) for k in s.families()}
        theta = Parameters(tuple(map_parameters(ess[k], prior) for k in s.families()))
        ll = sum(math.log(theta.cpts[i][_row(s, i, r), r[i]]) for r in d.values for i in range(len(s)))
        dim = sum(s.n_parent_configs(i) * (v.arity - 1) for i, v in enumerate(s.variables))
        assert bic_score(s, ess, theta) == pytest.approx(ll - 0.5 * dim * math.log(len(d)), abs=1e-9)

    def test_adding_parent_never_lowers_fit_and_raises_penalty(self):
        rng = np.random.default_rng(1)
        v = [Variable.binary("A"), Variable.binary("B")]
        d = Dataset(tuple(v), rng.integers(0, 2, size=(50, 2)))
        fit, penalty = {}, {}
        for name, s in {"empty": Structure(tuple(v)), "edge": Structure.from_edges(v, [("A", "B")])}.items():
            ess = {k: statistics_from_counts(k, family_counts(s, d, k)) for k in s.families()}
            # Maximum-likelihood parameters, for which nesting makes the fit term monotone.
            theta = Parameters(tuple(ess[k].mean / ess[k].mean.sum(axis=1, keepdims=True) for k in s.families()))
            fit[name] = sum(float((ess[k].mean * np.log(theta.cpts[k.child])).sum()) for k in s.families())
            penalty[name] = fit[name] - bic_score(s, ess, theta)
        assert fit["edge"] >= fit["empty"] - 1e-12
        assert penalty["edge"] > penalty["empty"]


def _row(s, i, rec):
    idx = 0
    for p in s.parents[i]:
        idx = idx * s.variables[p].arity + rec[p]
    return idx


class TestCheesemanStutz:
    def test_complete_data_equals_bde(self):
        s, d = _complete_instance(4)
        prior = DirichletPrior()
        fit = em_fit(s, d, prior)
        assert cheeseman_stutz(s, fit.params, d, prior) == pytest.approx(bde_score_complete(s, d, prior), abs=1e-9)

    @pytest.mark.parametrize("seed", range(3))
    def test_close_to_true_marginal(self, seed):
        rng = np.random.default_rng(seed)
        v = [Variable.binary("A"), Variable.binary("B")]
        a = rng.integers(0, 2, 40)
        b = np.where(rng.random(40) < 0.85, a, 1 - a)
        vals = np.stack([a, b], 1)
        vals.flat[rng.choice(80, 4, replace=False)] = MISSING
        d = Dataset(tuple(v), vals)
        s = Structure.from_edges(v, [("A", "B")])
        prior = DirichletPrior()
        fit = em_fit(s, d, prior, EmConfig(max_iters=500, tol=1e-12))
        cs = cheeseman_stutz(s, fit.params, d, prior)
        truth = true_log_marginal(s, d, prior)
        baseline = true_log_marginal(Structure(tuple(v)), d, prior)
        assert math.isfinite(cs)
        assert abs(cs - truth) <= 0.15 * abs(truth - baseline)

    def test_hidden_variable_finite(self):
        v = [Variable.binary("H", hidden=True), Variable.binary("X"), Variable.binary("Y")]
        s = Structure.from_edges(v, [("H", "X"), ("H", "Y")])
        p = Parameters((np.array([[0.5, 0.5]]), np.array([[0.9, 0.1], [0.2, 0.8]]), np.array([[0.8, 0.2], [0.1, 0.9]])))
        d = ancestral_sample(s, p, 30, seed=0)
        fit = em_fit(s, d)
        assert math.isfinite(cheeseman_stutz(s, fit.params, d))


class TestScoreCache:
    def test_cached_scores_bit_identical(self):
        rng = np.random.default_rng(3)
        s, p = random_network(rng, 4, max_arity=3)
        d = inject_missing_mcar(ancestral_sample(s, p, 60, 3), 0.3, 4)
        cm = CompletionModel(s, p, d)
        scorer = FamilyScorer(cm, DirichletPrior(), SUMMATION)
        for key in s.families():
            direct = expected_family_score(cm.family_statistics(key), DirichletPrior(), SUMMATION)
            assert scorer.family_score(key) == direct
            assert scorer.family_score(key) == direct
        assert scorer.cache.hits >= len(s.families())

    def test_new_generation_invalidates(self):
        cache = ScoreCache(generation=1)
        key = Structure((Variable.binary("A"),)).family(0)
        assert cache.get(key, SUMMATION, lambda: 1.0) == 1.0
        assert cache.get(key, SUMMATION, lambda: 2.0) == 1.0
        assert cache.get(key, SUMMATION, lambda: 3.0, generation=2) == 3.0
        assert cache.generation == 2
