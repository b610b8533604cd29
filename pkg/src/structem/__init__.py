"""Bayesian structural EM for discrete Bayesian networks with missing values and hidden variables."""
from .data import (
    MISSING,
    Dataset,
    ancestral_sample,
    inject_missing_mcar,
    read_dataset,
    sample_dirichlet_parameters,
    write_dataset,
)
from .evaluation import InfiniteDivergence, kl_divergence, log_loss
from .inference import (
    CompletionModel,
    FamilyStatistics,
    InferenceError,
    ZeroProbabilityError,
    accumulate_ess,
    posterior_marginal,
    record_family_posterior,
)
from .model import (
    FamilyKey,
    ModelError,
    Parameters,
    Structure,
    Variable,
    log_likelihood_complete,
    read_network,
    validate,
    write_network,
)
from .param_em import EmConfig, em_fit
from .scoring import (
    EXACT,
    INTEGRATION,
    LAPLACE,
    LINEAR,
    SUMMATION,
    DirichletPrior,
    ExpectedScoreMethod,
    FamilyScorer,
    ScoreCache,
    bde_score_complete,
    bic_score,
    cheeseman_stutz,
    expected_family_score,
    expected_log_gamma,
    expected_model_score,
    log_dirichlet_factor,
)
from .search import (
    EdgeMove,
    SemConfig,
    bayesian_sem,
    hill_climb,
    initial_hidden_structure,
    neighbors,
    sem_with_restarts,
)

__version__ = "0.1.0"
