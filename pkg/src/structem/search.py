"""Greedy DAG search, the structural EM loop, and perturbation restarts."""
from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import Dataset
from .inference import InferenceError
from .model import FamilyKey, Parameters, Structure, Variable
from .param_em import EmConfig, em_fit
from .scoring import (
    SUMMATION,
    DirichletPrior,
    ExpectedScoreMethod,
    FamilyScorer,
    bic_score,
    cheeseman_stutz,
    map_parameters,
)

log = logging.getLogger(__name__)

FamilyScoreFn = Callable[[int, tuple], float]


@dataclass(frozen=True, order=True)
class EdgeMove:
    kind: str  # "add" | "delete" | "reverse"
    src: int
    dst: int

    def describe(self, structure: Structure) -> str:
        return f"{self.kind} {structure.names[self.src]}->{structure.names[self.dst]}"


def _path_avoiding(structure: Structure, src: int, dst: int, skip: tuple[int, int] | None = None) -> bool:
    """Directed path src ~> dst, optionally ignoring the single edge ``skip``."""
    children = structure.children()
    stack, seen = [src], {src}
    while stack:
        n = stack.pop()
        for c in children[n]:
            if skip is not None and (n, c) == skip:
                continue
            if c == dst:
                return True
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return False


def neighbors(structure: Structure, max_parents: int = 5) -> list[EdgeMove]:
    """All legal single-edge moves in lexicographic (kind, src, dst) order."""
    n = len(structure)
    parents = [set(p) for p in structure.parents]
    moves = []
    for v in range(n):
        for u in range(n):
            if u == v:
                continue
            if u in parents[v]:
                moves.append(EdgeMove("delete", u, v))
                if len(parents[u]) < max_parents and not _path_avoiding(structure, u, v, skip=(u, v)):
                    moves.append(EdgeMove("reverse", u, v))
            elif v not in parents[u] and len(parents[v]) < max_parents and not _path_avoiding(structure, v, u):
                moves.append(EdgeMove("add", u, v))
    moves.sort()
    return moves


def apply_move(structure: Structure, move: EdgeMove) -> Structure:
    u, v = move.src, move.dst
    ps = list(structure.parents)
    if move.kind == "add":
        ps[v] = tuple(sorted(ps[v] + (u,)))
    elif move.kind == "delete":
        ps[v] = tuple(p for p in ps[v] if p != u)
    elif move.kind == "reverse":
        ps[v] = tuple(p for p in ps[v] if p != u)
        ps[u] = tuple(sorted(ps[u] + (v,)))
    else:
        raise ValueError(f"unknown move kind {move.kind!r}")
    return Structure(structure.variables, tuple(ps))


def move_delta(structure: Structure, move: EdgeMove, scorer: FamilyScoreFn) -> float:
    """Score change of ``move``, rescoring only the families it touches."""
    u, v = move.src, move.dst
    pv = structure.parents[v]
    if move.kind == "add":
        return scorer(v, tuple(sorted(pv + (u,)))) - scorer(v, pv)
    if move.kind == "delete":
        return scorer(v, tuple(p for p in pv if p != u)) - scorer(v, pv)
    pu = structure.parents[u]
    return (
        scorer(v, tuple(p for p in pv if p != u))
        - scorer(v, pv)
        + scorer(u, tuple(sorted(pu + (v,))))
        - scorer(u, pu)
    )


def total_score(structure: Structure, scorer: FamilyScoreFn) -> float:
    return sum(scorer(i, structure.parents[i]) for i in range(len(structure)))


def _memoized(scorer: FamilyScoreFn) -> FamilyScoreFn:
    if isinstance(scorer, FamilyScorer):
        return scorer
    memo: dict = {}

    def wrapped(child, parents=()):
        key = (child, tuple(sorted(parents)))
        if key not in memo:
            memo[key] = scorer(*key)
        return memo[key]

    return wrapped


def hill_climb(
    initial: Structure,
    scorer: FamilyScoreFn,
    max_parents: int = 5,
    min_improvement: float = 1e-10,
    max_steps: int | None = None,
) -> Structure:
    """Apply the best strictly improving move until none is left.

    Ties go to the lexicographically smallest move.
    """
    scorer = _memoized(scorer)
    current = initial
    steps = 0
    while max_steps is None or steps < max_steps:
        best, best_delta = None, min_improvement
        for move in neighbors(current, max_parents):
            d = move_delta(current, move, scorer)
            if d > best_delta:
                best, best_delta = move, d
        if best is None:
            break
        current = apply_move(current, best)
        steps += 1
    return current


# --- structural EM ---------------------------------------------------------------------


@dataclass(frozen=True)
class SemConfig:
    max_sem_iters: int = 30
    score_method: ExpectedScoreMethod = SUMMATION
    score: str = "bde"  # or "bic"
    em: EmConfig = EmConfig()
    max_parents: int = 5
    n_edge_perturbations: int = 5
    random_walk_length: int = 20
    n_random_walks: int = 10
    time_limit: float | None = None  # seconds
    seed: int = 0
    edge_penalty: float = 0.0
    tol: float = 1e-9


@dataclass
class SemIteration:
    index: int
    expected_score: float  # Score(M_{n+1} : M_n)
    current_score: float  # Score(M_n : M_n)
    cheeseman_stutz: float  # of (M_n, theta_n)
    n_edges: int
    em_iterations: int
    structure: Structure | None = field(default=None, repr=False)


@dataclass
class SemDiagnostics:
    iterations: list[SemIteration] = field(default_factory=list)
    converged: bool = False
    failed: bool = False
    message: str = ""
    final_cheeseman_stutz: float = math.nan
    final_bic: float = math.nan
    restarts: list[dict] = field(default_factory=list)

    def to_tsv(self, header: bool = True) -> str:
        lines = ["iteration\texpected_score\tcheeseman_stutz\tedges"] if header else []
        for it in self.iterations:
            lines.append(f"{it.index}\t{it.expected_score:.10g}\t{it.cheeseman_stutz:.10g}\t{it.n_edges}")
        return "\n".join(lines) + "\n"


@dataclass
class SemResult:
    structure: Structure
    params: Parameters
    diagnostics: SemDiagnostics

    def __iter__(self):
        return iter((self.structure, self.params, self.diagnostics))

    def comparison_score(self, score: str) -> float:
        d = self.diagnostics
        return d.final_bic if score == "bic" else d.final_cheeseman_stutz


def _em_seed(seed: int, n: int) -> int:
    return int(np.random.SeedSequence([seed, n]).generate_state(1)[0])


def bayesian_sem(
    dataset: Dataset,
    initial: Structure,
    prior: DirichletPrior = DirichletPrior(),
    config: SemConfig = SemConfig(),
    initial_params: Parameters | None = None,
) -> SemResult:
    """Structural EM on expected (Bayesian or BIC) family scores.

    Each iteration fits parameters for M_n by EM, then hill-climbs from M_n on
    Score(. : M_n) with the completion model held fixed. Stops when the best
    structure found does not beat M_n by more than ``config.tol``.
    """
    if len(dataset) == 0:
        raise ValueError("bayesian_sem needs a non-empty dataset")
    diag = SemDiagnostics()
    complete = dataset.is_complete() and not initial.hidden
    current, warm = initial, initial_params
    fit = None
    visited: dict[Structure, tuple] = {}
    good = None  # (structure, fit) of the last fully fitted model

    def fit_params(structure, init, n):
        em_cfg = dataclasses.replace(config.em, init=init, seed=_em_seed(config.seed, n))
        return em_fit(structure, dataset, prior, em_cfg)

    def compare_value(structure, f):
        cs = cheeseman_stutz(structure, f.params, dataset, prior, completion=f.completion)
        ess = {k: f.completion.family_statistics(k) for k in structure.families()}
        return cs, bic_score(structure, ess, f.params)

    n = 0
    try:
        for n in range(config.max_sem_iters):
            fit = fit_params(current, warm, n)
            good = (current, fit)
            completion = fit.completion
            scorer = FamilyScorer(completion, prior, config.score_method, config.score, config.edge_penalty)
            now = scorer.total(current)
            cs, bic = compare_value(current, fit)
            visited[current] = (fit, cs, bic)
            nxt = hill_climb(current, scorer, config.max_parents)
            best = scorer.total(nxt)
            diag.iterations.append(SemIteration(n, best, now, cs, current.n_edges, fit.iterations, current))
            log.debug("SEM iteration %d: Q(M_n)=%.6f Q(M_n+1)=%.6f CS=%.6f", n, now, best, cs)
            if best - now <= config.tol:
                diag.converged = True
                break
            if nxt in visited:
                # Approximate expected scores can cycle; keep the best model on the cycle.
                k = 2 if config.score == "bic" else 1
                current = max(visited, key=lambda m: visited[m][k])
                fit = visited[current][0]
                diag.message = "structure cycle detected"
                break
            # Warm start: posterior-mean parameters of M_{n+1} under the old completion.
            warm = Parameters(tuple(map_parameters(completion.family_statistics(k), prior) for k in nxt.families()))
            current, fit = nxt, None
            if complete:
                # The completion is trivial, so Score(. : M_n) does not depend on n.
                diag.converged = True
                break
        if fit is None:
            fit = fit_params(current, warm, n + 1)
            good = (current, fit)
        diag.final_cheeseman_stutz, diag.final_bic = compare_value(current, fit)
    except InferenceError as exc:
        diag.failed = True
        diag.message = str(exc)
        log.warning("structural EM stopped on inference failure: %s", exc)
        if good is None:
            raise
        current, fit = good
    return SemResult(current, fit.params, diag)


# --- hidden variables and restarts ---------------------------------------------------------


def initial_hidden_structure(observed: Sequence[Variable], hidden: Sequence[Variable]) -> Structure:
    """Every hidden variable is a parent of every observed variable."""
    observed, hidden = list(observed), list(hidden)
    names = [v.name for v in observed + hidden]
    if len(set(names)) != len(names):
        raise ValueError("observed and hidden variable names must be disjoint")
    hidden = [v if v.hidden else Variable(v.name, v.states, True) for v in hidden]
    h_idx = tuple(range(len(observed), len(observed) + len(hidden)))
    parents = tuple([h_idx] * len(observed) + [()] * len(hidden))
    return Structure(tuple(observed) + tuple(hidden), parents)


def hidden_variables(k: int, prefix: str = "H") -> list[Variable]:
    return [Variable.binary(f"{prefix}{i}", hidden=True) for i in range(k)]


def random_chain_structure(variables: Sequence[Variable], rng: np.random.Generator) -> Structure:
    """A chain through all variables in random order."""
    order = rng.permutation(len(variables))
    edges = [(int(order[k]), int(order[k + 1])) for k in range(len(order) - 1)]
    return Structure.from_edges(variables, edges)


def hidden_moves(structure: Structure, max_parents: int = 5) -> list[EdgeMove]:
    """Edge additions and reversals that touch a hidden variable."""
    hidden = set(structure.hidden)
    return [
        m
        for m in neighbors(structure, max_parents)
        if m.kind in ("add", "reverse") and (m.src in hidden or m.dst in hidden)
    ]


def sem_with_restarts(
    dataset: Dataset,
    hidden: Sequence[Variable] | int = 0,
    prior: DirichletPrior = DirichletPrior(),
    config: SemConfig = SemConfig(),
    initial: Structure | None = None,
) -> SemResult:
    """Structural EM from the hidden-parents structure plus two tiers of perturbations.

    Tier 1 perturbs the neighbourhood of hidden variables (one added or
    reversed edge) up to ``n_edge_perturbations`` times; tier 2 takes
    ``random_walk_length`` random moves and reruns SEM and tier 1, up to
    ``n_random_walks`` times. Runs are compared by Cheeseman-Stutz (or by BIC
    in BIC mode) and only improvements are kept.
    """
    if isinstance(hidden, int):
        hidden = hidden_variables(hidden)
    if initial is None:
        initial = initial_hidden_structure(dataset.variables, hidden)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 7919]))
    start = time.monotonic()

    def out_of_time():
        return config.time_limit is not None and time.monotonic() - start >= config.time_limit

    def run(structure, tag, cfg=None):
        if cfg is None:
            cfg = dataclasses.replace(config, seed=int(rng.integers(2**31 - 1)))
        return bayesian_sem(dataset, structure, prior, cfg), tag

    def better(a, b):
        return a.comparison_score(config.score) > b.comparison_score(config.score)

    log_rows = []

    def tier1(base):
        best = base
        for _ in range(config.n_edge_perturbations):
            if out_of_time():
                break
            moves = hidden_moves(best.structure, config.max_parents)
            if not moves:
                break
            move = moves[int(rng.integers(len(moves)))]
            res, _ = run(apply_move(best.structure, move), "edge")
            accepted = better(res, best)
            log_rows.append({"tier": 1, "move": move.describe(best.structure), "score": res.comparison_score(config.score), "accepted": accepted})
            if accepted:
                best = res
        return best

    best, _ = run(initial, "initial", config)
    log_rows.append({"tier": 0, "move": "", "score": best.comparison_score(config.score), "accepted": True})
    best = tier1(best)
    for _ in range(config.n_random_walks):
        if out_of_time():
            break
        s = best.structure
        for _ in range(config.random_walk_length):
            moves = neighbors(s, config.max_parents)
            if not moves:
                break
            s = apply_move(s, moves[int(rng.integers(len(moves)))])
        res, _ = run(s, "walk")
        res = tier1(res)
        accepted = better(res, best)
        log_rows.append({"tier": 2, "move": "random walk", "score": res.comparison_score(config.score), "accepted": accepted})
        if accepted:
            best = res
    best.diagnostics.restarts = log_rows
    return best
