"""Command-line interface: learn, sample, corrupt, score, evaluate, benchmark.

Exit status is 0 on success, 1 on a usage error and 2 when an input file,
network or dataset is unusable.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys

from .benchmark import BenchmarkSpec, run_benchmark, write_csv
from .data import ancestral_sample, inject_missing_mcar, read_dataset, write_dataset
from .evaluation import InfiniteDivergence, kl_divergence, log_loss
from .inference import InferenceError, accumulate_ess
from .model import ModelError, read_network, write_network
from .param_em import EmConfig, em_fit
from .scoring import DirichletPrior, bic_score, cheeseman_stutz, expected_model_score, parse_method
from .search import SemConfig, hidden_variables, sem_with_restarts

METHOD_CHOICES = ["bde-linear", "bde-summation", "bde-integration", "bde-laplace", "bde-exact", "bic"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _fraction(text):
    v = float(text)
    if not 0.0 <= v < 1.0:
        raise argparse.ArgumentTypeError(f"fraction must lie in [0, 1), got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="structem", description="Bayesian structural EM for discrete Bayesian networks.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("learn", help="learn a network from a CSV dataset")
    q.add_argument("--data", required=True, help="training CSV ('?' marks a missing cell)")
    q.add_argument("--hidden", type=_nonneg_int, default=0, help="number of binary hidden variables (named H0, H1, ...)")
    q.add_argument("--method", choices=METHOD_CHOICES, default="bde-summation")
    q.add_argument("--ess", type=_positive_float, default=1.0, help="BDe equivalent sample size")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", required=True, help="output network JSON")
    q.add_argument("--max-parents", type=_positive_int, default=5)
    q.add_argument("--time-limit", type=_positive_float, default=None, help="seconds, checked between restarts")
    q.add_argument("--edge-perturbations", type=_nonneg_int, default=5, help="tier-1 restarts")
    q.add_argument("--random-walks", type=_nonneg_int, default=10, help="tier-2 restarts")
    q.add_argument("--schema", default=None, help="network JSON whose variables fix the state labels")
    q.add_argument("--missing-marker", default="?")

    q = sub.add_parser("sample", help="draw complete records from a network")
    q.add_argument("--net", required=True)
    q.add_argument("--n", type=_nonneg_int, required=True)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", required=True)
    q.add_argument("--missing-marker", default="?")

    q = sub.add_parser("corrupt", help="remove cells completely at random")
    q.add_argument("--data", required=True)
    q.add_argument("--fraction", type=_fraction, required=True)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", required=True)
    q.add_argument("--schema", default=None, help="network JSON whose variables fix the state labels")
    q.add_argument("--missing-marker", default="?")

    q = sub.add_parser("score", help="expected model score and Cheeseman-Stutz of a network")
    q.add_argument("--net", required=True, help="network JSON; its CPTs form the completion model")
    q.add_argument("--data", required=True)
    q.add_argument("--method", choices=METHOD_CHOICES, default="bde-summation")
    q.add_argument("--ess", type=_positive_float, default=1.0)
    q.add_argument("--missing-marker", default="?")

    q = sub.add_parser("evaluate", help="KL divergence and held-out log loss")
    q.add_argument("--true", required=True, dest="true_net")
    q.add_argument("--learned", required=True)
    q.add_argument("--test", default=None, help="test CSV for log loss")
    q.add_argument("--mc", type=_positive_int, default=None, help="Monte Carlo KL with this many samples")
    q.add_argument("--seed", type=int, default=0, help="seed of the Monte Carlo sample")
    q.add_argument("--missing-marker", default="?")

    q = sub.add_parser("benchmark", help="run a benchmark spec and write a CSV table")
    q.add_argument("--spec", required=True, help="benchmark spec JSON")
    q.add_argument("--out", required=True)
    q.add_argument("--threads", type=_positive_int, default=None, help="worker processes (default: STRUCTEM_THREADS or 1)")
    return p


def _read_net(path, need_params=True):
    structure, params = read_network(path)
    if need_params and params is None:
        raise ModelError(f"{path}: network has no 'cpt' section")
    return structure, params


def _observed_vars(structure):
    return [structure.variables[i] for i in structure.observed]


def _schema(path):
    return _observed_vars(_read_net(path, False)[0]) if path else None


def cmd_learn(args):
    data = read_dataset(args.data, _schema(args.schema), args.missing_marker)
    if len(data) == 0:
        raise ModelError(f"{args.data}: no records")
    score, est = parse_method(args.method)
    cfg = SemConfig(
        score=score,
        score_method=est,
        max_parents=args.max_parents,
        time_limit=args.time_limit,
        n_edge_perturbations=args.edge_perturbations,
        n_random_walks=args.random_walks,
        seed=args.seed,
    )
    result = sem_with_restarts(data, hidden_variables(args.hidden), DirichletPrior(args.ess), cfg)
    write_network(args.out, result.structure, result.params)
    d = result.diagnostics
    sys.stderr.write(d.to_tsv())
    sys.stderr.write(f"final\t\t{d.final_cheeseman_stutz:.10g}\t{result.structure.n_edges}\n")
    if d.failed:
        print(f"warning: {d.message}", file=sys.stderr)


def cmd_sample(args):
    structure, params = _read_net(args.net)
    write_dataset(args.out, ancestral_sample(structure, params, args.n, args.seed), args.missing_marker)


def cmd_corrupt(args):
    data = read_dataset(args.data, _schema(args.schema), args.missing_marker)
    write_dataset(args.out, inject_missing_mcar(data, args.fraction, args.seed), args.missing_marker)


def cmd_score(args):
    structure, params = _read_net(args.net, False)
    data = read_dataset(args.data, _observed_vars(structure), args.missing_marker)
    prior = DirichletPrior(args.ess)
    score, est = parse_method(args.method)
    if params is None:
        params = em_fit(structure, data, prior, EmConfig()).params
    ess = accumulate_ess(structure, params, data, structure.families())
    if score == "bic":
        value = bic_score(structure, ess, params)
    else:
        value = expected_model_score(structure, ess, prior, est)
    cs = cheeseman_stutz(structure, params, data, prior, ess=ess)
    print(f"expected_score\t{float(value)!r}")
    print(f"cheeseman_stutz\t{float(cs)!r}")


def cmd_evaluate(args):
    true_net = _read_net(args.true_net)
    learned = _read_net(args.learned)
    try:
        if args.mc is None:
            kl = kl_divergence(true_net, learned)
        else:
            kl = kl_divergence(true_net, learned, mode="mc", n=args.mc, seed=args.seed)
    except InfiniteDivergence:
        kl = math.inf
    print(f"kl\t{float(kl)!r}")
    if args.test:
        test = read_dataset(args.test, _observed_vars(learned[0]), args.missing_marker)
        try:
            loss = log_loss(learned, test)
        except InfiniteDivergence as exc:
            print(f"log_loss\tinf\t# {exc}")
        else:
            print(f"log_loss\t{float(loss)!r}")


def cmd_benchmark(args):
    spec = BenchmarkSpec.from_json(args.spec)
    write_csv(args.out, run_benchmark(spec, threads=args.threads))


COMMANDS = {
    "learn": cmd_learn,
    "sample": cmd_sample,
    "corrupt": cmd_corrupt,
    "score": cmd_score,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ModelError, InferenceError, ValueError, OSError) as exc:
        print(f"structem {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
