"""Reproducible learning benchmarks: sample, corrupt, learn, evaluate, tabulate.

One row per (size, missing fraction, hidden count, method, replicate) plus a
summary row per cell with the mean and sample standard deviation (n - 1).
Methods of the same replicate share the training set and the search seed.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import ancestral_sample, inject_missing_mcar
from .evaluation import kl_divergence, log_loss
from .model import Parameters, Structure, read_network
from .param_em import EmConfig
from .scoring import DirichletPrior, parse_method
from .search import SemConfig, bayesian_sem, hidden_variables, random_chain_structure, sem_with_restarts

COLUMNS = [
    "kind", "size", "fraction", "hidden", "method", "replicate",
    "kl", "kl_sd", "log_loss", "log_loss_sd", "log_loss_gap", "log_loss_gap_sd", "edges",
]


@dataclass
class BenchmarkSpec:
    """What to run. ``experiment`` is ``'missing'`` (random chain start, plain
    structural EM, as for missing values) or ``'hidden'`` (hidden-parents start
    with perturbation restarts)."""

    generator: str | tuple[Structure, Parameters]
    sizes: list[int]
    missing_fractions: list[float] = field(default_factory=lambda: [0.0])
    hidden_counts: list[int] = field(default_factory=lambda: [0])
    methods: list[str] = field(default_factory=lambda: ["bde-summation", "bic"])
    replicates: int = 5
    seed: int = 0
    time_limit: float | None = None
    experiment: str = "missing"
    test_size: int = 2000
    ess: float = 1.0
    max_parents: int = 5
    max_sem_iters: int = 30
    em_max_iters: int = 100
    n_edge_perturbations: int = 5
    n_random_walks: int = 10
    random_walk_length: int = 20

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if any(not 0.0 <= f < 1.0 for f in self.missing_fractions):
            raise ValueError("missing fractions must lie in [0, 1)")
        if any(s < 1 for s in self.sizes):
            raise ValueError("sizes must be >= 1")
        if any(h < 0 for h in self.hidden_counts):
            raise ValueError("hidden counts must be >= 0")
        if self.experiment not in ("missing", "hidden"):
            raise ValueError("experiment must be 'missing' or 'hidden'")
        for m in self.methods:
            parse_method(m)

    @classmethod
    def from_json(cls, path) -> "BenchmarkSpec":
        doc = json.loads(Path(path).read_text())
        gen = doc.get("generator")
        if isinstance(gen, str) and not os.path.isabs(gen):
            doc["generator"] = str(Path(path).parent / gen)
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ValueError(f"{path}: {exc}") from None

    def network(self) -> tuple[Structure, Parameters]:
        if isinstance(self.generator, tuple):
            return self.generator
        structure, params = read_network(self.generator)
        if params is None:
            raise ValueError(f"{self.generator}: generator network has no CPTs")
        return structure, params


def _seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _frac_key(f: float) -> int:
    return int(round(f * 1_000_000))


def run_cell(spec: BenchmarkSpec, size: int, fraction: float, hidden: int, method: str, rep: int) -> dict:
    """Learn and evaluate one (size, fraction, hidden, method, replicate)."""
    true_s, true_p = spec.network()
    train = ancestral_sample(true_s, true_p, size, _seed(spec.seed, 1, size, rep))
    train = inject_missing_mcar(train, fraction, _seed(spec.seed, 2, size, rep, _frac_key(fraction)))
    test = ancestral_sample(true_s, true_p, spec.test_size, _seed(spec.seed, 3, rep))
    score, est = parse_method(method)
    run_seed = _seed(spec.seed, 4, size, rep, _frac_key(fraction), hidden)
    cfg = SemConfig(
        max_sem_iters=spec.max_sem_iters,
        score_method=est,
        score=score,
        em=EmConfig(max_iters=spec.em_max_iters),
        max_parents=spec.max_parents,
        n_edge_perturbations=spec.n_edge_perturbations,
        n_random_walks=spec.n_random_walks,
        random_walk_length=spec.random_walk_length,
        time_limit=spec.time_limit,
        seed=run_seed,
    )
    prior = DirichletPrior(spec.ess)
    if spec.experiment == "missing" and hidden == 0:
        rng = np.random.default_rng(run_seed)
        result = bayesian_sem(train, random_chain_structure(train.variables, rng), prior, cfg)
    else:
        result = sem_with_restarts(train, hidden_variables(hidden), prior, cfg)
    learned = (result.structure, result.params)
    kl = kl_divergence((true_s, true_p), learned)
    ll = log_loss(learned, test)
    ll_true = log_loss((true_s, true_p), test)
    return {
        "kind": "replicate", "size": size, "fraction": fraction, "hidden": hidden, "method": method,
        "replicate": rep, "kl": kl, "log_loss": ll, "log_loss_gap": ll - ll_true,
        "edges": result.structure.n_edges,
    }


def _tasks(spec: BenchmarkSpec):
    for size in spec.sizes:
        for fraction in spec.missing_fractions:
            for hidden in spec.hidden_counts:
                for method in spec.methods:
                    for rep in range(spec.replicates):
                        yield (size, fraction, hidden, method, rep)


def _run_task(args):
    spec, task = args
    return run_cell(spec, *task)


def run_benchmark(spec: BenchmarkSpec, threads: int | None = None) -> list[dict]:
    """All replicate rows followed by per-cell summary rows, deterministically ordered."""
    if threads is None:
        threads = int(os.environ.get("STRUCTEM_THREADS", "1") or 1)
    tasks = list(_tasks(spec))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_run_task, [(spec, t) for t in tasks]))
    else:
        rows = [run_cell(spec, *t) for t in tasks]
    order = {m: k for k, m in enumerate(spec.methods)}

    def cell(r):
        return (r["size"], r["fraction"], r["hidden"], order[r["method"]])

    rows.sort(key=lambda r: cell(r) + (r["replicate"],))
    out = []
    for key in sorted({cell(r) for r in rows}):
        group = [r for r in rows if cell(r) == key]
        out.extend(group)
        summary = {"kind": "summary", "size": key[0], "fraction": key[1], "hidden": key[2], "method": spec.methods[key[3]], "replicate": ""}
        for col in ("kl", "log_loss", "log_loss_gap"):
            vals = np.array([r[col] for r in group], dtype=float)
            summary[col] = float(vals.mean())
            summary[col + "_sd"] = float(vals.std(ddof=1)) if len(vals) > 1 else math.nan
        summary["edges"] = float(np.mean([r["edges"] for r in group]))
        out.append(summary)
    return out


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def format_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in COLUMNS])
    return buf.getvalue()


def write_csv(path, rows: list[dict]) -> None:
    Path(path).write_text(format_csv(rows))


def summary_rows(rows: list[dict]) -> list[dict]:
    return [r for r in rows if r["kind"] == "summary"]
