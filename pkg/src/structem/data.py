"""Datasets with per-cell missingness, sampling, MCAR corruption and CSV I/O."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import ModelError, Parameters, Structure, Variable

MISSING = -1


@dataclass(frozen=True)
class Dataset:
    """Rectangular table of state indices over observed variables.

    ``values[j, k]`` is the state index of variable ``variables[k]`` in record
    ``j``, or ``MISSING``.
    """

    variables: tuple[Variable, ...]
    values: np.ndarray

    def __post_init__(self):
        variables = tuple(self.variables)
        values = np.array(self.values, dtype=np.int64).reshape(-1, len(variables))
        for k, v in enumerate(variables):
            col = values[:, k]
            bad = (col != MISSING) & ((col < 0) | (col >= v.arity))
            if bad.any():
                j = int(np.flatnonzero(bad)[0])
                raise ModelError(f"record {j}: state {col[j]} out of range for {v.name!r}")
        values.setflags(write=False)
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def n_missing(self) -> int:
        return int((self.values == MISSING).sum())

    def is_complete(self) -> bool:
        return self.n_missing == 0

    def columns_for(self, structure: Structure) -> np.ndarray:
        """Structure index of each dataset column; checks arities and observability."""
        cols = []
        for v in self.variables:
            i = structure.index(v.name)
            sv = structure.variables[i]
            if sv.arity != v.arity:
                raise ModelError(f"{v.name!r}: arity {v.arity} in data, {sv.arity} in network")
            if sv.hidden:
                raise ModelError(f"{v.name!r} is hidden in the network but present in the data")
            cols.append(i)
        return np.array(cols, dtype=np.int64)

    def full_matrix(self, structure: Structure) -> np.ndarray:
        """Records as an (n, len(structure)) matrix; absent columns are MISSING."""
        out = np.full((len(self), len(structure)), MISSING, dtype=np.int64)
        out[:, self.columns_for(structure)] = self.values
        return out

    def subset(self, rows) -> "Dataset":
        return Dataset(self.variables, self.values[rows])


def ancestral_sample(structure: Structure, params: Parameters, n: int, seed=None) -> Dataset:
    """Draw ``n`` i.i.d. complete records; hidden variables are dropped."""
    rng = np.random.default_rng(seed)
    order = structure.topological_order()
    if order is None:
        raise ModelError("cannot sample from a cyclic structure")
    states = np.zeros((n, len(structure)), dtype=np.int64)
    for i in order:
        cpt = params.cpts[i]
        row = np.zeros(n, dtype=np.int64)
        for p in structure.parents[i]:
            row = row * structure.variables[p].arity + states[:, p]
        cum = np.cumsum(cpt, axis=1)
        u = rng.random(n)
        # Inverse-CDF draw; clip guards rows whose cumulative sum rounds below 1.
        states[:, i] = np.minimum((u[:, None] >= cum[row]).sum(axis=1), cpt.shape[1] - 1)
    obs = list(structure.observed)
    return Dataset(tuple(structure.variables[i] for i in obs), states[:, obs])


def inject_missing_mcar(dataset: Dataset, fraction: float, seed=None) -> Dataset:
    """Hide each cell independently with probability ``fraction``."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must lie in [0, 1)")
    if fraction == 0.0:
        return dataset
    rng = np.random.default_rng(seed)
    mask = rng.random(dataset.values.shape) < fraction
    values = dataset.values.copy()
    values[mask] = MISSING
    return Dataset(dataset.variables, values)


def sample_dirichlet_parameters(structure: Structure, alpha: float, seed=None) -> Parameters:
    """Every CPT row drawn from a symmetric Dirichlet(alpha)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    rng = np.random.default_rng(seed)
    cpts = []
    for i, v in enumerate(structure.variables):
        rows = rng.dirichlet(np.full(v.arity, float(alpha)), size=structure.n_parent_configs(i))
        cpts.append(rows / rows.sum(axis=1, keepdims=True))
    return Parameters(tuple(cpts))


# --- CSV -----------------------------------------------------------------------


def write_dataset(path, dataset: Dataset, missing: str = "?") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(dataset.names)
        for row in dataset.values:
            w.writerow([missing if s == MISSING else v.states[s] for s, v in zip(row, dataset.variables)])


def read_dataset(path, variables: Sequence[Variable] | None = None, missing: str = "?") -> Dataset:
    """Read a CSV whose header names the variables.

    With ``variables`` (e.g. from a network) labels are checked against the
    known states. Without it, states are the sorted distinct labels of each
    column; a column with fewer than two labels is then an error.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ModelError(f"{path}: empty file (no header)")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ModelError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
    if variables is not None:
        by_name = {v.name: v for v in variables}
        try:
            vars_ = tuple(by_name[h] for h in header)
        except KeyError as exc:
            raise ModelError(f"{path}:1: unknown variable {exc.args[0]!r}") from None
    else:
        vars_ = []
        for k, h in enumerate(header):
            labels = sorted({r[k].strip() for r in body} - {missing})
            if len(labels) < 2:
                raise ModelError(f"{path}: column {h!r} has {len(labels)} distinct states; supply a schema")
            vars_.append(Variable(h, tuple(labels)))
        vars_ = tuple(vars_)
    lookup = [{s: i for i, s in enumerate(v.states)} for v in vars_]
    values = np.empty((len(body), len(header)), dtype=np.int64)
    for j, row in enumerate(body):
        for k, cell in enumerate(row):
            cell = cell.strip()
            if cell == missing:
                values[j, k] = MISSING
                continue
            try:
                values[j, k] = lookup[k][cell]
            except KeyError:
                raise ModelError(
                    f"{path}:{j + 2}:{k + 1}: unknown state {cell!r} for variable {vars_[k].name!r}"
                ) from None
    return Dataset(vars_, values)
