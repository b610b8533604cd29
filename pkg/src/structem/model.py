"""Discrete Bayesian network types: variables, DAG structure, CPT parameters.

CPT rows are indexed by the mixed-radix code of the parent states, with
parents taken in ascending variable-index order and the lowest-index parent
as the most significant digit. ``cpt.reshape(parent_arities + (arity,))``
therefore gives a C-ordered tensor over (parents..., child).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

NORMALIZATION_TOL = 1e-9


class ModelError(ValueError):
    """Malformed network, record or file."""


@dataclass(frozen=True)
class Variable:
    name: str
    states: tuple[str, ...]
    hidden: bool = False

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        if len(self.states) < 2:
            raise ModelError(f"variable {self.name!r} needs at least 2 states")
        if len(set(self.states)) != len(self.states):
            raise ModelError(f"variable {self.name!r} has duplicate state labels")

    @property
    def arity(self) -> int:
        return len(self.states)

    @classmethod
    def binary(cls, name: str, hidden: bool = False) -> "Variable":
        return cls(name, ("0", "1"), hidden)


@dataclass(frozen=True, order=True)
class FamilyKey:
    """A child index plus its parent set in canonical (sorted) order."""

    child: int
    parents: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(sorted(set(int(p) for p in self.parents))))

    @property
    def variables(self) -> tuple[int, ...]:
        """Family scope sorted by index (the axis order of family tables)."""
        return tuple(sorted(self.parents + (self.child,)))


@dataclass(frozen=True)
class Structure:
    """A DAG over named discrete variables.

    ``parents[i]`` is the sorted tuple of parent indices of variable ``i``.
    Construction does not reject cycles; use :func:`validate` or
    :meth:`is_acyclic` (search code only ever builds acyclic graphs).
    """

    variables: tuple[Variable, ...]
    parents: tuple[tuple[int, ...], ...] = None
    _index: dict = field(default=None, repr=False, compare=False, hash=False)

    def __post_init__(self):
        variables = tuple(self.variables)
        object.__setattr__(self, "variables", variables)
        if self.parents is None:
            parents = tuple(() for _ in variables)
        else:
            parents = tuple(tuple(sorted(int(p) for p in ps)) for ps in self.parents)
        if len(parents) != len(variables):
            raise ModelError("parents must list one parent set per variable")
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "_index", {v.name: i for i, v in enumerate(variables)})

    @classmethod
    def from_edges(cls, variables: Sequence[Variable], edges: Iterable[tuple]) -> "Structure":
        """Build from ``(parent, child)`` pairs given as names or indices."""
        variables = tuple(variables)
        index = {v.name: i for i, v in enumerate(variables)}
        parents = [set() for _ in variables]
        for a, b in edges:
            a = index[a] if isinstance(a, str) else int(a)
            b = index[b] if isinstance(b, str) else int(b)
            parents[b].add(a)
        return cls(variables, tuple(tuple(sorted(p)) for p in parents))

    def __len__(self) -> int:
        return len(self.variables)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def arities(self) -> tuple[int, ...]:
        return tuple(v.arity for v in self.variables)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ModelError(f"unknown variable {name!r}") from None

    @property
    def observed(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.variables) if not v.hidden)

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.variables) if v.hidden)

    def family(self, i: int) -> FamilyKey:
        return FamilyKey(i, self.parents[i])

    def families(self) -> list[FamilyKey]:
        return [self.family(i) for i in range(len(self))]

    def edges(self) -> list[tuple[int, int]]:
        return [(p, c) for c, ps in enumerate(self.parents) for p in ps]

    @property
    def n_edges(self) -> int:
        return sum(len(p) for p in self.parents)

    def n_parent_configs(self, i: int) -> int:
        return math.prod(self.variables[p].arity for p in self.parents[i])

    def with_parents(self, child: int, parents: Iterable[int]) -> "Structure":
        new = list(self.parents)
        new[child] = tuple(sorted(parents))
        return Structure(self.variables, tuple(new))

    def children(self) -> list[list[int]]:
        ch = [[] for _ in self.variables]
        for c, ps in enumerate(self.parents):
            for p in ps:
                ch[p].append(c)
        return ch

    def topological_order(self) -> list[int] | None:
        """Kahn's algorithm with smallest-index-first; ``None`` on a cycle."""
        import heapq

        indeg = [len(set(p)) for p in self.parents]
        children = self.children()
        heap = [i for i, d in enumerate(indeg) if d == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            n = heapq.heappop(heap)
            order.append(n)
            for c in children[n]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    heapq.heappush(heap, c)
        return order if len(order) == len(self.variables) else None

    def is_acyclic(self) -> bool:
        return self.topological_order() is not None

    def ancestors(self, nodes: Iterable[int]) -> set[int]:
        seen = set()
        stack = list(nodes)
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            stack.extend(self.parents[n])
        return seen

    def has_path(self, src: int, dst: int) -> bool:
        """True if a directed path src -> ... -> dst exists."""
        if src == dst:
            return True
        children = self.children()
        stack, seen = [src], {src}
        while stack:
            n = stack.pop()
            for c in children[n]:
                if c == dst:
                    return True
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return False


@dataclass(frozen=True)
class Parameters:
    """One CPT per variable, each of shape (n_parent_configs, arity)."""

    cpts: tuple[np.ndarray, ...]

    def __post_init__(self):
        tables = []
        for t in self.cpts:
            a = np.array(t, dtype=float)
            a.setflags(write=False)
            tables.append(a)
        object.__setattr__(self, "cpts", tuple(tables))

    def __getitem__(self, i: int) -> np.ndarray:
        return self.cpts[i]

    def __len__(self) -> int:
        return len(self.cpts)

    def factor(self, structure: Structure, i: int) -> tuple[tuple[int, ...], np.ndarray]:
        """CPT of ``i`` as a factor over its sorted family scope."""
        key = structure.family(i)
        shape = tuple(structure.variables[p].arity for p in key.parents) + (structure.variables[i].arity,)
        table = self.cpts[i].reshape(shape)
        # Current axis order is (parents..., child); move child into sorted position.
        order = key.parents + (i,)
        scope = key.variables
        perm = [order.index(v) for v in scope]
        return scope, np.transpose(table, perm)


def validate(structure: Structure, params: Parameters | None = None) -> list[str]:
    """List every violated invariant; an empty list means valid."""
    problems: list[str] = []
    names = [v.name for v in structure.variables]
    if len(set(names)) != len(names):
        problems.append("variable names are not unique")
    n = len(structure)
    for i, ps in enumerate(structure.parents):
        if len(set(ps)) != len(ps):
            problems.append(f"{names[i]}: duplicate parents")
        for p in ps:
            if p == i:
                problems.append(f"{names[i]}: variable is its own parent")
            elif not 0 <= p < n:
                problems.append(f"{names[i]}: parent index {p} out of range")
    if not problems and not structure.is_acyclic():
        problems.append("parent relation contains a directed cycle")
    if params is None or problems:
        return problems
    if len(params) != n:
        problems.append(f"expected {n} CPTs, got {len(params)}")
        return problems
    for i, t in enumerate(params.cpts):
        want = (structure.n_parent_configs(i), structure.variables[i].arity)
        if t.shape != want:
            problems.append(f"{names[i]}: CPT shape {t.shape} != {want}")
            continue
        if np.any(~np.isfinite(t)) or np.any(t < 0) or np.any(t > 1):
            problems.append(f"{names[i]}: probabilities outside [0, 1]")
        bad = np.flatnonzero(np.abs(t.sum(axis=1) - 1.0) > NORMALIZATION_TOL)
        for row in bad:
            problems.append(f"{names[i]}: row {row} sums to {t[row].sum():.12g}, not 1")
    return problems


def _record_states(structure: Structure, record) -> list[int]:
    if isinstance(record, Mapping):
        states = [None] * len(structure)
        for name, value in record.items():
            i = structure.index(name)
            var = structure.variables[i]
            if isinstance(value, str):
                if value not in var.states:
                    raise ModelError(f"{name}: unknown state {value!r}")
                value = var.states.index(value)
            states[i] = int(value)
        missing = [structure.names[i] for i, s in enumerate(states) if s is None]
        if missing:
            raise ModelError(f"record does not assign {missing}")
    else:
        states = [int(s) for s in record]
        if len(states) != len(structure):
            raise ModelError(f"record has {len(states)} values for {len(structure)} variables")
    for i, s in enumerate(states):
        if not 0 <= s < structure.variables[i].arity:
            raise ModelError(f"{structure.names[i]}: state index {s} out of range")
    return states


def parent_config(structure: Structure, i: int, states: Sequence[int]) -> int:
    """Mixed-radix row index of variable ``i``'s parent assignment."""
    idx = 0
    for p in structure.parents[i]:
        idx = idx * structure.variables[p].arity + states[p]
    return idx


def log_likelihood_complete(structure: Structure, params: Parameters, record) -> float:
    """log P(record) for a complete assignment (mapping by name or sequence).

    Returns ``-inf`` when some factor is zero.
    """
    states = _record_states(structure, record)
    total = 0.0
    with np.errstate(divide="ignore"):
        for i in range(len(structure)):
            total += float(np.log(params.cpts[i][parent_config(structure, i, states), states[i]]))
    return total


def uniform_parameters(structure: Structure) -> Parameters:
    return Parameters(
        tuple(np.full((structure.n_parent_configs(i), v.arity), 1.0 / v.arity) for i, v in enumerate(structure.variables))
    )


# --- JSON network format ------------------------------------------------------


def network_to_dict(structure: Structure, params: Parameters | None) -> dict:
    doc = {
        "variables": [{"name": v.name, "states": list(v.states), "hidden": v.hidden} for v in structure.variables],
        "parents": {structure.names[i]: [structure.names[p] for p in ps] for i, ps in enumerate(structure.parents)},
    }
    if params is not None:
        doc["cpt"] = {structure.names[i]: [[float(x) for x in row] for row in t] for i, t in enumerate(params.cpts)}
    return doc


def network_from_dict(doc: dict) -> tuple[Structure, Parameters | None]:
    try:
        variables = tuple(Variable(str(v["name"]), tuple(v["states"]), bool(v.get("hidden", False))) for v in doc["variables"])
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed 'variables' entry: {exc}") from None
    index = {v.name: i for i, v in enumerate(variables)}
    if len(index) != len(variables):
        raise ModelError("variable names are not unique")
    parents = [()] * len(variables)
    for child, ps in doc.get("parents", {}).items():
        if child not in index:
            raise ModelError(f"parents: unknown variable {child!r}")
        for p in ps:
            if p not in index:
                raise ModelError(f"parents[{child}]: unknown variable {p!r}")
        parents[index[child]] = tuple(index[p] for p in ps)
    structure = Structure(variables, tuple(parents))
    params = None
    if "cpt" in doc:
        cpts = []
        for i, v in enumerate(variables):
            if v.name not in doc["cpt"]:
                raise ModelError(f"cpt: missing table for {v.name!r}")
            t = np.array(doc["cpt"][v.name], dtype=float)
            want = (structure.n_parent_configs(i), v.arity)
            if t.shape != want:
                raise ModelError(f"cpt[{v.name}]: shape {t.shape} != {want}")
            cpts.append(t)
        params = Parameters(tuple(cpts))
    return structure, params


def write_network(path, structure: Structure, params: Parameters | None) -> None:
    Path(path).write_text(json.dumps(network_to_dict(structure, params), indent=1) + "\n")


def read_network(path) -> tuple[Structure, Parameters | None]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return network_from_dict(doc)
