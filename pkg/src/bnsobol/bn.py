"""Discrete Bayesian network data model.

A network is an ordered collection of categorical variables plus one
conditional probability table per variable.  Tables are stored as dense
arrays whose first axis is the child and whose remaining axes follow the
declared parent order, so ``cpt.table[k, j1, j2]`` is
``P(child = k | parent1 = j1, parent2 = j2)``.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .elimination import greedy_elimination_order

ROW_TOLERANCE = 1e-9
MAX_ENUMERATION_STATES = 10**7


class NetworkError(ValueError):
    """Raised when a network violates a structural or probabilistic invariant."""


@dataclass(frozen=True)
class Variable:
    name: str
    states: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "states", tuple(self.states))
        if len(self.states) < 2:
            raise NetworkError(f"variable {self.name!r} needs at least 2 states, got {len(self.states)}")
        if len(set(self.states)) != len(self.states):
            raise NetworkError(f"variable {self.name!r} has duplicate state labels")

    @property
    def cardinality(self) -> int:
        return len(self.states)

    def index(self, state: str | int) -> int:
        """Position of ``state``; integers are accepted as already-resolved positions."""
        if isinstance(state, (int, np.integer)):
            if not 0 <= state < len(self.states):
                raise NetworkError(f"state index {state} out of range for {self.name!r}")
            return int(state)
        try:
            return self.states.index(state)
        except ValueError:
            raise NetworkError(f"variable {self.name!r} has no state {state!r}") from None


@dataclass(frozen=True, eq=False)
class Cpt:
    """``P(child | parents)`` as a read-only array of shape (child, *parents)."""

    child: str
    parents: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "parents", tuple(self.parents))
        table = np.array(self.table, dtype=float)
        table.setflags(write=False)
        object.__setattr__(self, "table", table)
        if self.child in self.parents:
            raise NetworkError(f"CPT of {self.child!r} lists itself as a parent")
        if len(set(self.parents)) != len(self.parents):
            raise NetworkError(f"CPT of {self.child!r} has duplicate parents")
        if table.ndim != 1 + len(self.parents):
            raise NetworkError(f"CPT of {self.child!r} has {table.ndim} axes, expected {1 + len(self.parents)}")
        if np.any(~np.isfinite(table)) or np.any(table < 0) or np.any(table > 1):
            raise NetworkError(f"CPT of {self.child!r} has entries outside [0, 1]")
        dev = np.max(np.abs(table.sum(axis=0) - 1.0))
        if dev > ROW_TOLERANCE:
            raise NetworkError(f"CPT of {self.child!r} has a row summing to 1 {dev:+.3g}")

    @property
    def variables(self) -> tuple[str, ...]:
        return (self.child, *self.parents)

    @property
    def parent_shape(self) -> tuple[int, ...]:
        return self.table.shape[1:]

    def parent_configs(self) -> Iterable[tuple[int, ...]]:
        return itertools.product(*(range(n) for n in self.parent_shape))

    def row(self, parent_config: Sequence[int]) -> np.ndarray:
        return self.table[(slice(None), *parent_config)]

    def with_table(self, table: np.ndarray) -> Cpt:
        return Cpt(self.child, self.parents, table)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Cpt):
            return NotImplemented
        return (
            self.child == other.child
            and self.parents == other.parents
            and self.table.shape == other.table.shape
            and bool(np.array_equal(self.table, other.table))
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class ParameterId:
    """A single CPT entry ``P(variable = child_state | parents = parent_config)``."""

    variable: str
    child_state: int
    parent_config: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "parent_config", tuple(int(j) for j in self.parent_config))

    def row_key(self) -> tuple[str, tuple[int, ...]]:
        return self.variable, self.parent_config

    def describe(self, bn: BayesianNetwork) -> str:
        var = bn.variable(self.variable)
        cpt = bn.cpt(self.variable)
        head = f"P({var.name}={var.states[self.child_state]}"
        if not cpt.parents:
            return head + ")"
        given = ", ".join(f"{p}={bn.variable(p).states[j]}" for p, j in zip(cpt.parents, self.parent_config))
        return f"{head} | {given})"


@dataclass(frozen=True)
class Metrics:
    n_variables: int
    n_edges: int
    n_parameters: int
    n_free_parameters: int
    treewidth: int
    contraction_width: float

    def as_dict(self) -> dict:
        return {
            "n_variables": self.n_variables,
            "n_edges": self.n_edges,
            "n_parameters": self.n_parameters,
            "n_free_parameters": self.n_free_parameters,
            "treewidth": self.treewidth,
            "contraction_width": self.contraction_width,
        }


@dataclass(frozen=True, eq=False)
class BayesianNetwork:
    variables: tuple[Variable, ...]
    cpts: Mapping[str, Cpt]
    name: str = "unknown"
    _by_name: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "variables", tuple(self.variables))
        by_name = {}
        for v in self.variables:
            if v.name in by_name:
                raise NetworkError(f"duplicate variable name {v.name!r}")
            by_name[v.name] = v
        object.__setattr__(self, "_by_name", by_name)
        cpts = dict(self.cpts)
        missing = set(by_name) - set(cpts)
        if missing:
            raise NetworkError(f"variables without a CPT: {sorted(missing)}")
        extra = set(cpts) - set(by_name)
        if extra:
            raise NetworkError(f"CPTs for unknown variables: {sorted(extra)}")
        for name, cpt in cpts.items():
            if cpt.child != name:
                raise NetworkError(f"CPT stored under {name!r} belongs to {cpt.child!r}")
            for p in cpt.parents:
                if p not in by_name:
                    raise NetworkError(f"CPT of {name!r} references unknown parent {p!r}")
            expected = tuple(by_name[v].cardinality for v in cpt.variables)
            if cpt.table.shape != expected:
                raise NetworkError(f"CPT of {name!r} has shape {cpt.table.shape}, expected {expected}")
        # keep the declared variable order for iteration
        object.__setattr__(self, "cpts", {v.name: cpts[v.name] for v in self.variables})
        _ = self.topological_order  # raises on cycles

    # -- lookups -----------------------------------------------------------

    def variable(self, name: str) -> Variable:
        try:
            return self._by_name[name]
        except KeyError:
            raise NetworkError(f"unknown variable {name!r}") from None

    def cpt(self, name: str) -> Cpt:
        self.variable(name)
        return self.cpts[name]

    def cardinality(self, name: str) -> int:
        return self.variable(name).cardinality

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def parents(self, name: str) -> tuple[str, ...]:
        return self.cpt(name).parents

    @cached_property
    def children(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {v: [] for v in self.names}
        for cpt in self.cpts.values():
            for p in cpt.parents:
                out[p].append(cpt.child)
        return {k: tuple(v) for k, v in out.items()}

    @property
    def edges(self) -> list[tuple[str, str]]:
        return [(p, cpt.child) for cpt in self.cpts.values() for p in cpt.parents]

    @cached_property
    def topological_order(self) -> tuple[str, ...]:
        indegree = {name: len(self.cpts[name].parents) for name in self.names}
        ready = [name for name in self.names if indegree[name] == 0]
        order = []
        while ready:
            name = ready.pop(0)
            order.append(name)
            for child in self.children[name]:
                indegree[child] -= 1
                if indegree[child] == 0:
                    ready.append(child)
        if len(order) != len(self.names):
            stuck = sorted(n for n, d in indegree.items() if d > 0)
            raise NetworkError(f"network has a directed cycle through {stuck}")
        return tuple(order)

    def parameters(self) -> Iterable[ParameterId]:
        """Every CPT entry, in variable order then parent configuration then child state."""
        for cpt in self.cpts.values():
            for config in cpt.parent_configs():
                for k in range(cpt.table.shape[0]):
                    yield ParameterId(cpt.child, k, config)

    def value(self, param: ParameterId) -> float:
        return float(self.cpt(param.variable).table[(param.child_state, *param.parent_config)])

    def replace_cpt(self, cpt: Cpt) -> BayesianNetwork:
        cpts = dict(self.cpts)
        cpts[cpt.child] = cpt
        return BayesianNetwork(self.variables, cpts, self.name)

    # -- structure queries ---------------------------------------------------

    def ancestors(self, names: Iterable[str]) -> set[str]:
        """The given variables together with all of their ancestors."""
        seen: set[str] = set()
        stack = list(names)
        while stack:
            name = stack.pop()
            if name in seen:
                continue
            self.variable(name)
            seen.add(name)
            stack.extend(self.cpts[name].parents)
        return seen

    def subnetwork(self, names: Iterable[str]) -> BayesianNetwork:
        """Restriction to an ancestrally closed set of variables (declared order kept)."""
        keep = set(names)
        for name in keep:
            if not set(self.parents(name)) <= keep:
                raise NetworkError(f"{name!r} has parents outside the requested subnetwork")
        variables = tuple(v for v in self.variables if v.name in keep)
        return BayesianNetwork(variables, {v.name: self.cpts[v.name] for v in variables}, self.name)

    def requisite_cpts(self, targets: Iterable[str], evidence: Iterable[str] = ()) -> set[str]:
        """Variables whose CPT can influence ``P(targets | evidence)``.

        A CPT matters iff a virtual parameter parent attached to its variable
        is d-connected to some target given the evidence.  Checked on the
        moralized ancestral graph of {parameter, targets, evidence}.
        """
        targets = set(targets)
        evidence = set(evidence)
        relevant = self.ancestors(targets | evidence)
        out = set()
        for name in relevant:
            if name in targets:
                out.add(name)
                continue
            if _d_connected_to_parameter(self, name, targets, evidence):
                out.add(name)
        return out


def _d_connected_to_parameter(bn: BayesianNetwork, name: str, targets: set[str], evidence: set[str]) -> bool:
    ancestral = bn.ancestors(targets | evidence | {name})
    param = ("__param__",)
    adj: dict[object, set] = {v: set() for v in ancestral}
    adj[param] = set()
    for v in ancestral:
        family = list(bn.parents(v))
        if v == name:
            family.append(param)
        for p in family:
            adj[v].add(p)
            adj[p].add(v)
        for a, b in itertools.combinations(family, 2):
            adj[a].add(b)
            adj[b].add(a)
    seen = {param}
    stack = [param]
    while stack:
        u = stack.pop()
        if u in targets:
            return True
        for w in adj[u]:
            if w not in seen and w not in evidence:
                seen.add(w)
                stack.append(w)
    return False


def moral_graph(bn: BayesianNetwork) -> dict[str, set[str]]:
    adj: dict[str, set[str]] = {v: set() for v in bn.names}
    for cpt in bn.cpts.values():
        for a, b in itertools.combinations(cpt.variables, 2):
            adj[a].add(b)
            adj[b].add(a)
    return adj


def network_metrics(bn: BayesianNetwork) -> Metrics:
    """Size and complexity figures for a network.

    ``n_parameters`` counts every CPT entry; ``n_free_parameters`` subtracts
    the entries fixed by row normalization.  ``treewidth`` is the largest
    clique produced by min-fill elimination of the moral graph (an upper
    bound on the true treewidth plus one) and ``contraction_width`` is the
    log2 of that clique's joint state count.
    """
    n_params = sum(cpt.table.size for cpt in bn.cpts.values())
    n_free = sum(cpt.table.size // cpt.table.shape[0] * (cpt.table.shape[0] - 1) for cpt in bn.cpts.values())
    adj = moral_graph(bn)
    sizes = {v: bn.cardinality(v) for v in bn.names}
    plan = greedy_elimination_order(adj, sizes)
    return Metrics(
        n_variables=len(bn.variables),
        n_edges=len(bn.edges),
        n_parameters=n_params,
        n_free_parameters=n_free,
        treewidth=plan.max_clique,
        contraction_width=round(math.log2(plan.max_clique_size), 6) if bn.variables else 0.0,
    )


def joint_enumerate(bn: BayesianNetwork) -> dict[tuple[int, ...], float]:
    """Brute-force joint distribution over all configurations (declared variable order)."""
    total = math.prod(v.cardinality for v in bn.variables)
    if total > MAX_ENUMERATION_STATES:
        raise NetworkError(f"joint state space has {total} configurations (limit {MAX_ENUMERATION_STATES})")
    return dict(zip(itertools.product(*(range(v.cardinality) for v in bn.variables)), joint_table(bn).ravel()))


def joint_table(bn: BayesianNetwork) -> np.ndarray:
    """Joint distribution as a dense array with one axis per variable (declared order).

    Built by broadcasting each CPT over the full state space; no factor
    elimination is involved, so it serves as an oracle for the tensor
    network code.
    """
    total = math.prod(v.cardinality for v in bn.variables)
    if total > MAX_ENUMERATION_STATES:
        raise NetworkError(f"joint state space has {total} configurations (limit {MAX_ENUMERATION_STATES})")
    axis = {name: i for i, name in enumerate(bn.names)}
    shape = tuple(v.cardinality for v in bn.variables)
    joint = np.ones(shape)
    for cpt in bn.cpts.values():
        order = [axis[v] for v in cpt.variables]
        # move CPT axes to their joint positions, then broadcast
        perm = np.argsort(order)
        t = np.transpose(cpt.table, perm)
        bshape = [1] * len(shape)
        for a in sorted(order):
            bshape[a] = shape[a]
        joint = joint * t.reshape(bshape)
    return joint


def parse_assignment(text: str) -> tuple[str, str]:
    """Split ``"VAR=STATE"``."""
    name, sep, state = text.partition("=")
    if not sep or not name.strip() or not state.strip():
        raise NetworkError(f"expected VAR=STATE, got {text!r}")
    return name.strip(), state.strip()


def resolve_assignment(bn: BayesianNetwork, assignment: str | tuple[str, str | int]) -> tuple[str, int]:
    """Normalize ``"VAR=STATE"`` or ``(var, state)`` to ``(var, state index)``."""
    name, state = parse_assignment(assignment) if isinstance(assignment, str) else assignment
    return name, bn.variable(name).index(state)
