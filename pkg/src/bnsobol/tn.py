"""Tensor networks over named indices and exact contraction.

An index name may label any number of nodes; all occurrences are summed
jointly (hyperedge semantics), which is what variable elimination on a
moralized Bayesian network needs.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, replace

import numpy as np

from .bn import BayesianNetwork, NetworkError
from .elimination import EliminationPlan, greedy_elimination_order
from .tt import DEFAULT_MEMORY_CAP

MODEL, UNCERTAINTY, VIRTUAL = "model-variable", "uncertainty", "virtual-bond"
INDEX_KINDS = (MODEL, UNCERTAINTY, VIRTUAL)


class ContractionError(RuntimeError):
    pass


class MemoryCapError(ContractionError, MemoryError):
    def __init__(self, shape: tuple[int, ...], cap: int):
        super().__init__(f"intermediate tensor of shape {shape} ({math.prod(shape)} entries) exceeds the memory cap of {cap}")
        self.shape = shape
        self.cap = cap


@dataclass(frozen=True)
class Index:
    name: str
    size: int
    kind: str = MODEL
    states: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError(f"index {self.name!r} must have positive size")
        if self.kind not in INDEX_KINDS:
            raise ValueError(f"unknown index kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class Node:
    name: str
    labels: tuple[str, ...]
    data: np.ndarray
    kind: str = "cpt"

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", tuple(self.labels))
        data = np.asarray(self.data, dtype=float)
        if data.ndim != len(self.labels):
            raise ValueError(f"node {self.name!r}: {data.ndim} axes but {len(self.labels)} labels")
        object.__setattr__(self, "data", data)


@dataclass(frozen=True, eq=False)
class TensorNetwork:
    nodes: tuple[Node, ...]
    indices: Mapping[str, Index]
    open: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "indices", dict(self.indices))
        object.__setattr__(self, "open", tuple(self.open))
        for node in self.nodes:
            for label, n in zip(node.labels, node.data.shape):
                idx = self.indices.get(label)
                if idx is None:
                    raise ValueError(f"node {node.name!r} uses undeclared index {label!r}")
                if idx.size != n:
                    raise ValueError(f"node {node.name!r}: index {label!r} has size {n}, declared {idx.size}")
        for label in self.open:
            if label not in self.indices:
                raise ValueError(f"open index {label!r} is not declared")

    def with_nodes(self, nodes: Iterable[Node], indices: Iterable[Index] = ()) -> TensorNetwork:
        merged = dict(self.indices)
        for idx in indices:
            merged[idx.name] = idx
        return TensorNetwork(self.nodes + tuple(nodes), merged, self.open)

    def rename(self, mapping: Mapping[str, str], prefix: str = "") -> TensorNetwork:
        """Copy with index names mapped (unmapped names unchanged) and node names prefixed."""
        nodes = tuple(
            Node(prefix + n.name, tuple(mapping.get(l, l) for l in n.labels), n.data, n.kind) for n in self.nodes
        )
        indices = {mapping.get(k, k): replace(v, name=mapping.get(k, k)) for k, v in self.indices.items()}
        return TensorNetwork(nodes, indices, tuple(mapping.get(l, l) for l in self.open))

    @property
    def size(self) -> int:
        return sum(n.data.size for n in self.nodes)

    def to_json(self) -> dict:
        """Topology description for plotting (no tensor values)."""
        return {
            "nodes": [
                {"name": n.name, "kind": n.kind, "labels": list(n.labels), "shape": list(n.data.shape)}
                for n in self.nodes
            ],
            "indices": [{"name": i.name, "size": i.size, "kind": i.kind} for i in self.indices.values()],
            "open": list(self.open),
        }


def moralize_to_tn(bn: BayesianNetwork) -> TensorNetwork:
    """One node per CPT; each variable is an index shared by its CPT and its children's."""
    indices = {v.name: Index(v.name, v.cardinality, MODEL, v.states) for v in bn.variables}
    nodes = tuple(Node(f"P({cpt.child})", cpt.variables, cpt.table, "cpt") for cpt in bn.cpts.values())
    return TensorNetwork(nodes, indices)


def apply_evidence(tn: TensorNetwork, evidence: Mapping[str, str | int] | None) -> TensorNetwork:
    """Attach a one-hot vector to each observed index."""
    if not evidence:
        return tn
    extra = []
    for name, state in evidence.items():
        idx = tn.indices.get(name)
        if idx is None or idx.kind != MODEL:
            raise NetworkError(f"unknown variable {name!r} in evidence")
        if isinstance(state, (int, np.integer)):
            pos = int(state)
            if not 0 <= pos < idx.size:
                raise NetworkError(f"state index {pos} out of range for {name!r}")
        else:
            if idx.states is None or state not in idx.states:
                raise NetworkError(f"variable {name!r} has no state {state!r}")
            pos = idx.states.index(state)
        vec = np.zeros(idx.size)
        vec[pos] = 1.0
        extra.append(Node(f"E({name}={state})", (name,), vec, "evidence"))
    return tn.with_nodes(extra)


# -- contraction ---------------------------------------------------------------


def _interaction_graph(tn: TensorNetwork) -> dict[str, set[str]]:
    adj: dict[str, set[str]] = {}
    for node in tn.nodes:
        labels = set(node.labels)
        for l in node.labels:
            adj.setdefault(l, set()).update(labels - {l})
    return adj


def plan_contraction(tn: TensorNetwork, keep: Iterable[str] = (), heuristic: str = "best") -> EliminationPlan:
    """Greedy elimination order over every index not in ``keep``.

    ``heuristic="best"`` runs both min-fill and min-size and keeps the plan
    with the lower estimated cost.
    """
    adj = _interaction_graph(tn)
    sizes = {k: v.size for k, v in tn.indices.items()}
    keep = set(keep)
    if heuristic != "best":
        return greedy_elimination_order(adj, sizes, keep, heuristic)
    plans = [greedy_elimination_order(adj, sizes, keep, h) for h in ("min-fill", "min-size")]
    return min(plans, key=lambda p: (p.cost, p.max_clique_size))


def _einsum(operands: Sequence[tuple[np.ndarray, tuple[str, ...]]], out: tuple[str, ...]) -> np.ndarray:
    local: dict[str, int] = {}
    args: list = []
    for data, labels in operands:
        args.append(data)
        args.append([local.setdefault(l, len(local)) for l in labels])
    args.append([local[l] for l in out])
    if len(operands) <= 2:
        return np.einsum(*args)
    return np.einsum(*args, optimize="greedy")


def contract(
    tn: TensorNetwork,
    keep: Sequence[str] = (),
    *,
    order: Sequence[str] | None = None,
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> np.ndarray:
    """Sum the product of all nodes over every index not in ``keep``.

    The result has one axis per entry of ``keep``, in that order.  Indices are
    eliminated one at a time (``order`` if given, else a greedy plan); all
    factors touching the eliminated index are multiplied and summed together.
    """
    keep = tuple(keep)
    if len(set(keep)) != len(keep):
        raise ContractionError(f"duplicate kept indices in {keep}")
    present = {l for n in tn.nodes for l in n.labels}
    for label in keep:
        if label not in tn.indices:
            raise ContractionError(f"kept index {label!r} is not in the network")
        if label not in present:
            raise ContractionError(f"kept index {label!r} is not attached to any node")
    if order is None:
        order = plan_contraction(tn, keep).order
    factors: dict[int, tuple[np.ndarray, tuple[str, ...]]] = {}
    where: dict[str, set[int]] = {}
    scalar = 1.0
    next_id = 0

    def add(data: np.ndarray, labels: tuple[str, ...]) -> None:
        nonlocal next_id, scalar
        if not labels:
            scalar *= float(data)
            return
        factors[next_id] = (data, labels)
        for l in labels:
            where.setdefault(l, set()).add(next_id)
        next_id += 1

    for node in tn.nodes:
        labels = node.labels
        if len(set(labels)) != len(labels):
            uniq = tuple(dict.fromkeys(labels))
            add(_einsum([(node.data, labels)], uniq), uniq)
        else:
            add(node.data, labels)

    keep_set = set(keep)
    for label in order:
        if label in keep_set:
            raise ContractionError(f"elimination order contains kept index {label!r}")
        ids = sorted(where.pop(label, ()))
        if not ids:
            continue
        ops = [factors.pop(i) for i in ids]
        union = tuple(dict.fromkeys(l for _, labels in ops for l in labels))
        out = tuple(l for l in union if l != label)
        shape = tuple(tn.indices[l].size for l in out)
        if math.prod(shape) > memory_cap:
            raise MemoryCapError(shape, memory_cap)
        for l in out:
            where[l].difference_update(ids)
        add(_einsum(ops, out), out)

    leftover = sorted(l for l, ids in where.items() if ids and l not in keep_set)
    if leftover:
        raise ContractionError(f"elimination order misses indices {leftover}")
    ops = list(factors.values())
    shape = tuple(tn.indices[l].size for l in keep)
    if not ops:
        return np.full(shape, scalar) if keep else np.asarray(scalar)
    if math.prod(shape) > memory_cap:
        raise MemoryCapError(shape, memory_cap)
    return scalar * _einsum(ops, keep)


def marginal(
    bn: BayesianNetwork,
    target: str,
    evidence: Mapping[str, str | int] | None = None,
    *,
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> np.ndarray:
    """``P(target | evidence)`` as a probability vector over the target's states."""
    evidence = dict(evidence or {})
    bn.variable(target)
    sub = bn.subnetwork(bn.ancestors({target, *evidence}))
    tn = apply_evidence(moralize_to_tn(sub), evidence)
    joint = contract(tn, (target,), memory_cap=memory_cap)
    total = float(joint.sum())
    if total <= 0.0:
        raise NetworkError(f"evidence {evidence} has probability zero")
    return joint / total
