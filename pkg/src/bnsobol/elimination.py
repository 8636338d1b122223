"""Greedy elimination orderings on undirected interaction graphs."""

from __future__ import annotations

import heapq
import math
from collections.abc import Hashable, Iterable, Mapping
from dataclasses import dataclass

HEURISTICS = ("min-fill", "min-size")


@dataclass(frozen=True)
class EliminationPlan:
    order: tuple
    max_clique: int  # vertices in the largest elimination clique (width + 1)
    max_clique_size: int  # joint state count of the largest clique
    cost: int  # sum of clique state counts, a flop estimate


def _fill(adj: Mapping[Hashable, set], v: Hashable) -> int:
    nb = list(adj[v])
    missing = 0
    for i, a in enumerate(nb):
        na = adj[a]
        for b in nb[i + 1 :]:
            if b not in na:
                missing += 1
    return missing


def greedy_elimination_order(
    adjacency: Mapping[Hashable, Iterable[Hashable]],
    sizes: Mapping[Hashable, int],
    keep: Iterable[Hashable] = (),
    heuristic: str = "min-fill",
) -> EliminationPlan:
    """Eliminate every vertex not in ``keep`` greedily.

    ``min-fill`` ranks candidates by the number of fill-in edges and breaks
    ties by clique state count; ``min-size`` uses the reverse priority.
    Remaining ties go to the vertex seen first in ``adjacency``.
    """
    if heuristic not in HEURISTICS:
        raise ValueError(f"unknown heuristic {heuristic!r}; choose from {HEURISTICS}")
    adj = {v: set(nb) for v, nb in adjacency.items()}
    for v, nb in list(adj.items()):
        for w in nb:
            adj.setdefault(w, set()).add(v)
        nb.discard(v)
    keep = set(keep)
    rank = {v: i for i, v in enumerate(adj)}

    def clique_size(v):
        return sizes[v] * math.prod(sizes[w] for w in adj[v])

    def key(v):
        fill, size = _fill(adj, v), clique_size(v)
        primary = (fill, size) if heuristic == "min-fill" else (size, fill)
        return (*primary, rank[v])

    heap = [(key(v), v) for v in adj if v not in keep]
    heapq.heapify(heap)
    current = {v: k for k, v in heap}
    order = []
    max_clique, max_size, cost = 1 if adj else 0, 1, 0
    while heap:
        k, v = heapq.heappop(heap)
        if current.get(v) != k:
            continue
        del current[v]
        nb = adj.pop(v)
        size = sizes[v] * math.prod(sizes[w] for w in nb)
        max_clique = max(max_clique, len(nb) + 1)
        max_size = max(max_size, size)
        cost += size
        order.append(v)
        nb_list = list(nb)
        for i, a in enumerate(nb_list):
            adj[a].discard(v)
            for b in nb_list[i + 1 :]:
                adj[a].add(b)
                adj[b].add(a)
        touched = set(nb)
        for a in nb:
            touched |= adj[a]
        for u in touched:
            if u in current:
                nk = key(u)
                if nk != current[u]:
                    current[u] = nk
                    heapq.heappush(heap, (nk, u))
    return EliminationPlan(tuple(order), max_clique, max_size, cost)
