"""Uncertain CPT entries as extra tensor-train dimensions.

Each uncertain entry ``p`` becomes a new variable ``x_p`` on a regular grid
over [0, 1].  The augmented CPT equals the original one except on the row
of entry ``p``, where the entry is ``x_p`` and its siblings are rescaled by
``(1 - x_p) / (1 - theta_p)``.  That row depends affinely on ``x_p``, so each
uncertainty dimension is stored in the two-column basis ``[1, x]``.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .bn import BayesianNetwork, Cpt, NetworkError, ParameterId
from .tn import UNCERTAINTY, VIRTUAL, Index, Node, TensorNetwork, moralize_to_tn
from .tt import (
    TensorTrain,
    tt_assign_slice,
    tt_compress,
    tt_sum,
    tt_tile,
    tt_to_basis,
    tt_unsqueeze,
    tt_zeros,
)

DEFAULT_GRID_SIZE = 33


@dataclass(frozen=True)
class BetaPrior:
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"beta prior needs positive parameters, got ({self.alpha}, {self.beta})")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    @property
    def variance(self) -> float:
        s = self.alpha + self.beta
        return self.alpha * self.beta / (s * s * (s + 1))

    @classmethod
    def from_mean_variance(cls, mean: float, variance: float) -> BetaPrior:
        """Moment matching: ``lam = (m - v - m^2) / v``, ``alpha = m lam``, ``beta = (1 - m) lam``."""
        if variance <= 0:
            raise ValueError("variance must be positive")
        lam = (mean - variance - mean * mean) / variance
        if lam <= 0:
            raise ValueError(f"no beta distribution has mean {mean} and variance {variance}")
        return cls(mean * lam, (1 - mean) * lam)


@dataclass(frozen=True)
class UncertaintySpec:
    param: ParameterId
    original: float
    prior: BetaPrior
    grid_size: int = DEFAULT_GRID_SIZE

    def __post_init__(self) -> None:
        if self.grid_size < 2:
            raise ValueError("grid_size must be at least 2")


def grid(size: int) -> np.ndarray:
    """``size`` equally spaced points from 0 to 1 inclusive."""
    if size < 2:
        raise ValueError("grid needs at least 2 points")
    return np.arange(size) / (size - 1)


def affine_basis(size: int) -> np.ndarray:
    """Columns ``1`` and ``x`` evaluated on the grid."""
    x = grid(size)
    return np.column_stack([np.ones_like(x), x])


def discretize_prior(prior: BetaPrior, size: int) -> np.ndarray:
    """Prior mass of the cell around each grid point (cells split at midpoints)."""
    x = grid(size)
    mids = (x[:-1] + x[1:]) / 2
    cdf = np.concatenate([[0.0], betainc(prior.alpha, prior.beta, mids), [1.0]])
    return np.diff(cdf)


def check_specs(specs: Sequence[UncertaintySpec], bn: BayesianNetwork | None = None) -> None:
    seen = set()
    for spec in specs:
        key = spec.param.row_key()
        if key in seen:
            raise NetworkError(f"two uncertain entries share the row {spec.param.variable}{list(spec.param.parent_config)}")
        seen.add(key)
        if spec.original >= 1:
            raise NetworkError(f"uncertain entry {spec.param} has original value 1; covariation is undefined")
        if bn is not None:
            cpt = bn.cpt(spec.param.variable)
            if not 0 <= spec.param.child_state < cpt.table.shape[0] or len(spec.param.parent_config) != len(cpt.parents):
                raise NetworkError(f"uncertain entry {spec.param} does not index the CPT of {cpt.child!r}")
            actual = bn.value(spec.param)
            if abs(actual - spec.original) > 1e-9:
                raise NetworkError(f"uncertain entry {spec.param} has value {actual}, spec says {spec.original}")


def _layout(cpt: Cpt, specs: Sequence[UncertaintySpec]):
    for spec in specs:
        if spec.param.variable != cpt.child:
            raise NetworkError(f"spec for {spec.param.variable!r} passed to the CPT of {cpt.child!r}")
    check_specs(specs)
    sizes = [s.grid_size for s in specs]
    bases = [affine_basis(n) for n in sizes]
    table = np.asarray(cpt.table)
    return table, sizes, bases, (*sizes, *table.shape), (*bases, *(None,) * table.ndim)


def correction_terms(cpt: Cpt, specs: Sequence[UncertaintySpec]) -> list[TensorTrain]:
    """One rank-1 train per uncertainty: the change its variable makes to the CPT.

    On row ``p`` the siblings change by ``((1 - x_p) / (1 - theta_p) - 1) * Phi(k)``
    and the entry itself by ``x_p - theta_p``; every other row is zero.
    """
    table, sizes, bases, full_shape, full_bases = _layout(cpt, specs)
    n_unc = len(specs)
    terms = []
    for p, spec in enumerate(specs):
        config = spec.param.parent_config
        row = table[(slice(None), *config)]
        theta = row[spec.param.child_state]
        x = grid(sizes[p])
        profile = row / (1 - theta)
        profile[spec.param.child_state] = -1.0
        correction = np.outer(theta - x, profile)  # (I, |Y|), rank 1
        block = tt_compress(correction)
        block = tt_to_basis(block, 0, bases[p])
        # dummy dimensions for the other uncertainties, then tile them
        block = tt_unsqueeze(block, [q for q in range(n_unc) if q != p])
        repeats = [sizes[q] if q != p else 1 for q in range(n_unc)] + [1]
        tile_bases = [bases[q] if q != p else None for q in range(n_unc)] + [None]
        block = tt_tile(block, repeats, tile_bases)
        terms.append(tt_assign_slice(tt_zeros(full_shape, full_bases), config, block))
    return terms


def augment_cpt(cpt: Cpt, specs: Sequence[UncertaintySpec]) -> TensorTrain:
    """Tensor train of the augmented CPT, dimensions ``(x_1, ..., x_P, child, *parents)``.

    The original table (TT-SVD, tiled along the new dimensions) plus the
    rank-1 terms of :func:`correction_terms`.
    """
    table, sizes, _, _, full_bases = _layout(cpt, specs)
    base = tt_compress(table)
    if specs:
        base = tt_unsqueeze(base, list(range(len(specs))))
        base = tt_tile(base, [*sizes, *(1,) * table.ndim], full_bases)
    return tt_sum(base, *correction_terms(cpt, specs))


def _core_nodes(
    tt: TensorTrain, mode_labels: Sequence[str], prefix: str
) -> tuple[list[Node], list[Index]]:
    """Splice a train into network nodes: cores linked by virtual bonds, plus basis nodes."""
    nodes: list[Node] = []
    indices: list[Index] = []
    n = tt.ndim
    for k, (core, basis, label) in enumerate(zip(tt.cores, tt.bases, mode_labels)):
        labels = []
        data = core
        if k > 0:
            labels.append(f"{prefix}~r{k}")
        else:
            data = data[0]
        if basis is not None:
            m_label = f"{label}~m"
            indices.append(Index(m_label, basis.shape[1], VIRTUAL))
            nodes.append(Node(f"U[{label}]", (label, m_label), basis, "basis"))
            labels.append(m_label)
        else:
            labels.append(label)
        if k < n - 1:
            labels.append(f"{prefix}~r{k + 1}")
            indices.append(Index(f"{prefix}~r{k + 1}", core.shape[2], VIRTUAL))
        else:
            data = data[..., 0]
        nodes.append(Node(f"{prefix}[{k}]", tuple(labels), data, "core"))
    return nodes, indices


def uncertainty_label(p: int) -> str:
    return f"x{p}"


def augment_network(
    bn: BayesianNetwork, specs: Sequence[UncertaintySpec], *, include: Iterable[str] | None = None
) -> TensorNetwork:
    """Moralized network with each affected CPT replaced by its augmented train.

    Uncertainty ``p`` becomes the open index ``x{p}`` (in ``specs`` order).
    ``include`` restricts the network to an ancestrally closed set of
    variables; uncertainties on excluded CPTs keep their (unattached) index.
    """
    check_specs(specs, bn)
    sub = bn if include is None else bn.subnetwork(include)
    plain = moralize_to_tn(sub)
    by_var: dict[str, list[int]] = {}
    for p, spec in enumerate(specs):
        by_var.setdefault(spec.param.variable, []).append(p)

    nodes: list[Node] = []
    indices = dict(plain.indices)
    for p, spec in enumerate(specs):
        label = uncertainty_label(p)
        indices[label] = Index(label, spec.grid_size, UNCERTAINTY)
    for node in plain.nodes:
        child = node.labels[0]
        ps = by_var.get(child)
        if not ps:
            nodes.append(node)
            continue
        tt = augment_cpt(sub.cpt(child), [specs[p] for p in ps])
        labels = [uncertainty_label(p) for p in ps] + list(node.labels)
        core_nodes, core_indices = _core_nodes(tt, labels, f"P'({child})")
        nodes.extend(core_nodes)
        for idx in core_indices:
            indices[idx.name] = idx
    return TensorNetwork(tuple(nodes), indices, tuple(uncertainty_label(p) for p in range(len(specs))))


def augmented_parameter_count(tn: TensorNetwork) -> int:
    """Total stored elements over every node (dense CPTs, cores and bases)."""
    return tn.size


# -- JSON interchange ----------------------------------------------------------


def spec_to_json(spec: UncertaintySpec, bn: BayesianNetwork) -> dict:
    cpt = bn.cpt(spec.param.variable)
    var = bn.variable(spec.param.variable)
    return {
        "variable": var.name,
        "child_state": var.states[spec.param.child_state],
        "parent_states": {p: bn.variable(p).states[j] for p, j in zip(cpt.parents, spec.param.parent_config)},
        "original": spec.original,
        "alpha": spec.prior.alpha,
        "beta": spec.prior.beta,
    }


def spec_from_json(data: Mapping, bn: BayesianNetwork, grid_size: int = DEFAULT_GRID_SIZE) -> UncertaintySpec:
    """Inverse of :func:`spec_to_json`; ``parent_states`` may be a mapping or a list in CPT order."""
    name = data["variable"]
    var = bn.variable(name)
    cpt = bn.cpt(name)
    states = data.get("parent_states") or {}
    if isinstance(states, Mapping):
        if set(states) != set(cpt.parents):
            raise NetworkError(f"parent_states for {name!r} must name exactly {list(cpt.parents)}")
        states = [states[p] for p in cpt.parents]
    if len(states) != len(cpt.parents):
        raise NetworkError(f"{name!r} has {len(cpt.parents)} parents, got {len(states)} parent states")
    config = tuple(bn.variable(p).index(s) for p, s in zip(cpt.parents, states))
    param = ParameterId(name, var.index(data["child_state"]), config)
    original = bn.value(param)
    if "original" in data and abs(float(data["original"]) - original) > 1e-9:
        raise NetworkError(f"{param.describe(bn)} is {original}, file says {data['original']}")
    if "alpha" in data and "beta" in data:
        prior = BetaPrior(float(data["alpha"]), float(data["beta"]))
    else:
        prior = BetaPrior.from_mean_variance(original, float(data["sigma2"]))
    return UncertaintySpec(param, original, prior, int(data.get("grid", grid_size)))


def max_rank_bound(cpt: Cpt, n_specs: int) -> float:
    return math.sqrt(cpt.table.size) + n_specs
