"""Exact Sobol indices of a target probability w.r.t. uncertain CPT entries.

The augmented network computes ``f(x)``, the target probability as a
function of the gridded uncertain entries.  Expectations attach each prior
weight vector to its uncertainty index.  Second moments use two copies of
the network: an uncertainty shared between the copies (one index, one
weight node) integrates ``f(x) f(x')`` with ``x_i = x'_i``; unshared
uncertainties are integrated independently in each copy.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from collections.abc import Collection, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .bn import BayesianNetwork, NetworkError, ParameterId, resolve_assignment
from .encode import UncertaintySpec, augment_network, discretize_prior, spec_to_json
from .oat import sensitivity_values_all
from .tn import Node, TensorNetwork, apply_evidence, contract
from .tt import DEFAULT_MEMORY_CAP

log = logging.getLogger(__name__)

# ratio path (evidence) enumerates the full grid, so it is limited to few inputs
MAX_ENUMERATED_UNCERTAINTIES = 3
UNDEFINED_RTOL = 1e-14
ZERO_EVIDENCE_RTOL = 1e-12
DEFAULT_WORKERS = min(8, os.cpu_count() or 1)


def _weight_nodes(labels: Sequence[str], weights: Sequence[np.ndarray], tag: str = "") -> list[Node]:
    return [Node(f"w[{label}]{tag}", (label,), np.asarray(w, dtype=float), "weight") for label, w in zip(labels, weights)]


def _check_weights(tn: TensorNetwork, weights: Sequence[np.ndarray]) -> list[np.ndarray]:
    if len(weights) != len(tn.open):
        raise ValueError(f"{len(weights)} weight vectors for {len(tn.open)} uncertainty indices")
    out = []
    for label, w in zip(tn.open, weights):
        w = np.asarray(w, dtype=float)
        if w.shape != (tn.indices[label].size,):
            raise ValueError(f"weights for {label!r} have shape {w.shape}, expected ({tn.indices[label].size},)")
        out.append(w)
    return out


def weighted_mean(tn: TensorNetwork, weights: Sequence[np.ndarray], *, memory_cap: int = DEFAULT_MEMORY_CAP) -> float:
    """``E[f]`` with each open index integrated against its weight vector."""
    weights = _check_weights(tn, weights)
    return float(contract(tn.with_nodes(_weight_nodes(tn.open, weights)), memory_cap=memory_cap))


def squared_network(tn: TensorNetwork, weights: Sequence[np.ndarray], shared: Collection[int]) -> TensorNetwork:
    """Two glued copies of ``tn`` computing ``E[f(x) f(x')]`` with ``x_i = x'_i`` for ``i in shared``."""
    weights = _check_weights(tn, weights)
    shared_labels = {tn.open[i] for i in shared}
    copies = []
    for tag in ("a", "b"):
        mapping = {name: f"{name}@{tag}" for name in tn.indices if name not in shared_labels}
        copy = tn.rename(mapping, prefix=f"{tag}:")
        free = [(mapping[l], w) for l, w in zip(tn.open, weights) if l not in shared_labels]
        copies.append((copy, _weight_nodes([l for l, _ in free], [w for _, w in free])))
    (a, wa), (b, wb) = copies
    glue = _weight_nodes(
        [l for l in tn.open if l in shared_labels], [w for l, w in zip(tn.open, weights) if l in shared_labels]
    )
    indices = {**a.indices, **b.indices}
    return TensorNetwork(a.nodes + b.nodes + tuple(wa) + tuple(wb) + tuple(glue), indices)


def second_moment(
    tn: TensorNetwork, weights: Sequence[np.ndarray], shared: Collection[int], *, memory_cap: int = DEFAULT_MEMORY_CAP
) -> float:
    return float(contract(squared_network(tn, weights, shared), memory_cap=memory_cap))


def total_variance(
    tn: TensorNetwork, weights: Sequence[np.ndarray], *, mean: float | None = None, memory_cap: int = DEFAULT_MEMORY_CAP
) -> float:
    """``Var[f] = E[f^2] - E[f]^2``, clamped at zero."""
    if mean is None:
        mean = weighted_mean(tn, weights, memory_cap=memory_cap)
    second = second_moment(tn, weights, range(len(tn.open)), memory_cap=memory_cap)
    return max(second - mean * mean, 0.0)


def _require_variance(variance: float, mean: float) -> None:
    if variance <= UNDEFINED_RTOL * mean * mean or variance <= 0:
        raise ZeroDivisionError("the target does not vary with the uncertain entries; Sobol indices are undefined")


def variance_component(
    tn: TensorNetwork,
    weights: Sequence[np.ndarray],
    i: int,
    *,
    mean: float | None = None,
    variance: float | None = None,
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> float:
    """``S_i = Var_i[E_{~i} f] / Var[f]``."""
    if mean is None:
        mean = weighted_mean(tn, weights, memory_cap=memory_cap)
    if variance is None:
        variance = total_variance(tn, weights, mean=mean, memory_cap=memory_cap)
    _require_variance(variance, mean)
    glued = second_moment(tn, weights, [i], memory_cap=memory_cap)
    return (glued - mean * mean) / variance


def total_index(
    tn: TensorNetwork,
    weights: Sequence[np.ndarray],
    i: int,
    *,
    mean: float | None = None,
    variance: float | None = None,
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> float:
    """``S^T_i = E_{~i}[Var_i f] / Var[f]``."""
    if mean is None:
        mean = weighted_mean(tn, weights, memory_cap=memory_cap)
    if variance is None:
        variance = total_variance(tn, weights, mean=mean, memory_cap=memory_cap)
    _require_variance(variance, mean)
    full = variance + mean * mean
    others = second_moment(tn, weights, [j for j in range(len(tn.open)) if j != i], memory_cap=memory_cap)
    return (full - others) / variance


def grid_indices(values: np.ndarray, weights: Sequence[np.ndarray]):
    """Mean, variance, first-order and total indices of a function tabulated on the full grid."""
    weights = [np.asarray(w, dtype=float) for w in weights]
    n = values.ndim

    def expect(arr, axes, ws=weights):
        for ax in sorted(axes, reverse=True):
            arr = np.tensordot(arr, ws[ax], axes=([ax], [0]))
        return arr

    mean = float(expect(values, range(n)))
    second = float(expect(values**2, range(n)))
    variance = max(second - mean * mean, 0.0)
    if variance <= UNDEFINED_RTOL * mean * mean or variance <= 0:
        return mean, variance, None, None
    first, total = [], []
    for i in range(n):
        others = [j for j in range(n) if j != i]
        g = expect(values, others)  # E_{~i} f, a function of x_i
        first.append((float(weights[i] @ g**2) - mean * mean) / variance)
        h = expect(values, [i])  # E_i f, a function of the rest
        rest = float(expect(h**2, range(n - 1), [weights[j] for j in others]))
        total.append((second - rest) / variance)
    return mean, variance, first, total


# -- report --------------------------------------------------------------------


@dataclass
class SobolRecord:
    param: ParameterId
    label: str
    param_json: dict
    original: float
    sensitivity_value: float | None
    variance_component: float | None
    total_index: float | None

    def as_dict(self) -> dict:
        spec = dict(self.param_json)
        return {
            "param": {k: spec[k] for k in ("variable", "child_state", "parent_states")},
            "label": self.label,
            "original": self.original,
            "alpha": spec["alpha"],
            "beta": spec["beta"],
            "sensitivity_value": self.sensitivity_value,
            "variance_component": self.variance_component,
            "total_index": self.total_index,
        }


@dataclass
class SobolReport:
    target: str
    evidence: dict
    mean: float
    variance: float
    grid: int | list[int]
    sigma2: float | None
    records: list[SobolRecord]
    defined: bool = True
    timing: dict = field(default_factory=dict)

    def as_dict(self, include_timing: bool = True) -> dict:
        out = {
            "target": self.target,
            "evidence": dict(self.evidence),
            "mean": self.mean,
            "variance": self.variance,
            "grid": self.grid,
            "sigma2": self.sigma2,
            "defined": self.defined,
            "records": [r.as_dict() for r in self.records],
        }
        if include_timing and self.timing:
            out["timing"] = dict(self.timing)
        return out

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.as_dict(include_timing), indent=2) + "\n"

    CSV_FIELDS = (
        "rank", "label", "variable", "child_state", "parent_states", "original", "alpha", "beta",
        "sensitivity_value", "variance_component", "total_index", "mean", "variance", "grid", "sigma2",
    )  # fmt: skip

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_FIELDS)
        grid = self.grid if isinstance(self.grid, int) else ";".join(map(str, self.grid))
        for rank, rec in enumerate(self.records, 1):
            d = rec.as_dict()
            parents = ";".join(f"{k}={v}" for k, v in d["param"]["parent_states"].items())
            writer.writerow(
                [rank, d["label"], d["param"]["variable"], d["param"]["child_state"], parents]
                + [_fmt(d[k]) for k in ("original", "alpha", "beta", "sensitivity_value", "variance_component", "total_index")]
                + [_fmt(self.mean), _fmt(self.variance), grid, _fmt(self.sigma2)]
            )
        return buf.getvalue()

    def plot_csv(self) -> str:
        """The three series in rank order, ready for a line plot."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("rank", "label", "sensitivity_value", "variance_component", "total_index"))
        for rank, rec in enumerate(self.records, 1):
            writer.writerow(
                (rank, rec.label, _fmt(rec.sensitivity_value), _fmt(rec.variance_component), _fmt(rec.total_index))
            )
        return buf.getvalue()

    def table(self, top: int | None = None) -> str:
        rows = self.records[:top] if top else self.records
        width = max([len("CPT entry")] + [len(r.label) for r in rows])
        head = (
            f"{'CPT entry':<{width}}  {'Original value':>14}  {'Sensitivity value':>17}  "
            f"{'Variance component':>18}  {'Total index':>11}"
        )
        lines = [head, "-" * len(head)]
        for r in rows:
            lines.append(
                f"{r.label:<{width}}  {r.original:14.6f}  {_num(r.sensitivity_value, 17)}  "
                f"{_num(r.variance_component, 18)}  {_num(r.total_index, 11)}"
            )
        return "\n".join(lines)


def _fmt(x) -> str:
    return "" if x is None else repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _num(x, width: int) -> str:
    return f"{'n/a':>{width}}" if x is None else f"{x:{width}.6f}"


def target_networks(
    bn: BayesianNetwork,
    specs: Sequence[UncertaintySpec],
    target,
    evidence: Mapping | None = None,
) -> tuple[TensorNetwork, TensorNetwork | None]:
    """Augmented networks for ``P(target, evidence)`` and ``P(evidence)`` (None without evidence).

    Only ancestors of the target and evidence are kept; other CPTs sum to one.
    """
    var, state = resolve_assignment(bn, target)
    evidence = {k: bn.variable(k).index(v) for k, v in (evidence or {}).items()}
    include = bn.ancestors({var, *evidence})
    base = augment_network(bn, specs, include=include)
    den = apply_evidence(base, evidence) if evidence else None
    num = apply_evidence(apply_evidence(base, evidence), {var: state})
    return num, den


def analyze(
    bn: BayesianNetwork,
    target,
    specs: Sequence[UncertaintySpec],
    evidence: Mapping | None = None,
    *,
    sigma2: float | None = None,
    weights: Sequence[np.ndarray] | None = None,
    sensitivity: Mapping[ParameterId, float] | None = None,
    memory_cap: int = DEFAULT_MEMORY_CAP,
    networks: tuple[TensorNetwork, TensorNetwork | None] | None = None,
    workers: int | None = None,
) -> SobolReport:
    """Sensitivity value, variance component and total index for every uncertain entry.

    ``networks`` may pass in the output of :func:`target_networks` when the
    caller has already built (and timed) them.  The 2n squared-network
    contractions run on a thread pool of ``workers`` threads; the result does
    not depend on the pool size.
    """
    if not specs:
        raise ValueError("analyze needs at least one uncertain entry")
    evidence = dict(evidence or {})
    var, state = resolve_assignment(bn, target)
    num, den = networks or target_networks(bn, specs, target, evidence)
    if weights is None:
        weights = [discretize_prior(s.prior, s.grid_size) for s in specs]
    weights = _check_weights(num, weights)
    n = len(specs)

    if den is None:
        mean = weighted_mean(num, weights, memory_cap=memory_cap)
        variance = total_variance(num, weights, mean=mean, memory_cap=memory_cap)
        defined = variance > UNDEFINED_RTOL * mean * mean and variance > 0
        first: list | None = None
        total: list | None = None
        if defined:
            full = variance + mean * mean
            # 2n independent contractions; results come back in submission order
            shared_sets = [[i] for i in range(n)] + [[j for j in range(n) if j != i] for i in range(n)]
            with ThreadPoolExecutor(max_workers=workers or DEFAULT_WORKERS) as pool:
                moments = list(pool.map(lambda s: second_moment(num, weights, s, memory_cap=memory_cap), shared_sets))
            first = [(m - mean * mean) / variance for m in moments[:n]]
            total = [(full - m) / variance for m in moments[n:]]
    else:
        if n > MAX_ENUMERATED_UNCERTAINTIES:
            raise NetworkError(
                f"exact indices with evidence are limited to {MAX_ENUMERATED_UNCERTAINTIES} uncertain entries "
                f"(got {n}); use the Monte Carlo estimator instead"
            )
        mean, variance, first, total = grid_indices(_ratio_grid(num, den, memory_cap), weights)
        defined = first is not None

    if sensitivity is None:
        sensitivity = sensitivity_values_all(bn, (var, state), evidence, memory_cap=memory_cap)
    records = []
    for i, spec in enumerate(specs):
        sv = sensitivity.get(spec.param)
        records.append(
            SobolRecord(
                param=spec.param,
                label=spec.param.describe(bn),
                param_json=spec_to_json(spec, bn),
                original=spec.original,
                sensitivity_value=None if sv is None or np.isnan(sv) else float(sv),
                variance_component=float(first[i]) if defined else None,
                total_index=float(total[i]) if defined else None,
            )
        )
    order = sorted(
        range(n),
        key=lambda i: (-(records[i].total_index or 0.0), -(records[i].sensitivity_value or 0.0), i),
    )
    sizes = sorted({s.grid_size for s in specs})
    return SobolReport(
        target=f"{var}={bn.variable(var).states[state]}",
        evidence={k: bn.variable(k).states[bn.variable(k).index(v)] for k, v in evidence.items()},
        mean=float(mean),
        variance=float(variance),
        grid=sizes[0] if len(sizes) == 1 else [s.grid_size for s in specs],
        sigma2=sigma2,
        records=[records[i] for i in order],
        defined=bool(defined),
    )


def _ratio_grid(num: TensorNetwork, den: TensorNetwork, memory_cap: int) -> np.ndarray:
    """``P(target, e) / P(e)`` tabulated over every grid point."""
    shape = tuple(num.indices[l].size for l in num.open)
    out = []
    for tn in (num, den):
        attached = {l for node in tn.nodes for l in node.labels}
        live = [l for l in tn.open if l in attached]
        vals = contract(tn, live, memory_cap=memory_cap)
        # broadcast over uncertainties that do not reach this query
        expand = [slice(None) if l in attached else None for l in tn.open]
        out.append(np.broadcast_to(vals[tuple(expand)] if live else vals, shape))
    n, d = out
    # the encoding leaves round-off where P(e) is exactly zero
    if np.any(d <= ZERO_EVIDENCE_RTOL * d.max()):
        raise NetworkError("evidence has probability zero at some grid point")
    return n / d
