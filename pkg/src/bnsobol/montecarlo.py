"""Monte Carlo pick-freeze estimates of Sobol indices, used as an independent check.

Samples are drawn from the same discretized priors as the exact method, so
both target the same indices.  The target is evaluated for whole blocks of
samples at once: every uncertain CPT gets an extra batch axis holding one
covaried table per sample, and the plain network is contracted keeping that
axis open.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .bn import BayesianNetwork, NetworkError, resolve_assignment
from .encode import UncertaintySpec, check_specs, discretize_prior, grid
from .sobol import UNDEFINED_RTOL
from .tn import MODEL, Index, Node, TensorNetwork, apply_evidence, contract, moralize_to_tn, plan_contraction
from .tt import DEFAULT_MEMORY_CAP

BATCH = "__batch__"
MAX_BLOCK = 4096
MIN_SAMPLES = 1000


@dataclass
class MonteCarloEstimate:
    n_samples: int
    mean: float
    variance: float
    first: np.ndarray  # NaN when undefined
    total: np.ndarray
    first_se: np.ndarray
    total_se: np.ndarray

    @property
    def defined(self) -> bool:
        return bool(np.all(np.isfinite(self.first)))


class BatchEvaluator:
    """``f`` at many points of the uncertainty space, one batched contraction per block."""

    def __init__(
        self,
        bn: BayesianNetwork,
        target,
        specs: Sequence[UncertaintySpec],
        evidence: Mapping | None = None,
        *,
        memory_cap: int = DEFAULT_MEMORY_CAP,
    ):
        check_specs(specs, bn)
        var, state = resolve_assignment(bn, target)
        self.evidence = {k: bn.variable(k).index(v) for k, v in (evidence or {}).items()}
        self.sub = bn.subnetwork(bn.ancestors({var, *self.evidence}))
        self.specs = list(specs)
        self.memory_cap = memory_cap
        # only uncertainties on CPTs of the query's ancestors matter
        self.by_var: dict[str, list[int]] = {}
        for p, spec in enumerate(specs):
            if spec.param.variable in self.sub.cpts:
                self.by_var.setdefault(spec.param.variable, []).append(p)
        plain = moralize_to_tn(self.sub)
        den = apply_evidence(plain, self.evidence)
        num = apply_evidence(den, {var: state})
        self.networks = [num, den] if self.evidence else [num]
        probe = [self._batched(tn, {v: self.sub.cpt(v).table[None] for v in self.by_var}, 1) for tn in self.networks]
        self.plans = [plan_contraction(tn, (BATCH,)) for tn in probe]
        per_sample = max(p.max_clique_size for p in self.plans)
        self.block = int(max(1, min(MAX_BLOCK, memory_cap // (4 * per_sample))))

    def _batched(self, tn: TensorNetwork, tables: Mapping[str, np.ndarray], size: int) -> TensorNetwork:
        nodes = []
        for node in tn.nodes:
            if node.kind == "cpt" and node.labels[0] in tables:
                nodes.append(Node(node.name, (BATCH, *node.labels), tables[node.labels[0]], node.kind))
            else:
                nodes.append(node)
        indices = dict(tn.indices)
        indices[BATCH] = Index(BATCH, size, MODEL)
        return TensorNetwork(nodes, indices)

    def _tables(self, values: np.ndarray) -> dict[str, np.ndarray]:
        """Covaried copies of each uncertain CPT, one per row of ``values``."""
        m = values.shape[0]
        out = {}
        for var, ps in self.by_var.items():
            table = np.broadcast_to(self.sub.cpt(var).table, (m, *self.sub.cpt(var).table.shape)).copy()
            for p in ps:
                param = self.specs[p].param
                v = values[:, p]
                idx = (slice(None), slice(None), *param.parent_config)
                row = table[idx]
                k = param.child_state
                theta = row[0, k]
                if row.shape[1] == 2:
                    new = np.empty_like(row)
                    new[:, 1 - k] = 1.0 - v
                else:
                    new = row * ((1.0 - v) / (1.0 - theta))[:, None]
                new[:, k] = v
                table[idx] = new
            out[var] = table
        return out

    def __call__(self, values: np.ndarray) -> np.ndarray:
        """Target probability for each row of ``values`` (shape ``(m, n_specs)``)."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        out = np.empty(values.shape[0])
        for start in range(0, values.shape[0], self.block):
            chunk = values[start : start + self.block]
            tables = self._tables(chunk)
            results = []
            for tn, plan in zip(self.networks, self.plans):
                if self.by_var:
                    res = contract(self._batched(tn, tables, len(chunk)), (BATCH,), order=plan.order, memory_cap=self.memory_cap)
                else:
                    res = np.full(len(chunk), float(contract(tn, memory_cap=self.memory_cap)))
                results.append(res)
            if self.evidence:
                if np.any(results[1] <= 0):
                    raise NetworkError("evidence has probability zero at a sampled point")
                out[start : start + len(chunk)] = results[0] / results[1]
            else:
                out[start : start + len(chunk)] = results[0]
        return out


def _sample(rng: np.random.Generator, weights: Sequence[np.ndarray], n: int) -> np.ndarray:
    cols = []
    for w in weights:
        x = grid(len(w))
        cols.append(x[rng.choice(len(w), size=n, p=w / w.sum())])
    return np.column_stack(cols)


def mc_pick_freeze(
    bn: BayesianNetwork,
    target,
    specs: Sequence[UncertaintySpec],
    n_samples: int,
    seed: int = 0,
    evidence: Mapping | None = None,
    *,
    weights: Sequence[np.ndarray] | None = None,
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> MonteCarloEstimate:
    """Saltelli first-order and Jansen total-effect estimates with jackknife standard errors.

    Uses ``n_samples * (len(specs) + 2)`` evaluations of the target.
    """
    if n_samples < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {n_samples}")
    if not specs:
        raise ValueError("need at least one uncertain entry")
    if weights is None:
        weights = [discretize_prior(s.prior, s.grid_size) for s in specs]
    weights = [np.asarray(w, dtype=float) for w in weights]
    stream_a, stream_b = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    a = _sample(stream_a, weights, n_samples)
    b = _sample(stream_b, weights, n_samples)
    f = BatchEvaluator(bn, target, specs, evidence, memory_cap=memory_cap)
    fa, fb = f(a), f(b)
    n = len(specs)
    fab = np.empty((n, n_samples))
    for i in range(n):
        ab = a.copy()
        ab[:, i] = b[:, i]
        fab[i] = f(ab)

    # per-sample contributions; every estimator is a ratio of sample means
    pooled = np.concatenate([fa, fb])
    mean = float(pooled.mean())
    variance = float(pooled.var())
    degenerate = variance <= UNDEFINED_RTOL * mean * mean
    if degenerate:
        variance = 0.0
    first_terms = fb[None, :] * (fab - fa[None, :])
    total_terms = 0.5 * (fa[None, :] - fab) ** 2

    s1 = (fa + fb).sum()
    s2 = (fa**2 + fb**2).sum()
    m = 2 * (n_samples - 1)
    jack_mean = (s1 - fa - fb) / m
    jack_var = (s2 - fa**2 - fb**2) / m - jack_mean**2

    def estimate(terms):
        num = terms.mean(axis=1)
        jack_num = (terms.sum(axis=1, keepdims=True) - terms) / (n_samples - 1)
        if degenerate:
            nan = np.full(n, np.nan)
            return nan, nan
        with np.errstate(divide="ignore", invalid="ignore"):
            jack = jack_num / jack_var[None, :]
        centered = jack - jack.mean(axis=1, keepdims=True)
        se = np.sqrt((n_samples - 1) / n_samples * (centered**2).sum(axis=1))
        return num / variance, se

    first, first_se = estimate(first_terms)
    total, total_se = estimate(total_terms)
    return MonteCarloEstimate(n_samples, mean, variance, first, total, first_se, total_se)
