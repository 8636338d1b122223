"""One-at-a-time sensitivity analysis under proportional covariation."""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from .bn import BayesianNetwork, Cpt, NetworkError, ParameterId, resolve_assignment
from .encode import DEFAULT_GRID_SIZE, BetaPrior, UncertaintySpec
from .tn import Node, TensorNetwork, apply_evidence, contract, moralize_to_tn
from .tt import DEFAULT_MEMORY_CAP

log = logging.getLogger(__name__)

NONZERO_THRESHOLD = 1e-12


def covary_table(table: np.ndarray, param: ParameterId, value: float) -> np.ndarray:
    """Copy of ``table`` with one entry set and its row siblings rescaled proportionally.

    No range checks, so it can also be evaluated just outside [0, 1].
    """
    out = np.array(table, dtype=float)
    idx = (slice(None), *param.parent_config)
    row = out[idx]
    k = param.child_state
    theta = row[k]
    if row.size == 2:
        new = np.empty(2)
        new[1 - k] = 1.0 - value
    elif theta >= 1.0:
        raise NetworkError(f"cannot covary {param}: original value is 1 and the row has {row.size} states")
    else:
        new = row * ((1.0 - value) / (1.0 - theta))
    new[k] = value
    out[idx] = new
    return out


def covary(cpt: Cpt, param: ParameterId, new_value: float) -> Cpt:
    """Set one CPT entry and proportionally rescale the rest of its row."""
    if param.variable != cpt.child:
        raise NetworkError(f"{param} is not an entry of the CPT of {cpt.child!r}")
    if not 0.0 <= new_value <= 1.0:
        raise ValueError(f"new value {new_value} outside [0, 1]")
    return cpt.with_table(covary_table(cpt.table, param, new_value))


@dataclass(frozen=True)
class SensitivityFunction:
    """``f(theta) = (c0 + ci theta) / (d0 + di theta)``."""

    c0: float
    ci: float
    d0: float = 1.0
    di: float = 0.0

    def __call__(self, theta):
        return (self.c0 + self.ci * theta) / (self.d0 + self.di * theta)

    def derivative(self, theta):
        return (self.ci * self.d0 - self.c0 * self.di) / (self.d0 + self.di * theta) ** 2


class _Query:
    """Numerator / denominator networks for ``P(target | evidence)``."""

    def __init__(self, bn: BayesianNetwork, target, evidence: Mapping | None):
        self.target_var, self.target_state = resolve_assignment(bn, target)
        self.evidence = {k: bn.variable(k).index(v) for k, v in (evidence or {}).items()}
        if self.target_var in self.evidence and self.evidence[self.target_var] != self.target_state:
            log.info("target contradicts evidence; the probability of interest is 0")
        self.sub = bn.subnetwork(bn.ancestors({self.target_var, *self.evidence}))
        plain = moralize_to_tn(self.sub)
        self.den = apply_evidence(plain, self.evidence)
        self.num = apply_evidence(self.den, {self.target_var: self.target_state})

    def _swap(self, tn: TensorNetwork, variable: str, table: np.ndarray) -> TensorNetwork:
        nodes = tuple(
            Node(n.name, n.labels, table, n.kind) if n.kind == "cpt" and n.labels[0] == variable else n
            for n in tn.nodes
        )
        return TensorNetwork(nodes, tn.indices, tn.open)

    def evaluate(self, variable: str | None = None, table: np.ndarray | None = None, memory_cap=DEFAULT_MEMORY_CAP):
        """(numerator, denominator), optionally with one CPT table replaced."""
        num, den = self.num, self.den
        if variable is not None and variable in self.sub.cpts:
            num, den = self._swap(num, variable, table), self._swap(den, variable, table)
        n = float(contract(num, memory_cap=memory_cap))
        d = float(contract(den, memory_cap=memory_cap)) if self.evidence else 1.0
        return n, d

    def gradient(self, variable: str, memory_cap=DEFAULT_MEMORY_CAP):
        """Partial derivatives of numerator and denominator w.r.t. every entry of one CPT."""
        cpt = self.sub.cpt(variable)
        out = []
        for tn in (self.num, self.den) if self.evidence else (self.num,):
            nodes = [n for n in tn.nodes if not (n.kind == "cpt" and n.labels[0] == variable)]
            # an unobserved leaf loses its only factor; the gradient is flat along that axis
            present = {l for n in nodes for l in n.labels}
            nodes += [Node(f"1({l})", (l,), np.ones(tn.indices[l].size), "ones") for l in cpt.variables if l not in present]
            rest = TensorNetwork(tuple(nodes), tn.indices)
            out.append(contract(rest, cpt.variables, memory_cap=memory_cap))
        if not self.evidence:
            out.append(np.zeros(cpt.table.shape))
        return out


def sensitivity_function(
    bn: BayesianNetwork,
    param: ParameterId,
    target,
    evidence: Mapping | None = None,
    *,
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> SensitivityFunction:
    """Exact rational sensitivity function of ``P(target | evidence)`` in one CPT entry.

    Numerator and denominator are affine in the entry, so evaluating both at
    0 and 1 determines all four coefficients.
    """
    q = _Query(bn, target, evidence)
    table = bn.cpt(param.variable).table
    n0, d0 = q.evaluate(param.variable, covary_table(table, param, 0.0), memory_cap)
    n1, d1 = q.evaluate(param.variable, covary_table(table, param, 1.0), memory_cap)
    if not q.evidence:
        return SensitivityFunction(n0, n1 - n0)
    if d0 <= 0 and d1 <= 0:
        raise NetworkError("evidence has probability zero for every value of the parameter")
    return SensitivityFunction(n0, n1 - n0, d0, d1 - d0)


def _row_derivatives(table: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """d/dtheta of a multilinear quantity whose partials w.r.t. the CPT are ``grad``.

    With proportional covariation, moving entry k of a row moves its
    siblings by ``-theta_j / (1 - theta_k)``.  Entries equal to 1 in rows of
    more than two states have no covariation and yield NaN.
    """
    n = table.shape[0]
    if n == 2:
        return grad - grad[::-1]
    weighted = (grad * table).sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = grad - (weighted - grad * table) / (1.0 - table)
    out[table >= 1.0] = np.nan
    return out


def sensitivity_values_all(
    bn: BayesianNetwork,
    target,
    evidence: Mapping | None = None,
    *,
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> dict[ParameterId, float]:
    """``|f'(theta_0)|`` for every CPT entry, from one gradient contraction per CPT.

    CPTs that cannot influence the query (d-separated parameter nodes)
    report exactly 0.
    """
    q = _Query(bn, target, evidence)
    requisite = bn.requisite_cpts({q.target_var}, q.evidence)
    num0, den0 = q.evaluate(memory_cap=memory_cap)
    if den0 <= 0:
        raise NetworkError("evidence has probability zero")
    values: dict[ParameterId, float] = {}
    for cpt in bn.cpts.values():
        if cpt.child in requisite:
            gnum, gden = q.gradient(cpt.child, memory_cap)
            dnum = _row_derivatives(cpt.table, gnum)
            dden = _row_derivatives(cpt.table, gden)
            deriv = np.abs((dnum * den0 - num0 * dden) / den0**2)
        else:
            deriv = np.zeros(cpt.table.shape)
        for config in cpt.parent_configs():
            for k in range(cpt.table.shape[0]):
                values[ParameterId(cpt.child, k, config)] = float(deriv[(k, *config)])
    return values


def select_uncertainties(
    bn: BayesianNetwork,
    target,
    sigma2: float = 0.02,
    grid_size: int = DEFAULT_GRID_SIZE,
    evidence: Mapping | None = None,
    *,
    values: Mapping[ParameterId, float] | None = None,
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> list[UncertaintySpec]:
    """Pick at most one uncertain entry per CPT row, by sensitivity value.

    A row qualifies when every entry has a sensitivity value above
    ``NONZERO_THRESHOLD``; the entry with the largest sensitivity value
    (lowest child state on ties) receives a beta prior with mean equal to
    the entry and variance ``sigma2``.  Rows where no such beta exists
    (entries too close to 0 or 1 for that variance) are skipped.
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    if values is None:
        values = sensitivity_values_all(bn, target, evidence, memory_cap=memory_cap)
    specs = []
    skipped = 0
    for cpt in bn.cpts.values():
        for config in cpt.parent_configs():
            row = np.array([values[ParameterId(cpt.child, k, config)] for k in range(cpt.table.shape[0])])
            if not np.all(row > NONZERO_THRESHOLD):
                continue
            k = int(np.argmax(row))
            param = ParameterId(cpt.child, k, config)
            theta = float(cpt.table[(k, *config)])
            try:
                prior = BetaPrior.from_mean_variance(theta, sigma2)
            except ValueError:
                log.info("skipping %s: no beta prior with mean %.6g and variance %g", param.describe(bn), theta, sigma2)
                skipped += 1
                continue
            specs.append(UncertaintySpec(param, theta, prior, grid_size))
    if skipped:
        log.warning("skipped %d CPT rows with no beta prior of variance %g around the selected entry", skipped, sigma2)
    return specs


def rank_parameters(values: Mapping[ParameterId, float]) -> list[tuple[ParameterId, float]]:
    """Entries by descending sensitivity value (NaN last, stable otherwise)."""
    items = list(values.items())
    return sorted(items, key=lambda kv: (np.isnan(kv[1]), -np.nan_to_num(kv[1], nan=0.0)))


def parameter_table(bn: BayesianNetwork, values: Mapping[ParameterId, float]) -> list[dict]:
    rows = []
    for param, value in values.items():
        cpt = bn.cpt(param.variable)
        rows.append(
            {
                "parameter": param.describe(bn),
                "variable": param.variable,
                "child_state": bn.variable(param.variable).states[param.child_state],
                "parent_states": {p: bn.variable(p).states[j] for p, j in zip(cpt.parents, param.parent_config)},
                "original": bn.value(param),
                "sensitivity_value": None if np.isnan(value) else value,
            }
        )
    return rows

