"""Brute-force oracles and random fixtures shared by the test modules.

Nothing here uses tensor trains or network contraction: probabilities come
from the full joint table, augmented CPTs from the row-by-row definition.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from bnsobol.bn import BayesianNetwork, Cpt, ParameterId, Variable, joint_table, resolve_assignment
from bnsobol.encode import BetaPrior, UncertaintySpec, grid
from bnsobol.oat import covary_table

FD_STEP = 1e-5


def random_cpt(rng, child, parents, cards, *, concentration=1.0):
    shape = (cards[child], *(cards[p] for p in parents))
    raw = rng.gamma(concentration, size=shape) + 1e-3
    return Cpt(child, tuple(parents), raw / raw.sum(axis=0, keepdims=True))


def random_bn(rng, n_vars=5, max_parents=2, max_card=3, name="random"):
    """Random DAG in topological order ``v0, v1, ...`` with Dirichlet CPTs."""
    cards = {f"v{i}": int(rng.integers(2, max_card + 1)) for i in range(n_vars)}
    variables = [Variable(v, tuple(f"s{j}" for j in range(c))) for v, c in cards.items()]
    cpts = {}
    for i, v in enumerate(cards):
        k = int(rng.integers(0, min(i, max_parents) + 1))
        parents = sorted(rng.choice(i, size=k, replace=False).tolist()) if k else []
        cpts[v] = random_cpt(rng, v, [f"v{p}" for p in parents], cards)
    return BayesianNetwork(variables, cpts, name)


def joint_states(bn):
    return math.prod(v.cardinality for v in bn.variables)


def joint_from_tables(bn, tables=None):
    """Joint distribution as one einsum over raw CPT arrays (``tables`` overrides by variable)."""
    tables = tables or {}
    operands = []
    for cpt in bn.cpts.values():
        operands.append(np.asarray(tables.get(cpt.child, cpt.table)))
        operands.append([list(bn.names).index(v) for v in cpt.variables])
    return np.einsum(*operands, list(range(len(bn.names))))


def brute_probability(bn, target, evidence=None, tables=None):
    """``P(target | evidence)`` from the full joint; no validation, so tables may leave [0, 1]."""
    joint = joint_from_tables(bn, tables) if tables else joint_table(bn)
    names = list(bn.names)
    var, state = resolve_assignment(bn, target)
    idx = [slice(None)] * len(names)
    for k, v in (evidence or {}).items():
        idx[names.index(k)] = bn.variable(k).index(v)
    den = joint[tuple(idx)].sum()
    idx[names.index(var)] = state
    return joint[tuple(idx)].sum() / den


def covaried(bn, param, value):
    cpt = bn.cpt(param.variable)
    return bn.replace_cpt(cpt.with_table(covary_table(cpt.table, param, value)))


def dense_augmented(table, specs):
    """Augmented CPT from the case definition, axes ``(x_1..x_P, child, *parents)``."""
    table = np.asarray(table, dtype=float)
    sizes = [s.grid_size for s in specs]
    out = np.empty((*sizes, *table.shape))
    for point in itertools.product(*(range(n) for n in sizes)):
        t = table.copy()
        for spec, i in zip(specs, point):
            x = grid(spec.grid_size)[i]
            row = (slice(None), *spec.param.parent_config)
            k = spec.param.child_state
            theta = table[row][k]
            new = table[row] * (1 - x) / (1 - theta)
            new[k] = x
            t[row] = new
        out[point] = t
    return out


def grid_values(bn, target, specs, evidence=None, probability=brute_probability):
    """``f`` on every grid point, by covarying the CPTs and recomputing from scratch."""
    sizes = [s.grid_size for s in specs]
    out = np.empty(sizes)
    for point in itertools.product(*(range(n) for n in sizes)):
        b = bn
        for spec, i in zip(specs, point):
            b = covaried(b, spec.param, grid(spec.grid_size)[i])
        out[point] = probability(b, target, evidence)
    return out


def grid_sobol(values, weights):
    """Mean, variance, first-order and total indices by explicit weighted sums."""
    n = values.ndim
    w = np.ones(values.shape)
    for i, wi in enumerate(weights):
        shape = [1] * n
        shape[i] = len(wi)
        w = w * np.reshape(wi, shape)
    mean = float((w * values).sum())
    var = float((w * (values - mean) ** 2).sum())
    first, total = [], []
    if var <= 0:
        return mean, var, [math.nan] * n, [math.nan] * n
    for i in range(n):
        others = tuple(j for j in range(n) if j != i)
        wi = np.asarray(weights[i])
        # conditional mean given x_i
        cond = (w * values).sum(axis=others) / wi if others else values
        first.append(float((wi * (cond - mean) ** 2).sum()) / var)
        # conditional variance over x_i, averaged over the rest
        w_rest = w.sum(axis=i, keepdims=True)
        cmean = (w * values).sum(axis=i, keepdims=True) / w_rest
        cvar = (w * (values - cmean) ** 2).sum()
        total.append(float(cvar) / var)
    return mean, var, first, total


def spec_for(bn, variable, child_state, parent_config=(), grid_size=9, *, alpha=None, beta=None, sigma2=0.02):
    var = bn.variable(variable)
    param = ParameterId(variable, var.index(child_state), tuple(parent_config))
    theta = bn.value(param)
    prior = BetaPrior(alpha, beta) if alpha is not None else BetaPrior.from_mean_variance(theta, sigma2)
    return UncertaintySpec(param, theta, prior, grid_size)


def random_case(rng, max_card=4, max_parents=3, max_specs=4, max_grid=9):
    """Random CPT of at most 4x4x4x4 with up to four uncertain rows and beta priors."""
    n_par = int(rng.integers(0, max_parents + 1))
    shape = tuple(int(c) for c in rng.integers(2, max_card + 1, size=1 + n_par))
    raw = rng.gamma(1.0, size=shape) + 1e-3
    cpt = Cpt("Y", tuple(f"p{i}" for i in range(n_par)), raw / raw.sum(axis=0, keepdims=True))
    configs = list(cpt.parent_configs())
    rng.shuffle(configs)
    specs = []
    for config in configs[: int(rng.integers(1, max_specs + 1))]:
        k = int(rng.integers(shape[0]))
        theta = float(cpt.table[(k, *config)])
        prior = BetaPrior(1 + rng.random(), 1 + rng.random())
        specs.append(UncertaintySpec(ParameterId("Y", k, tuple(config)), theta, prior, int(rng.integers(2, max_grid + 1))))
    return cpt, specs


def finite_difference(bn, target, param, evidence=None, step=FD_STEP):
    """Central difference of the target along the covariation direction."""
    theta = bn.value(param)
    table = bn.cpt(param.variable).table
    hi, lo = (
        brute_probability(bn, target, evidence, {param.variable: covary_table(table, param, v)})
        for v in (theta + step, theta - step)
    )
    return abs(hi - lo) / (2 * step)
