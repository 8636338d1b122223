"""Tensor trains with optional per-dimension basis matrices.

Core ``k`` has shape ``(r[k-1], m[k], r[k])`` with ``r[0] = r[N] = 1``.  When
dimension ``k`` carries a basis ``U`` of shape ``(I[k], m[k])`` the full core
is ``U`` applied along the middle mode; otherwise ``m[k] = I[k]``.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

DEFAULT_MEMORY_CAP = 2**28
# singular values below this fraction of the largest are treated as exact zeros
_RANK_RTOL = 1e-13


class TTError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TensorTrain:
    cores: tuple[np.ndarray, ...]
    bases: tuple[np.ndarray | None, ...] = ()

    def __post_init__(self) -> None:
        cores = tuple(np.asarray(c, dtype=float) for c in self.cores)
        if not cores:
            raise TTError("a tensor train needs at least one core")
        bases = tuple(self.bases) if self.bases else (None,) * len(cores)
        if len(bases) != len(cores):
            raise TTError(f"{len(bases)} bases for {len(cores)} cores")
        bases = tuple(None if b is None else np.asarray(b, dtype=float) for b in bases)
        for k, c in enumerate(cores):
            if c.ndim != 3:
                raise TTError(f"core {k} has {c.ndim} axes, expected 3")
            left = 1 if k == 0 else cores[k - 1].shape[2]
            if c.shape[0] != left:
                raise TTError(f"core {k} left rank {c.shape[0]} does not match {left}")
            if bases[k] is not None and (bases[k].ndim != 2 or bases[k].shape[1] != c.shape[1]):
                raise TTError(f"basis {k} has shape {bases[k].shape}, core mode size is {c.shape[1]}")
        if cores[-1].shape[2] != 1:
            raise TTError("last core must have right rank 1")
        for c in cores:
            c.setflags(write=False)
        object.__setattr__(self, "cores", cores)
        object.__setattr__(self, "bases", bases)

    @property
    def ndim(self) -> int:
        return len(self.cores)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(c.shape[1] if b is None else b.shape[0] for c, b in zip(self.cores, self.bases))

    @property
    def ranks(self) -> tuple[int, ...]:
        """Bond dimensions ``r_0, ..., r_N`` (both ends are 1)."""
        return (1, *(c.shape[2] for c in self.cores))

    @property
    def rank(self) -> int:
        return max(self.ranks)

    @property
    def size(self) -> int:
        """Stored element count (cores plus basis matrices)."""
        return sum(c.size for c in self.cores) + sum(b.size for b in self.bases if b is not None)

    def full_core(self, k: int) -> np.ndarray:
        c, b = self.cores[k], self.bases[k]
        return c if b is None else np.einsum("im,amb->aib", b, c)

    def is_zero(self) -> bool:
        return any(not np.any(c) for c in self.cores)


def _basis_equal(a: np.ndarray | None, b: np.ndarray | None) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a.shape == b.shape and bool(np.array_equal(a, b))


def tt_compress(t: np.ndarray, tol: float = 0.0) -> TensorTrain:
    """TT-SVD: left-to-right sweep of truncated SVDs.

    Each of the ``N - 1`` truncations discards at most ``tol * ||t|| / sqrt(N - 1)``
    in Frobenius norm, so the total error is at most ``tol * ||t||``.
    """
    if tol < 0:
        raise TTError("tolerance must be non-negative")
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        raise TTError("cannot compress a scalar")
    shape = t.shape
    if t.ndim == 1:
        return TensorTrain((t.reshape(1, -1, 1).copy(),))
    delta = tol * float(np.linalg.norm(t)) / math.sqrt(t.ndim - 1)
    cores = []
    rest = t.reshape(1, -1)
    r = 1
    for n in shape[:-1]:
        mat = rest.reshape(r * n, -1)
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        keep = _truncation_rank(s, delta)
        cores.append(u[:, :keep].reshape(r, n, keep))
        rest = s[:keep, None] * vt[:keep]
        r = keep
    cores.append(rest.reshape(r, shape[-1], 1))
    return TensorTrain(tuple(cores))


def _truncation_rank(s: np.ndarray, delta: float) -> int:
    if s.size == 0 or s[0] == 0:
        return 1
    # tail[k] = norm of s[k:]
    tail = np.sqrt(np.cumsum((s**2)[::-1])[::-1])
    ok = (tail <= delta) | (s <= _RANK_RTOL * s[0])
    keep = int(np.argmax(ok)) if ok.any() else s.size
    return max(keep, 1)


def tt_recompress(tt: TensorTrain, tol: float = 0.0) -> TensorTrain:
    """Rounding: orthogonalize right-to-left, then truncate left-to-right.

    Bases are left untouched; only the coefficient cores are rounded.
    """
    cores = [np.array(c) for c in tt.cores]
    norm_sq = None
    for k in range(len(cores) - 1, 0, -1):
        r0, m, r1 = cores[k].shape
        q, rmat = np.linalg.qr(cores[k].reshape(r0, m * r1).T)
        cores[k] = q.T.reshape(-1, m, r1)
        cores[k - 1] = np.einsum("amb,cb->amc", cores[k - 1], rmat)
    norm_sq = float(np.sum(cores[0] ** 2))
    delta = tol * math.sqrt(norm_sq) / math.sqrt(max(len(cores) - 1, 1))
    for k in range(len(cores) - 1):
        r0, m, r1 = cores[k].shape
        u, s, vt = np.linalg.svd(cores[k].reshape(r0 * m, r1), full_matrices=False)
        keep = _truncation_rank(s, delta)
        cores[k] = u[:, :keep].reshape(r0, m, keep)
        cores[k + 1] = np.einsum("ab,bmc->amc", s[:keep, None] * vt[:keep], cores[k + 1])
    return TensorTrain(tuple(cores), tt.bases)


def tt_decompress(tt: TensorTrain, memory_cap: int = DEFAULT_MEMORY_CAP) -> np.ndarray:
    """Evaluate every entry of the train."""
    shape = tt.shape
    if math.prod(shape) > memory_cap:
        raise MemoryError(f"decompressing shape {shape} exceeds the memory cap of {memory_cap} entries")
    out = np.ones((1, 1))
    for k in range(tt.ndim):
        core = tt.full_core(k)
        out = np.einsum("pa,aib->pib", out, core).reshape(-1, core.shape[2])
    return out.reshape(shape)


def tt_zeros(shape: Sequence[int], bases: Sequence[np.ndarray | None] | None = None) -> TensorTrain:
    bases = tuple(bases) if bases is not None else (None,) * len(shape)
    cores = []
    for n, b in zip(shape, bases):
        m = n if b is None else b.shape[1]
        cores.append(np.zeros((1, m, 1)))
    return TensorTrain(tuple(cores), bases)


def tt_sum(*terms: TensorTrain) -> TensorTrain:
    """Element-wise sum by block-diagonal core concatenation.

    Identically-zero operands are dropped so they do not inflate ranks.
    """
    if not terms:
        raise TTError("tt_sum needs at least one operand")
    shape, bases = terms[0].shape, terms[0].bases
    for t in terms[1:]:
        if t.shape != shape:
            raise TTError(f"shape mismatch in tt_sum: {t.shape} vs {shape}")
        if not all(_basis_equal(a, b) for a, b in zip(t.bases, bases)):
            raise TTError("tt_sum operands must share their basis matrices")
    live = [t for t in terms if not t.is_zero()]
    if not live:
        return terms[0]
    if len(live) == 1:
        return live[0]
    n = len(shape)
    cores = []
    for k in range(n):
        parts = [t.cores[k] for t in live]
        m = parts[0].shape[1]
        if n == 1:
            cores.append(sum(parts))
        elif k == 0:
            cores.append(np.concatenate(parts, axis=2))
        elif k == n - 1:
            cores.append(np.concatenate(parts, axis=0))
        else:
            left = sum(p.shape[0] for p in parts)
            right = sum(p.shape[2] for p in parts)
            core = np.zeros((left, m, right))
            a = b = 0
            for p in parts:
                core[a : a + p.shape[0], :, b : b + p.shape[2]] = p
                a += p.shape[0]
                b += p.shape[2]
            cores.append(core)
    return TensorTrain(tuple(cores), bases)


def tt_unsqueeze(tt: TensorTrain, positions: Sequence[int]) -> TensorTrain:
    """Insert size-1 dimensions so they end up at ``positions`` of the result."""
    n_out = tt.ndim + len(positions)
    positions = sorted(positions)
    if len(set(positions)) != len(positions) or any(not 0 <= p < n_out for p in positions):
        raise TTError(f"invalid unsqueeze positions {positions} for {n_out} output dimensions")
    src_cores = iter(tt.cores)
    src_bases = iter(tt.bases)
    cores: list[np.ndarray] = []
    bases: list[np.ndarray | None] = []
    for k in range(n_out):
        if k in positions:
            r = cores[-1].shape[2] if cores else 1
            cores.append(np.eye(r).reshape(r, 1, r) if r > 1 else np.ones((1, 1, 1)))
            bases.append(None)
        else:
            cores.append(next(src_cores))
            bases.append(next(src_bases))
    return TensorTrain(tuple(cores), tuple(bases))


def tt_tile(
    tt: TensorTrain,
    repeats: Sequence[int],
    bases: Sequence[np.ndarray | None] | None = None,
) -> TensorTrain:
    """Replicate size-1 dimensions ``repeats[k]`` times.

    If ``bases[k]`` is given for a tiled dimension the constant fiber is
    stored as coefficients in that basis instead of ``repeats[k]`` copies.
    """
    if len(repeats) != tt.ndim:
        raise TTError(f"{len(repeats)} repeat counts for {tt.ndim} dimensions")
    bases = tuple(bases) if bases is not None else (None,) * tt.ndim
    cores = list(tt.cores)
    out_bases = list(tt.bases)
    for k, (n, b) in enumerate(zip(repeats, bases)):
        if n == 1:
            continue
        if tt.shape[k] != 1:
            raise TTError(f"cannot tile dimension {k} of size {tt.shape[k]}")
        slab = tt.full_core(k)[:, 0, :]
        if b is None:
            cores[k] = np.repeat(slab[:, None, :], n, axis=1)
            out_bases[k] = None
        else:
            if b.shape[0] != n:
                raise TTError(f"basis for dimension {k} has {b.shape[0]} rows, expected {n}")
            coef = _basis_coefficients(b, np.ones(n))
            cores[k] = np.einsum("ab,m->amb", slab, coef)
            out_bases[k] = b
    return TensorTrain(tuple(cores), tuple(out_bases))


def _basis_coefficients(basis: np.ndarray, target: np.ndarray) -> np.ndarray:
    coef, *_ = np.linalg.lstsq(basis, target, rcond=None)
    if not np.allclose(basis @ coef, target, rtol=0, atol=1e-12 * max(1.0, float(np.abs(target).max()))):
        raise TTError("target is not in the span of the basis")
    return coef


def tt_to_basis(tt: TensorTrain, dim: int, basis: np.ndarray) -> TensorTrain:
    """Re-express dimension ``dim`` in ``basis``; every fiber must lie in its span."""
    full = tt.full_core(dim)
    r0, n, r1 = full.shape
    if basis.shape[0] != n:
        raise TTError(f"basis has {basis.shape[0]} rows, dimension {dim} has size {n}")
    fibers = full.transpose(1, 0, 2).reshape(n, -1)
    coef, *_ = np.linalg.lstsq(basis, fibers, rcond=None)
    scale = max(1.0, float(np.abs(fibers).max()))
    if not np.allclose(basis @ coef, fibers, rtol=0, atol=1e-12 * scale):
        raise TTError(f"dimension {dim} is not representable in the given basis")
    cores = list(tt.cores)
    bases = list(tt.bases)
    cores[dim] = coef.reshape(basis.shape[1], r0, r1).transpose(1, 0, 2)
    bases[dim] = basis
    return TensorTrain(tuple(cores), tuple(bases))


def tt_outer(a: TensorTrain, b: TensorTrain) -> TensorTrain:
    """Tensor product: dimensions of ``a`` followed by those of ``b``."""
    return TensorTrain(a.cores + b.cores, a.bases + b.bases)


def tt_assign_slice(dest: TensorTrain, parent_config: Sequence[int], src: TensorTrain) -> TensorTrain:
    """Place ``src`` at the trailing index tuple ``parent_config`` of ``dest``.

    The block is written as ``src`` times one-hot vectors on the fixed
    dimensions and added to ``dest``; ``dest`` must be zero on that slice.
    """
    k = len(parent_config)
    if src.ndim + k != dest.ndim:
        raise TTError(f"source has {src.ndim} dimensions, destination {dest.ndim} with {k} fixed")
    if src.shape != dest.shape[: src.ndim]:
        raise TTError(f"source shape {src.shape} does not match destination {dest.shape[: src.ndim]}")
    tail = dest.shape[src.ndim :]
    onehots = []
    for j, n in zip(parent_config, tail):
        if not 0 <= j < n:
            raise IndexError(f"index {j} out of range for dimension of size {n}")
        e = np.zeros((1, n, 1))
        e[0, j, 0] = 1.0
        onehots.append(e)
    if not onehots:
        placed = src
    else:
        placed = tt_outer(src, TensorTrain(tuple(onehots)))
    placed = TensorTrain(placed.cores, src.bases + dest.bases[src.ndim :])
    return tt_sum(dest, placed)
