"""Row-permutation search that shrinks the subvector covariance determinant.

Reordering the rows of a weight matrix changes which entries end up in the
same subvector, and the log-determinant of the subvector covariance lower-
bounds how well a fixed-size codebook can represent them. This module
estimates that covariance, scores permutations by its (regularized) log
determinant, builds a greedy bucket-balanced initial permutation, and refines
it with stochastic local search. Convolution rows move in contiguous groups
of K*K so whole filters stay together, and several layers that must share one
channel permutation can be optimized jointly on their summed objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IndivisibleBlockSize, MismatchedChannelCounts, TooFewSubvectors
from .layout import ReshapedWeight, SubvectorMatrix
from .rng import make_rng


@dataclass(frozen=True, eq=False)
class Permutation:
    """A row permutation: ``apply(M)[i] == M[indices[i]]``.

    `block` rows move together: ``indices[b*block + r] == indices[b*block] + r``.
    """

    indices: np.ndarray
    block: int = 1

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))

    @classmethod
    def identity(cls, size: int, block: int = 1) -> "Permutation":
        return cls(np.arange(size, dtype=np.int64), block)

    @property
    def size(self) -> int:
        return self.indices.shape[0]

    def validate(self):
        idx = self.indices
        m, g = idx.shape[0], self.block
        if g <= 0 or m % g != 0:
            raise IndivisibleBlockSize(f"block {g} does not divide {m} rows")
        if not np.array_equal(np.sort(idx), np.arange(m)):
            raise IndivisibleBlockSize("indices are not a permutation")
        grid = idx.reshape(m // g, g)
        if not np.array_equal(grid, grid[:, :1] + np.arange(g)):
            raise IndivisibleBlockSize("permutation does not respect its block structure")

    def apply_rows(self, matrix: np.ndarray) -> np.ndarray:
        return matrix[self.indices]

    def invert_rows(self, matrix: np.ndarray) -> np.ndarray:
        out = np.empty_like(matrix)
        out[self.indices] = matrix
        return out

    def inverse(self) -> "Permutation":
        return Permutation(np.argsort(self.indices), self.block)


def expand_channel_permutation(channel_indices, rows_per_channel: int) -> Permutation:
    """Lift a channel permutation to row level, `rows_per_channel` rows each."""
    chan = np.asarray(channel_indices, dtype=np.int64)
    g = int(rows_per_channel)
    rows = (chan[:, None] * g + np.arange(g)).ravel()
    return Permutation(rows, block=g)


@dataclass(frozen=True, eq=False)
class CovarianceStats:
    """Empirical mean/covariance of a set of subvectors."""

    sigma: np.ndarray  # (d, d), mean-centered, 1/N normalization
    count: int
    mean: np.ndarray  # (d,)

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]


def _as_points(subvectors) -> np.ndarray:
    if isinstance(subvectors, SubvectorMatrix):
        return subvectors.points()
    pts = np.asarray(subvectors, dtype=np.float64)
    if pts.ndim != 2:
        raise TooFewSubvectors(f"expected an (N, d) array, got shape {pts.shape}")
    return pts


def subvector_covariance(subvectors) -> CovarianceStats:
    """Mean-centered covariance (1/N normalization) over all subvectors."""
    pts = _as_points(subvectors)
    n = pts.shape[0]
    if n < 2:
        raise TooFewSubvectors(f"need at least 2 subvectors, got {n}")
    mean = pts.mean(axis=0)
    centered = pts - mean
    # einsum keeps the reduction off BLAS so results do not depend on thread count
    sigma = np.einsum("ni,nj->ij", centered, centered) / n
    sigma = 0.5 * (sigma + sigma.T)
    return CovarianceStats(sigma=sigma, count=n, mean=mean)


def _regularized_logdet(sigma: np.ndarray) -> float:
    d = sigma.shape[0]
    eps = 1e-12 * max(float(np.trace(sigma)) / d, 1.0)
    a = sigma + eps * np.eye(d)
    try:
        chol = np.linalg.cholesky(a)
        return float(2.0 * np.sum(np.log(np.diag(chol))))
    except np.linalg.LinAlgError:
        eigs = np.linalg.eigvalsh(a)
        return float(np.sum(np.log(np.clip(eigs, eps, None))))


def logdet(stats: CovarianceStats) -> float:
    """Natural-log determinant of ``sigma + eps*I`` via a symmetric factorization."""
    return _regularized_logdet(stats.sigma)


def rd_lower_bound(stats: CovarianceStats, k: int, d: int | None = None) -> float:
    """Minimum expected per-subvector squared error of a size-`k` quantizer.

    Evaluates ``k**(-2/d) * d * det(sigma)**(1/d)`` with the exact
    (unregularized) determinant, so degenerate covariances give 0.
    """
    if d is None:
        d = stats.dim
    if d != stats.dim:
        raise TooFewSubvectors(f"bound dimension {d} != covariance dimension {stats.dim}")
    if k < 1:
        raise ValueError("codebook size must be >= 1")
    eigs = np.clip(np.linalg.eigvalsh(stats.sigma), 0.0, None)
    if np.any(eigs <= 0.0):
        det_root = 0.0
    else:
        det_root = float(np.exp(np.mean(np.log(eigs))))
    return float(k ** (-2.0 / d)) * d * det_root


def subvector_points(matrix: np.ndarray, d: int) -> np.ndarray:
    """Column subvectors of an `(m, n)` matrix as an `(m/d*n, d)` array."""
    m, n = matrix.shape
    if d <= 0 or m % d != 0:
        raise IndivisibleBlockSize(f"subvector size {d} does not divide {m} rows")
    return matrix.reshape(m // d, d, n).transpose(0, 2, 1).reshape(-1, d)


def matrix_objective(matrix: np.ndarray, d: int) -> float:
    """Regularized logdet of the subvector covariance of `matrix`."""
    return logdet(subvector_covariance(subvector_points(matrix, d)))


def permuted_objective(matrix: np.ndarray, d: int, indices) -> float:
    return matrix_objective(matrix[np.asarray(indices, dtype=np.int64)], d)


def _as_matrix(weight) -> np.ndarray:
    if isinstance(weight, ReshapedWeight):
        return weight.matrix
    return np.asarray(weight, dtype=np.float64)


def _group_scores(matrix: np.ndarray, block: int) -> np.ndarray:
    """Score each contiguous `block`-row group.

    For single rows the score is the population variance of the row; for
    larger blocks it is the regularized logdet of the block's own covariance
    across columns.
    """
    m, n = matrix.shape
    n_groups = m // block
    if block == 1:
        return matrix.var(axis=1)
    scores = np.empty(n_groups)
    for g in range(n_groups):
        rows = matrix[g * block : (g + 1) * block]
        centered = rows - rows.mean(axis=1, keepdims=True)
        cov = np.einsum("in,jn->ij", centered, centered) / n
        scores[g] = _regularized_logdet(cov)
    return scores


def greedy_init(weight, d: int, block: int = 1) -> Permutation:
    """Bucket-balancing initial permutation.

    Creates ``d/block`` buckets of capacity ``m/d`` row groups, assigns groups
    in descending score order to the non-full bucket with the smallest
    running score sum (ties to the lowest bucket index), then interlaces the
    buckets so same-bucket groups land exactly `d` rows apart.
    """
    matrix = _as_matrix(weight)
    m = matrix.shape[0]
    if block <= 0 or d <= 0 or d % block != 0 or m % d != 0:
        raise IndivisibleBlockSize(
            f"need block | d and d | rows, got rows={m}, d={d}, block={block}"
        )
    n_buckets = d // block
    capacity = m // d
    scores = _group_scores(matrix, block)
    order = np.argsort(-scores, kind="stable")  # descending, ties by original index

    buckets = [[] for _ in range(n_buckets)]
    sums = np.zeros(n_buckets)
    for g in order:
        open_idx = np.flatnonzero([len(b) < capacity for b in buckets])
        pick = open_idx[np.argmin(sums[open_idx])]
        buckets[pick].append(int(g))
        sums[pick] += scores[g]

    group_order = np.empty(m // block, dtype=np.int64)
    for b, members in enumerate(buckets):
        for slot, g in enumerate(members):
            group_order[slot * n_buckets + b] = g
    rows = (group_order[:, None] * block + np.arange(block)).ravel()
    return Permutation(rows, block=block)


def local_search(
    weight, d: int, block: int, init: Permutation, iters: int, seed: int
) -> Permutation:
    """Refine a permutation by random group swaps, keeping strict improvements.

    Each iteration proposes swapping two distinct `block`-row groups chosen
    uniformly at random and recomputes the full objective; the result never
    scores worse than `init`. Deterministic given `seed`.
    """
    matrix = _as_matrix(weight)
    init.validate()
    if init.block != block or init.size != matrix.shape[0]:
        raise IndivisibleBlockSize("initial permutation does not match the matrix/block")
    indices = init.indices.copy()
    n_groups = matrix.shape[0] // block
    if iters <= 0 or n_groups < 2:
        return Permutation(indices, block)

    rng = make_rng(seed, "perm-local-search")
    groups = indices.reshape(n_groups, block)
    current = permuted_objective(matrix, d, indices)
    for _ in range(iters):
        a = int(rng.integers(n_groups))
        b = int(rng.integers(n_groups - 1))
        if b >= a:
            b += 1
        groups[[a, b]] = groups[[b, a]]
        candidate = permuted_objective(matrix, d, indices)
        if candidate < current:
            current = candidate
        else:
            groups[[a, b]] = groups[[b, a]]
    return Permutation(indices, block)


def _child_spec(child):
    if isinstance(child, tuple):
        weight, d, block = child
        return _as_matrix(weight), int(d), int(block)
    raise TypeError("children must be (weight, d, block) tuples")


def optimize_group_permutation(
    children, iters: int = 1000, seed: int = 0, channel_block: int = 1
) -> Permutation:
    """Find one channel permutation shared by all `children`.

    `children` is a list of ``(weight_matrix, d, block)`` tuples where `block`
    is the number of matrix rows per shared channel (K*K for convolutions).
    The summed objective over all children is optimized: the greedy
    initialization comes from the child with the largest weight matrix, the
    identity permutation is kept instead when it scores better, and local
    search then swaps channels (or `channel_block`-sized channel groups)
    accepting strict improvements of the sum. Returns a channel-level
    permutation with ``block=channel_block``.
    """
    specs = [_child_spec(c) for c in children]
    if not specs:
        raise MismatchedChannelCounts("need at least one child")

    channels = None
    for matrix, d, block in specs:
        m = matrix.shape[0]
        if block <= 0 or m % block != 0:
            raise IndivisibleBlockSize(f"block {block} does not divide {m} rows")
        if d <= 0 or m % d != 0:
            raise IndivisibleBlockSize(f"subvector size {d} does not divide {m} rows")
        c = m // block
        if channels is None:
            channels = c
        elif channels != c:
            raise MismatchedChannelCounts(f"children disagree on channels: {channels} vs {c}")
    if channel_block <= 0 or channels % channel_block != 0:
        raise IndivisibleBlockSize(
            f"channel block {channel_block} does not divide {channels} channels"
        )

    def objective(chan: np.ndarray) -> float:
        total = 0.0
        for matrix, d, block in specs:
            rows = (chan[:, None] * block + np.arange(block)).ravel()
            total += permuted_objective(matrix, d, rows)
        return total

    identity = np.arange(channels, dtype=np.int64)
    best = identity
    best_obj = objective(identity)
    # greedy initialization needs whole blocks inside each subvector
    largest = max(specs, key=lambda s: s[0].size)
    if channel_block == 1 and largest[1] % largest[2] == 0:
        row_perm = greedy_init(largest[0], largest[1], largest[2])
        greedy = row_perm.indices.reshape(channels, largest[2])[:, 0] // largest[2]
        greedy_obj = objective(greedy)
        if greedy_obj < best_obj:
            best, best_obj = greedy, greedy_obj

    chan = best.copy()
    n_units = channels // channel_block
    rng = make_rng(seed, "perm-local-search")
    if iters > 0 and n_units >= 2:
        units = chan.reshape(n_units, channel_block)
        current = best_obj
        for _ in range(iters):
            a = int(rng.integers(n_units))
            b = int(rng.integers(n_units - 1))
            if b >= a:
                b += 1
            units[[a, b]] = units[[b, a]]
            candidate = objective(chan)
            if candidate < current:
                current = candidate
            else:
                units[[a, b]] = units[[b, a]]
    return Permutation(chan, block=channel_block)
