"""Median-of-Means and Median-of-U-statistics estimators.

``mom_estimate`` and ``mou_estimate`` estimate expectations of a fixed
function (or two-sample kernel); ``dual_objective`` combines them into the
critic objective whose supremum over critics defines the robust W1
estimators.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .blocking import (
    BlockScheme,
    SchemeKind,
    assign_blocks,
    median_index,
    partition,
    sample_blocks,
)
from .critic import forward_batch
from .data import Sample, ValidationError


class Estimator(str, enum.Enum):
    MOM = "mom"
    MOU = "mou"
    MOU_DIAG = "mou-diag"
    MOU_PAIRS = "mou-pairs"  # incomplete U-statistics on random pair blocks


@dataclass(frozen=True)
class EstimatorSpec:
    """Which estimator to use and with how many blocks.

    ``sample_scheme`` chooses how each sample is cut (plain partition or
    randomized SWoR blocks); pair blocks for MoU variants are built by
    crossing the per-sample blocks.
    """

    kind: Estimator
    k_x: int = 1
    k_y: int = 1
    sample_scheme: SchemeKind = SchemeKind.PARTITION

    def __post_init__(self):
        object.__setattr__(self, "kind", Estimator(self.kind))
        object.__setattr__(self, "sample_scheme", SchemeKind(self.sample_scheme))
        if self.sample_scheme.is_pair_scheme:
            raise ValidationError("sample_scheme must be a single-sample scheme")
        if self.k_x < 1 or self.k_y < 1:
            raise ValidationError("block counts must be at least 1")
        if self.kind is Estimator.MOU_DIAG and self.k_x != self.k_y:
            raise ValidationError("MoU-diag needs k_x == k_y")

    def validate_sizes(self, n, m):
        if self.sample_scheme is SchemeKind.PARTITION and (self.k_x > n or self.k_y > m):
            raise ValidationError(f"k_x={self.k_x}, k_y={self.k_y} too large for n={n}, m={m}")


@dataclass(frozen=True)
class BlockStatistic:
    block_index: int | tuple
    value: float


def _points(sample):
    if isinstance(sample, Sample):
        return sample.points
    pts = np.asarray(sample, dtype=np.float64)
    return pts[:, None] if pts.ndim == 1 else pts


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _eval(f, pts):
    vals = np.asarray(f(pts), dtype=np.float64).reshape(-1)
    if vals.shape[0] != pts.shape[0]:
        raise ValidationError("function must return one value per point")
    if not np.all(np.isfinite(vals)):
        raise ValidationError("function produced non-finite values")
    return vals


def block_means(values, blocks):
    """Row means of ``values[blocks]`` (numpy's pairwise summation)."""
    return values[blocks].mean(axis=1)


def mom_from_values(values, blocks):
    means = block_means(values, blocks)
    t = median_index(means)
    return float(means[t]), t, means


def mom_estimate(sample, f, k, seed=0, blocks=None):
    """Median of the ``k`` block means of ``f`` over a shuffled partition.

    Parameters
    ----------
    sample : Sample or array of shape (n, d)
    f : callable
        Vectorised function mapping an ``(p, d)`` array to ``p`` reals.
    k : int
        Number of blocks.
    seed : int or Generator
        Drives the partition shuffle.
    blocks : ndarray of shape (k, B), optional
        Fixed blocks; overrides ``k`` and ``seed``.

    Returns
    -------
    value : float
    median_block : ndarray of int
        Indices of the block attaining the (lower) median.
    """
    pts = _points(sample)
    if blocks is None:
        blocks = assign_blocks(pts.shape[0], BlockScheme(SchemeKind.PARTITION, k), _rng(seed)).blocks
    vals = _eval(f, pts)
    value, t, _ = mom_from_values(vals, np.asarray(blocks))
    return value, np.asarray(blocks)[t]


class PairScheme(str, enum.Enum):
    GRID = "grid"
    DIAGONAL = "diagonal"
    RANDOMIZED_PAIRS = "pairs"


_PAIR_KIND = {
    PairScheme.GRID: SchemeKind.GRID_PAIRS,
    PairScheme.DIAGONAL: SchemeKind.DIAGONAL_PAIRS,
    PairScheme.RANDOMIZED_PAIRS: SchemeKind.RANDOMIZED_PAIR_BLOCKS,
}


def pair_block_statistics(xs, ys, h, assignment):
    """Mean of ``h`` over every pair block of ``assignment``.

    ``h`` maps two aligned ``(p, d)`` arrays to ``p`` kernel values.
    """
    stats = []
    for pairs in assignment.blocks:
        vals = np.asarray(h(xs[pairs[:, 0]], ys[pairs[:, 1]]), dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(vals)):
            raise ValidationError("kernel produced non-finite values")
        stats.append(vals.mean())
    if not stats:
        raise ValidationError("empty block set")
    return np.array(stats)


def mou_estimate(sample_x, sample_y, h, k_x, k_y, scheme=PairScheme.GRID, seed=0, assignment=None):
    """Median over pair blocks of two-sample block U-statistics of ``h``.

    Returns ``(value, pairs)`` where ``pairs`` is the ``(p, 2)`` array of
    ``(i, j)`` index pairs in the winning block.
    """
    xs, ys = _points(sample_x), _points(sample_y)
    if assignment is None:
        kind = _PAIR_KIND[PairScheme(scheme)]
        if kind is SchemeKind.DIAGONAL_PAIRS and k_x != k_y:
            raise ValidationError("diagonal scheme needs k_x == k_y")
        assignment = assign_blocks(xs.shape[0], BlockScheme(kind, k_x, k_y), _rng(seed), m=ys.shape[0])
    stats = pair_block_statistics(xs, ys, h, assignment)
    t = median_index(stats)
    return float(stats[t]), np.asarray(assignment.blocks[t])


def critic_kernel(net):
    """Two-sample kernel ``h(x, y) = phi(x) - phi(y)``."""
    return lambda xs, ys: forward_batch(net, xs) - forward_batch(net, ys)


@dataclass(frozen=True)
class MedianBlocks:
    """Winning block(s) of one objective evaluation.

    ``x_weights``/``y_weights`` are the per-point coefficients of the
    objective restricted to the winning block: the objective equals
    ``x_weights . phi(X) - y_weights . phi(Y)`` for every critic, with the
    block held fixed.
    """

    x_index: np.ndarray
    y_index: np.ndarray
    x_weights: np.ndarray
    y_weights: np.ndarray
    pairs: np.ndarray | None = None


def draw_sample_blocks(rng, n, m, spec):
    """Per-sample blocks for X then Y, always consumed in that order."""
    bx = sample_blocks(n, spec.sample_scheme, spec.k_x, rng)
    by = sample_blocks(m, spec.sample_scheme, spec.k_y, rng)
    return bx, by


def _weights_for_block(size, idx):
    w = np.zeros(size)
    np.add.at(w, idx, 1.0 / len(idx))
    return w


def objective_from_values(fx, fy, spec, rng):
    """Robust objective from precomputed critic values ``fx = phi(X)``, ``fy = phi(Y)``.

    The critic kernel is separable, so a product block's U-statistic is the
    difference of its two block means and no pair is ever materialised.
    Returns ``(value, MedianBlocks)``.
    """
    n, m = fx.shape[0], fy.shape[0]
    kind = spec.kind
    if kind is Estimator.MOU_PAIRS:
        ppb = max(1, (n // spec.k_x) * (m // spec.k_y))
        a = assign_blocks(n, BlockScheme(SchemeKind.RANDOMIZED_PAIR_BLOCKS, spec.k_x, spec.k_y,
                                         pairs_per_block=ppb), rng, m=m)
        pairs = a.blocks
        stats = (fx[pairs[..., 0]] - fy[pairs[..., 1]]).mean(axis=1)
        t = median_index(stats)
        win = pairs[t]
        return float(stats[t]), MedianBlocks(
            win[:, 0], win[:, 1], _weights_for_block(n, win[:, 0]), _weights_for_block(m, win[:, 1]), win
        )

    bx, by = draw_sample_blocks(rng, n, m, spec)
    mx, my = block_means(fx, bx), block_means(fy, by)
    if kind is Estimator.MOM:
        tx, ty = median_index(mx), median_index(my)
        value = mx[tx] - my[ty]
    elif kind is Estimator.MOU_DIAG:
        tx = ty = median_index(mx - my)
        value = mx[tx] - my[ty]
    else:  # MOU, full grid
        grid = mx[:, None] - my[None, :]
        t = median_index(grid)
        tx, ty = divmod(t, grid.shape[1])
        value = grid[tx, ty]
    xi, yi = bx[tx], by[ty]
    return float(value), MedianBlocks(xi, yi, _weights_for_block(n, xi), _weights_for_block(m, yi))


def dual_objective(sample_x, sample_y, critic, estimator, seed=0):
    """Robust dual objective of ``critic`` under ``estimator``.

    MoM: ``MoM_X[phi] - MoM_Y[phi]``; MoU variants: median of block
    U-statistics of ``phi(x) - phi(y)``. Returns ``(value, MedianBlocks)``.
    """
    xs, ys = _points(sample_x), _points(sample_y)
    estimator.validate_sizes(xs.shape[0], ys.shape[0])
    # CriticNet instances are callable; plain vectorised functions work too
    fx, fy = _eval(critic, xs), _eval(critic, ys)
    return objective_from_values(fx, fy, estimator, _rng(seed))


def grid_statistics(fx, fy, bx, by):
    """All ``K_X x K_Y`` block U-statistics for a separable kernel."""
    return block_means(fx, bx)[:, None] - block_means(fy, by)[None, :]


def diagonal_statistics(fx, fy, bx, by):
    return block_means(fx, bx) - block_means(fy, by)


def single_partition(n, k, seed):
    """Fixed partition helper for deterministic tests."""
    return partition(n, k, _rng(seed))
