"""Block construction for MoM / MoU estimators and median-block selection.

Single-sample schemes (``PARTITION``, ``RANDOMIZED_SWOR``) produce a
``(K, B)`` integer matrix of indices. Pair schemes produce blocks of
``(i, j)`` index pairs between a sample of size ``n`` and one of size ``m``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .data import ValidationError


class SchemeKind(str, enum.Enum):
    PARTITION = "partition"
    RANDOMIZED_SWOR = "swor"
    DIAGONAL_PAIRS = "diagonal"
    GRID_PAIRS = "grid"
    RANDOMIZED_PAIR_BLOCKS = "pairs"

    @property
    def is_pair_scheme(self):
        return self in (SchemeKind.DIAGONAL_PAIRS, SchemeKind.GRID_PAIRS, SchemeKind.RANDOMIZED_PAIR_BLOCKS)


@dataclass(frozen=True)
class BlockScheme:
    """How to cut a sample (or a pair of samples) into blocks.

    ``k`` is the number of blocks, or the number of blocks on the X axis for
    pair schemes. ``k_y`` defaults to ``k``. ``block_size`` is used by
    ``RANDOMIZED_SWOR`` (default ``n // k``) and ``pairs_per_block`` by
    ``RANDOMIZED_PAIR_BLOCKS`` (default ``(n // k) * (m // k_y)``).
    """

    kind: SchemeKind
    k: int
    k_y: int | None = None
    block_size: int | None = None
    pairs_per_block: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SchemeKind(self.kind))
        if self.k < 1:
            raise ValidationError("number of blocks must be at least 1")
        if self.k_y is not None and self.k_y < 1:
            raise ValidationError("number of Y blocks must be at least 1")
        if self.block_size is not None and self.block_size < 1:
            raise ValidationError("block_size must be at least 1")
        if self.pairs_per_block is not None and self.pairs_per_block < 1:
            raise ValidationError("pairs_per_block must be at least 1")

    @property
    def ky(self):
        return self.k if self.k_y is None else self.k_y


class GridBlocks:
    """Lazy view of the ``K_X * K_Y`` product blocks of two partitions.

    Indexing with a flat index ``t`` (row-major over ``(k, l)``) or a tuple
    ``(k, l)`` returns the ``(B_X * B_Y, 2)`` array of pairs in that block.
    """

    def __init__(self, x_blocks, y_blocks):
        self.x_blocks = x_blocks
        self.y_blocks = y_blocks

    def __len__(self):
        return len(self.x_blocks) * len(self.y_blocks)

    def __getitem__(self, key):
        if isinstance(key, tuple):
            k, l = key
        else:
            if not -len(self) <= key < len(self):
                raise IndexError(key)
            k, l = divmod(key % len(self), len(self.y_blocks))
        return product_pairs(self.x_blocks[k], self.y_blocks[l])

    def __iter__(self):
        for k in range(len(self.x_blocks)):
            for l in range(len(self.y_blocks)):
                yield product_pairs(self.x_blocks[k], self.y_blocks[l])


class DiagonalBlocks(GridBlocks):
    def __len__(self):
        return len(self.x_blocks)

    def __getitem__(self, key):
        return product_pairs(self.x_blocks[key], self.y_blocks[key])

    def __iter__(self):
        for xb, yb in zip(self.x_blocks, self.y_blocks):
            yield product_pairs(xb, yb)


def product_pairs(xb, yb):
    ii, jj = np.meshgrid(xb, yb, indexing="ij")
    return np.stack([ii.ravel(), jj.ravel()], axis=1)


@dataclass(frozen=True)
class BlockAssignment:
    """A realised set of blocks.

    ``blocks`` is a ``(K, B)`` index matrix for single-sample schemes, a
    :class:`GridBlocks`/:class:`DiagonalBlocks` view for product pair
    schemes, and a ``(K, P, 2)`` pair array for randomized pair blocks.
    ``x_blocks``/``y_blocks`` hold the underlying partitions of product
    schemes.
    """

    blocks: object
    scheme: BlockScheme
    dropped: int = 0
    x_blocks: np.ndarray | None = None
    y_blocks: np.ndarray | None = None

    def __len__(self):
        return len(self.blocks)


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def partition(n, k, rng):
    """Shuffle ``range(n)``, cut into ``k`` chunks of ``n // k``, drop the rest.

    Indices are sorted inside each block; block membership is what matters
    and sorted order keeps sums independent of the shuffle.
    """
    if not 1 <= k <= n:
        raise ValidationError(f"need 1 <= k <= n for a partition, got k={k}, n={n}")
    size = n // k
    perm = rng.permutation(n)[: k * size]
    return np.sort(perm.reshape(k, size), axis=1)


def swor_blocks(n, k, block_size, rng):
    """``k`` blocks, each ``block_size`` distinct indices drawn independently."""
    if block_size > n:
        raise ValidationError(f"block_size {block_size} exceeds sample size {n}")
    out = np.empty((k, block_size), dtype=np.int64)
    for t in range(k):
        out[t] = np.sort(rng.choice(n, size=block_size, replace=False))
    return out


def sample_blocks(n, kind, k, rng, block_size=None):
    """Per-sample blocks for ``PARTITION`` or ``RANDOMIZED_SWOR``."""
    kind = SchemeKind(kind)
    if kind is SchemeKind.PARTITION:
        return partition(n, k, rng)
    if kind is SchemeKind.RANDOMIZED_SWOR:
        if k < 1:
            raise ValidationError("number of blocks must be at least 1")
        return swor_blocks(n, k, block_size or max(1, n // k), rng)
    raise ValidationError(f"{kind.value} is not a single-sample scheme")


def assign_blocks(n, scheme, seed=0, m=None):
    """Realise ``scheme`` on index range ``n`` (and ``m`` for pair schemes).

    Examples
    --------
    >>> a = assign_blocks(7, BlockScheme(SchemeKind.PARTITION, 3), seed=0)
    >>> a.blocks.shape, a.dropped
    ((3, 2), 1)
    """
    rng = _rng(seed)
    kind = scheme.kind
    if not kind.is_pair_scheme:
        if kind is SchemeKind.PARTITION:
            blocks = partition(n, scheme.k, rng)
            return BlockAssignment(blocks, scheme, n - blocks.size)
        blocks = sample_blocks(n, kind, scheme.k, rng, scheme.block_size)
        return BlockAssignment(blocks, scheme, 0)

    if m is None:
        raise ValidationError(f"{kind.value} needs the size m of the second sample")
    if kind is SchemeKind.RANDOMIZED_PAIR_BLOCKS:
        k, ky = scheme.k, scheme.ky
        p = scheme.pairs_per_block or max(1, (n // k) * (m // ky))
        if p > n * m:
            raise ValidationError(f"{p} pairs per block exceeds the {n}x{m} grid")
        flat = np.stack([np.sort(rng.choice(n * m, size=p, replace=False)) for _ in range(k)])
        blocks = np.stack(np.divmod(flat, m), axis=-1)
        return BlockAssignment(blocks, scheme, 0)

    if kind is SchemeKind.DIAGONAL_PAIRS and scheme.ky != scheme.k:
        raise ValidationError("diagonal blocks need k_x == k_y")
    xb = partition(n, scheme.k, rng)
    yb = partition(m, scheme.ky, rng)
    dropped = (n - xb.size) + (m - yb.size)
    view = DiagonalBlocks(xb, yb) if kind is SchemeKind.DIAGONAL_PAIRS else GridBlocks(xb, yb)
    return BlockAssignment(view, scheme, dropped, xb, yb)


def recommended_k(n, tau):
    """Block count ``ceil(sqrt(2 tau) n)`` clamped to ``[1, n]``.

    >>> recommended_k(500, 0.1)
    224
    """
    if not 0.0 <= tau < 0.5:
        raise ValidationError(f"tau must lie in [0, 0.5), got {tau}")
    if n < 1:
        raise ValidationError("n must be at least 1")
    raw = math.sqrt(2.0 * tau) * n
    # absorb float noise on exact integers such as sqrt(0.04) * 100
    k = math.ceil(raw - 1e-9 * max(1.0, raw))
    return min(max(k, 1), n)


def combined_tau_tilde(tau_x, tau_y):
    """Proportion of contaminated pairs: ``tau_x + tau_y - tau_x tau_y``."""
    for t in (tau_x, tau_y):
        if not 0.0 <= t < 0.5:
            raise ValidationError(f"tau must lie in [0, 0.5), got {t}")
    return tau_x + tau_y - tau_x * tau_y


def median_index(values):
    """Index of the ``ceil(K/2)``-th smallest value; ties go to the smallest index.

    For even ``K`` this is the lower median, so the returned index always
    names one concrete block.
    """
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ValidationError("median of an empty list")
    if not np.all(np.isfinite(v)):
        raise ValidationError("median of non-finite values")
    rank = (v.size + 1) // 2 - 1
    target = np.partition(v, rank)[rank]
    return int(np.flatnonzero(v == target)[0])


def median_value(values):
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    return float(v[median_index(v)])
