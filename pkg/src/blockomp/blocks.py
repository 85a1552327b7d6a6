"""Block-structured signals: layouts, block norms, supports, restriction and embedding.

Block indices are 1-based everywhere in the public API: block ``l`` of a
signal with block length ``d`` covers entries ``(l-1)d+1 .. ld``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import IndexOutOfRange, InvalidInput, LayoutMismatch, LengthMismatch
from .numeric import as_matrix, as_vector


@dataclass(frozen=True)
class BlockLayout:
    """Partition of ``N = M * d`` coordinates into ``M`` blocks of length ``d``."""

    n: int
    d: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or not isinstance(self.d, (int, np.integer)):
            raise LayoutMismatch("layout sizes must be integers")
        if self.n < 1 or self.d < 1:
            raise LayoutMismatch(f"need N >= 1 and d >= 1, got N={self.n}, d={self.d}")
        if self.n % self.d:
            raise LayoutMismatch(f"N={self.n} is not a multiple of d={self.d}")

    @classmethod
    def from_blocks(cls, m, d):
        return cls(m * d, d)

    @property
    def m(self):
        return self.n // self.d

    def columns(self, indices):
        """0-based column positions covered by the given 1-based blocks, in order."""
        idx = np.asarray(indices, dtype=int) - 1
        return (idx[:, None] * self.d + np.arange(self.d)).ravel()

    def block_norms(self, values):
        return np.linalg.norm(np.reshape(values, (self.m, self.d)), axis=1)


@dataclass(frozen=True)
class BlockSupport:
    """A strictly increasing set of 1-based block indices."""

    layout: BlockLayout
    indices: tuple = ()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidInput(f"support indices must be strictly increasing, got {idx}")
        if idx and (idx[0] < 1 or idx[-1] > self.layout.m):
            raise IndexOutOfRange(f"support {idx} outside 1..{self.layout.m}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, layout, indices):
        """Build a support from indices in any order (duplicates are rejected)."""
        idx = sorted(int(i) for i in indices)
        if len(set(idx)) != len(idx):
            raise InvalidInput(f"duplicate block indices in {list(indices)}")
        return cls(layout, tuple(idx))

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, j):
        return j in self.indices

    def complement(self):
        chosen = set(self.indices)
        return BlockSupport(self.layout, tuple(j for j in range(1, self.layout.m + 1) if j not in chosen))

    def union(self, other):
        _check_same_layout(self.layout, other.layout)
        return BlockSupport.of(self.layout, set(self.indices) | set(other.indices))

    def isdisjoint(self, other):
        return set(self.indices).isdisjoint(other.indices)

    def columns(self):
        return self.layout.columns(self.indices)


@dataclass(frozen=True, eq=False)
class BlockSignal:
    """A length-``N`` real vector viewed through a :class:`BlockLayout`."""

    layout: BlockLayout
    values: np.ndarray

    def __post_init__(self):
        values = as_vector(self.values).copy()
        if values.size != self.layout.n:
            raise LayoutMismatch(f"signal length {values.size} does not match N={self.layout.n}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, layout):
        return cls(layout, np.zeros(layout.n))

    def __eq__(self, other):
        return (
            isinstance(other, BlockSignal)
            and self.layout == other.layout
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def block_norms(self):
        return self.layout.block_norms(self.values)

    def norm(self):
        return float(np.linalg.norm(self.values))


def _check_same_layout(a, b):
    if a != b:
        raise LayoutMismatch(f"layouts differ: {a} vs {b}")


def default_zero_tol(x):
    """``1e-12 * (1 + ||x||_2)``."""
    return 1e-12 * (1.0 + x.norm())


def block(x, l):
    """Return block ``l`` (1-based) of ``x``."""
    if not 1 <= l <= x.layout.m:
        raise IndexOutOfRange(f"block {l} outside 1..{x.layout.m}")
    d = x.layout.d
    return x.values[(l - 1) * d : l * d].copy()


def mixed_l20_norm(x, zero_tol=None):
    """Number of blocks whose l2 norm exceeds ``zero_tol``."""
    if zero_tol is None:
        zero_tol = default_zero_tol(x)
    return int(np.count_nonzero(x.block_norms() > zero_tol))


def mixed_l2inf_norm(x):
    """Largest block l2 norm (unsquared)."""
    return float(x.block_norms().max())


def block_support(x, zero_tol=None):
    if zero_tol is None:
        zero_tol = default_zero_tol(x)
    idx = np.flatnonzero(x.block_norms() > zero_tol) + 1
    return BlockSupport(x.layout, tuple(int(i) for i in idx))


def restrict(x, support):
    """Concatenate the blocks of ``x`` indexed by ``support``."""
    _check_same_layout(x.layout, support.layout)
    return x.values[support.columns()].copy()


def embed(v, support):
    """Place ``v`` on the blocks of ``support`` and zeros elsewhere."""
    v = as_vector(v, allow_empty=True)
    layout = support.layout
    if v.size != len(support) * layout.d:
        raise LengthMismatch(f"vector of length {v.size} cannot fill {len(support)} blocks of length {layout.d}")
    out = np.zeros(layout.n)
    out[support.columns()] = v
    return BlockSignal(layout, out)


def submatrix_for_support(d, support):
    """Column blocks of ``d`` indexed by ``support``, concatenated in order."""
    d = as_matrix(d)
    if d.shape[1] != support.layout.n:
        raise LayoutMismatch(f"matrix has {d.shape[1]} columns, layout expects {support.layout.n}")
    return d[:, support.columns()]
