"""Concept grids, tuple arithmetic, cross datasets, and support sampling.

A concept space is the Cartesian product of k finite value sets of sizes
n_1..n_k.  Points of the grid are plain tuples of 0-based ints.  Training
supports are duplicate-free ordered subsets of the grid, produced either
explicitly or by one of the sampling rules in `sample_support`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence, Union

import numpy as np

# Grid sizes are kept below 2**63 so they stay exact in a machine word
# (and in the f64 arithmetic used downstream).
_MAX_GRID = 2**63 - 1

ConceptTuple = tuple  # tuple[int, ...] of length k, value i in [0, n_i)


@dataclass(frozen=True)
class ConceptSpace:
    """Cartesian product of k value sets with cardinalities n_1..n_k."""

    cardinalities: tuple

    def __post_init__(self):
        cards = tuple(int(n) for n in self.cardinalities)
        object.__setattr__(self, "cardinalities", cards)
        if len(cards) == 0:
            raise ValueError("a concept space needs at least one concept")
        for n in cards:
            if n < 2:
                raise ValueError(f"every concept needs >= 2 values, got {n}")
        size = 1
        for n in cards:
            size *= n
            if size > _MAX_GRID:
                raise OverflowError("grid size exceeds 2**63 - 1")

    @property
    def k(self) -> int:
        return len(self.cardinalities)

    def grid_size(self) -> int:
        size = 1
        for n in self.cardinalities:
            size *= n
        return size

    def validate_tuple(self, t: Sequence[int]) -> ConceptTuple:
        t = tuple(int(v) for v in t)
        if len(t) != self.k:
            raise ValueError(f"tuple length {len(t)} != k={self.k}")
        for i, (v, n) in enumerate(zip(t, self.cardinalities)):
            if not 0 <= v < n:
                raise ValueError(f"value {v} out of range [0,{n}) at concept {i}")
        return t

    def tuple_index(self, t: Sequence[int]) -> int:
        """Mixed-radix index of `t`, last concept fastest."""
        t = self.validate_tuple(t)
        idx = 0
        for v, n in zip(t, self.cardinalities):
            idx = idx * n + v
        return idx

    def index_tuple(self, idx: int) -> ConceptTuple:
        """Inverse of `tuple_index`."""
        if not 0 <= idx < self.grid_size():
            raise ValueError(f"index {idx} out of range")
        out = []
        for n in reversed(self.cardinalities):
            out.append(idx % n)
            idx //= n
        return tuple(reversed(out))


def make_space(cardinalities: Sequence[int]) -> ConceptSpace:
    return ConceptSpace(tuple(cardinalities))


def enumerate_tuples(space: ConceptSpace) -> Iterator[ConceptTuple]:
    """All grid tuples in canonical order (last concept varies fastest)."""
    k = space.k
    cards = space.cardinalities
    t = [0] * k
    while True:
        yield tuple(t)
        i = k - 1
        while i >= 0 and t[i] == cards[i] - 1:
            t[i] = 0
            i -= 1
        if i < 0:
            return
        t[i] += 1


def intervene(space: ConceptSpace, t: Sequence[int], i: int, j: int) -> ConceptTuple:
    """Copy of `t` with concept i set to value j."""
    t = space.validate_tuple(t)
    if not 0 <= i < space.k:
        raise ValueError(f"concept index {i} out of range")
    if not 0 <= j < space.cardinalities[i]:
        raise ValueError(f"value {j} out of range for concept {i}")
    return t[:i] + (j,) + t[i + 1 :]


# --- training supports ------------------------------------------------------


@dataclass(frozen=True)
class TrainingSupport:
    """Ordered duplicate-free set of grid tuples plus the rule that made it."""

    space: ConceptSpace
    tuples: tuple
    rule_tag: str = "explicit"

    def __post_init__(self):
        seen = set()
        validated = []
        for t in self.tuples:
            t = self.space.validate_tuple(t)
            if t in seen:
                raise ValueError(f"duplicate tuple {t} in support")
            seen.add(t)
            validated.append(t)
        object.__setattr__(self, "tuples", tuple(validated))

    def __len__(self) -> int:
        return len(self.tuples)

    def __contains__(self, t) -> bool:
        return tuple(t) in set(self.tuples)


# Sampling rules.  FixedSize/Fraction draw uniformly (without replacement)
# among all subsets of the admissible size; BinaryMajority is the special
# case |T| = 2**(k-1) + 1 on all-binary grids.


@dataclass(frozen=True)
class FullGrid:
    pass


@dataclass(frozen=True)
class FixedSize:
    size: int


@dataclass(frozen=True)
class Fraction:
    rho: float


@dataclass(frozen=True)
class CrossAt:
    center: tuple


@dataclass(frozen=True)
class BinaryMajority:
    pass


SupportRule = Union[FullGrid, FixedSize, Fraction, CrossAt, BinaryMajority]


def cross_dataset(space: ConceptSpace, center: Sequence[int]) -> TrainingSupport:
    """The center tuple plus every single-concept variation of it.

    Size is exactly 1 + sum_i (n_i - 1).
    """
    center = space.validate_tuple(center)
    tuples = [center]
    for i, n in enumerate(space.cardinalities):
        for j in range(n):
            if j != center[i]:
                tuples.append(intervene(space, center, i, j))
    return TrainingSupport(space, tuple(tuples), rule_tag=f"cross@{center}")


def _sample_fixed(space: ConceptSpace, size: int, rng: np.random.Generator,
                  tag: str) -> TrainingSupport:
    grid = space.grid_size()
    if not 1 <= size <= grid:
        raise ValueError(f"support size {size} out of range [1, {grid}]")
    idx = rng.choice(grid, size=size, replace=False)
    tuples = tuple(space.index_tuple(int(i)) for i in sorted(idx))
    return TrainingSupport(space, tuples, rule_tag=tag)


def sample_support(space: ConceptSpace, rule: SupportRule,
                   rng_seed: int) -> TrainingSupport:
    """Draw a support satisfying `rule`; deterministic in `rng_seed`."""
    rng = np.random.default_rng(rng_seed)
    if isinstance(rule, FullGrid):
        return TrainingSupport(space, tuple(enumerate_tuples(space)),
                               rule_tag="full_grid")
    if isinstance(rule, FixedSize):
        return _sample_fixed(space, int(rule.size), rng,
                             tag=f"fixed_size({rule.size})")
    if isinstance(rule, Fraction):
        if not 0.0 < rule.rho <= 1.0:
            raise ValueError(f"fraction must lie in (0, 1], got {rule.rho}")
        size = int(rule.rho * space.grid_size())
        if size < 1:
            raise ValueError(
                f"fraction {rule.rho} of grid {space.grid_size()} floors to 0")
        return _sample_fixed(space, size, rng, tag=f"fraction({rule.rho})")
    if isinstance(rule, CrossAt):
        return cross_dataset(space, rule.center)
    if isinstance(rule, BinaryMajority):
        if any(n != 2 for n in space.cardinalities):
            raise ValueError("majority rule requires an all-binary space")
        size = 2 ** (space.k - 1) + 1
        return _sample_fixed(space, size, rng, tag="binary_majority")
    raise TypeError(f"unknown support rule {rule!r}")


def marginal_counts(support: TrainingSupport, i: int) -> np.ndarray:
    """Occurrences of each value of concept i among the support tuples."""
    space = support.space
    if not 0 <= i < space.k:
        raise ValueError(f"concept index {i} out of range")
    counts = np.zeros(space.cardinalities[i], dtype=np.int64)
    for t in support.tuples:
        counts[t[i]] += 1
    return counts
