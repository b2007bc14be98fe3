"""
Category definitions and the distribution value type shared by every module.

Reference tables publish six raw categories; analyses run on four working
categories after AIAN and Two-or-more are dropped and the remainder renormalized.
"""

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np


RAW_CATEGORIES: Tuple[str, ...] = ('White', 'Black', 'Asian', 'AIAN', 'TwoOrMore', 'Hispanic')

# Alphabetical; every emitted vector and CSV uses this column order.
WORKING_CATEGORIES: Tuple[str, ...] = ('Asian', 'Black', 'Hispanic', 'White')

DROP = 'DROP'

DEFAULT_COLLAPSE_MAP: Dict[str, str] = {
    'White': 'White',
    'Black': 'Black',
    'Asian': 'Asian',
    'AIAN': DROP,
    'TwoOrMore': DROP,
    'Hispanic': 'Hispanic',
}

SIMPLEX_TOLERANCE = 1e-9


@dataclass(frozen=True)
class CategorySet:
    """Raw and working category codes plus the raw -> working collapse map."""

    raw: Tuple[str, ...] = RAW_CATEGORIES
    working: Tuple[str, ...] = WORKING_CATEGORIES
    collapse_map: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_COLLAPSE_MAP))

    def __post_init__(self):
        object.__setattr__(self, 'raw', tuple(self.raw))
        object.__setattr__(self, 'working', tuple(self.working))
        object.__setattr__(self, 'collapse_map', MappingProxyType(dict(self.collapse_map)))

        missing = [code for code in self.raw if code not in self.collapse_map]
        if missing:
            raise ValueError(f"Collapse map has no entry for raw categories: {', '.join(missing)}")

        unknown = [target for target in self.collapse_map.values()
                   if target != DROP and target not in self.working]
        if unknown:
            raise ValueError(f"Collapse map targets unknown working categories: {', '.join(sorted(set(unknown)))}")

        if len(self.working) < 2:
            raise ValueError("At least two working categories are required")

    @property
    def dropped(self) -> Tuple[str, ...]:
        """Raw categories removed by the collapse."""
        return tuple(code for code in self.raw if self.collapse_map[code] == DROP)

    def collapse_matrix(self) -> np.ndarray:
        """0/1 matrix of shape (len(raw), len(working)) mapping raw mass onto working categories."""
        matrix = np.zeros((len(self.raw), len(self.working)))
        for i, code in enumerate(self.raw):
            target = self.collapse_map[code]
            if target != DROP:
                matrix[i, self.working.index(target)] = 1.0
        return matrix


DEFAULT_CATEGORIES = CategorySet()


@dataclass(frozen=True)
class CategoryDistribution:
    """
    A point on the probability simplex over the working categories.

    Components are stored as a tuple in ``categories`` order. Construction
    validates simplex membership; use ``from_weights`` to normalize raw mass.
    """

    probs: Tuple[float, ...]
    categories: Tuple[str, ...] = WORKING_CATEGORIES

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, 'probs', probs)
        object.__setattr__(self, 'categories', tuple(self.categories))

        if len(probs) != len(self.categories):
            raise ValueError(f"Expected {len(self.categories)} components, got {len(probs)}")
        if any(not np.isfinite(p) for p in probs):
            raise ValueError(f"Distribution has non-finite components: {probs}")
        if any(p < -SIMPLEX_TOLERANCE or p > 1 + SIMPLEX_TOLERANCE for p in probs):
            raise ValueError(f"Distribution components must lie in [0, 1]: {probs}")
        if abs(sum(probs) - 1.0) > SIMPLEX_TOLERANCE:
            raise ValueError(f"Distribution must sum to 1 (got {sum(probs):.12f})")

    @classmethod
    def from_array(cls, values: Iterable[float],
                   categories: Sequence[str] = WORKING_CATEGORIES) -> 'CategoryDistribution':
        return cls(tuple(float(v) for v in values), tuple(categories))

    @classmethod
    def from_weights(cls, weights: Iterable[float],
                     categories: Sequence[str] = WORKING_CATEGORIES) -> 'CategoryDistribution':
        """
        Normalize nonnegative mass (counts, percentages) onto the simplex.

        Raises:
            ValueError: If the mass is negative or sums to zero
        """
        arr = np.asarray(list(weights), dtype=float)
        if (arr < 0).any():
            raise ValueError(f"Weights must be nonnegative: {arr.tolist()}")
        total = arr.sum()
        if total <= 0:
            raise ValueError("Weights sum to zero; cannot normalize")
        return cls.from_array(arr / total, categories)

    @classmethod
    def uniform(cls, categories: Sequence[str] = WORKING_CATEGORIES) -> 'CategoryDistribution':
        n = len(categories)
        return cls.from_array([1.0 / n] * n, categories)

    def as_array(self) -> np.ndarray:
        return np.array(self.probs, dtype=float)

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(self.categories, self.probs))

    def __getitem__(self, category: str) -> float:
        try:
            return self.probs[self.categories.index(category)]
        except ValueError:
            raise KeyError(category) from None

    def __len__(self) -> int:
        return len(self.probs)

    def max(self) -> float:
        return max(self.probs)

    def argmax(self) -> Optional[str]:
        """Most probable category, or None when the maximum is shared."""
        top = self.max()
        winners = [code for code, p in zip(self.categories, self.probs) if p == top]
        return winners[0] if len(winners) == 1 else None
