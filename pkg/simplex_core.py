"""
Informativeness measures and given/family weighting on category distributions.

Scalar functions take CategoryDistribution values; the ``*_rows`` variants
take (m, n) arrays and are used for corpus-scale and simulation work.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Union

import numpy as np

from categories import CategoryDistribution

DRIFT_TOLERANCE = 1e-12

DistributionLike = Union[CategoryDistribution, np.ndarray, list, tuple]


class WeightScheme(str, Enum):
    STDEV = 'STDEV'
    ENTROPY = 'ENTROPY'


@dataclass(frozen=True)
class WeightConfig:
    """
    Parameters of the given/family weight.

    ``exponent`` = 2 with STDEV is the variance model. ``raw_entropy`` scores
    ENTROPY by H itself instead of log n - H (experimental; it up-weights the
    less informative name).
    """

    scheme: WeightScheme = WeightScheme.STDEV
    exponent: float = 2.0
    tie_fallback: float = 0.5
    log_base: float = math.e
    raw_entropy: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'scheme', WeightScheme(self.scheme))
        if not self.exponent > 0:
            raise ValueError(f"Weight exponent must be positive (got {self.exponent})")
        if not 0.0 <= self.tie_fallback <= 1.0:
            raise ValueError(f"tie_fallback must be in [0, 1] (got {self.tie_fallback})")
        if not (self.log_base > 0 and self.log_base != 1):
            raise ValueError(f"log_base must be positive and not 1 (got {self.log_base})")

    @property
    def label(self) -> str:
        name = 'ENTROPY_RAW' if self.scheme is WeightScheme.ENTROPY and self.raw_entropy else self.scheme.value
        return f"{name}^{self.exponent:g}"


def _rows(d) -> np.ndarray:
    arr = d.as_array() if isinstance(d, CategoryDistribution) else np.asarray(d, dtype=float)
    return np.atleast_2d(arr)


def std_dev_rows(probs: np.ndarray) -> np.ndarray:
    """Sample standard deviation (n - 1 denominator) of each row."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    if probs.shape[1] < 2:
        raise ValueError("Standard deviation needs at least two categories")
    return np.std(probs, axis=1, ddof=1)


def entropy_rows(probs: np.ndarray, base: float = math.e) -> np.ndarray:
    """Shannon entropy of each row with 0 log 0 = 0."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    logs = np.zeros_like(probs)
    np.log(probs, out=logs, where=probs > 0)
    return -(probs * logs).sum(axis=1) / math.log(base)


def negentropy_rows(probs: np.ndarray, base: float = math.e) -> np.ndarray:
    """
    log n - H per row, computed as the divergence from uniform.

    Written as sum p log(n p) so a uniform row gives exactly 0.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    n = probs.shape[1]
    logs = np.zeros_like(probs)
    np.log(n * probs, out=logs, where=probs > 0)
    return np.maximum((probs * logs).sum(axis=1) / math.log(base), 0.0)


def informativeness_rows(probs: np.ndarray, cfg: WeightConfig) -> np.ndarray:
    if cfg.scheme is WeightScheme.STDEV:
        return std_dev_rows(probs)
    if cfg.raw_entropy:
        return entropy_rows(probs, cfg.log_base)
    return negentropy_rows(probs, cfg.log_base)


def weighting_rows(probs: np.ndarray, cfg: WeightConfig) -> np.ndarray:
    """
    Informativeness as fed to the weight. Only the given/family ratio enters
    the weight, so entropy is taken in nats whatever ``cfg.log_base`` says.
    """
    return informativeness_rows(probs, replace(cfg, log_base=math.e))


def std_dev(d: DistributionLike) -> float:
    """
    Standard deviation of a distribution's components.

    For four categories it runs from 0 (uniform) to 0.5 (all mass on one category).
    """
    return float(std_dev_rows(_rows(d))[0])


def entropy(d: DistributionLike, base: float = math.e) -> float:
    """Shannon entropy, natural log by default; in [0, log n]."""
    return float(entropy_rows(_rows(d), base)[0])


def informativeness(d: DistributionLike, scheme: WeightScheme = WeightScheme.STDEV,
                    base: float = math.e, raw_entropy: bool = False) -> float:
    """
    Distance of a distribution from uniform; higher means more informative.

    STDEV → std_dev(d); ENTROPY → log n - entropy(d).
    """
    cfg = WeightConfig(scheme=scheme, log_base=base, raw_entropy=raw_entropy)
    return float(informativeness_rows(_rows(d), cfg)[0])


def weight_from_informativeness(f_given: np.ndarray, f_family: np.ndarray,
                                exponent: float, tie_fallback: float = 0.5) -> np.ndarray:
    """
    Given-name weight f_g^e / (f_g^e + f_f^e), broadcast over the inputs.

    Evaluated as 1 / (1 + (f_f / f_g)^e) so large exponents do not underflow.
    Where both informativeness values are 0 the weight is ``tie_fallback``.
    """
    f_given = np.asarray(f_given, dtype=float)
    f_family = np.asarray(f_family, dtype=float)
    f_given, f_family = np.broadcast_arrays(f_given, f_family)

    weight = np.full(f_given.shape, float(tie_fallback))
    given_pos = f_given > 0
    family_only = ~given_pos & (f_family > 0)

    with np.errstate(over='ignore'):
        ratio = np.divide(f_family, f_given, out=np.zeros_like(f_given), where=given_pos)
        weight[given_pos] = 1.0 / (1.0 + np.power(ratio[given_pos], exponent))
    weight[family_only] = 0.0
    return weight


def given_weight(given_d: DistributionLike, family_d: DistributionLike,
                 cfg: WeightConfig = WeightConfig()) -> float:
    """
    Weight of the given-name distribution in the combination; family gets 1 - w.

    Examples:
        f(given) = 0.4, f(family) = 0.2, exp = 2 → 0.16 / (0.16 + 0.04) = 0.8
        both uniform → cfg.tie_fallback
    """
    f_g = weighting_rows(_rows(given_d), cfg)
    f_f = weighting_rows(_rows(family_d), cfg)
    return float(weight_from_informativeness(f_g, f_f, cfg.exponent, cfg.tie_fallback)[0])


def combine_rows(given: np.ndarray, family: np.ndarray, cfg: WeightConfig) -> np.ndarray:
    """Row-wise weighted combination of aligned (m, n) given and family arrays."""
    given = np.atleast_2d(np.asarray(given, dtype=float))
    family = np.atleast_2d(np.asarray(family, dtype=float))
    w = weight_from_informativeness(weighting_rows(given, cfg),
                                    weighting_rows(family, cfg),
                                    cfg.exponent, cfg.tie_fallback)
    mixed = w[:, None] * given + (1.0 - w[:, None]) * family
    totals = mixed.sum(axis=1)
    drift = np.abs(totals - 1.0) > DRIFT_TOLERANCE
    if drift.any():
        mixed[drift] = mixed[drift] / totals[drift, None]
    return mixed


def combine(given_d: CategoryDistribution, family_d: CategoryDistribution,
            cfg: WeightConfig = WeightConfig()) -> CategoryDistribution:
    """
    Weighted average w · given + (1 - w) · family with w = given_weight(...).

    Examples:
        Andy × Rodriguez (STDEV, exp 2) → close to Rodriguez, Hispanic-dominant
    """
    if tuple(given_d.categories) != tuple(family_d.categories):
        raise ValueError("Given and family distributions use different categories")
    mixed = combine_rows(given_d.as_array(), family_d.as_array(), cfg)[0]
    return CategoryDistribution.from_array(mixed, given_d.categories)
