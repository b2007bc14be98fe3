"""
Bias diagnostics for name-based inference.

Threshold sweeps with representation ratios against the fractional
family-name baseline, a fixed-threshold model snapshot, and the simulated
given/family weight grid. Everything returns tidy tables ready for CSV.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from categories import WORKING_CATEGORIES, CategoryDistribution
from inference_engine import (
    AuthorRecord,
    ConfigError,
    Imputation,
    InferenceConfig,
    NameSide,
    Strategy,
    TableSet,
    TwoStepConfig,
    compute_dataset_aggregate,
    fractional_aggregate,
    infer_author,
    second_step_order,
    select_two_step,
    side_arrays,
    validate_tables,
)
from simplex_core import WeightConfig, informativeness_rows, weight_from_informativeness, weighting_rows

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ['model', 'threshold', 'category', 'retrieved', 'share', 'baseline_share',
                 'ratio', 'ratio_defined', 'expected_total']
GRID_COLUMNS = ['given_index', 'family_index', 'max_given', 'max_family',
                'informativeness_given', 'informativeness_family', 'weight', 'scheme', 'exponent']


def default_thresholds() -> List[float]:
    """0.50 to 1.00 in steps of 0.01."""
    return [round(step / 100, 2) for step in range(50, 101)]


def validate_thresholds(thresholds: Sequence[float]) -> List[float]:
    """
    Raises:
        ConfigError: If the list is empty or a value is outside (0, 1]
    """
    values = [float(t) for t in thresholds]
    if not values:
        raise ConfigError("Threshold list is empty")
    bad = [t for t in values if not 0.0 < t <= 1.0]
    if bad:
        raise ConfigError(f"Thresholds must be in (0, 1]: {bad}")
    return values


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def dirichlet_rows(k: int, alpha: Union[float, Sequence[float]], rng: np.random.Generator,
                   n_categories: int = len(WORKING_CATEGORIES)) -> np.ndarray:
    """
    k Dirichlet draws as normalized Gamma(alpha, 1) variates, shape (k, n).

    Rows whose gamma draws all underflow to zero are redrawn.
    """
    if k < 1:
        raise ConfigError(f"Sample count must be at least 1 (got {k})")
    alphas = np.broadcast_to(np.asarray(alpha, dtype=float), (n_categories,))
    if not (alphas > 0).all() or not np.isfinite(alphas).all():
        raise ConfigError(f"Dirichlet alpha must be positive (got {alphas.tolist()})")

    draws = rng.gamma(alphas, 1.0, size=(k, n_categories))
    totals = draws.sum(axis=1)
    while (totals <= 0).any():
        empty = totals <= 0
        draws[empty] = rng.gamma(alphas, 1.0, size=(int(empty.sum()), n_categories))
        totals = draws.sum(axis=1)
    return draws / totals[:, None]


def dirichlet_sample(k: int, alpha: Union[float, Sequence[float]] = 1.0,
                     seed: Union[int, np.random.Generator] = 0) -> List[CategoryDistribution]:
    """
    Draw k random distributions on the working simplex.

    Args:
        k: Number of draws
        alpha: Concentration, scalar or one per category (1 = uniform on the simplex)
        seed: Integer seed or an existing Generator

    Returns:
        List of CategoryDistribution
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return [CategoryDistribution.from_array(row) for row in dirichlet_rows(k, alpha, rng)]


@dataclass(frozen=True, eq=False)
class SimulationGrid:
    """Weights for every (given, family) pair of simulated distributions."""

    given_samples: np.ndarray
    family_samples: np.ndarray
    cfg: WeightConfig
    weights: np.ndarray
    cells: pd.DataFrame = field(repr=False)

    def __len__(self) -> int:
        return len(self.cells)


def _as_rows(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        return np.atleast_2d(samples.astype(float))
    return np.vstack([s.as_array() if isinstance(s, CategoryDistribution) else np.asarray(s, dtype=float)
                      for s in samples])


def weight_grid(given_samples, family_samples, cfg: WeightConfig = WeightConfig()) -> SimulationGrid:
    """
    Given-name weight for every pairing of given and family samples.

    Cells carry the max component of each side (the skewness axis) and the
    raw informativeness, and are sorted by (max_given, max_family).

    Raises:
        ConfigError: If either sample list is empty
    """
    given = _as_rows(given_samples)
    family = _as_rows(family_samples)
    if len(given) == 0 or len(family) == 0:
        raise ConfigError("Weight grid needs non-empty sample lists")

    f_given = informativeness_rows(given, cfg)
    f_family = informativeness_rows(family, cfg)
    weights = weight_from_informativeness(weighting_rows(given, cfg)[:, None], weighting_rows(family, cfg)[None, :],
                                          cfg.exponent, cfg.tie_fallback)

    gi, fi = np.meshgrid(np.arange(len(given)), np.arange(len(family)), indexing='ij')
    gi, fi = gi.ravel(), fi.ravel()
    cells = pd.DataFrame({
        'given_index': gi,
        'family_index': fi,
        'max_given': given.max(axis=1)[gi],
        'max_family': family.max(axis=1)[fi],
        'informativeness_given': f_given[gi],
        'informativeness_family': f_family[fi],
        'weight': weights.ravel(),
        'scheme': cfg.label.split('^')[0],
        'exponent': float(cfg.exponent),
    }, columns=GRID_COLUMNS)
    cells = cells.sort_values(['max_given', 'max_family'], kind='mergesort').reset_index(drop=True)

    weights.setflags(write=False)
    return SimulationGrid(given_samples=given, family_samples=family, cfg=cfg, weights=weights, cells=cells)


def simulate(k: int = 500, alpha: Union[float, Sequence[float]] = 1.0, seed: int = 0,
             configs: Sequence[WeightConfig] = (WeightConfig(),)) -> pd.DataFrame:
    """
    Draw k given and k family samples from one seeded generator and grid them
    under each weight configuration; cells are stacked in config order.
    """
    rng = np.random.default_rng(seed)
    given = dirichlet_rows(k, alpha, rng)
    family = dirichlet_rows(k, alpha, rng)
    frames = [weight_grid(given, family, cfg).cells for cfg in configs]
    logger.info("Simulated %d x %d grid under %d weight config(s)", k, k, len(configs))
    return pd.concat(frames, ignore_index=True)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    label: str
    description: str
    cfg: InferenceConfig

    @property
    def fractional(self) -> bool:
        return self.cfg.threshold is None and self.cfg.strategy is not Strategy.TWO_STEP


def model_catalogue(threshold: float = 0.9, weight_cfg: WeightConfig = WeightConfig(),
                    imputation: Imputation = Imputation.NONE,
                    two_step: TwoStepConfig = TwoStepConfig()) -> List[ModelSpec]:
    """
    The eight comparison models, A (fractional family names) through H.

    Thresholded models carry ``threshold``; sweeps substitute their own.
    Models E and F use ``two_step`` for their retrieval order.
    """
    def cfg(strategy, thr=threshold, normalized=True):
        return InferenceConfig(strategy=strategy, weight_cfg=weight_cfg, threshold=thr,
                               imputation=imputation, given_normalized=normalized, two_step=two_step)

    return [
        ModelSpec('A', 'fractional counting, family names', cfg(Strategy.FAMILY_ONLY, thr=None)),
        ModelSpec('B', 'family names', cfg(Strategy.FAMILY_ONLY)),
        ModelSpec('C', 'given names, normalized', cfg(Strategy.GIVEN_ONLY)),
        ModelSpec('D', 'given names, unnormalized', cfg(Strategy.GIVEN_ONLY, normalized=False)),
        ModelSpec('E', 'two-step, normalized given names', cfg(Strategy.TWO_STEP)),
        ModelSpec('F', 'two-step, unnormalized given names', cfg(Strategy.TWO_STEP, normalized=False)),
        ModelSpec('G', f'combined {weight_cfg.label}, normalized given names', cfg(Strategy.COMBINED)),
        ModelSpec('H', f'combined {weight_cfg.label}, unnormalized given names',
                  cfg(Strategy.COMBINED, normalized=False)),
    ]


def _as_spec(model: Union[ModelSpec, InferenceConfig], i: int) -> ModelSpec:
    if isinstance(model, ModelSpec):
        return model
    label = f"M{i + 1}"
    return ModelSpec(label, model.strategy.value, model)


def _distribution_matrix(corpus: Sequence[AuthorRecord], tables: TableSet, cfg: InferenceConfig,
                         dataset_aggregate: Optional[CategoryDistribution]) -> np.ndarray:
    """(authors, categories) matrix; NaN rows for MISSING authors."""
    matrix = np.full((len(corpus), len(WORKING_CATEGORIES)), np.nan)
    for i, author in enumerate(corpus):
        inf = infer_author(author, tables, cfg, dataset_aggregate)
        if inf.distribution is not None:
            matrix[i] = inf.distribution.probs
    return matrix


def assign_rows(matrix: np.ndarray, threshold: float) -> np.ndarray:
    """Category index per row, -1 when missing, tied at the top, or below threshold."""
    resolved = ~np.isnan(matrix).any(axis=1)
    filled = np.where(resolved[:, None], matrix, -1.0)
    top = filled.max(axis=1)
    unique = (filled == top[:, None]).sum(axis=1) == 1
    ok = resolved & unique & (top >= threshold)
    return np.where(ok, filled.argmax(axis=1), -1)


class _PreparedModel:
    """Threshold-independent work for one model, reused across thresholds."""

    def __init__(self, spec: ModelSpec, corpus: Sequence[AuthorRecord], tables: TableSet,
                 dataset_aggregate: Optional[CategoryDistribution]):
        self.spec = spec
        cfg = spec.cfg
        if cfg.strategy is Strategy.TWO_STEP:
            given_table = tables.given_table(cfg.given_normalized)
            first_side = cfg.two_step.first
            second_side = NameSide.GIVEN if first_side is NameSide.FAMILY else NameSide.FAMILY
            table_for = {NameSide.FAMILY: tables.family, NameSide.GIVEN: given_table}
            ids = [a.id for a in corpus]
            self.two_step = {}
            for category in WORKING_CATEGORIES:
                first_probs, _, first_found = side_arrays(corpus, table_for[first_side], first_side, category)
                second_probs, second_counts, second_found = side_arrays(
                    corpus, table_for[second_side], second_side, category)
                order = second_step_order(second_probs, second_counts, second_found, ids)
                self.two_step[category] = (first_probs, first_found, second_probs, order)
        else:
            self.matrix = _distribution_matrix(corpus, tables, cfg, dataset_aggregate)

    def counts_at(self, threshold: float) -> np.ndarray:
        """Retrieved authors per category at one threshold (fractional mass for fractional models)."""
        cfg = self.spec.cfg
        if self.spec.fractional:
            resolved = ~np.isnan(self.matrix).any(axis=1)
            return self.matrix[resolved].sum(axis=0)
        if cfg.strategy is Strategy.TWO_STEP:
            counts = []
            for category in WORKING_CATEGORIES:
                first_probs, first_found, second_probs, order = self.two_step[category]
                first, second = select_two_step(first_probs, first_found, second_probs, order,
                                                threshold, cfg.two_step.second_step_threshold)
                counts.append(int((first | second).sum()))
            return np.array(counts, dtype=float)
        assigned = assign_rows(self.matrix, threshold)
        return np.array([(assigned == j).sum() for j in range(len(WORKING_CATEGORIES))], dtype=float)

    def shares_at(self, threshold: float) -> Optional[np.ndarray]:
        if self.spec.fractional:
            resolved = ~np.isnan(self.matrix).any(axis=1)
            if not resolved.any():
                return None
            return self.matrix[resolved].mean(axis=0)
        counts = self.counts_at(threshold)
        total = counts.sum()
        return counts / total if total > 0 else None


def _baseline(corpus: Sequence[AuthorRecord], tables: TableSet) -> CategoryDistribution:
    cfg = InferenceConfig(strategy=Strategy.FAMILY_ONLY, imputation=Imputation.NONE)
    validate_tables(cfg, tables)
    return fractional_aggregate(infer_author(a, tables, cfg) for a in corpus)


def _prepare(models, corpus, tables, threads: int) -> List[_PreparedModel]:
    specs = [_as_spec(m, i) for i, m in enumerate(models)]
    usable = []
    for spec in specs:
        try:
            validate_tables(spec.cfg, tables)
            usable.append(spec)
        except ConfigError as err:
            logger.warning("Model %s skipped: %s", spec.label, err)

    needs_aggregate = any(s.cfg.imputation is Imputation.DATASET_AGGREGATE for s in usable)
    dataset_aggregate = compute_dataset_aggregate(corpus, tables) if needs_aggregate else None

    def build(spec):
        return _PreparedModel(spec, corpus, tables, dataset_aggregate)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(build, usable))
    return [build(spec) for spec in usable]


@dataclass(frozen=True)
class SweepRow:
    model: str
    threshold: float
    category: str
    retrieved: float
    share: float
    baseline_share: float
    ratio: float
    ratio_defined: bool
    expected_total: float


def threshold_sweep(corpus: Sequence[AuthorRecord], tables: TableSet,
                    models: Sequence[Union[ModelSpec, InferenceConfig]],
                    thresholds: Sequence[float] = None, threads: int = 1) -> List[SweepRow]:
    """
    Retrieved counts, shares and representation ratios over a threshold grid.

    The baseline is fractional counting on family names with no imputation.
    Fractional models (threshold None) give the same row at every threshold.
    ``expected_total`` is the baseline share times the corpus size, unknown
    surnames included.

    Raises:
        ConfigError: If the threshold list is invalid or no family table is loaded
    """
    thresholds = validate_thresholds(default_thresholds() if thresholds is None else thresholds)
    corpus = sorted(corpus, key=lambda a: a.id)
    baseline = _baseline(corpus, tables)
    prepared = _prepare(models, corpus, tables, threads)

    rows = []
    for model in prepared:
        for t in thresholds:
            counts = model.counts_at(t)
            shares = model.shares_at(t)
            for j, category in enumerate(WORKING_CATEGORIES):
                base = baseline.probs[j]
                share = float(shares[j]) if shares is not None else float('nan')
                defined = shares is not None and base > 0
                rows.append(SweepRow(
                    model=model.spec.label,
                    threshold=t,
                    category=category,
                    retrieved=float(counts[j]),
                    share=share,
                    baseline_share=base,
                    ratio=share / base if defined else float('nan'),
                    ratio_defined=defined,
                    expected_total=base * len(corpus),
                ))
    logger.info("Threshold sweep: %d model(s) x %d threshold(s)", len(prepared), len(thresholds))
    return rows


def sweep_to_frame(rows: Sequence[SweepRow]) -> pd.DataFrame:
    return pd.DataFrame([r.__dict__ for r in rows], columns=SWEEP_COLUMNS)


def model_snapshot(corpus: Sequence[AuthorRecord], tables: TableSet, threshold: float = 0.9,
                   models: Sequence[ModelSpec] = None, threads: int = 1) -> Dict[str, Optional[CategoryDistribution]]:
    """
    Aggregate distribution per model at one threshold.

    Thresholded models report the shares of assigned authors; model A reports
    the fractional aggregate. Models whose tables are unavailable, or that
    assign nobody, map to None (absent).
    """
    validate_thresholds([threshold])
    models = list(models) if models is not None else model_catalogue(threshold)
    corpus = sorted(corpus, key=lambda a: a.id)
    prepared = {m.spec.label: m for m in _prepare(models, corpus, tables, threads)}

    result = {}
    for spec in models:
        model = prepared.get(spec.label)
        shares = model.shares_at(threshold) if model is not None else None
        result[spec.label] = (CategoryDistribution.from_array(shares / shares.sum())
                              if shares is not None else None)
    return result


def snapshot_to_frame(snapshot: Dict[str, Optional[CategoryDistribution]],
                      models: Sequence[ModelSpec] = ()) -> pd.DataFrame:
    """Long-format snapshot: model, description, category, share, status."""
    descriptions = {m.label: m.description for m in models}
    rows = []
    for label, dist in snapshot.items():
        for category in WORKING_CATEGORIES:
            rows.append({
                'model': label,
                'description': descriptions.get(label, ''),
                'category': category,
                'share': dist[category] if dist is not None else np.nan,
                'status': 'present' if dist is not None else 'absent',
            })
    return pd.DataFrame(rows, columns=['model', 'description', 'category', 'share', 'status'])
