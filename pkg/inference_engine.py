"""
Author-level race inference from (given, family) name pairs.

Covers the family-only, given-only, combined-weighted and two-step strategies,
threshold assignment, fractional aggregation and imputation of names missing
from the reference tables. Also loads author corpora from delimited text.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd

from categories import WORKING_CATEGORIES, CategoryDistribution
from reference_ingest import ReferenceTable, SchemaError, normalize_name, normalize_to_target
from simplex_core import WeightConfig, combine

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid configuration value or combination."""


class EmptyAggregateError(ValueError):
    """Every author was MISSING; there is nothing to aggregate."""


class Strategy(str, Enum):
    FAMILY_ONLY = 'FAMILY_ONLY'
    GIVEN_ONLY = 'GIVEN_ONLY'
    COMBINED = 'COMBINED'
    TWO_STEP = 'TWO_STEP'


class Imputation(str, Enum):
    NONE = 'NONE'
    DATASET_AGGREGATE = 'DATASET_AGGREGATE'
    TABLE_AGGREGATE = 'TABLE_AGGREGATE'
    OTHER_NAMES = 'OTHER_NAMES'


class NameSide(str, Enum):
    FAMILY = 'FAMILY'
    GIVEN = 'GIVEN'


@dataclass(frozen=True)
class TwoStepConfig:
    """
    Variants of the two-step retrieval.

    ``first`` picks which name is thresholded in step 1. With
    ``second_step_threshold`` the step-2 top-N is restricted to authors whose
    other name also meets the threshold.
    """

    first: NameSide = NameSide.FAMILY
    second_step_threshold: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'first', NameSide(self.first))


@dataclass(frozen=True)
class InferenceConfig:
    """How one model turns names into distributions and assignments."""

    strategy: Strategy = Strategy.FAMILY_ONLY
    weight_cfg: WeightConfig = field(default_factory=WeightConfig)
    threshold: Optional[float] = None
    imputation: Imputation = Imputation.DATASET_AGGREGATE
    given_normalized: bool = True
    two_step: TwoStepConfig = field(default_factory=TwoStepConfig)

    def __post_init__(self):
        object.__setattr__(self, 'strategy', Strategy(self.strategy))
        object.__setattr__(self, 'imputation', Imputation(self.imputation))
        if self.threshold is not None:
            if not 0.0 < float(self.threshold) <= 1.0:
                raise ConfigError(f"Threshold must be in (0, 1] (got {self.threshold})")
            object.__setattr__(self, 'threshold', float(self.threshold))
        if self.strategy is Strategy.TWO_STEP and self.threshold is None:
            raise ConfigError("TWO_STEP strategy requires a threshold")

    @property
    def uses_family(self) -> bool:
        return self.strategy is not Strategy.GIVEN_ONLY

    @property
    def uses_given(self) -> bool:
        return self.strategy is not Strategy.FAMILY_ONLY


@dataclass(frozen=True)
class AuthorRecord:
    id: str
    given: Optional[str] = None
    family: Optional[str] = None

    @property
    def given_key(self) -> str:
        return normalize_name(self.given)

    @property
    def family_key(self) -> str:
        return normalize_name(self.family)


@dataclass(frozen=True)
class Provenance:
    given_found: bool = False
    family_found: bool = False
    imputed_given: bool = False
    imputed_family: bool = False


@dataclass(frozen=True)
class AuthorInference:
    """
    Resolved distribution for one author.

    ``distribution`` is None for MISSING and ``assignment`` is None for
    UNASSIGNED. ``retrieved`` lists (category, name side) hits of the
    two-step strategy.
    """

    id: str
    distribution: Optional[CategoryDistribution]
    assignment: Optional[str] = None
    provenance: Provenance = field(default_factory=Provenance)
    retrieved: Tuple[Tuple[str, str], ...] = ()


@dataclass(frozen=True)
class TableSet:
    """The reference tables available to a run."""

    family: Optional[ReferenceTable] = None
    given: Optional[ReferenceTable] = None
    given_expanded: Optional[ReferenceTable] = None

    @classmethod
    def build(cls, family: Optional[ReferenceTable] = None,
              given: Optional[ReferenceTable] = None) -> 'TableSet':
        """Expands the given-name table onto the family aggregate when both are present."""
        expanded = None
        if family is not None and given is not None:
            expanded, _ = normalize_to_target(given, family.aggregate)
        return cls(family=family, given=given, given_expanded=expanded)

    def given_table(self, normalized: bool) -> Optional[ReferenceTable]:
        return self.given_expanded if normalized else self.given


def validate_tables(cfg: InferenceConfig, tables: TableSet) -> None:
    """
    Check that a model can run on the available tables.

    Raises:
        ConfigError: If a required table or other-names row is missing
    """
    needed = []
    if cfg.uses_family:
        needed.append(('family', tables.family))
    if cfg.uses_given:
        label = 'normalized given' if cfg.given_normalized else 'given'
        needed.append((label, tables.given_table(cfg.given_normalized)))

    missing = [label for label, table in needed if table is None]
    if missing:
        raise ConfigError(f"{cfg.strategy.value} needs the {' and '.join(missing)} table(s)")

    if cfg.imputation is Imputation.OTHER_NAMES:
        lacking = [label for label, table in needed if table.other_names is None]
        if lacking:
            raise ConfigError(f"OTHER_NAMES imputation needs an 'all other names' row in the {', '.join(lacking)} table")


def lookup(name: Optional[str], table: ReferenceTable) -> Optional[Tuple[CategoryDistribution, float]]:
    """
    Exact match on the normalized name; None when absent (NOT_FOUND).

    Examples:
        " lee " and "LEE" resolve to the same entry
    """
    key = normalize_name(name)
    if not key:
        return None
    return table.get(key)


def impute(policy: Imputation, dataset_aggregate: Optional[CategoryDistribution],
           table: ReferenceTable) -> Optional[CategoryDistribution]:
    """
    Distribution substituted for a name missing from a table.

    Returns:
        The dataset aggregate, the table aggregate, the table's other-names
        row, or None (MISSING) for policy NONE

    Raises:
        ConfigError: If the policy's source distribution is unavailable
    """
    policy = Imputation(policy)
    if policy is Imputation.NONE:
        return None
    if policy is Imputation.DATASET_AGGREGATE:
        if dataset_aggregate is None:
            raise ConfigError("DATASET_AGGREGATE imputation needs a precomputed dataset aggregate")
        return dataset_aggregate
    if policy is Imputation.TABLE_AGGREGATE:
        return table.aggregate
    if table.other_names is None:
        raise ConfigError(f"{table.kind.value} table has no 'all other names' row")
    return table.other_names


def assign(distribution: Optional[CategoryDistribution], threshold: Optional[float]) -> Optional[str]:
    """Argmax category if it is unique and meets the threshold, else None."""
    if distribution is None or threshold is None:
        return None
    winner = distribution.argmax()
    if winner is None or distribution[winner] < threshold:
        return None
    return winner


def _resolve_side(name: Optional[str], table: Optional[ReferenceTable], cfg: InferenceConfig,
                  dataset_aggregate: Optional[CategoryDistribution]) -> Tuple[Optional[CategoryDistribution], bool, bool]:
    if table is None:
        return None, False, False
    hit = lookup(name, table)
    if hit is not None:
        return hit[0], True, False
    imputed = impute(cfg.imputation, dataset_aggregate, table)
    return imputed, False, imputed is not None


def infer_author(a: AuthorRecord, tables: TableSet, cfg: InferenceConfig,
                 dataset_aggregate: Optional[CategoryDistribution] = None) -> AuthorInference:
    """
    Resolve one author into a distribution and, with a threshold, an assignment.

    COMBINED falls back to the present side when the other is missing and not
    imputed. TWO_STEP resolves the step-1 side here; its assignment comes from
    the corpus-level retrieval.

    Args:
        a: Author record
        tables: Reference tables
        cfg: Model configuration
        dataset_aggregate: Required for DATASET_AGGREGATE imputation

    Returns:
        AuthorInference (distribution None when nothing was found or imputed)
    """
    given_table = tables.given_table(cfg.given_normalized)
    strategy = cfg.strategy

    family_d = given_d = None
    family_found = given_found = imputed_family = imputed_given = False

    if strategy is Strategy.TWO_STEP:
        if cfg.two_step.first is NameSide.FAMILY:
            family_d, family_found, imputed_family = _resolve_side(a.family, tables.family, cfg, dataset_aggregate)
        else:
            given_d, given_found, imputed_given = _resolve_side(a.given, given_table, cfg, dataset_aggregate)
    else:
        if cfg.uses_family:
            family_d, family_found, imputed_family = _resolve_side(a.family, tables.family, cfg, dataset_aggregate)
        if cfg.uses_given:
            given_d, given_found, imputed_given = _resolve_side(a.given, given_table, cfg, dataset_aggregate)

    if strategy is Strategy.COMBINED and given_d is not None and family_d is not None:
        distribution = combine(given_d, family_d, cfg.weight_cfg)
    else:
        distribution = family_d if family_d is not None else given_d

    provenance = Provenance(given_found=given_found, family_found=family_found,
                            imputed_given=imputed_given, imputed_family=imputed_family)
    assignment = None if strategy is Strategy.TWO_STEP else assign(distribution, cfg.threshold)
    return AuthorInference(id=a.id, distribution=distribution, assignment=assignment, provenance=provenance)


def fractional_aggregate(inferences: Iterable[AuthorInference]) -> CategoryDistribution:
    """
    Mean of per-author distributions, each author counting fractionally.

    Raises:
        EmptyAggregateError: If every author is MISSING
    """
    rows = []
    missing = 0
    for inf in inferences:
        if inf.distribution is None:
            missing += 1
        else:
            rows.append(inf.distribution.as_array())
    if not rows:
        raise EmptyAggregateError(f"No resolved authors to aggregate ({missing} missing)")
    if missing:
        logger.info("Fractional aggregate excludes %d missing author(s)", missing)
    mean = np.vstack(rows).mean(axis=0)
    return CategoryDistribution.from_array(mean / mean.sum())


def compute_dataset_aggregate(authors: Sequence[AuthorRecord], tables: TableSet,
                              given_normalized: bool = True) -> CategoryDistribution:
    """
    Aggregate over authors whose names were found, used for DATASET_AGGREGATE.

    The family table is authoritative; the given table is used only when no
    family table is loaded.
    """
    if tables.family is not None:
        cfg = InferenceConfig(strategy=Strategy.FAMILY_ONLY, imputation=Imputation.NONE)
    else:
        cfg = InferenceConfig(strategy=Strategy.GIVEN_ONLY, imputation=Imputation.NONE,
                              given_normalized=given_normalized)
    return fractional_aggregate(infer_author(a, tables, cfg) for a in authors)


@dataclass(frozen=True)
class TwoStepResult:
    ids: Set[str]
    n_first: int
    from_first: Set[str]
    from_second: Set[str]
    second_below_threshold: int


def side_arrays(authors: Sequence[AuthorRecord], table: ReferenceTable, side: NameSide,
                 category: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-author probability of ``category``, name count, and found mask for one name side."""
    col = table.categories.index(category)
    probs = np.zeros(len(authors))
    counts = np.zeros(len(authors))
    found = np.zeros(len(authors), dtype=bool)
    for i, a in enumerate(authors):
        row = table.row_of(a.family_key if side is NameSide.FAMILY else a.given_key)
        if row is not None:
            probs[i] = table.probs[row, col]
            counts[i] = table.counts[row]
            found[i] = True
    return probs, counts, found


def second_step_order(probs: np.ndarray, counts: np.ndarray, found: np.ndarray,
                      ids: Sequence[str]) -> np.ndarray:
    """Indices of found authors ranked by probability desc, count desc, then id."""
    candidates = np.flatnonzero(found)
    ranked = sorted(candidates, key=lambda i: (-probs[i], -counts[i], ids[i]))
    return np.array(ranked, dtype=int)


def select_two_step(first_probs: np.ndarray, first_found: np.ndarray,
                    second_probs: np.ndarray, order: np.ndarray,
                    threshold: float, second_step_threshold: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """
    Boolean masks of step-1 and step-2 picks for one category and threshold.

    ``order`` is the precomputed step-2 ranking (see second_step_order).
    """
    first = first_found & (first_probs >= threshold)
    n = int(first.sum())
    ranked = order
    if second_step_threshold:
        ranked = ranked[second_probs[ranked] >= threshold]
    second = np.zeros_like(first)
    second[ranked[:n]] = True
    return first, second


def two_step_retrieve(authors: Sequence[AuthorRecord], tables: TableSet, category: str,
                      threshold: float, given_normalized: bool = True,
                      two_step: TwoStepConfig = TwoStepConfig()) -> TwoStepResult:
    """
    Retrieve authors for one category by family-name threshold, then top-N given names.

    Step 1 keeps authors whose family-name probability for ``category`` meets
    the threshold (N authors). Step 2 ranks authors by given-name probability
    for ``category`` (descending; ties by larger given-name count, then id) and
    takes the top N. The union has between N and 2N authors.

    Raises:
        ConfigError: If a table is missing or the threshold is out of range
    """
    if not 0.0 < threshold <= 1.0:
        raise ConfigError(f"Threshold must be in (0, 1] (got {threshold})")
    given_table = tables.given_table(given_normalized)
    if tables.family is None or given_table is None:
        raise ConfigError("Two-step retrieval needs both family and given tables")

    first_side = two_step.first
    second_side = NameSide.GIVEN if first_side is NameSide.FAMILY else NameSide.FAMILY
    table_for = {NameSide.FAMILY: tables.family, NameSide.GIVEN: given_table}

    ids = [a.id for a in authors]
    first_probs, _, first_found = side_arrays(authors, table_for[first_side], first_side, category)
    second_probs, second_counts, second_found = side_arrays(authors, table_for[second_side], second_side, category)
    order = second_step_order(second_probs, second_counts, second_found, ids)

    first, second = select_two_step(first_probs, first_found, second_probs, order,
                                    threshold, two_step.second_step_threshold)
    below = int((second & (second_probs < threshold)).sum())
    from_first = {ids[i] for i in np.flatnonzero(first)}
    from_second = {ids[i] for i in np.flatnonzero(second)}
    return TwoStepResult(ids=from_first | from_second, n_first=len(from_first),
                         from_first=from_first, from_second=from_second,
                         second_below_threshold=below)


def infer_corpus(authors: Sequence[AuthorRecord], tables: TableSet, cfg: InferenceConfig,
                 threads: int = 1) -> Tuple[List[AuthorInference], Dict[str, Any]]:
    """
    Run a model over a corpus and summarize it.

    Output order follows author id. For TWO_STEP an author retrieved by a
    single category reports the distribution of the name side that retrieved
    it, and is assigned that category only if the distribution meets the
    threshold there. Authors retrieved by none or several stay UNASSIGNED.

    Returns:
        Tuple of (inferences, summary)
    """
    validate_tables(cfg, tables)
    if not authors:
        raise ConfigError("No authors to infer")

    dataset_aggregate = None
    if cfg.imputation is Imputation.DATASET_AGGREGATE:
        dataset_aggregate = compute_dataset_aggregate(authors, tables, cfg.given_normalized)

    ordered = sorted(authors, key=lambda a: a.id)

    def run(a):
        return infer_author(a, tables, cfg, dataset_aggregate)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            inferences = list(pool.map(run, ordered, chunksize=256))
    else:
        inferences = [run(a) for a in ordered]

    two_step_summary = None
    if cfg.strategy is Strategy.TWO_STEP:
        hits: Dict[str, List[Tuple[str, str]]] = {}
        two_step_summary = {}
        second_side = NameSide.GIVEN if cfg.two_step.first is NameSide.FAMILY else NameSide.FAMILY
        for category in WORKING_CATEGORIES:
            result = two_step_retrieve(ordered, tables, category, cfg.threshold,
                                       cfg.given_normalized, cfg.two_step)
            for author_id in sorted(result.from_first):
                hits.setdefault(author_id, []).append((category, cfg.two_step.first.value))
            for author_id in sorted(result.from_second - result.from_first):
                hits.setdefault(author_id, []).append((category, second_side.value))
            two_step_summary[category] = {
                'n_first_step': result.n_first,
                'retrieved': len(result.ids),
                'second_step_below_threshold': result.second_below_threshold,
            }
        second_table = tables.given_table(cfg.given_normalized) if second_side is NameSide.GIVEN else tables.family
        resolved = []
        for a, inf in zip(ordered, inferences):
            found = tuple(hits.get(inf.id, ()))
            categories = {cat for cat, _ in found}
            if len(categories) != 1:
                resolved.append(replace(inf, assignment=None, retrieved=found))
                continue
            # The reported distribution is the one from the side that retrieved the author.
            category = found[0][0]
            distribution = inf.distribution
            if all(side == second_side.value for _, side in found):
                hit = lookup(a.given if second_side is NameSide.GIVEN else a.family, second_table)
                distribution = hit[0] if hit is not None else None
            assignment = category if assign(distribution, cfg.threshold) == category else None
            resolved.append(replace(inf, distribution=distribution, assignment=assignment, retrieved=found))
        inferences = resolved

    summary = summarize_inferences(inferences, cfg)
    summary['dataset_aggregate'] = dataset_aggregate.as_dict() if dataset_aggregate is not None else None
    if two_step_summary is not None:
        summary['two_step'] = two_step_summary
    logger.info("Inferred %d author(s): %d missing, aggregate %s", summary['authors'],
                summary['missing'], summary['aggregate'])
    return inferences, summary


def summarize_inferences(inferences: Sequence[AuthorInference], cfg: InferenceConfig) -> Dict[str, Any]:
    provenance = [inf.provenance for inf in inferences]
    assigned = {code: 0 for code in WORKING_CATEGORIES}
    for inf in inferences:
        if inf.assignment is not None:
            assigned[inf.assignment] += 1

    try:
        aggregate = fractional_aggregate(inferences).as_dict()
    except EmptyAggregateError:
        aggregate = None

    return {
        'strategy': cfg.strategy.value,
        'threshold': cfg.threshold,
        'imputation': cfg.imputation.value,
        'given_normalized': cfg.given_normalized,
        'weighting': cfg.weight_cfg.label if cfg.strategy is Strategy.COMBINED else None,
        'authors': len(inferences),
        'family_found': sum(p.family_found for p in provenance),
        'given_found': sum(p.given_found for p in provenance),
        'imputed_family': sum(p.imputed_family for p in provenance),
        'imputed_given': sum(p.imputed_given for p in provenance),
        'missing': sum(inf.distribution is None for inf in inferences),
        'assigned': assigned,
        'unassigned': sum(inf.assignment is None for inf in inferences),
        'aggregate': aggregate,
    }


def inferences_to_frame(inferences: Sequence[AuthorInference]) -> pd.DataFrame:
    """Per-author output table: id, one column per category, assignment, provenance."""
    rows = []
    for inf in inferences:
        probs = inf.distribution.as_dict() if inf.distribution is not None else {}
        row = {'id': inf.id}
        row.update({code: probs.get(code, np.nan) for code in WORKING_CATEGORIES})
        row.update({
            'assignment': inf.assignment or '',
            'given_found': inf.provenance.given_found,
            'family_found': inf.provenance.family_found,
            'imputed_given': inf.provenance.imputed_given,
            'imputed_family': inf.provenance.imputed_family,
            'retrieved': '|'.join(f"{cat}:{side}" for cat, side in inf.retrieved),
        })
        rows.append(row)
    columns = ['id', *WORKING_CATEGORIES, 'assignment', 'given_found', 'family_found',
               'imputed_given', 'imputed_family', 'retrieved']
    return pd.DataFrame(rows, columns=columns)


def load_authors(source, columns: Mapping[str, str] = None,
                 delimiter: str = ',') -> Tuple[List[AuthorRecord], List[Dict[str, Any]]]:
    """
    Load an author corpus with id, given and family columns.

    Args:
        source: Path or stream of delimited text with a header row
        columns: Mapping of 'id', 'given', 'family' to header names
        delimiter: Field delimiter

    Returns:
        Tuple of (authors, row_errors). Rows without an id, with a duplicate
        id, or with no letters in either name are reported, not loaded.

    Raises:
        SchemaError: If a mapped column is missing
    """
    columns = dict(columns or {'id': 'id', 'given': 'given', 'family': 'family'})
    try:
        df = pd.read_csv(source, sep=delimiter, dtype=str, keep_default_na=False,
                         encoding='utf-8-sig', skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise SchemaError("Author file is empty (no header row)") from None

    df = df.fillna('')
    df.columns = [str(col).strip() for col in df.columns]
    lookup_cols = {col.lower(): col for col in df.columns}
    resolved = {}
    missing = []
    for key in ('id', 'given', 'family'):
        actual = lookup_cols.get(columns.get(key, key).strip().lower())
        if actual is None:
            missing.append(columns.get(key, key))
        resolved[key] = actual
    if missing:
        raise SchemaError(f"Missing required columns: {', '.join(missing)}")

    authors = []
    row_errors = []
    seen = set()
    for offset, (author_id, given, family) in enumerate(
            df[[resolved['id'], resolved['given'], resolved['family']]].itertuples(index=False)):
        line = offset + 2
        author_id, given, family = author_id.strip(), given.strip(), family.strip()
        if not (author_id or given or family):
            continue
        if not author_id:
            row_errors.append({'line': line, 'id': '', 'message': 'missing id'})
        elif author_id in seen:
            row_errors.append({'line': line, 'id': author_id, 'message': 'duplicate id'})
        elif not normalize_name(given) and not normalize_name(family):
            row_errors.append({'line': line, 'id': author_id, 'message': 'no usable given or family name'})
        else:
            seen.add(author_id)
            authors.append(AuthorRecord(id=author_id, given=given or None, family=family or None))

    if row_errors:
        logger.warning("Author corpus: %d row(s) rejected", len(row_errors))
    logger.info("Author corpus: loaded %d author(s)", len(authors))
    return authors, row_errors


def collapse_to_names(authors: Sequence[AuthorRecord]) -> List[AuthorRecord]:
    """Name-level unit: one record per distinct normalized (given, family) pair."""
    pairs = {}
    for a in authors:
        key = (a.given_key, a.family_key)
        pairs.setdefault(key, a)
    return [AuthorRecord(id=f"{given}|{family}", given=a.given, family=a.family)
            for (given, family), a in sorted(pairs.items())]
