"""
Reference table ingestion for census surname and mortgage given-name files.
Handles CSV parsing, suppression resolution, category collapse, duplicate
merging and expansion-factor renormalization.
"""

import logging
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd
from unidecode import unidecode

from categories import (
    DEFAULT_CATEGORIES,
    SIMPLEX_TOLERANCE,
    CategoryDistribution,
    CategorySet,
)

logger = logging.getLogger(__name__)

PERCENT_SUM_SLACK = 0.5
OTHER_NAMES_SENTINEL = '*ALL OTHER NAMES*'


class SchemaError(ValueError):
    """The input file does not match the configured column mapping."""


class EmptyTableError(ValueError):
    """No usable rows survived ingestion."""


class ExpansionError(ValueError):
    """Expansion factors cannot move absent mass onto a target."""


class TableKind(str, Enum):
    GIVEN = 'GIVEN'
    FAMILY = 'FAMILY'


class _Suppressed:
    """Marker for a privacy-suppressed percentage cell."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return 'SUPPRESSED'


SUPPRESSED = _Suppressed()

PctValue = Union[float, _Suppressed]


@dataclass(frozen=True)
class ReferenceSchema:
    """Column mapping for one reference file layout."""

    name_column: str
    count_column: str
    category_columns: Mapping[str, str]
    suppression_marker: str = '(S)'
    delimiter: str = ','
    encoding: str = 'utf-8-sig'
    other_names_label: Optional[str] = 'ALL OTHER NAMES'

    def __post_init__(self):
        object.__setattr__(self, 'category_columns', MappingProxyType(dict(self.category_columns)))


# 2010 census surname file (Names_2010Census.csv)
CENSUS_SURNAME_SCHEMA = ReferenceSchema(
    name_column='name',
    count_column='count',
    category_columns={
        'White': 'pctwhite',
        'Black': 'pctblack',
        'Asian': 'pctapi',
        'AIAN': 'pctaian',
        'TwoOrMore': 'pct2prace',
        'Hispanic': 'pcthispanic',
    },
)

# Mortgage-application given names (firstnames.csv layout)
MORTGAGE_GIVEN_SCHEMA = ReferenceSchema(
    name_column='firstname',
    count_column='obs',
    category_columns={
        'White': 'pctwhite',
        'Black': 'pctblack',
        'Asian': 'pctapi',
        'AIAN': 'pctaian',
        'TwoOrMore': 'pct2prace',
        'Hispanic': 'pcthispanic',
    },
    other_names_label=None,
)

DEFAULT_SCHEMAS = {
    TableKind.FAMILY: CENSUS_SURNAME_SCHEMA,
    TableKind.GIVEN: MORTGAGE_GIVEN_SCHEMA,
}


@dataclass(frozen=True)
class RawNameRecord:
    """One reference-table row before suppression handling."""

    name: str
    total_count: int
    pct: Mapping[str, PctValue]
    line: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'name', self.name.strip())
        object.__setattr__(self, 'pct', MappingProxyType(dict(self.pct)))

        if not self.name:
            raise ValueError("Name is empty")
        if self.total_count < 0:
            raise ValueError(f"Count must be nonnegative (got {self.total_count})")

        published = [v for v in self.pct.values() if v is not SUPPRESSED]
        for value in published:
            if not 0.0 <= value <= 100.0:
                raise ValueError(f"Percentage out of range [0, 100]: {value}")
        if sum(published) > 100.0 + PERCENT_SUM_SLACK:
            raise ValueError(f"Percentages sum to {sum(published):.2f} (> 100 + {PERCENT_SUM_SLACK})")


def _pick_ascii_letter(ch: str) -> str:
    decomposed = ''.join(c for c in unicodedata.normalize('NFKD', ch) if not unicodedata.combining(c))
    if len(decomposed) == 1 and decomposed.isascii() and decomposed.isalpha():
        return decomposed
    transliterated = unidecode(ch)
    if len(transliterated) == 1 and transliterated.isalpha():
        return transliterated
    return ''


def normalize_name(raw: Any) -> str:
    """
    Normalize a personal name to the uppercase ASCII key used by reference tables.

    Examples:
        "Rodriguez" → "RODRIGUEZ"
        "  o'brien " → "OBRIEN"
        "Muñoz" → "MUNOZ"
        "Mary-Jane" → "MARYJANE"

    Only single-character transliterations are applied; characters with no
    one-letter ASCII equivalent are dropped along with spaces, hyphens,
    apostrophes, digits and other punctuation.

    Args:
        raw: Name text (non-strings and NaN are treated as missing)

    Returns:
        Normalized key, or empty text when no letters remain
    """
    if raw is None:
        return ''
    try:
        if pd.isna(raw):
            return ''
    except (TypeError, ValueError):
        pass

    letters = []
    for ch in str(raw).strip():
        if ch.isascii():
            if ch.isalpha():
                letters.append(ch)
        elif ch.isalpha():
            letters.append(_pick_ascii_letter(ch))
    return ''.join(letters).upper()


def parse_numeric_cell(value: Any) -> float:
    """
    Parse a published numeric cell, tolerating thousands separators.

    Examples:
        "177,386" → 177386.0
        " 91.6 " → 91.6

    Raises:
        ValueError: If the cell is empty or not numeric
    """
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if np.isnan(value):
            raise ValueError("empty cell")
        return float(value)

    cleaned = str(value).replace(',', '').replace('%', '').strip()
    if not cleaned or cleaned.upper() in ('N/A', 'NA'):
        raise ValueError("empty cell")
    try:
        return float(cleaned)
    except ValueError:
        raise ValueError(f"non-numeric value {value!r}") from None


def _resolve_columns(columns, schema: ReferenceSchema) -> Dict[str, str]:
    lookup = {str(col).strip().lower(): col for col in columns}
    wanted = {'name': schema.name_column, 'count': schema.count_column}
    wanted.update({f'pct:{code}': col for code, col in schema.category_columns.items()})

    resolved = {}
    missing = []
    for key, col in wanted.items():
        actual = lookup.get(col.strip().lower())
        if actual is None:
            missing.append(col)
        else:
            resolved[key] = actual
    if missing:
        raise SchemaError(f"Missing required columns: {', '.join(missing)}")
    return resolved


def parse_reference_csv(source, schema: ReferenceSchema,
                        kind: TableKind = TableKind.FAMILY) -> Tuple[List[RawNameRecord], List[Dict[str, Any]]]:
    """
    Parse a census-style reference file into raw records.

    Args:
        source: Path or binary/text stream of delimited text with a header row
        schema: Column mapping and suppression marker
        kind: Which table this is (used for logging only)

    Returns:
        Tuple of (records, row_errors). Each row error is a dict with
        'line', 'name' and 'message'; line numbers count the header as line 1.

    Raises:
        SchemaError: If the header is missing or a mapped column is absent
    """
    try:
        df = pd.read_csv(source, sep=schema.delimiter, dtype=str, keep_default_na=False,
                         encoding=schema.encoding, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise SchemaError("Reference file is empty (no header row)") from None

    df = df.fillna('')
    df.columns = [str(col).strip() for col in df.columns]
    columns = _resolve_columns(df.columns, schema)
    marker = schema.suppression_marker.strip()

    records = []
    row_errors = []
    for offset, row in enumerate(df.itertuples(index=False)):
        values = dict(zip(df.columns, row))
        line = offset + 2
        name = str(values[columns['name']]).strip()

        if not name and not any(str(v).strip() for v in values.values()):
            continue

        try:
            count = parse_numeric_cell(values[columns['count']])
            if not float(count).is_integer():
                raise ValueError(f"count must be an integer (got {count})")

            pct = {}
            for code in schema.category_columns:
                cell = str(values[columns[f'pct:{code}']]).strip()
                if cell == marker:
                    pct[code] = SUPPRESSED
                else:
                    try:
                        pct[code] = parse_numeric_cell(cell)
                    except ValueError as err:
                        raise ValueError(f"column {schema.category_columns[code]}: {err}") from None

            records.append(RawNameRecord(name=name, total_count=int(count), pct=pct, line=line))
        except ValueError as err:
            row_errors.append({'line': line, 'name': name, 'message': str(err)})

    if row_errors:
        logger.warning("%s table: %d row(s) rejected (first: line %d, %s)", kind.value,
                       len(row_errors), row_errors[0]['line'], row_errors[0]['message'])
    logger.info("%s table: parsed %d record(s)", kind.value, len(records))
    return records, row_errors


def resolve_suppression(rec: RawNameRecord) -> Optional[Dict[str, float]]:
    """
    Replace suppressed cells with zero and renormalize to fractions.

    Examples:
        {A: 50, B: 50, rest (S)} → {A: 0.5, B: 0.5, rest 0}

    Args:
        rec: Valid raw record

    Returns:
        Raw-category fractions summing to 1, or None when the record is
        unusable (every cell suppressed or zero)
    """
    values = {code: (0.0 if value is SUPPRESSED else float(value)) for code, value in rec.pct.items()}
    total = sum(values.values())
    if total <= 0:
        return None
    return {code: value / total for code, value in values.items()}


def collapse_categories(fractions: Mapping[str, float],
                        cats: CategorySet = DEFAULT_CATEGORIES) -> Optional[CategoryDistribution]:
    """
    Drop the collapsed-away raw categories and renormalize onto the working set.

    Returns:
        Working-category distribution, or None when no mass survives the collapse
    """
    raw = np.array([fractions.get(code, 0.0) for code in cats.raw], dtype=float)
    working = raw @ cats.collapse_matrix()
    total = working.sum()
    if total <= 0:
        return None
    return CategoryDistribution.from_array(working / total, cats.working)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ReferenceTable:
    """
    Immutable lookup from normalized name to (distribution, count).

    ``probs`` rows follow ``names`` order and ``categories`` columns. The
    census "All other names" row, when present, is kept out of the entries
    and exposed as ``other_names``.
    """

    kind: TableKind
    names: Tuple[str, ...]
    counts: np.ndarray
    probs: np.ndarray
    categories: Tuple[str, ...] = DEFAULT_CATEGORIES.working
    other_names: Optional[CategoryDistribution] = None
    other_names_count: float = 0.0
    aggregate: CategoryDistribution = field(init=False)
    _index: Mapping[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        counts = _readonly(self.counts)
        probs = _readonly(self.probs).reshape(len(self.names), len(self.categories))
        object.__setattr__(self, 'kind', TableKind(self.kind))
        object.__setattr__(self, 'names', tuple(self.names))
        object.__setattr__(self, 'categories', tuple(self.categories))
        object.__setattr__(self, 'counts', counts)
        object.__setattr__(self, 'probs', probs)

        if len(self.names) == 0:
            raise EmptyTableError(f"{self.kind.value} table has no entries")
        if len(set(self.names)) != len(self.names):
            raise ValueError("Reference table names must be unique")
        if counts.shape != (len(self.names),) or (counts < 0).any():
            raise ValueError("Counts must be a nonnegative vector aligned with names")
        if (probs < -SIMPLEX_TOLERANCE).any() or np.abs(probs.sum(axis=1) - 1.0).max() > SIMPLEX_TOLERANCE:
            raise ValueError("Every entry distribution must lie on the simplex")

        total = counts.sum()
        if total <= 0:
            raise EmptyTableError(f"{self.kind.value} table has zero total count")
        aggregate = counts @ probs / total
        object.__setattr__(self, 'aggregate',
                            CategoryDistribution.from_array(aggregate / aggregate.sum(), self.categories))
        object.__setattr__(self, '_index', MappingProxyType({name: i for i, name in enumerate(self.names)}))

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def get(self, key: str) -> Optional[Tuple[CategoryDistribution, float]]:
        """Exact lookup by already-normalized key."""
        i = self._index.get(key)
        if i is None:
            return None
        return CategoryDistribution.from_array(self.probs[i], self.categories), float(self.counts[i])

    def row_of(self, key: str) -> Optional[int]:
        return self._index.get(key)

    def to_frame(self) -> pd.DataFrame:
        """Fresh DataFrame copy in canonical column order."""
        df = pd.DataFrame(np.array(self.probs), columns=list(self.categories))
        df.insert(0, 'count', np.array(self.counts))
        df.insert(0, 'normalized_name', list(self.names))
        return df


def build_reference_table(records: List[RawNameRecord], kind: TableKind,
                          schema: Optional[ReferenceSchema] = None,
                          cats: CategorySet = DEFAULT_CATEGORIES) -> Tuple[ReferenceTable, Dict[str, Any]]:
    """
    Turn parsed records into a ReferenceTable.

    Duplicate names after normalization are merged by count-weighted averaging
    of their distributions (counts are summed).

    Args:
        records: Output of parse_reference_csv
        kind: GIVEN or FAMILY
        schema: Used for the other-names label (defaults to the kind's schema)
        cats: Category set driving the collapse

    Returns:
        Tuple of (table, report) where report counts unusable rows and merges

    Raises:
        EmptyTableError: If no usable entries remain
    """
    kind = TableKind(kind)
    schema = schema or DEFAULT_SCHEMAS[kind]
    other_key = normalize_name(schema.other_names_label) if schema.other_names_label else None

    merged: Dict[str, List[Tuple[float, np.ndarray]]] = {}
    unusable = []
    duplicates = 0
    other_names = None
    other_count = 0.0

    for rec in records:
        key = normalize_name(rec.name)
        fractions = resolve_suppression(rec)
        dist = collapse_categories(fractions, cats) if fractions is not None else None

        if other_key and key == other_key:
            if dist is None:
                logger.warning("%s table: other-names row at line %d is unusable", kind.value, rec.line)
            else:
                other_names, other_count = dist, float(rec.total_count)
            continue

        if not key or dist is None:
            unusable.append({'line': rec.line, 'name': rec.name,
                             'reason': 'no letters in name' if not key else 'no surviving category mass'})
            continue

        if key in merged:
            duplicates += 1
        merged.setdefault(key, []).append((float(rec.total_count), dist.as_array()))

    if not merged:
        raise EmptyTableError(f"{kind.value} table is empty: no usable rows")

    names = sorted(merged)
    counts = np.zeros(len(names))
    probs = np.zeros((len(names), len(cats.working)))
    for i, key in enumerate(names):
        parts = merged[key]
        weights = np.array([count for count, _ in parts])
        vectors = np.vstack([vec for _, vec in parts])
        counts[i] = weights.sum()
        if counts[i] > 0:
            probs[i] = weights @ vectors / counts[i]
        else:
            probs[i] = vectors.mean(axis=0)

    table = ReferenceTable(kind=kind, names=tuple(names), counts=counts, probs=probs,
                           categories=cats.working, other_names=other_names,
                           other_names_count=other_count)

    if unusable:
        logger.warning("%s table: %d unusable row(s) excluded", kind.value, len(unusable))
    if duplicates:
        logger.warning("%s table: %d duplicate name(s) merged", kind.value, duplicates)

    report = {
        'kind': kind.value,
        'rows_read': len(records),
        'rows_unusable': len(unusable),
        'unusable_rows': unusable,
        'duplicates_merged': duplicates,
        'entries': len(table),
        'other_names': other_names.as_dict() if other_names is not None else None,
        'aggregate': table.aggregate.as_dict(),
    }
    return table, report


def ingest_reference(source, kind: TableKind, schema: Optional[ReferenceSchema] = None,
                     cats: CategorySet = DEFAULT_CATEGORIES) -> Tuple[ReferenceTable, Dict[str, Any]]:
    """Parse and build in one step; row errors are folded into the report."""
    kind = TableKind(kind)
    schema = schema or DEFAULT_SCHEMAS[kind]
    records, row_errors = parse_reference_csv(source, schema, kind)
    if not records:
        raise EmptyTableError(f"{kind.value} table is empty: no data rows")
    table, report = build_reference_table(records, kind, schema, cats)
    report['rows_read'] = len(records) + len(row_errors)
    report['row_errors'] = row_errors
    return table, report


def compute_expansion_factors(table: ReferenceTable,
                              target: CategoryDistribution) -> Dict[str, float]:
    """
    Per-category factors that move a table's aggregate onto a target.

    Examples:
        aggregate (6.3, 4.2, 6.9, 82.6)%, target (5.0, 12.4, 16.5, 66.1)%
        → factors ≈ (0.794, 2.952, 2.391, 0.800)

    A category with zero mass in both aggregate and target gets factor 1.

    Raises:
        ExpansionError: If the aggregate has no mass where the target does
    """
    if tuple(target.categories) != tuple(table.categories):
        raise ValueError("Target categories do not match the table")

    factors = {}
    for code, agg, tgt in zip(table.categories, table.aggregate.probs, target.probs):
        if agg <= 0:
            if tgt > 0:
                raise ExpansionError(f"Cannot expand category {code}: table aggregate is 0 but target is {tgt:.4f}")
            factors[code] = 1.0
        else:
            factors[code] = tgt / agg
    return factors


def apply_expansion(table: ReferenceTable, factors: Mapping[str, float]) -> ReferenceTable:
    """
    Rescale implied per-category counts by the expansion factors.

    Each entry's implied counts (count × fraction) are multiplied by the
    category factor; the entry distribution is renormalized and its count
    becomes the sum of the expanded implied counts. The other-names row is
    rescaled the same way.

    Raises:
        ValueError: If a factor is missing or not positive
    """
    f = np.array([factors[code] for code in table.categories], dtype=float)
    if (f <= 0).any() or not np.isfinite(f).all():
        raise ValueError(f"Expansion factors must be positive: {dict(zip(table.categories, f))}")

    scaled = table.probs * f
    row_mass = scaled.sum(axis=1)
    probs = scaled / row_mass[:, None]
    counts = table.counts * row_mass

    other = None
    other_count = table.other_names_count
    if table.other_names is not None:
        other_scaled = table.other_names.as_array() * f
        other = CategoryDistribution.from_array(other_scaled / other_scaled.sum(), table.categories)
        other_count = table.other_names_count * other_scaled.sum()

    return ReferenceTable(kind=table.kind, names=table.names, counts=counts, probs=probs,
                          categories=table.categories, other_names=other, other_names_count=other_count)


def normalize_to_target(table: ReferenceTable, target: CategoryDistribution) -> Tuple[ReferenceTable, Dict[str, float]]:
    """Expand a table (typically mortgage given names) onto a target population."""
    factors = compute_expansion_factors(table, target)
    logger.info("Expansion factors for %s table: %s", table.kind.value,
                ', '.join(f"{code}={value:.3f}" for code, value in factors.items()))
    return apply_expansion(table, factors), factors


def write_table_csv(table: ReferenceTable, destination) -> None:
    """Write the canonical table CSV (sorted names, other-names sentinel last)."""
    df = table.to_frame()
    if table.other_names is not None:
        other = pd.DataFrame([[OTHER_NAMES_SENTINEL, table.other_names_count, *table.other_names.probs]],
                             columns=df.columns)
        df = pd.concat([df, other], ignore_index=True)
    df.to_csv(destination, index=False, lineterminator='\n')


def read_table_csv(source, kind: TableKind) -> ReferenceTable:
    """
    Load a canonical table CSV written by write_table_csv.

    Raises:
        SchemaError: If canonical columns are missing
    """
    df = pd.read_csv(source, dtype={'normalized_name': str}, keep_default_na=False,
                     float_precision='round_trip')
    expected = ['normalized_name', 'count', *DEFAULT_CATEGORIES.working]
    missing = [col for col in expected if col not in df.columns]
    if missing:
        raise SchemaError(f"Missing canonical columns: {', '.join(missing)}")
    categories = tuple(col for col in df.columns if col not in ('normalized_name', 'count'))

    is_other = df['normalized_name'] == OTHER_NAMES_SENTINEL
    other = None
    other_count = 0.0
    if is_other.any():
        row = df.loc[is_other].iloc[0]
        other = CategoryDistribution.from_array([row[c] for c in categories], categories)
        other_count = float(row['count'])
    entries = df.loc[~is_other]

    return ReferenceTable(kind=TableKind(kind), names=tuple(entries['normalized_name']),
                          counts=entries['count'].to_numpy(dtype=float),
                          probs=entries[list(categories)].to_numpy(dtype=float),
                          categories=categories, other_names=other, other_names_count=other_count)
