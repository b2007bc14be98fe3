"""Shared fixtures: small reference tables built from published example rows and synthetic corpora."""

import io

import numpy as np
import pytest

from inference_engine import AuthorRecord, TableSet
from reference_ingest import TableKind, ingest_reference

CENSUS_HEADER = 'name,rank,count,prop100k,cum_prop100k,pctwhite,pctblack,pctapi,pctaian,pct2prace,pcthispanic'
MORTGAGE_HEADER = 'firstname,obs,pcthispanic,pctwhite,pctblack,pctapi,pctaian,pct2prace'

# (name, count, Asian %, Black %, Hispanic %, White %)
GIVEN_ROWS = [
    ('Juan', 4019, 1.5, 0.5, 93.4, 4.5),
    ('Doris', 1332, 3.4, 13.5, 6.3, 76.7),
    ('Andy', 555, 38.8, 1.6, 6.4, 53.2),
]
FAMILY_ROWS = [
    ('Rodriguez', 1094924, 0.6, 0.5, 94.1, 4.8),
    ('Lee', 693023, 43.8, 16.9, 2.0, 37.3),
    ('Washington', 177386, 0.3, 91.6, 2.7, 5.4),
]

# Single-category names whose counts reproduce the census and mortgage aggregates
CENSUS_AGGREGATE_ROWS = [
    ('Aaa', 50, 100, 0, 0, 0),
    ('Bbb', 124, 0, 100, 0, 0),
    ('Hhh', 165, 0, 0, 100, 0),
    ('Www', 661, 0, 0, 0, 100),
]
MORTGAGE_AGGREGATE_ROWS = [
    ('Aaa', 630, 100, 0, 0, 0),
    ('Bbb', 420, 0, 100, 0, 0),
    ('Hhh', 690, 0, 0, 100, 0),
    ('Www', 8260, 0, 0, 0, 100),
]

OTHER_NAMES_ROW = (8.2, 8.8, 14.1, 68.8)


def _fmt(value):
    return value if isinstance(value, str) else f'{value:g}'


def census_csv(rows, other_names=None, extra_lines=()):
    """Census surname file text; rows are (name, count, As, B, H, W) with AIAN and 2+ zero."""
    lines = [CENSUS_HEADER]
    for rank, (name, count, asian, black, hispanic, white) in enumerate(rows, 1):
        lines.append(f'{name.upper()},{rank},{count},0,0,{_fmt(white)},{_fmt(black)},{_fmt(asian)},0,0,{_fmt(hispanic)}')
    if other_names is not None:
        asian, black, hispanic, white = other_names
        lines.append(f'ALL OTHER NAMES,0,29312001,0,0,{white},{black},{asian},0,0,{hispanic}')
    lines.extend(extra_lines)
    return io.StringIO('\n'.join(lines) + '\n')


def mortgage_csv(rows, extra_lines=()):
    """Mortgage given-name file text; rows are (name, count, As, B, H, W)."""
    lines = [MORTGAGE_HEADER]
    for name, count, asian, black, hispanic, white in rows:
        lines.append(f'{name.upper()},{count},{_fmt(hispanic)},{_fmt(white)},{_fmt(black)},{_fmt(asian)},0,0')
    lines.extend(extra_lines)
    return io.StringIO('\n'.join(lines) + '\n')


def write_census(path, rows, other_names=None):
    path.write_text(census_csv(rows, other_names).getvalue(), encoding='utf-8')
    return path


def write_mortgage(path, rows):
    path.write_text(mortgage_csv(rows).getvalue(), encoding='utf-8')
    return path


def write_authors(path, authors):
    lines = ['id,given,family'] + [f'{a_id},{given},{family}' for a_id, given, family in authors]
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    return path


@pytest.fixture
def family_table():
    """Rodriguez, Lee and Washington surnames."""
    table, _ = ingest_reference(census_csv(FAMILY_ROWS), TableKind.FAMILY)
    return table


@pytest.fixture
def given_table():
    """Juan, Doris and Andy given names."""
    table, _ = ingest_reference(mortgage_csv(GIVEN_ROWS), TableKind.GIVEN)
    return table


@pytest.fixture
def census_table():
    """Family table whose aggregate is (5.0, 12.4, 16.5, 66.1)% with an other-names row."""
    table, _ = ingest_reference(census_csv(CENSUS_AGGREGATE_ROWS, other_names=OTHER_NAMES_ROW), TableKind.FAMILY)
    return table


@pytest.fixture
def mortgage_table():
    """Given table whose aggregate is (6.3, 4.2, 6.9, 82.6)%."""
    table, _ = ingest_reference(mortgage_csv(MORTGAGE_AGGREGATE_ROWS), TableKind.GIVEN)
    return table


@pytest.fixture
def tables(family_table, given_table):
    """Unnormalized lookups use the raw given table; normalized ones the expanded copy."""
    return TableSet.build(family=family_table, given=given_table)


@pytest.fixture
def example_authors():
    return [
        AuthorRecord('a1', 'Juan', 'Rodriguez'),
        AuthorRecord('a2', 'Doris', 'Lee'),
        AuthorRecord('a3', 'Andy', 'Washington'),
        AuthorRecord('a4', 'Andy', 'Rodriguez'),
        AuthorRecord('a5', 'Juan', 'Lee'),
    ]


def synthetic_population(seed, groups, n_names=40, total_authors=1000, unknown_share=0.0):
    """
    Family table plus author corpus drawn from it.

    Args:
        groups: Mapping of category -> (low, high) bounds for the home-category probability
        unknown_share: Fraction of authors given a surname absent from the table

    Returns:
        Tuple of (TableSet, authors)
    """
    rng = np.random.default_rng(seed)
    categories = ['Asian', 'Black', 'Hispanic', 'White']
    rows = []
    letters = 'ABCDEFGHIJKLMNOPQRSTUVWXYZ'
    for g, (category, (low, high)) in enumerate(sorted(groups.items())):
        home = categories.index(category)
        for i in range(n_names):
            top = rng.uniform(low, high)
            rest = rng.dirichlet(np.ones(3)) * (1 - top)
            pct = np.insert(rest, home, top) * 100
            name = f'{letters[g]}{letters[i // 26]}{letters[i % 26]}NAME'
            rows.append((name, int(rng.integers(100, 5000)), *np.round(pct, 1)))

    table, _ = ingest_reference(census_csv(rows), TableKind.FAMILY)
    names = [row[0] for row in rows]
    weights = np.array([row[1] for row in rows], dtype=float)

    authors = []
    for i in range(total_authors):
        if rng.random() < unknown_share:
            family = f'ZZUNKNOWN{letters[i % 26]}{letters[(i // 26) % 26]}'
        else:
            family = names[rng.choice(len(names), p=weights / weights.sum())]
        authors.append(AuthorRecord(f'id{i:05d}', None, family))
    return TableSet.build(family=table), authors
