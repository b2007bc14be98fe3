"""Tests for per-author inference, imputation, aggregation and two-step retrieval."""

import io

import numpy as np
import pytest

from categories import CategoryDistribution
from conftest import synthetic_population
from inference_engine import (
    AuthorInference,
    AuthorRecord,
    ConfigError,
    EmptyAggregateError,
    Imputation,
    InferenceConfig,
    NameSide,
    Strategy,
    TableSet,
    TwoStepConfig,
    assign,
    collapse_to_names,
    compute_dataset_aggregate,
    fractional_aggregate,
    impute,
    infer_author,
    infer_corpus,
    inferences_to_frame,
    load_authors,
    lookup,
    two_step_retrieve,
)
from reference_ingest import ReferenceTable, SchemaError, TableKind
from simplex_core import WeightConfig


def _table(kind, rows):
    names = [name for name, _, _ in rows]
    return ReferenceTable(kind=kind, names=names, counts=[c for _, c, _ in rows], probs=[p for _, _, p in rows])


# === LOOKUP AND IMPUTATION ===

def test_lookup_washington(family_table):
    dist, count = lookup('Washington', family_table)
    assert dist['Black'] == pytest.approx(0.916, abs=1e-3)
    assert count == 177386


def test_lookup_absent_and_normalized(family_table):
    assert lookup('Xqzwv', family_table) is None
    assert lookup('', family_table) is None
    assert lookup(' lee ', family_table) == lookup('LEE', family_table)


def test_impute_policies(census_table):
    assert impute(Imputation.NONE, None, census_table) is None
    np.testing.assert_allclose(impute(Imputation.TABLE_AGGREGATE, None, census_table).as_array(),
                               [0.050, 0.124, 0.165, 0.661], atol=1e-9)
    np.testing.assert_allclose(impute(Imputation.OTHER_NAMES, None, census_table).as_array(),
                               [0.082, 0.088, 0.141, 0.688], atol=1e-3)
    agg = CategoryDistribution.uniform()
    assert impute(Imputation.DATASET_AGGREGATE, agg, census_table) is agg


def test_impute_other_names_requires_row(family_table):
    with pytest.raises(ConfigError):
        impute(Imputation.OTHER_NAMES, None, family_table)
    with pytest.raises(ConfigError):
        impute(Imputation.DATASET_AGGREGATE, None, family_table)


def test_other_names_imputation_rejected_at_startup(tables, example_authors):
    cfg = InferenceConfig(imputation=Imputation.OTHER_NAMES)
    with pytest.raises(ConfigError):
        infer_corpus(example_authors, tables, cfg)


# === CONFIG ===

def test_two_step_requires_threshold():
    with pytest.raises(ConfigError):
        InferenceConfig(strategy=Strategy.TWO_STEP)


def test_threshold_range():
    with pytest.raises(ConfigError):
        InferenceConfig(threshold=0)
    with pytest.raises(ConfigError):
        InferenceConfig(threshold=1.2)
    assert InferenceConfig(threshold=1).threshold == 1.0


def test_missing_table_for_strategy(family_table, example_authors):
    tables = TableSet.build(family=family_table)
    with pytest.raises(ConfigError, match='given'):
        infer_corpus(example_authors, tables, InferenceConfig(strategy=Strategy.GIVEN_ONLY))


# === ASSIGNMENT ===

@pytest.mark.parametrize('family, expected', [
    ('Rodriguez', 'Hispanic'),
    ('Washington', 'Black'),
    ('Lee', None),
])
def test_family_only_threshold_assignment(tables, family, expected):
    cfg = InferenceConfig(threshold=0.9, imputation=Imputation.NONE)
    inf = infer_author(AuthorRecord('x', None, family), tables, cfg)
    assert inf.assignment == expected


@pytest.mark.parametrize('given, expected', [
    ('Juan', 'Hispanic'),
    ('Doris', None),
    ('Andy', None),
])
def test_given_only_threshold_assignment(tables, given, expected):
    cfg = InferenceConfig(strategy=Strategy.GIVEN_ONLY, threshold=0.9, imputation=Imputation.NONE,
                          given_normalized=False)
    inf = infer_author(AuthorRecord('x', given, None), tables, cfg)
    assert inf.assignment == expected


def test_assignment_respects_threshold_and_ties():
    tie = CategoryDistribution.from_array([0.5, 0.5, 0, 0])
    assert assign(tie, 0.5) is None
    d = CategoryDistribution.from_array([0.1, 0.2, 0.6, 0.1])
    assert assign(d, 0.6) == 'Hispanic'
    assert assign(d, 0.61) is None
    assert assign(d, None) is None
    assert assign(None, 0.5) is None


def test_combined_andy_rodriguez(tables):
    author = AuthorRecord('x', 'Andy', 'Rodriguez')
    strict = InferenceConfig(strategy=Strategy.COMBINED, threshold=0.9, given_normalized=False,
                             imputation=Imputation.NONE)
    loose = InferenceConfig(strategy=Strategy.COMBINED, threshold=0.7, given_normalized=False,
                            imputation=Imputation.NONE)
    inf = infer_author(author, tables, strict)
    # variance weighting keeps about 23% of Andy; Hispanic ends near 0.74
    assert inf.distribution.argmax() == 'Hispanic'
    assert inf.distribution['Hispanic'] == pytest.approx(0.741, abs=2e-3)
    assert inf.assignment is None
    assert infer_author(author, tables, loose).assignment == 'Hispanic'


def test_combined_falls_back_to_present_side(tables):
    cfg = InferenceConfig(strategy=Strategy.COMBINED, imputation=Imputation.NONE, given_normalized=False)
    inf = infer_author(AuthorRecord('x', 'Zzyzx', 'Washington'), tables, cfg)
    family_dist, _ = lookup('Washington', tables.family)
    assert inf.distribution == family_dist
    assert inf.provenance.family_found and not inf.provenance.given_found


def test_missing_only_without_imputation(tables):
    author = AuthorRecord('x', 'Zzyzx', 'Qwxyz')
    cfg = InferenceConfig(strategy=Strategy.COMBINED, imputation=Imputation.NONE)
    assert infer_author(author, tables, cfg).distribution is None

    cfg = InferenceConfig(strategy=Strategy.COMBINED, imputation=Imputation.TABLE_AGGREGATE)
    inf = infer_author(author, tables, cfg)
    assert inf.distribution is not None
    assert inf.provenance.imputed_family and inf.provenance.imputed_given


# === AGGREGATION ===

def test_fractional_aggregate_identity_and_symmetry():
    d = CategoryDistribution.from_array([0.1, 0.2, 0.3, 0.4])
    assert fractional_aggregate([AuthorInference('a', d)]).probs == pytest.approx(d.probs)
    pair = [AuthorInference('a', CategoryDistribution.from_array([1, 0, 0, 0])),
            AuthorInference('b', CategoryDistribution.from_array([0, 1, 0, 0]))]
    assert fractional_aggregate(pair).probs == pytest.approx((0.5, 0.5, 0, 0))


def test_fractional_aggregate_all_missing():
    with pytest.raises(EmptyAggregateError):
        fractional_aggregate([AuthorInference('a', None)])


def test_census_weighted_corpus_recovers_table_aggregate(family_table):
    rng = np.random.default_rng(3)
    names = list(family_table.names)
    p = family_table.counts / family_table.counts.sum()
    authors = [AuthorRecord(f'a{i}', None, names[j]) for i, j in enumerate(rng.choice(len(names), 20000, p=p))]
    agg = compute_dataset_aggregate(authors, TableSet.build(family=family_table))
    np.testing.assert_allclose(agg.as_array(), family_table.aggregate.as_array(), atol=0.01)


def test_dataset_aggregate_imputation_preserves_aggregate():
    tables, authors = synthetic_population(11, {'Black': (0.6, 0.95), 'White': (0.6, 0.95)},
                                           total_authors=1000, unknown_share=0.2)
    known = InferenceConfig(imputation=Imputation.NONE)
    imputed = InferenceConfig(imputation=Imputation.DATASET_AGGREGATE)
    _, known_summary = infer_corpus(authors, tables, known)
    _, imputed_summary = infer_corpus(authors, tables, imputed)

    assert known_summary['missing'] > 100
    assert imputed_summary['missing'] == 0
    for code, value in known_summary['aggregate'].items():
        assert imputed_summary['aggregate'][code] == pytest.approx(value, abs=1e-9)


def test_infer_corpus_is_sorted_and_deterministic(tables, example_authors):
    cfg = InferenceConfig(strategy=Strategy.COMBINED, threshold=0.8)
    first, summary = infer_corpus(list(reversed(example_authors)), tables, cfg)
    second, _ = infer_corpus(example_authors, tables, cfg, threads=4)
    assert [inf.id for inf in first] == sorted(a.id for a in example_authors)
    assert first == second
    assert summary['authors'] == len(example_authors)
    assert summary['weighting'] == 'STDEV^2'


def test_infer_corpus_rejects_empty(tables):
    with pytest.raises(ConfigError):
        infer_corpus([], tables, InferenceConfig())


def test_inferences_frame_columns(tables, example_authors):
    inferences, _ = infer_corpus(example_authors, tables, InferenceConfig(threshold=0.9))
    df = inferences_to_frame(inferences)
    assert list(df.columns[:6]) == ['id', 'Asian', 'Black', 'Hispanic', 'White', 'assignment']
    assert df.loc[df['id'] == 'a1', 'assignment'].item() == 'Hispanic'


# === TWO-STEP ===

def _two_step_tables():
    family = _table(TableKind.FAMILY, [
        ('HIGH', 100, [0.95, 0.05, 0, 0]),
        ('MID', 100, [0.5, 0.5, 0, 0]),
        ('LOW', 100, [0.0, 1.0, 0, 0]),
    ])
    given = _table(TableKind.GIVEN, [
        ('GA', 100, [0.9, 0.1, 0, 0]),
        ('GB', 50, [0.9, 0.1, 0, 0]),
        ('GC', 100, [0.2, 0.8, 0, 0]),
    ])
    return TableSet(family=family, given=given, given_expanded=given)


def test_two_step_empty_first_step(family_table, given_table):
    tables = TableSet.build(family=family_table, given=given_table)
    authors = [AuthorRecord('a', 'Juan', 'Lee')]
    result = two_step_retrieve(authors, tables, 'Asian', 0.9)
    assert result.ids == set()
    assert result.n_first == 0


def test_two_step_full_overlap():
    tables = _two_step_tables()
    authors = [AuthorRecord('1', 'GA', 'HIGH'), AuthorRecord('2', 'GC', 'MID')]
    result = two_step_retrieve(authors, tables, 'Asian', 0.9)
    assert result.n_first == 1
    assert result.ids == {'1'}


def test_two_step_disjoint_steps():
    tables = _two_step_tables()
    authors = [AuthorRecord('1', 'GC', 'HIGH'), AuthorRecord('2', 'GA', 'MID')]
    result = two_step_retrieve(authors, tables, 'Asian', 0.9)
    assert result.ids == {'1', '2'}
    assert result.from_second == {'2'}


def test_two_step_tie_break_prefers_larger_count_then_id():
    tables = _two_step_tables()
    authors = [
        AuthorRecord('1', 'GC', 'HIGH'),
        AuthorRecord('3', 'GB', 'MID'),
        AuthorRecord('2', 'GA', 'LOW'),
        AuthorRecord('0', 'GA', 'MID'),
    ]
    result = two_step_retrieve(authors, tables, 'Asian', 0.9)
    assert result.from_second == {'0'}
    assert result.ids == {'1', '0'}


def test_two_step_second_step_threshold_variant():
    tables = _two_step_tables()
    authors = [AuthorRecord('1', 'GA', 'HIGH'), AuthorRecord('2', 'GC', 'LOW'), AuthorRecord('3', 'GC', 'MID')]
    plain = two_step_retrieve(authors, tables, 'Black', 0.95)
    assert plain.n_first == 1
    assert plain.second_below_threshold == 1

    strict = two_step_retrieve(authors, tables, 'Black', 0.95,
                               two_step=TwoStepConfig(second_step_threshold=True))
    assert strict.from_second == set()
    assert strict.ids == {'2'}


def test_two_step_given_first_variant():
    tables = _two_step_tables()
    authors = [AuthorRecord('1', 'GA', 'LOW'), AuthorRecord('2', 'GC', 'HIGH')]
    result = two_step_retrieve(authors, tables, 'Asian', 0.9, two_step=TwoStepConfig(first=NameSide.GIVEN))
    assert result.from_first == {'1'}
    assert result.from_second == {'2'}


def test_two_step_size_bounds_over_random_corpora():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        family = _table(TableKind.FAMILY, [(f'F{chr(65 + i)}', int(rng.integers(1, 100)), rng.dirichlet(np.ones(4) * 0.3))
                                           for i in range(15)])
        given = _table(TableKind.GIVEN, [(f'G{chr(65 + i)}', int(rng.integers(1, 100)), rng.dirichlet(np.ones(4) * 0.3))
                                         for i in range(15)])
        tables = TableSet(family=family, given=given, given_expanded=given)
        authors = [AuthorRecord(f'{i:03d}', f'G{chr(65 + rng.integers(0, 16))}', f'F{chr(65 + rng.integers(0, 16))}')
                   for i in range(60)]
        for category in ('Asian', 'Black', 'Hispanic', 'White'):
            result = two_step_retrieve(authors, tables, category, 0.7)
            assert result.n_first <= len(result.ids) <= 2 * result.n_first


def test_two_step_corpus_assignment(tables, example_authors):
    cfg = InferenceConfig(strategy=Strategy.TWO_STEP, threshold=0.9, given_normalized=False)
    inferences, summary = infer_corpus(example_authors, tables, cfg)
    by_id = {inf.id: inf for inf in inferences}
    assert by_id['a1'].assignment == 'Hispanic'
    assert ('Hispanic', 'FAMILY') in by_id['a1'].retrieved
    assert summary['two_step']['Hispanic']['n_first_step'] == 2


def test_two_step_assignment_matches_reported_distribution(tables):
    authors = [
        AuthorRecord('b1', 'Juan', 'Lee'),
        AuthorRecord('b2', 'Juan', 'Xqzwv'),
        AuthorRecord('b3', 'Andy', 'Rodriguez'),
    ]
    cfg = InferenceConfig(strategy=Strategy.TWO_STEP, threshold=0.9, given_normalized=False)
    inferences, _ = infer_corpus(authors, tables, cfg)
    by_id = {inf.id: inf for inf in inferences}

    # b1 comes in through its given name, so Juan's distribution is reported
    assert by_id['b1'].retrieved == (('Hispanic', 'GIVEN'),)
    assert by_id['b1'].assignment == 'Hispanic'
    assert by_id['b1'].distribution['Hispanic'] == pytest.approx(93.4 / 99.9)
    assert by_id['b3'].assignment == 'Hispanic'
    assert by_id['b3'].distribution['Hispanic'] == pytest.approx(0.941)

    for inf in inferences:
        if inf.assignment is not None:
            assert inf.distribution is not None
            assert inf.distribution[inf.assignment] >= 0.9
            assert inf.distribution.argmax() == inf.assignment


def test_two_step_second_step_pick_below_threshold_stays_unassigned(tables):
    authors = [AuthorRecord('c1', 'Doris', 'Rodriguez'), AuthorRecord('c2', 'Andy', 'Lee')]
    cfg = InferenceConfig(strategy=Strategy.TWO_STEP, threshold=0.9, given_normalized=False)
    inferences, summary = infer_corpus(authors, tables, cfg)
    by_id = {inf.id: inf for inf in inferences}

    assert by_id['c1'].assignment == 'Hispanic'
    assert by_id['c2'].retrieved == (('Hispanic', 'GIVEN'),)
    assert by_id['c2'].assignment is None
    assert by_id['c2'].distribution['Asian'] == pytest.approx(0.388)
    assert summary['two_step']['Hispanic']['second_step_below_threshold'] == 1
    assert summary['assigned']['Hispanic'] == 1


# === CORPUS LOADING ===

def test_load_authors_reports_bad_rows():
    text = io.StringIO('id,given,family\n1,Juan,Rodriguez\n,Doris,Lee\n1,Andy,Lee\n2,!!,??\n\n3,,Washington\n')
    authors, errors = load_authors(text)
    assert [a.id for a in authors] == ['1', '3']
    assert [e['message'] for e in errors] == ['missing id', 'duplicate id', 'no usable given or family name']
    assert [e['line'] for e in errors] == [3, 4, 5]
    assert authors[1].given is None


def test_load_authors_column_mapping():
    text = io.StringIO('author;first;last\nx;Juan;Rodriguez\n')
    authors, _ = load_authors(text, {'id': 'author', 'given': 'first', 'family': 'last'}, delimiter=';')
    assert authors == [AuthorRecord('x', 'Juan', 'Rodriguez')]


def test_load_authors_missing_column():
    with pytest.raises(SchemaError):
        load_authors(io.StringIO('id,given\n1,Juan\n'))


def test_collapse_to_names():
    authors = [AuthorRecord('1', 'Juan', 'Rodriguez'), AuthorRecord('2', 'JUAN', 'rodriguez'),
               AuthorRecord('3', 'Doris', 'Lee')]
    names = collapse_to_names(authors)
    assert [a.id for a in names] == ['DORIS|LEE', 'JUAN|RODRIGUEZ']


def test_weight_config_flows_into_combined(tables):
    author = AuthorRecord('x', 'Andy', 'Rodriguez')
    low = InferenceConfig(strategy=Strategy.COMBINED, weight_cfg=WeightConfig(exponent=1), given_normalized=False)
    high = InferenceConfig(strategy=Strategy.COMBINED, weight_cfg=WeightConfig(exponent=8), given_normalized=False)
    assert infer_author(author, tables, high).distribution['Hispanic'] > \
        infer_author(author, tables, low).distribution['Hispanic']
