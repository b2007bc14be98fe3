"""End-to-end tests of the command-line front end."""

import json

import pandas as pd
import pytest

from cli import main
from conftest import (
    CENSUS_AGGREGATE_ROWS,
    CENSUS_HEADER,
    FAMILY_ROWS,
    GIVEN_ROWS,
    MORTGAGE_AGGREGATE_ROWS,
    OTHER_NAMES_ROW,
    write_authors,
    write_census,
    write_mortgage,
)

AUTHORS = [
    ('a1', 'Juan', 'Rodriguez'),
    ('a2', 'Doris', 'Lee'),
    ('a3', 'Andy', 'Washington'),
    ('a4', 'Andy', 'Rodriguez'),
    ('a5', 'Juan', 'Lee'),
    ('a6', 'Zyx', 'Qwvb'),
]


@pytest.fixture
def inputs(tmp_path):
    return {
        'family': write_census(tmp_path / 'census.csv', FAMILY_ROWS),
        'given': write_mortgage(tmp_path / 'mortgage.csv', GIVEN_ROWS),
        'authors': write_authors(tmp_path / 'authors.csv', AUTHORS),
    }


def _args(command, tmp_path, inputs, *extra, out='out'):
    return [command, '--family', str(inputs['family']), '--given', str(inputs['given']),
            '--authors', str(inputs['authors']), '--out-dir', str(tmp_path / out), *extra]


def _manifest(path):
    return json.loads((path / 'run_manifest.json').read_text(encoding='utf-8'))


# === INGEST ===

def test_ingest_writes_tables_and_expansion(tmp_path):
    family = write_census(tmp_path / 'census.csv', CENSUS_AGGREGATE_ROWS, other_names=OTHER_NAMES_ROW)
    given = write_mortgage(tmp_path / 'mortgage.csv', MORTGAGE_AGGREGATE_ROWS)
    out = tmp_path / 'out'

    code = main(['ingest', '--family', str(family), '--given', str(given), '--out-dir', str(out)], environ={})
    assert code == 0

    family_df = pd.read_csv(out / 'family_table.csv', keep_default_na=False)
    assert family_df['normalized_name'].iloc[-1] == '*ALL OTHER NAMES*'
    report = json.loads((out / 'ingest_report.json').read_text(encoding='utf-8'))
    assert report['family']['aggregate']['Black'] == pytest.approx(0.124, abs=1e-9)
    assert report['expansion_factors']['Black'] == pytest.approx(0.124 / 0.042, abs=1e-9)

    expanded = pd.read_csv(out / 'given_expanded_table.csv', keep_default_na=False)
    counts = expanded.set_index('normalized_name')['count']
    share = counts / counts.sum()
    assert share['BBB'] == pytest.approx(0.124, abs=1e-9)

    manifest = _manifest(out)
    assert manifest['command'] == 'ingest'
    assert set(manifest['outputs']) == {'family_table.csv', 'given_table.csv',
                                        'given_expanded_table.csv', 'ingest_report.json'}


def test_ingest_merges_case_duplicates(tmp_path):
    family = tmp_path / 'census.csv'
    family.write_text('\n'.join([
        CENSUS_HEADER,
        'Lee,1,100,0,0,40,20,40,0,0,0',
        'LEE,2,100,0,0,20,40,40,0,0,0',
    ]) + '\n', encoding='utf-8')
    out = tmp_path / 'out'
    assert main(['ingest', '--family', str(family), '--out-dir', str(out)], environ={}) == 0

    table = pd.read_csv(out / 'family_table.csv', keep_default_na=False)
    assert list(table['normalized_name']) == ['LEE']
    assert table['count'].iloc[0] == 200
    assert table['White'].iloc[0] == pytest.approx(0.3)
    report = json.loads((out / 'ingest_report.json').read_text(encoding='utf-8'))
    assert report['family']['duplicates_merged'] == 1


def test_ingest_rejected_rows_exit_partial(tmp_path):
    family = tmp_path / 'census.csv'
    family.write_text('\n'.join([
        CENSUS_HEADER,
        'SMITH,1,100,0,0,70,20,5,0,0,5',
        'JONES,2,abc,0,0,70,20,5,0,0,5',
    ]) + '\n', encoding='utf-8')
    out = tmp_path / 'out'
    assert main(['ingest', '--family', str(family), '--out-dir', str(out)], environ={}) == 1
    assert _manifest(out)['exit_code'] == 1


def test_header_only_table_is_fatal(tmp_path, capsys):
    family = tmp_path / 'census.csv'
    family.write_text(CENSUS_HEADER + '\n', encoding='utf-8')
    code = main(['ingest', '--family', str(family), '--out-dir', str(tmp_path / 'out')], environ={})
    assert code == 2
    assert 'Error' in capsys.readouterr().err


def test_no_tables_is_fatal(tmp_path):
    assert main(['ingest', '--out-dir', str(tmp_path / 'out')], environ={}) == 2


def test_missing_file_is_fatal(tmp_path):
    code = main(['ingest', '--family', str(tmp_path / 'absent.csv'), '--out-dir', str(tmp_path / 'out')],
                environ={})
    assert code == 2


# === INFER ===

def test_infer_combined(tmp_path, inputs):
    code = main(_args('infer', tmp_path, inputs, '--strategy', 'COMBINED', '--threshold', '0.9',
                      '--imputation', 'NONE'), environ={})
    assert code == 0

    authors = pd.read_csv(tmp_path / 'out' / 'authors.csv').set_index('id')
    assert list(authors.index) == ['a1', 'a2', 'a3', 'a4', 'a5', 'a6']
    assert authors.loc['a1', 'assignment'] == 'Hispanic'
    assert authors.loc['a1', 'Hispanic'] > 0.9
    assert pd.isna(authors.loc['a6', 'Asian'])

    summary = json.loads((tmp_path / 'out' / 'summary.json').read_text(encoding='utf-8'))
    assert summary['authors'] == 6
    assert summary['missing'] == 1
    assert summary['weighting'] == 'STDEV^2'
    assert summary['recommendation']['verdict'] == 'BIASED'


def test_infer_env_and_flag_precedence(tmp_path, inputs):
    environ = {'RACEINFER_THRESHOLD': '0.5', 'RACEINFER_IMPUTATION': 'NONE'}
    main(_args('infer', tmp_path, inputs, '--threshold', 'none'), environ=environ)
    summary = json.loads((tmp_path / 'out' / 'summary.json').read_text(encoding='utf-8'))
    assert summary['threshold'] is None
    assert summary['imputation'] == 'NONE'


def test_infer_rejected_author_rows_exit_partial(tmp_path, inputs):
    write_authors(inputs['authors'], AUTHORS + [('a1', 'Juan', 'Lee'), ('', 'Doris', 'Lee')])
    assert main(_args('infer', tmp_path, inputs), environ={}) == 1
    summary = json.loads((tmp_path / 'out' / 'summary.json').read_text(encoding='utf-8'))
    assert [e['message'] for e in summary['row_errors']] == ['duplicate id', 'missing id']


def test_infer_names_unit(tmp_path, inputs):
    write_authors(inputs['authors'], AUTHORS + [('a7', 'JUAN', 'rodriguez')])
    assert main(_args('infer', tmp_path, inputs, '--unit', 'names'), environ={}) == 0
    authors = pd.read_csv(tmp_path / 'out' / 'authors.csv', keep_default_na=False)
    assert len(authors) == 6
    assert 'JUAN|RODRIGUEZ' in set(authors['id'])


def test_empty_corpus_is_fatal(tmp_path, inputs):
    inputs['authors'].write_text('id,given,family\n', encoding='utf-8')
    assert main(_args('infer', tmp_path, inputs), environ={}) == 2


def test_bad_config_value_is_fatal(tmp_path, inputs):
    assert main(_args('infer', tmp_path, inputs, '--threshold', '1.5'), environ={}) == 2
    assert main(_args('infer', tmp_path, inputs, '--strategy', 'GUESS'), environ={}) == 2


# === SIMULATE ===

def test_simulate_grid(tmp_path):
    out = tmp_path / 'out'
    assert main(['simulate', '--k', '50', '--seed', '3', '--out-dir', str(out)], environ={}) == 0
    grid = pd.read_csv(out / 'grid.csv')
    assert len(grid) == 2500
    assert grid['weight'].between(0, 1).all()
    assert _manifest(out)['seed'] == 3


def test_simulate_is_byte_identical_across_runs(tmp_path):
    for name in ('one', 'two'):
        main(['simulate', '--k', '20', '--seed', '5', '--out-dir', str(tmp_path / name)], environ={})
    assert (tmp_path / 'one' / 'grid.csv').read_bytes() == (tmp_path / 'two' / 'grid.csv').read_bytes()
    assert _manifest(tmp_path / 'one')['outputs'] == _manifest(tmp_path / 'two')['outputs']


# === SWEEP AND SNAPSHOT ===

def test_sweep_counts_are_monotone(tmp_path, inputs):
    assert main(_args('sweep', tmp_path, inputs), environ={}) == 0
    sweep = pd.read_csv(tmp_path / 'out' / 'sweep.csv')
    assert set(sweep['model']) == set('BCDEFGH')
    assert sweep['threshold'].nunique() == 51
    for _, group in sweep.groupby(['model', 'category']):
        retrieved = group.sort_values('threshold')['retrieved'].to_numpy()
        assert (retrieved[1:] <= retrieved[:-1]).all()


def test_sweep_reruns_are_byte_identical(tmp_path, inputs):
    main(_args('sweep', tmp_path, inputs, '--threads', '2', out='one'), environ={})
    main(_args('sweep', tmp_path, inputs, out='two'), environ={})
    assert (tmp_path / 'one' / 'sweep.csv').read_bytes() == (tmp_path / 'two' / 'sweep.csv').read_bytes()


def test_snapshot_with_excel(tmp_path, inputs):
    out = tmp_path / 'out'
    assert main(_args('snapshot', tmp_path, inputs, '--excel'), environ={}) == 0
    snapshot = pd.read_csv(out / 'snapshot.csv')
    assert list(snapshot['model'].unique()) == list('ABCDEFGH')
    status = snapshot.drop_duplicates('model').set_index('model')['status']
    assert status['A'] == 'present' and status['D'] == 'present'

    manifest = _manifest(out)
    assert 'snapshot.csv' in manifest['outputs']
    assert manifest['unhashed_outputs'] == ['audit.xlsx']
    assert (out / 'audit.xlsx').exists()
    assert 'advisories' in manifest
