"""
Command-line front end for reference ingestion, author inference and bias audits.
Every run is driven by a RunConfig and writes a run manifest next to its outputs.
"""

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from bias_audit import (
    model_catalogue,
    model_snapshot,
    simulate,
    snapshot_to_frame,
    sweep_to_frame,
    threshold_sweep,
)
from config import RunConfig, apply_env, apply_overrides, load_config, model_labels
from excel_exporter import create_audit_workbook
from flag_generator import generate_flags, get_flag_summary_text, get_recommendation
from inference_engine import (
    AuthorRecord,
    ConfigError,
    TableSet,
    collapse_to_names,
    infer_corpus,
    inferences_to_frame,
    load_authors,
)
from reference_ingest import (
    ReferenceTable,
    TableKind,
    compute_expansion_factors,
    ingest_reference,
    read_table_csv,
    write_table_csv,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_FATAL = 2

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

Outputs = Dict[str, Path]
CommandResult = Tuple[int, Outputs, Dict[str, Any]]


class _NumpyEncoder(json.JSONEncoder):
    def default(self, obj):
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, np.bool_):
            return bool(obj)
        return super().default(obj)


def write_json(data: Any, path: Path) -> Path:
    path.write_text(json.dumps(data, indent=2, cls=_NumpyEncoder) + '\n', encoding='utf-8')
    return path


def write_csv(df: pd.DataFrame, path: Path) -> Path:
    df.to_csv(path, index=False, lineterminator='\n')
    return path


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(cfg: RunConfig, command: str, outputs: Outputs, exit_code: int,
                   extra: Optional[Dict[str, Any]] = None) -> Path:
    """
    Record the config echo, seed and output hashes of a run.

    The Excel workbook is listed without a hash; its container embeds timestamps.
    """
    hashed = {}
    unhashed = []
    for name, path in sorted(outputs.items()):
        if path.suffix == '.xlsx':
            unhashed.append(name)
        else:
            hashed[name] = sha256_file(path)
    manifest = {
        'command': command,
        'seed': cfg.seed,
        'exit_code': exit_code,
        'config': cfg.to_dict(),
        'outputs': hashed,
        'unhashed_outputs': unhashed,
    }
    if extra:
        manifest.update(extra)
    return write_json(manifest, Path(cfg.out_dir) / 'run_manifest.json')


# ---------------------------------------------------------------------------
# Inputs
# ---------------------------------------------------------------------------

def _load_table(cfg: RunConfig, kind: TableKind) -> Tuple[Optional[ReferenceTable], Optional[Dict[str, Any]]]:
    section = cfg.family if kind is TableKind.FAMILY else cfg.given
    if not section.path:
        return None, None
    if section.format == 'canonical':
        table = read_table_csv(section.path, kind)
        logger.info("Loaded canonical %s table from %s (%d entries)", kind.value, section.path, len(table))
        return table, None
    table, report = ingest_reference(section.path, kind, section.to_schema(kind))
    return table, report


def load_tables(cfg: RunConfig) -> Tuple[TableSet, Dict[str, Any]]:
    """Load the configured reference tables; the given table is expanded onto the family aggregate."""
    family, family_report = _load_table(cfg, TableKind.FAMILY)
    given, given_report = _load_table(cfg, TableKind.GIVEN)
    if family is None and given is None:
        raise ConfigError("No reference tables configured (set tables.family.path and/or tables.given.path)")
    reports = {key: value for key, value in (('family', family_report), ('given', given_report)) if value}
    return TableSet.build(family=family, given=given), reports


def load_corpus(cfg: RunConfig) -> Tuple[List[AuthorRecord], List[Dict[str, Any]]]:
    """Load the author corpus, collapsed to distinct name pairs under unit 'names'."""
    if not cfg.authors.path:
        raise ConfigError("No author corpus configured (set authors.path)")
    authors, row_errors = load_authors(cfg.authors.path, cfg.authors.columns, cfg.authors.delimiter)
    if not authors:
        raise ConfigError(f"No authors to infer in {cfg.authors.path}")
    if cfg.unit == 'names':
        authors = collapse_to_names(authors)
        logger.info("Name-level unit: %d distinct name pair(s)", len(authors))
    return authors, row_errors


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _banner(title: str) -> None:
    print("=" * 60)
    print(title)
    print("=" * 60)


def _format_distribution(dist: Optional[Dict[str, float]]) -> str:
    if dist is None:
        return 'n/a'
    return ', '.join(f"{code} {value:.3f}" for code, value in dist.items())


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_ingest(cfg: RunConfig) -> CommandResult:
    """
    Ingest the configured reference files into canonical CSVs plus a JSON report.

    Writes family_table.csv / given_table.csv, given_expanded_table.csv when
    both tables are present, and ingest_report.json.

    Returns:
        Tuple of (exit code, outputs); exit code 1 when rows were rejected
    """
    out = _out_dir(cfg)
    tables, reports = load_tables(cfg)
    outputs: Outputs = {}

    _banner("REFERENCE INGEST")
    for kind, table in ((TableKind.FAMILY, tables.family), (TableKind.GIVEN, tables.given)):
        if table is None:
            continue
        name = f"{kind.value.lower()}_table.csv"
        write_table_csv(table, out / name)
        outputs[name] = out / name
        print(f"✅ {kind.value}: {len(table)} entries, aggregate {_format_distribution(table.aggregate.as_dict())}")

    report: Dict[str, Any] = dict(reports)
    if tables.given_expanded is not None:
        write_table_csv(tables.given_expanded, out / 'given_expanded_table.csv')
        outputs['given_expanded_table.csv'] = out / 'given_expanded_table.csv'
        factors = compute_expansion_factors(tables.given, tables.family.aggregate)
        report['expansion_factors'] = factors
        print(f"✅ GIVEN expanded onto FAMILY aggregate: "
              f"{', '.join(f'{code} x{value:.3f}' for code, value in factors.items())}")

    write_json(report, out / 'ingest_report.json')
    outputs['ingest_report.json'] = out / 'ingest_report.json'

    rejected = sum(len(r.get('row_errors', [])) + r.get('rows_unusable', 0) for r in reports.values())
    for key, r in reports.items():
        if r.get('duplicates_merged'):
            print(f"⚠️  {key}: {r['duplicates_merged']} duplicate name(s) merged")
    if rejected:
        print(f"⚠️  {rejected} row(s) rejected; see ingest_report.json")
    return (EXIT_PARTIAL if rejected else EXIT_OK), outputs, {}


def cmd_infer(cfg: RunConfig) -> CommandResult:
    """
    Infer per-author distributions under the configured model.

    Writes authors.csv and summary.json (counts, aggregate and advisories).
    """
    out = _out_dir(cfg)
    tables, _ = load_tables(cfg)
    authors, row_errors = load_corpus(cfg)

    inferences, summary = infer_corpus(authors, tables, cfg.inference, threads=cfg.threads)
    flags = generate_flags(cfg.inference)
    summary['unit'] = cfg.unit
    summary['row_errors'] = row_errors
    summary['advisories'] = flags
    summary['recommendation'] = get_recommendation(flags)

    outputs: Outputs = {
        'authors.csv': write_csv(inferences_to_frame(inferences), out / 'authors.csv'),
        'summary.json': write_json(summary, out / 'summary.json'),
    }

    _banner("AUTHOR INFERENCE")
    print(f"Strategy: {summary['strategy']}  Threshold: {summary['threshold'] or 'fractional'}  "
          f"Imputation: {summary['imputation']}")
    print(f"Authors: {summary['authors']}  Missing: {summary['missing']}  "
          f"Unassigned: {summary['unassigned']}")
    print(f"Aggregate: {_format_distribution(summary['aggregate'])}")
    print()
    print(get_flag_summary_text(flags))
    rec = summary['recommendation']
    print(f"{rec['emoji']} {rec['verdict']}: {rec['reasoning']}")

    return (EXIT_PARTIAL if row_errors else EXIT_OK), outputs, {}


def _catalogue(cfg: RunConfig, labels: Sequence[str]):
    models = model_catalogue(cfg.sweep.snapshot_threshold, cfg.weight, cfg.sweep.imputation,
                             cfg.inference.two_step)
    wanted = set(model_labels(labels))
    return [m for m in models if m.label in wanted]


def cmd_sweep(cfg: RunConfig) -> CommandResult:
    """Threshold sweep of the configured catalogue models; writes sweep.csv."""
    out = _out_dir(cfg)
    tables, _ = load_tables(cfg)
    authors, row_errors = load_corpus(cfg)

    models = _catalogue(cfg, cfg.sweep.models)
    rows = threshold_sweep(authors, tables, models, cfg.sweep.threshold_grid(), threads=cfg.threads)
    sweep_df = sweep_to_frame(rows)
    outputs: Outputs = {'sweep.csv': write_csv(sweep_df, out / 'sweep.csv')}
    flags = generate_flags(cfg.inference, rows)

    if cfg.excel:
        snapshot_models = _catalogue(cfg, cfg.sweep.snapshot_models)
        snapshot = model_snapshot(authors, tables, cfg.sweep.snapshot_threshold, snapshot_models, cfg.threads)
        workbook = create_audit_workbook(snapshot_to_frame(snapshot, snapshot_models), sweep_df, flags)
        (out / 'audit.xlsx').write_bytes(workbook)
        outputs['audit.xlsx'] = out / 'audit.xlsx'

    _banner("THRESHOLD SWEEP")
    print(f"Models: {', '.join(sorted(sweep_df['model'].unique()))}  "
          f"Thresholds: {sweep_df['threshold'].nunique()}  Rows: {len(sweep_df)}")
    print()
    print(get_flag_summary_text(flags))

    return (EXIT_PARTIAL if row_errors else EXIT_OK), outputs, {'advisories': flags}


def cmd_simulate(cfg: RunConfig) -> CommandResult:
    """Dirichlet weight grid; writes grid.csv with k² rows per weight configuration."""
    out = _out_dir(cfg)
    configs = cfg.weight_configs()
    grid = simulate(cfg.simulation.k, cfg.simulation.alpha, cfg.seed, configs)
    outputs: Outputs = {'grid.csv': write_csv(grid, out / 'grid.csv')}

    _banner("WEIGHT SIMULATION")
    print(f"Samples: {cfg.simulation.k} given x {cfg.simulation.k} family, seed {cfg.seed}")
    for weight_cfg in configs:
        label = weight_cfg.label
        cells = grid[(grid['scheme'] == label.split('^')[0]) & (grid['exponent'] == float(weight_cfg.exponent))]
        print(f"✅ {label}: {len(cells)} cells, mean given weight {cells['weight'].mean():.3f}")
    return EXIT_OK, outputs, {}


def cmd_snapshot(cfg: RunConfig) -> CommandResult:
    """Model comparison at one threshold; writes snapshot.csv."""
    out = _out_dir(cfg)
    tables, _ = load_tables(cfg)
    authors, row_errors = load_corpus(cfg)

    models = _catalogue(cfg, cfg.sweep.snapshot_models)
    snapshot = model_snapshot(authors, tables, cfg.sweep.snapshot_threshold, models, cfg.threads)
    snapshot_df = snapshot_to_frame(snapshot, models)
    outputs: Outputs = {'snapshot.csv': write_csv(snapshot_df, out / 'snapshot.csv')}
    flags = generate_flags(cfg.inference)

    if cfg.excel:
        (out / 'audit.xlsx').write_bytes(create_audit_workbook(snapshot_df, flags=flags))
        outputs['audit.xlsx'] = out / 'audit.xlsx'

    _banner(f"MODEL SNAPSHOT AT {cfg.sweep.snapshot_threshold:.0%}")
    for model in models:
        dist = snapshot[model.label]
        print(f"  {model.label} ({model.description}): "
              f"{_format_distribution(dist.as_dict() if dist is not None else None)}")

    return (EXIT_PARTIAL if row_errors else EXIT_OK), outputs, {'advisories': flags}


COMMANDS = {
    'ingest': cmd_ingest,
    'infer': cmd_infer,
    'sweep': cmd_sweep,
    'simulate': cmd_simulate,
    'snapshot': cmd_snapshot,
}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='YAML run config')
    common.add_argument('--seed', type=int, help='Seed for all randomness')
    common.add_argument('--out-dir', dest='out_dir', help='Output directory')
    common.add_argument('--threads', type=int, help='Worker threads')
    common.add_argument('--unit', choices=['authors', 'names'], help='Count authors or distinct name pairs')
    common.add_argument('--excel', action='store_true', default=None, help='Also write audit.xlsx')
    common.add_argument('--family', help='Family-name reference file')
    common.add_argument('--given', help='Given-name reference file')
    common.add_argument('--authors', help='Author corpus file')
    common.add_argument('--strategy', help='FAMILY_ONLY, GIVEN_ONLY, COMBINED or TWO_STEP')
    common.add_argument('--threshold', help="Assignment threshold in (0, 1] or 'none'")
    common.add_argument('--imputation', help='NONE, DATASET_AGGREGATE, TABLE_AGGREGATE or OTHER_NAMES')
    common.add_argument('--k', type=int, help='Simulated distributions per side')
    common.add_argument('--alpha', type=float, help='Dirichlet concentration')
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', '-v', action='store_true', help='Debug logging')
    verbosity.add_argument('--quiet', '-q', action='store_true', help='Warnings only')

    parser = argparse.ArgumentParser(prog='raceinfer', description='Name-based race inference and bias audit')
    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('ingest', parents=[common], help='Ingest reference tables')
    sub.add_parser('infer', parents=[common], help='Infer author distributions')
    sub.add_parser('sweep', parents=[common], help='Threshold sweep of the model catalogue')
    sub.add_parser('simulate', parents=[common], help='Simulated weight grid')
    sub.add_parser('snapshot', parents=[common], help='Model comparison at one threshold')
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def resolve_config(args: argparse.Namespace, environ=None) -> RunConfig:
    """Defaults < YAML < environment < flags."""
    cfg = load_config(args.config)
    cfg = apply_env(cfg, environ)
    return apply_overrides(
        cfg,
        seed=args.seed, out_dir=args.out_dir, threads=args.threads, unit=args.unit, excel=args.excel,
        family=args.family, given=args.given, authors=args.authors,
        strategy=args.strategy, threshold=args.threshold, imputation=args.imputation,
        k=args.k, alpha=args.alpha,
    )


def run(command: str, cfg: RunConfig) -> int:
    """Run one command and write its manifest; returns the exit code."""
    exit_code, outputs, extra = COMMANDS[command](cfg)
    write_manifest(cfg, command, outputs, exit_code, extra)
    return exit_code


def main(argv: Optional[Sequence[str]] = None, environ=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)

    try:
        cfg = resolve_config(args, environ)
        return run(args.command, cfg)
    except (ValueError, OSError) as err:
        # ConfigError, SchemaError, EmptyTableError, ExpansionError and EmptyAggregateError are ValueErrors
        logger.debug("Fatal error", exc_info=True)
        print(f"❌ Error: {err}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == '__main__':
    sys.exit(main())
