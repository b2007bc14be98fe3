"""
Run configuration: a YAML file deserialised into a RunConfig tree.
Precedence is built-in defaults < YAML file < RACEINFER_* environment < command-line flags.
"""

import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import yaml

from bias_audit import default_thresholds, validate_thresholds
from inference_engine import ConfigError, Imputation, InferenceConfig, NameSide, Strategy, TwoStepConfig
from reference_ingest import DEFAULT_SCHEMAS, ReferenceSchema, TableKind
from simplex_core import WeightConfig, WeightScheme

logger = logging.getLogger(__name__)

ENV_PREFIX = 'RACEINFER_'
UNITS = ('authors', 'names')
TABLE_FORMATS = ('raw', 'canonical')
ALL_MODELS = ('A', 'B', 'C', 'D', 'E', 'F', 'G', 'H')


@dataclass(frozen=True)
class SchemaConfig:
    """
    Where one reference table comes from and how its columns map.

    Column fields left as None fall back to the built-in layout for the
    table kind. An empty ``other_names_label`` disables the other-names row.
    """

    path: Optional[str] = None
    format: str = 'raw'
    name_column: Optional[str] = None
    count_column: Optional[str] = None
    category_columns: Optional[Dict[str, str]] = None
    suppression_marker: str = '(S)'
    delimiter: str = ','
    encoding: str = 'utf-8-sig'
    other_names_label: Optional[str] = None

    def __post_init__(self):
        if self.format not in TABLE_FORMATS:
            raise ConfigError(f"Table format must be one of {TABLE_FORMATS} (got {self.format!r})")
        if not self.delimiter:
            raise ConfigError("Table delimiter must not be empty")

    def to_schema(self, kind: TableKind) -> ReferenceSchema:
        base = DEFAULT_SCHEMAS[TableKind(kind)]
        if self.other_names_label is None:
            other = base.other_names_label
        else:
            other = self.other_names_label or None
        return ReferenceSchema(
            name_column=self.name_column or base.name_column,
            count_column=self.count_column or base.count_column,
            category_columns=dict(self.category_columns or base.category_columns),
            suppression_marker=self.suppression_marker,
            delimiter=self.delimiter,
            encoding=self.encoding,
            other_names_label=other,
        )


@dataclass(frozen=True)
class AuthorsConfig:
    path: Optional[str] = None
    columns: Dict[str, str] = field(default_factory=lambda: {'id': 'id', 'given': 'given', 'family': 'family'})
    delimiter: str = ','


@dataclass(frozen=True)
class SweepConfig:
    """Threshold grid and model selection for sweep and snapshot."""

    thresholds: Optional[List[float]] = None
    models: List[str] = field(default_factory=lambda: list(ALL_MODELS[1:]))
    snapshot_threshold: float = 0.9
    snapshot_models: List[str] = field(default_factory=lambda: list(ALL_MODELS))
    imputation: Imputation = Imputation.NONE

    def __post_init__(self):
        object.__setattr__(self, 'imputation', _enum(Imputation, self.imputation, 'sweep.imputation'))
        if self.thresholds is not None:
            object.__setattr__(self, 'thresholds', validate_thresholds(self.thresholds))
        validate_thresholds([self.snapshot_threshold])
        for key in ('models', 'snapshot_models'):
            labels = [str(m).upper() for m in getattr(self, key)]
            unknown = [m for m in labels if m not in ALL_MODELS]
            if unknown or not labels:
                raise ConfigError(f"sweep.{key} must be a non-empty subset of {ALL_MODELS} (got {labels})")
            object.__setattr__(self, key, labels)

    def threshold_grid(self) -> List[float]:
        return list(self.thresholds) if self.thresholds is not None else default_thresholds()


@dataclass(frozen=True)
class SimulationConfig:
    """
    Dirichlet simulation parameters.

    ``weights`` lists extra weight configurations to grid; empty means the
    run's own weight configuration only.
    """

    k: int = 500
    alpha: Union[float, List[float]] = 1.0
    weights: List[WeightConfig] = field(default_factory=list)

    def __post_init__(self):
        if int(self.k) < 1:
            raise ConfigError(f"simulation.k must be at least 1 (got {self.k})")
        object.__setattr__(self, 'k', int(self.k))
        alphas = self.alpha if isinstance(self.alpha, (list, tuple)) else [self.alpha]
        if not alphas or any(not (float(a) > 0 and math.isfinite(float(a))) for a in alphas):
            raise ConfigError(f"simulation.alpha must be positive (got {self.alpha})")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: str = 'out'
    threads: int = 1
    unit: str = 'authors'
    excel: bool = False
    family: SchemaConfig = field(default_factory=SchemaConfig)
    given: SchemaConfig = field(default_factory=SchemaConfig)
    authors: AuthorsConfig = field(default_factory=AuthorsConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)

    def __post_init__(self):
        if int(self.threads) < 1:
            raise ConfigError(f"threads must be at least 1 (got {self.threads})")
        if self.unit not in UNITS:
            raise ConfigError(f"unit must be one of {UNITS} (got {self.unit!r})")

    @property
    def weight(self) -> WeightConfig:
        return self.inference.weight_cfg

    def weight_configs(self) -> List[WeightConfig]:
        return list(self.simulation.weights) or [self.weight]

    def to_dict(self) -> Dict[str, Any]:
        """Plain-data echo; from_dict of the result rebuilds an equal config."""
        inference = self.inference
        return {
            'seed': self.seed,
            'out_dir': self.out_dir,
            'threads': self.threads,
            'unit': self.unit,
            'excel': self.excel,
            'tables': {
                'family': asdict(self.family),
                'given': asdict(self.given),
            },
            'authors': asdict(self.authors),
            'inference': {
                'strategy': inference.strategy.value,
                'threshold': inference.threshold,
                'imputation': inference.imputation.value,
                'given_normalized': inference.given_normalized,
                'two_step': {
                    'first': inference.two_step.first.value,
                    'second_step_threshold': inference.two_step.second_step_threshold,
                },
            },
            'weight': _weight_to_dict(self.weight),
            'sweep': {
                'thresholds': self.sweep.thresholds,
                'models': list(self.sweep.models),
                'snapshot_threshold': self.sweep.snapshot_threshold,
                'snapshot_models': list(self.sweep.snapshot_models),
                'imputation': self.sweep.imputation.value,
            },
            'simulation': {
                'k': self.simulation.k,
                'alpha': self.simulation.alpha,
                'weights': [_weight_to_dict(w) for w in self.simulation.weights],
            },
        }

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> 'RunConfig':
        """
        Build a RunConfig from plain data (a parsed YAML document).

        Raises:
            ConfigError: On unknown keys or invalid values
        """
        data = dict(data or {})
        _check_keys(data, {'seed', 'out_dir', 'threads', 'unit', 'excel', 'tables', 'authors',
                           'inference', 'weight', 'sweep', 'simulation'}, 'config')
        try:
            tables = dict(data.get('tables') or {})
            _check_keys(tables, {'family', 'given'}, 'tables')
            weight_cfg = _weight_from_dict(data.get('weight') or {}, 'weight')
            return cls(
                seed=int(data.get('seed', 0)),
                out_dir=str(data.get('out_dir', 'out')),
                threads=int(data.get('threads', 1)),
                unit=str(data.get('unit', 'authors')),
                excel=_parse_bool(data.get('excel', False), 'excel'),
                family=_section(SchemaConfig, tables.get('family'), 'tables.family'),
                given=_section(SchemaConfig, tables.get('given'), 'tables.given'),
                authors=_section(AuthorsConfig, data.get('authors'), 'authors'),
                inference=_inference_from_dict(data.get('inference') or {}, weight_cfg),
                sweep=_section(SweepConfig, data.get('sweep'), 'sweep'),
                simulation=_simulation_from_dict(data.get('simulation') or {}),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as err:
            raise ConfigError(str(err)) from err


def _check_keys(data: Mapping[str, Any], allowed: set, where: str) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"Unknown key(s) in {where}: {', '.join(unknown)}")


def _enum(enum_cls, value, where: str):
    try:
        return enum_cls(str(value.value if hasattr(value, 'value') else value).upper())
    except ValueError:
        choices = ', '.join(e.value for e in enum_cls)
        raise ConfigError(f"{where} must be one of {choices} (got {value!r})") from None


def _section(cls, data: Optional[Mapping[str, Any]], where: str):
    data = dict(data or {})
    _check_keys(data, {f.name for f in fields(cls)}, where)
    return cls(**data)


def _weight_to_dict(cfg: WeightConfig) -> Dict[str, Any]:
    return {
        'scheme': cfg.scheme.value,
        'exponent': cfg.exponent,
        'tie_fallback': cfg.tie_fallback,
        'log_base': cfg.log_base,
        'raw_entropy': cfg.raw_entropy,
    }


def _weight_from_dict(data: Mapping[str, Any], where: str) -> WeightConfig:
    data = dict(data)
    _check_keys(data, {f.name for f in fields(WeightConfig)}, where)
    if 'scheme' in data:
        data['scheme'] = _enum(WeightScheme, data['scheme'], f'{where}.scheme')
    if str(data.get('log_base', '')).lower() == 'e':
        data['log_base'] = math.e
    for key in ('exponent', 'tie_fallback', 'log_base'):
        if key in data:
            data[key] = float(data[key])
    try:
        return WeightConfig(**data)
    except ValueError as err:
        raise ConfigError(f"{where}: {err}") from err


def _inference_from_dict(data: Mapping[str, Any], weight_cfg: WeightConfig) -> InferenceConfig:
    data = dict(data)
    _check_keys(data, {'strategy', 'threshold', 'imputation', 'given_normalized', 'two_step'}, 'inference')
    two_step = dict(data.get('two_step') or {})
    _check_keys(two_step, {'first', 'second_step_threshold'}, 'inference.two_step')
    return InferenceConfig(
        strategy=_enum(Strategy, data.get('strategy', Strategy.FAMILY_ONLY), 'inference.strategy'),
        weight_cfg=weight_cfg,
        threshold=parse_threshold(data.get('threshold')),
        imputation=_enum(Imputation, data.get('imputation', Imputation.DATASET_AGGREGATE), 'inference.imputation'),
        given_normalized=_parse_bool(data.get('given_normalized', True), 'inference.given_normalized'),
        two_step=TwoStepConfig(
            first=_enum(NameSide, two_step.get('first', NameSide.FAMILY), 'inference.two_step.first'),
            second_step_threshold=_parse_bool(two_step.get('second_step_threshold', False),
                                              'inference.two_step.second_step_threshold'),
        ),
    )


def _simulation_from_dict(data: Mapping[str, Any]) -> SimulationConfig:
    data = dict(data)
    _check_keys(data, {'k', 'alpha', 'weights'}, 'simulation')
    weights = [_weight_from_dict(w or {}, f'simulation.weights[{i}]')
               for i, w in enumerate(data.get('weights') or [])]
    alpha = data.get('alpha', 1.0)
    alpha = [float(a) for a in alpha] if isinstance(alpha, (list, tuple)) else float(alpha)
    return SimulationConfig(k=int(data.get('k', 500)), alpha=alpha, weights=weights)


def parse_threshold(value: Any) -> Optional[float]:
    """None, '', 'none' and 'fractional' mean no threshold."""
    if value is None:
        return None
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ('', 'none', 'null', 'fractional'):
            return None
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"Threshold must be a number or 'none' (got {value!r})") from None
    return float(value)


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Read a YAML run config; no path gives the built-in defaults.

    Raises:
        ConfigError: If the file cannot be parsed or holds invalid values
        OSError: If the file cannot be read
    """
    if path is None:
        return RunConfig()
    text = Path(path).read_text(encoding='utf-8')
    try:
        parsed = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"Failed to parse YAML config at {path}: {err}") from err
    if parsed is not None and not isinstance(parsed, dict):
        raise ConfigError(f"Config root at {path} must be a mapping")
    logger.info("Loaded config from %s", path)
    return RunConfig.from_dict(parsed)


def apply_overrides(cfg: RunConfig, **overrides: Any) -> RunConfig:
    """
    Apply flat overrides; None values are ignored.

    Recognised keys: seed, out_dir, threads, unit, excel, family, given,
    authors (input paths), strategy, threshold, imputation, given_normalized,
    k, alpha. ``threshold`` accepts the string 'none' to clear it.
    """
    overrides = {key: value for key, value in overrides.items() if value is not None}
    if not overrides:
        return cfg

    top = {key: overrides.pop(key) for key in ('seed', 'out_dir', 'threads', 'unit', 'excel') if key in overrides}
    for key, cast in (('seed', int), ('threads', int), ('out_dir', str), ('unit', str)):
        if key in top:
            try:
                top[key] = cast(top[key])
            except ValueError:
                raise ConfigError(f"{key} has an invalid value: {top[key]!r}") from None

    family = cfg.family
    given = cfg.given
    authors = cfg.authors
    if 'family' in overrides:
        family = replace(family, path=str(overrides.pop('family')))
    if 'given' in overrides:
        given = replace(given, path=str(overrides.pop('given')))
    if 'authors' in overrides:
        authors = replace(authors, path=str(overrides.pop('authors')))

    inference = cfg.inference
    changes = {}
    if 'strategy' in overrides:
        changes['strategy'] = _enum(Strategy, overrides.pop('strategy'), 'strategy')
    if 'threshold' in overrides:
        changes['threshold'] = parse_threshold(overrides.pop('threshold'))
    if 'imputation' in overrides:
        changes['imputation'] = _enum(Imputation, overrides.pop('imputation'), 'imputation')
    if 'given_normalized' in overrides:
        changes['given_normalized'] = _parse_bool(overrides.pop('given_normalized'), 'given_normalized')
    if changes:
        inference = replace(inference, **changes)

    simulation = cfg.simulation
    sim_changes = {}
    if 'k' in overrides:
        sim_changes['k'] = int(overrides.pop('k'))
    if 'alpha' in overrides:
        sim_changes['alpha'] = float(overrides.pop('alpha'))
    if sim_changes:
        simulation = replace(simulation, **sim_changes)

    if overrides:
        raise ConfigError(f"Unknown override(s): {', '.join(sorted(overrides))}")

    return replace(cfg, family=family, given=given, authors=authors, inference=inference,
                   simulation=simulation, **top)


ENV_KEYS = ('seed', 'out_dir', 'threads', 'unit', 'excel', 'family', 'given', 'authors',
            'strategy', 'threshold', 'imputation', 'given_normalized', 'k', 'alpha')


def apply_env(cfg: RunConfig, environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Apply RACEINFER_<KEY> variables (e.g. RACEINFER_THRESHOLD=0.9)."""
    environ = os.environ if environ is None else environ
    found = {}
    for key in ENV_KEYS:
        name = ENV_PREFIX + key.upper()
        if name in environ:
            found[key] = environ[name]
    if 'excel' in found:
        found['excel'] = _parse_bool(found['excel'], ENV_PREFIX + 'EXCEL')
    if found:
        logger.debug("Environment overrides: %s", ', '.join(sorted(found)))
    return apply_overrides(cfg, **found)


def _parse_bool(value: Any, where: str) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ('1', 'true', 'yes', 'on'):
        return True
    if text in ('0', 'false', 'no', 'off'):
        return False
    raise ConfigError(f"{where} must be a boolean (got {value!r})")


def model_labels(labels: Sequence[str]) -> List[str]:
    return [label for label in ALL_MODELS if label in set(labels)]
