"""
Flag generation for inference configurations and audit results.
Generates RED/YELLOW/GREEN advisories based on recommended practice for
name-based race inference and provides an overall verdict.
"""

import math
from typing import Any, Dict, List, Optional, Sequence

from inference_engine import Imputation, InferenceConfig, Strategy

RATIO_RED_BELOW = 0.8
RATIO_BAND = 0.05


def generate_flags(cfg: InferenceConfig,
                   sweep_rows: Optional[Sequence[Any]] = None) -> Dict[str, List[Dict[str, Any]]]:
    """
    Generate RED/YELLOW/GREEN advisories for a model and, optionally, its sweep.

    Args:
        cfg: Inference configuration being used
        sweep_rows: Optional SweepRow list from bias_audit.threshold_sweep

    Returns:
        Dictionary with red_flags, yellow_flags, and green_signals lists
    """
    red_flags = []
    yellow_flags = []
    green_signals = []

    # === THRESHOLDING ===
    if cfg.threshold is not None:
        red_flags.append({
            'message': (f'Threshold assignment at {cfg.threshold:.0%} under-represents groups whose names '
                        f'are less distinctive (Black authors in particular); prefer fractional counting'),
            'metric': 'threshold',
            'value': cfg.threshold
        })
    elif cfg.strategy is Strategy.FAMILY_ONLY:
        green_signals.append({
            'message': 'Fractional counting on family names: each author counted as a distribution',
            'metric': 'strategy',
            'value': cfg.strategy.value
        })

    # === GIVEN NAMES ===
    if cfg.uses_given:
        if not cfg.given_normalized:
            red_flags.append({
                'message': ('Unnormalized mortgage given names over-represent White and Asian authors '
                            'and under-represent Black and Hispanic authors'),
                'metric': 'given_normalized',
                'value': False
            })
        else:
            yellow_flags.append({
                'message': ('Given names are used; expansion to census margins fixes the aggregate but not '
                            'per-name skew. Use only when your population resembles mortgage applicants'),
                'metric': 'given_normalized',
                'value': True
            })

    # === IMPUTATION ===
    if cfg.imputation is Imputation.DATASET_AGGREGATE:
        green_signals.append({
            'message': 'Missing names imputed with the dataset aggregate (preserves the aggregate)',
            'metric': 'imputation',
            'value': cfg.imputation.value
        })
    elif cfg.imputation in (Imputation.TABLE_AGGREGATE, Imputation.OTHER_NAMES):
        yellow_flags.append({
            'message': (f'{cfg.imputation.value} imputation skews missing authors toward the census '
                        f'population; valid only when the target population matches it'),
            'metric': 'imputation',
            'value': cfg.imputation.value
        })
    else:
        yellow_flags.append({
            'message': 'No imputation: authors with unknown names are dropped from aggregates',
            'metric': 'imputation',
            'value': cfg.imputation.value
        })

    # === SWEEP RESULTS ===
    if sweep_rows:
        worst = {}
        for row in sweep_rows:
            if not row.ratio_defined or math.isnan(row.ratio):
                continue
            key = (row.model, row.category)
            if key not in worst or abs(row.ratio - 1) > abs(worst[key].ratio - 1):
                worst[key] = row

        for (model, category), row in sorted(worst.items()):
            if row.ratio < RATIO_RED_BELOW:
                red_flags.append({
                    'message': (f'Model {model} under-represents {category} '
                                f'(ratio {row.ratio:.2f} at threshold {row.threshold:.2f})'),
                    'metric': 'representation_ratio',
                    'value': row.ratio
                })
            elif abs(row.ratio - 1) > RATIO_BAND:
                direction = 'under' if row.ratio < 1 else 'over'
                yellow_flags.append({
                    'message': (f'Model {model} {direction}-represents {category} '
                                f'(ratio {row.ratio:.2f} at threshold {row.threshold:.2f})'),
                    'metric': 'representation_ratio',
                    'value': row.ratio
                })

    return {
        'red_flags': red_flags,
        'yellow_flags': yellow_flags,
        'green_signals': green_signals
    }


def get_recommendation(flags: Dict[str, List[Dict[str, Any]]]) -> Dict[str, Any]:
    """
    Generate the overall verdict from flags.

    Returns:
        Dictionary with verdict, emoji, reasoning and flag counts
    """
    red_count = len(flags['red_flags'])
    yellow_count = len(flags['yellow_flags'])
    green_count = len(flags['green_signals'])

    if red_count == 0 and yellow_count == 0:
        verdict = 'RECOMMENDED'
        emoji = '✅'
        reasoning = "Configuration follows the recommended practice for aggregate analyses. "
    elif red_count == 0:
        verdict = 'ACCEPTABLE'
        emoji = '⚠️'
        reasoning = "Configuration is usable but has caveats for aggregate analyses. "
    else:
        verdict = 'BIASED'
        emoji = '❌'
        reasoning = f"Aggregates from this configuration are expected to be biased ({red_count} red flag(s)). "

    if green_count > 0:
        reasoning += f"Found {green_count} positive signal(s). "
    if yellow_count > 0:
        reasoning += f"Note {yellow_count} caution area(s). "

    return {
        'verdict': verdict,
        'emoji': emoji,
        'reasoning': reasoning.strip(),
        'red_count': red_count,
        'yellow_count': yellow_count,
        'green_count': green_count
    }


def get_flag_summary_text(flags: Dict[str, List[Dict[str, Any]]]) -> str:
    """
    Generate human-readable summary of flags.

    Args:
        flags: Flags dictionary

    Returns:
        Formatted text summary
    """
    summary = "FLAGS & SIGNALS SUMMARY\n" + "=" * 40 + "\n\n"

    sections = [
        ('🚨 RED FLAGS', '❌', flags['red_flags']),
        ('⚠️  YELLOW FLAGS', '⚠️ ', flags['yellow_flags']),
        ('✅ GREEN SIGNALS', '✅', flags['green_signals']),
    ]
    for title, marker, items in sections:
        if items:
            summary += f"{title} ({len(items)}):\n"
            for flag in items:
                summary += f"  {marker} {flag['message']}\n"
            summary += "\n"
        else:
            summary += f"{title} (0): None\n\n"

    return summary.rstrip() + "\n"


def flags_to_rows(flags: Dict[str, List[Dict[str, Any]]]) -> List[Dict[str, Any]]:
    """Flatten flags into (level, metric, message) rows for reports."""
    levels = [('RED', 'red_flags'), ('YELLOW', 'yellow_flags'), ('GREEN', 'green_signals')]
    return [{'level': level, 'metric': flag['metric'], 'message': flag['message']}
            for level, key in levels for flag in flags[key]]
