"""
Excel export module for bias audit reports.
Creates a multi-sheet workbook with the model snapshot, sweep rows and advisories.
"""

import io
from typing import Any, Dict, List, Optional

import pandas as pd
from openpyxl.styles import Alignment, Font, PatternFill

from categories import WORKING_CATEGORIES
from flag_generator import flags_to_rows

LEVEL_FILLS = {
    'RED': 'F8D7DA',
    'YELLOW': 'FFF3CD',
    'GREEN': 'D4EDDA',
}


def create_audit_workbook(snapshot_df: pd.DataFrame, sweep_df: Optional[pd.DataFrame] = None,
                          flags: Optional[Dict[str, List[Dict[str, Any]]]] = None) -> bytes:
    """
    Create the audit workbook.

    Sheets:
    1. Snapshot - one row per model, one share column per category
    2. Sweep - tidy sweep rows (only when sweep_df is given)
    3. Advisories - level and message per flag (only when flags are given)

    Args:
        snapshot_df: Long-format frame from bias_audit.snapshot_to_frame
        sweep_df: Optional frame from bias_audit.sweep_to_frame
        flags: Optional flags from flag_generator.generate_flags

    Returns:
        Excel file as bytes
    """
    output = io.BytesIO()
    writer = pd.ExcelWriter(output, engine='openpyxl')

    # === SHEET 1: SNAPSHOT ===
    pivot = _pivot_snapshot(snapshot_df)
    pivot.to_excel(writer, sheet_name='Snapshot', index=False)

    # === SHEET 2: SWEEP ===
    if sweep_df is not None and not sweep_df.empty:
        sweep_df.to_excel(writer, sheet_name='Sweep', index=False)

    # === SHEET 3: ADVISORIES ===
    if flags is not None:
        advisories = pd.DataFrame(flags_to_rows(flags), columns=['level', 'metric', 'message'])
        advisories.to_excel(writer, sheet_name='Advisories', index=False)

    writer.close()
    workbook = writer.book

    for sheet in workbook.worksheets:
        _format_sheet(sheet)
    if 'Advisories' in workbook.sheetnames:
        _format_advisories_sheet(workbook['Advisories'])

    output = io.BytesIO()
    workbook.save(output)
    output.seek(0)

    return output.getvalue()


def _pivot_snapshot(snapshot_df: pd.DataFrame) -> pd.DataFrame:
    """Model x category share table; absent models keep their row with empty shares."""
    if snapshot_df.empty:
        return pd.DataFrame(columns=['model', 'description', *WORKING_CATEGORIES, 'status'])
    models = snapshot_df.drop_duplicates('model')[['model', 'description', 'status']]
    shares = snapshot_df.pivot(index='model', columns='category', values='share')
    shares = shares.reindex(columns=WORKING_CATEGORIES).reset_index()
    table = models.merge(shares, on='model', how='left')
    return table[['model', 'description', *WORKING_CATEGORIES, 'status']]


def _format_sheet(sheet):
    """Header styling, auto widths, frozen header row."""
    header_fill = PatternFill(start_color='366092', end_color='366092', fill_type='solid')
    header_font = Font(bold=True, color='FFFFFF', size=11)

    for cell in sheet[1]:
        cell.fill = header_fill
        cell.font = header_font
        cell.alignment = Alignment(horizontal='center', vertical='center')

    # Auto-adjust column widths
    for column in sheet.columns:
        max_length = 0
        column_letter = column[0].column_letter
        for cell in column:
            if cell.value is not None:
                max_length = max(max_length, len(str(cell.value)))
        sheet.column_dimensions[column_letter].width = min(max_length + 2, 50)

    sheet.freeze_panes = 'A2'


def _format_advisories_sheet(sheet):
    """Color-code advisory levels and widen the message column."""
    for row in range(2, sheet.max_row + 1):
        level_cell = sheet[f'A{row}']
        color = LEVEL_FILLS.get(level_cell.value)
        if color:
            level_cell.fill = PatternFill(start_color=color, end_color=color, fill_type='solid')
            level_cell.font = Font(bold=True)
    sheet.column_dimensions['C'].width = 100
