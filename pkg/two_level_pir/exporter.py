"""
Sweep export to CSV and Excel.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence

import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Font, PatternFill

from .capacity_calc import SweepRow, decimal_string, fraction_string

CSV_COLUMNS = [
    "N", "T1", "K1", "T2", "K2", "r_ns", "r_nb", "r_upper", "r_naive", "best",
    "r_ns_decimal", "r_nb_decimal", "r_upper_decimal", "r_naive_decimal", "gap", "coding_gain",
]

HEADER_FILL = "366092"


class SweepExporter:
    """Handles exporting sweep results to CSV and Excel format."""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def to_records(self, rows: Sequence[SweepRow]) -> List[Dict[str, Any]]:
        records = []
        for row in rows:
            p, report = row.params, row.report
            record = {"N": p.N, "T1": p.T1, "K1": p.K1, "T2": p.T2, "K2": p.K2}
            for name in ("r_ns", "r_nb", "r_upper", "r_naive"):
                record[name] = fraction_string(getattr(report, name))
            record["best"] = report.best_scheme.value
            for name in ("r_ns", "r_nb", "r_upper", "r_naive"):
                record[f"{name}_decimal"] = decimal_string(getattr(report, name))
            record["gap"] = fraction_string(report.d_gap)
            record["coding_gain"] = fraction_string(report.coding_gain)
            records.append(record)
        return records

    def to_frame(self, rows: Sequence[SweepRow]) -> pd.DataFrame:
        return pd.DataFrame(self.to_records(rows), columns=CSV_COLUMNS)

    def to_csv_text(self, rows: Sequence[SweepRow]) -> str:
        return self.to_frame(rows).to_csv(index=False, lineterminator="\n")

    def export_csv(self, rows: Sequence[SweepRow], output_file: Path) -> None:
        output_file = Path(output_file)
        output_file.write_text(self.to_csv_text(rows))
        self.logger.info(f"CSV file saved: {output_file}")

    def _write_sheet(self, ws, headers: List[str], values: List[List[Any]]) -> None:
        for col, header in enumerate(headers, 1):
            cell = ws.cell(row=1, column=col, value=header)
            cell.font = Font(bold=True)
            cell.fill = PatternFill(start_color=HEADER_FILL, end_color=HEADER_FILL, fill_type="solid")

        for row, record in enumerate(values, 2):
            for col, value in enumerate(record, 1):
                ws.cell(row=row, column=col, value=value)

        # Auto-adjust column widths
        for column in ws.columns:
            max_length = max(len(str(cell.value)) for cell in column)
            ws.column_dimensions[column[0].column_letter].width = min(max_length + 2, 50)

    def create_sweep_sheet(self, workbook: Workbook, rows: Sequence[SweepRow]) -> None:
        ws = workbook.create_sheet("Sweep")
        frame = self.to_frame(rows)
        self._write_sheet(ws, list(frame.columns), frame.values.tolist())

    def create_summary_sheet(self, workbook: Workbook, rows: Sequence[SweepRow]) -> None:
        """Point count, winning-scheme counts and the largest gap to the bound."""
        ws = workbook.create_sheet("Summary", 0)
        counts = {"NS": 0, "NB": 0, "tie": 0}
        for row in rows:
            counts[row.report.best_scheme.value] += 1
        widest = max(rows, key=lambda r: r.report.d_gap)
        values = [
            ["Points", len(rows)],
            ["NS best", counts["NS"]],
            ["NB best", counts["NB"]],
            ["Ties", counts["tie"]],
            ["Max gap", fraction_string(widest.report.d_gap)],
            ["Max gap at", widest.params.label],
        ]
        self._write_sheet(ws, ["Metric", "Value"], values)

    def export_excel(self, rows: Sequence[SweepRow], output_file: Path) -> None:
        """
        Export sweep rows to an Excel file with a Summary and a Sweep sheet.

        Args:
            rows: sweep rows in sweep order
            output_file: Path for the output Excel file
        """
        try:
            workbook = Workbook()

            # Remove default sheet
            if 'Sheet' in workbook.sheetnames:
                workbook.remove(workbook['Sheet'])

            self.create_summary_sheet(workbook, rows)
            self.create_sweep_sheet(workbook, rows)

            workbook.save(output_file)
            self.logger.info(f"Excel file saved: {output_file}")

        except Exception as e:
            self.logger.error(f"Error creating Excel file: {str(e)}")
            raise
