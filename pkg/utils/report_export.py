"""
Report and trace export utilities
"""
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, TextIO, Union

import openpyxl
import pandas as pd
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils import get_column_letter

from caprecap import mean_log_estimate, relative_error, relative_error_from_logs
from config import report_config
from utils.helpers import ensure_directory, format_scientific, format_seconds, log10_from_ln

TRACE_FORMATS = ('csv', 'json')

# IterationTrace attribute behind each trace column
_TRACE_FIELDS = {
    't': 't',
    'log10_estimate': 'log10_estimate',
    'N_t': 'n_elites',
    'N_t_screened': 'n_screened',
    'm_upper': 'm_upper',
    'm_lower': 'm_lower',
    'c_hat': 'c_hat',
}


# ============================================
# Iteration traces
# ============================================

def trace_frame(traces) -> pd.DataFrame:
    """One row per level, columns in report_config.TRACE_COLUMNS order"""
    rows = [{column: getattr(trace, _TRACE_FIELDS[column]) for column in report_config.TRACE_COLUMNS}
            for trace in traces]
    return pd.DataFrame(rows, columns=report_config.TRACE_COLUMNS)


def _float_format() -> str:
    return f"%.{report_config.MACHINE_DIGITS}g"


def trace_csv(frame: pd.DataFrame) -> str:
    output = io.StringIO()
    frame.to_csv(output, index=False, float_format=_float_format(), lineterminator='\n')
    return output.getvalue()


def parse_trace_csv(text: str) -> pd.DataFrame:
    """Read a trace written by emit_trace back into a frame"""
    return pd.read_csv(io.StringIO(text), float_precision='round_trip')


def _round_float(value):
    """Machine precision rendering shared by the JSON writers"""
    if isinstance(value, float) and math.isfinite(value):
        return float(_float_format() % value)
    if isinstance(value, float):
        return None if math.isnan(value) else str(value)
    return value


def _records(frame: pd.DataFrame) -> List[Dict]:
    return [{key: _round_float(value.item() if hasattr(value, 'item') else value)
             for key, value in row.items()}
            for row in frame.to_dict(orient='records')]


def emit_trace(traces, fmt: str, sink: Union[str, Path, TextIO]):
    """
    Write iteration traces as CSV or JSON

    Args:
        traces: IterationTrace records of a finished or failed run
        fmt: 'csv' or 'json'
        sink: file path or open text stream
    """
    if fmt not in TRACE_FORMATS:
        raise ValueError(f"trace format must be one of {TRACE_FORMATS}, got {fmt!r}")

    frame = trace_frame(traces)
    if fmt == 'csv':
        text = trace_csv(frame)
    else:
        text = json.dumps(_records(frame), indent=2) + '\n'

    if isinstance(sink, (str, Path)):
        path = Path(sink)
        ensure_directory(str(path.parent) if str(path.parent) != '.' else None)
        path.write_text(text)
    else:
        sink.write(text)


# ============================================
# Run reports
# ============================================

@dataclass
class RunReport:
    """Per-run rows, aggregate statistics and the configuration that produced them"""
    command: str
    config: Dict
    rows: List[Dict] = field(default_factory=list)
    traces: List[List] = field(default_factory=list, repr=False)
    exact_count: Optional[int] = None
    include_timings: bool = False

    def add_run(self, row: Dict, traces: Sequence = ()):
        self.rows.append(row)
        self.traces.append(list(traces))

    def successful(self) -> List[Dict]:
        return [row for row in self.rows if row['status'] == 'ok']

    def aggregate(self) -> Dict:
        """Mean estimate and relative error over the successful runs"""
        logs = [row['log_estimate'] for row in self.successful()]
        summary = {
            'runs': len(self.rows),
            'successful_runs': len(logs),
            'mean_log_estimate': None,
            'mean_estimate': None,
            'relative_error': None,
            'mean_iterations': None,
        }
        if not logs:
            return summary

        estimates = [row['estimate'] for row in self.successful()]
        finite = all(math.isfinite(e) for e in estimates)
        summary['mean_log_estimate'] = mean_log_estimate(logs)
        summary['mean_estimate'] = sum(estimates) / len(estimates) if finite else float('inf')
        summary['mean_iterations'] = sum(row['iterations'] for row in self.successful()) / len(logs)
        if len(logs) >= 2:
            summary['relative_error'] = (relative_error(estimates) if finite
                                         else relative_error_from_logs(logs))

        if self.exact_count is not None:
            mean = summary['mean_estimate']
            summary['exact_count'] = self.exact_count
            summary['abs_deviation'] = mean - self.exact_count
            summary['rel_deviation'] = (mean - self.exact_count) / self.exact_count if self.exact_count else None
        return summary

    def runs_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.rows)
        if not self.include_timings and 'wall_time' in frame.columns:
            frame = frame.drop(columns=['wall_time'])
        if self.exact_count is not None and len(frame):
            frame['abs_deviation'] = frame['estimate'] - float(self.exact_count)
            frame['rel_deviation'] = frame['abs_deviation'] / float(self.exact_count)
        return frame

    def to_dict(self) -> Dict:
        runs = _records(self.runs_frame())
        for run, traces in zip(runs, self.traces):
            run['trace'] = _records(trace_frame(traces))
        aggregate = {key: _round_float(value) for key, value in self.aggregate().items()}
        return {
            'command': self.command,
            'config': self.config,
            'runs': runs,
            'aggregate': aggregate,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n'

    def to_csv(self) -> str:
        output = io.StringIO()
        self.runs_frame().to_csv(output, index=False, float_format=_float_format(),
                                 lineterminator='\n')
        return output.getvalue()

    def render_human(self) -> str:
        """Run table in the layout of the published run tables"""
        digits = report_config.HUMAN_DIGITS
        lines = [f"{'Run':>5}  {'its':>5}  {'estimate':>10}  {'CPU':>9}  status"]
        for row in self.rows:
            lines.append(f"{row['run'] + 1:>5}  {row['iterations']:>5}  "
                         f"{format_scientific(row['log_estimate'], digits):>10}  "
                         f"{format_seconds(row['wall_time']):>9}  {row['status']}")

        summary = self.aggregate()
        lines.append('-' * len(lines[0]))
        if summary['mean_log_estimate'] is None:
            lines.append("no successful runs")
            return '\n'.join(lines) + '\n'

        lines.append(f"{'Mean':>5}  {summary['mean_iterations']:>5.1f}  "
                     f"{format_scientific(summary['mean_log_estimate'], digits):>10}")
        if summary['relative_error'] is not None:
            lines.append(f"RE = {summary['relative_error']:.{digits}E}")
        if self.exact_count is not None:
            lines.append(f"exact = {self.exact_count}  "
                         f"rel. deviation = {summary['rel_deviation']:+.{digits}E}")
        lines.append(f"log10 mean estimate = {log10_from_ln(summary['mean_log_estimate']):.6f}")
        return '\n'.join(lines) + '\n'

    def save(self, path: Union[str, Path]):
        """Write the report; the suffix picks JSON, CSV or XLSX"""
        path = Path(path)
        ensure_directory(str(path.parent) if str(path.parent) != '.' else None)
        suffix = path.suffix.lower()
        if suffix == '.xlsx':
            path.write_bytes(ReportExporter().export_xlsx(self))
        elif suffix == '.csv':
            path.write_text(self.to_csv())
        else:
            path.write_text(self.to_json())


class ReportExporter:
    """Handle Excel export of run reports"""

    def __init__(self):
        self.header_fill = PatternFill(start_color="366092", end_color="366092", fill_type="solid")
        self.header_font = Font(bold=True, color="FFFFFF", size=11)
        self.title_font = Font(bold=True, size=14)
        self.border = Border(
            left=Side(style='thin'),
            right=Side(style='thin'),
            top=Side(style='thin'),
            bottom=Side(style='thin')
        )

    def _write_table(self, ws, frame: pd.DataFrame, first_row: int):
        for col_idx, header in enumerate(frame.columns, start=1):
            cell = ws.cell(row=first_row, column=col_idx, value=str(header))
            cell.font = self.header_font
            cell.fill = self.header_fill
            cell.alignment = Alignment(horizontal='center', vertical='center')
            cell.border = self.border

        for row_idx, values in enumerate(frame.itertuples(index=False), start=first_row + 1):
            for col_idx, value in enumerate(values, start=1):
                if hasattr(value, 'item'):
                    value = value.item()
                if isinstance(value, float) and not math.isfinite(value):
                    value = str(value)
                cell = ws.cell(row=row_idx, column=col_idx, value=value)
                cell.border = self.border
                if isinstance(value, float):
                    cell.number_format = '0.000E+00'

    def _fit_columns(self, ws):
        for col in range(1, ws.max_column + 1):
            column_letter = get_column_letter(col)
            max_length = max((len(str(cell.value)) for cell in ws[column_letter]
                              if cell.value is not None), default=0)
            ws.column_dimensions[column_letter].width = min(max_length + 2, 50)

    def export_xlsx(self, report: RunReport) -> bytes:
        """
        Workbook with a Runs sheet, a Summary sheet and one Trace sheet
        holding every run's levels
        """
        wb = openpyxl.Workbook()

        ws1 = wb.active
        ws1.title = "Runs"
        ws1['A1'] = report.command
        ws1['A1'].font = self.title_font
        self._write_table(ws1, report.runs_frame(), first_row=3)

        ws2 = wb.create_sheet("Summary")
        ws2['A1'] = "SUMMARY"
        ws2['A1'].font = self.title_font
        row = 3
        summary = report.aggregate()
        for label, value in list(summary.items()) + sorted(report.config.items()):
            ws2[f'A{row}'] = label
            ws2[f'A{row}'].font = Font(bold=True)
            if isinstance(value, float) and not math.isfinite(value):
                value = str(value)
            elif value is not None and not isinstance(value, (int, float, str)):
                value = json.dumps(value)
            elif isinstance(value, int) and abs(value) > 2 ** 53:
                value = str(value)
            ws2[f'B{row}'] = value
            row += 1

        ws3 = wb.create_sheet("Trace")
        frames = []
        for run, traces in enumerate(report.traces):
            frame = trace_frame(traces)
            frame.insert(0, 'run', run + 1)
            frames.append(frame)
        if frames:
            self._write_table(ws3, pd.concat(frames, ignore_index=True), first_row=1)

        for ws in (ws1, ws2, ws3):
            self._fit_columns(ws)

        output = io.BytesIO()
        wb.save(output)
        output.seek(0)

        return output.getvalue()
