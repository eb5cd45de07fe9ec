from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from docx import Document
from docx.oxml import parse_xml
from docx.oxml.ns import nsdecls
from docx.shared import Pt
from docx.table import Table, _Cell

from tof_coverage import __version__
from tof_coverage.errors import CoverageError
from tof_coverage.services.experiment import (
    CONFIG_SWEEP,
    PROBE,
    SHELL_SWEEP,
    SWEEP_NAMES,
    THETA_SWEEP,
    CoverageRow,
    ProbeRow,
    load_probe_rows,
    load_rows,
)
from tof_coverage.services.plotting import emit_plot_data

logger = logging.getLogger(__name__)

HEADER_FILL = "D9E2F3"
ROW_FILLS = ("FFFFFF", "F2F2F2")
FAILED_FILL = "F8CBAD"
TABLE_STYLE = "Table Grid"
TABLE_FONT_SIZE = 8.0
REPORT_NAME = "report.docx"


@dataclass(frozen=True)
class ReportSection:
    title: str
    columns: Sequence[str]
    rows: Sequence[Sequence[str]]
    charts: Sequence[Path] = field(default_factory=tuple)
    notes: Sequence[str] = field(default_factory=tuple)
    failed_rows: frozenset[int] = frozenset()


def _write_cell(cell: _Cell, text: str, fill: str, *, bold: bool = False) -> None:
    cell.text = text
    cell._tc.get_or_add_tcPr().append(
        parse_xml(f'<w:shd {nsdecls("w")} w:val="clear" w:color="auto" w:fill="{fill}"/>')
    )
    for run in cell.paragraphs[0].runs:
        run.bold = bold
        run.font.size = Pt(TABLE_FONT_SIZE)


def _fill_table(table: Table, section: ReportSection) -> None:
    """Header row, then banded data rows; rows that failed are flagged in red."""
    for c_idx, name in enumerate(section.columns):
        _write_cell(table.cell(0, c_idx), name, HEADER_FILL, bold=True)
    for r_idx, values in enumerate(section.rows):
        fill = FAILED_FILL if r_idx in section.failed_rows else ROW_FILLS[r_idx % 2]
        for c_idx, value in enumerate(values[: len(section.columns)]):
            _write_cell(table.cell(r_idx + 1, c_idx), value, fill)


def write_report(
    path: Path, sections: Sequence[ReportSection], *, title: str = "ToF sensor ring coverage"
) -> dict[str, Any]:
    """Tabulate sweep results as a .docx document: one heading + table per section."""
    if path.suffix.lower() != ".docx":
        raise CoverageError(
            code="INVALID_EXTENSION",
            message=f"Output must be a .docx file: {path}",
        )

    doc = Document()
    doc.add_heading(title, level=0)
    doc.add_paragraph(f"Generated by tof-coverage {__version__}.")
    tables = 0
    for section in sections:
        doc.add_heading(section.title, level=1)
        for note in section.notes:
            doc.add_paragraph(note)
        if section.rows:
            table = doc.add_table(
                rows=len(section.rows) + 1, cols=len(section.columns), style=TABLE_STYLE
            )
            _fill_table(table, section)
            tables += 1
        else:
            doc.add_paragraph("No rows.")
        for chart in section.charts:
            doc.add_paragraph(f"Chart: {chart.name}", style="List Bullet")

    try:
        doc.save(str(path))
    except Exception as exc:  # pragma: no cover - depends on fs/docx internals
        raise CoverageError(
            code="DOCX_SAVE_FAILED",
            message=f"Failed to save DOCX: {path}",
            details={"error": str(exc)},
        ) from exc
    return {"output_path": str(path), "sections": len(sections), "tables": tables}


REPORT_COLUMNS = {
    CONFIG_SWEEP: ("config", "vmax", "zeta_percent", "lambda_vmax_m3", "lambda_leftover_m3"),
    THETA_SWEEP: ("config", "vmax", "theta_deg", "zeta_percent", "lambda_leftover_m3"),
    SHELL_SWEEP: ("config", "vmax", "theta_deg", "zeta_percent", "warnings"),
    PROBE: ("config", "object_radius_m", "rmse_m", "max_error_m", "seen_fraction"),
}
SECTION_TITLES = {
    CONFIG_SWEEP: "Coverage per ring configuration",
    THETA_SWEEP: "Coverage against sensor tilt",
    SHELL_SWEEP: "Coverage of shells around the robot",
    PROBE: "Minimum-distance probe",
}


def _section_for(sweep: str, out_dir: Path) -> ReportSection | None:
    path = out_dir / f"{sweep}.csv"
    if not path.exists():
        return None
    rows: Sequence[CoverageRow] | Sequence[ProbeRow]
    if sweep == PROBE:
        rows = load_probe_rows(path)
    else:
        rows = load_rows(path)
    if not rows:
        logger.warning("%s has no rows; skipped", path.name)
        return None
    charts = [p for p in emit_plot_data(rows, sweep, out_dir) if p.suffix == ".svg"]
    columns = REPORT_COLUMNS[sweep]
    records = [row.to_record() for row in rows]
    notes: list[str] = []
    failed = frozenset(i for i, rec in enumerate(records) if rec.get("error_code"))
    if failed:
        notes.append(f"{len(failed)} row(s) failed and are listed without values.")
    return ReportSection(
        title=SECTION_TITLES[sweep],
        columns=columns,
        rows=[[rec[c] for c in columns] for rec in records],
        charts=charts,
        notes=notes,
        failed_rows=failed,
    )


def render_results(out_dir: Path, sweeps: Sequence[str] | None = None) -> dict[str, Any]:
    """Charts for every results CSV present in ``out_dir`` plus ``report.docx``."""
    names = list(sweeps) if sweeps else [*SWEEP_NAMES, PROBE]
    unknown = [n for n in names if n not in REPORT_COLUMNS]
    if unknown:
        raise CoverageError(
            code="UNKNOWN_SWEEP",
            message=f"Unknown sweep(s): {', '.join(unknown)}",
            details={"supported": sorted(REPORT_COLUMNS)},
        )
    sections = [s for s in (_section_for(name, out_dir) for name in names) if s is not None]
    if not sections:
        raise CoverageError(
            code="NO_RESULTS",
            message=f"No results CSV found in {out_dir}.",
            details={"sweeps": names},
        )
    result = write_report(out_dir / REPORT_NAME, sections)
    result["charts"] = [str(c) for s in sections for c in s.charts]
    return result
