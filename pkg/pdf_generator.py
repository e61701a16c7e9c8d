# pdf_generator.py - PDF verdict and sweep reports
import os
import logging
from datetime import datetime
from xml.sax.saxutils import escape

from reportlab.lib import colors
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import getSampleStyleSheet, ParagraphStyle
from reportlab.lib.units import inch
from reportlab.platypus import SimpleDocTemplate, Paragraph, Spacer, Table, TableStyle

logger = logging.getLogger(__name__)

MAX_SWEEP_ROWS = 40

_GRID_STYLE = [
    ('TEXTCOLOR', (0, 0), (-1, -1), colors.black),
    ('ALIGN', (0, 0), (-1, -1), 'LEFT'),
    ('FONTSIZE', (0, 0), (-1, -1), 9),
    ('GRID', (0, 0), (-1, -1), 1, colors.black),
    ('VALIGN', (0, 0), (-1, -1), 'TOP'),
]


def _fmt(value):
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _key_value_table(rows):
    table = Table([[f"{k}:", _fmt(v)] for k, v in rows], colWidths=[2 * inch, 4 * inch])
    table.setStyle(TableStyle(_GRID_STYLE + [
        ('BACKGROUND', (0, 0), (0, -1), colors.lightgrey),
        ('FONTNAME', (0, 0), (0, -1), 'Helvetica-Bold'),
    ]))
    return table


def _header_table(header, rows, widths):
    table = Table([header] + rows, colWidths=widths, repeatRows=1)
    table.setStyle(TableStyle(_GRID_STYLE + [
        ('BACKGROUND', (0, 0), (-1, 0), colors.lightgrey),
        ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
    ]))
    return table


def _verdict_table(verdicts):
    rows = []
    for name, v in verdicts.items():
        rows.append([name, "PASS" if v["passed"] else "FAIL", _fmt(float(v.get("margin", 0.0)))])
    table = _header_table(["Verdict", "Result", "Margin"], rows, [2.5 * inch, 1.5 * inch, 2 * inch])
    for i, (_, v) in enumerate(verdicts.items(), start=1):
        color = colors.darkgreen if v["passed"] else colors.red
        table.setStyle(TableStyle([('TEXTCOLOR', (1, i), (1, i), color)]))
    return table


def _sweep_table(report):
    rows = []
    for k, (r, value, dev) in enumerate(zip(report["ladder"], report["values"], report["deviations"]), start=1):
        rows.append([str(k), _fmt(r), _fmt(value), _fmt(dev)])
    if len(rows) > MAX_SWEEP_ROWS:
        rows = rows[:MAX_SWEEP_ROWS // 2] + [["...", "", "", ""]] + rows[-MAX_SWEEP_ROWS // 2:]
    return _header_table(["k", "r", "log-CF", "Deviation"], rows,
                         [0.6 * inch, 1.4 * inch, 2 * inch, 2 * inch])


def generate_report_pdf(report, title, output_dir="reports"):
    """Render a check or tangent report to an A4 PDF; returns the file path."""
    try:
        os.makedirs(output_dir, exist_ok=True)
    except OSError as e:
        logger.error(f"Cannot create report directory {output_dir}: {str(e)}")
        raise

    command = report.get("command", "report")
    pdf_path = os.path.join(output_dir, f"{command}_{datetime.now().strftime('%Y%m%d_%H%M%S_%f')}.pdf")

    doc = SimpleDocTemplate(pdf_path, pagesize=A4)
    styles = getSampleStyleSheet()
    story = []

    title_style = ParagraphStyle(
        'ReportTitle',
        parent=styles['Heading1'],
        fontSize=16,
        spaceAfter=20,
        textColor=colors.darkblue,
        alignment=1  # Center alignment
    )

    heading_style = ParagraphStyle(
        'ReportHeading',
        parent=styles['Heading2'],
        fontSize=13,
        spaceAfter=10,
        textColor=colors.darkblue
    )

    # Header
    story.append(Paragraph(escape(title), title_style))
    story.append(Spacer(1, 10))

    summary = [("Command", command)]
    if "spectral_bounds" in report:
        sb = report["spectral_bounds"]
        summary += [("Lower index a", sb["a_hat"]), ("Upper index b", sb["b_hat"])]
    if "require" in report:
        summary.append(("Required", ", ".join(report["require"]) or "-"))
    if "verdict" in report:
        summary += [("Tangent kind", report.get("kind", "")), ("Point u", report.get("u", "")),
                    ("Limit log-CF", report["limit"]), ("Sweep verdict", report["verdict"])]
    story.append(Paragraph("SUMMARY", heading_style))
    story.append(_key_value_table(summary))
    story.append(Spacer(1, 15))

    if report.get("verdicts"):
        story.append(Paragraph("VERDICTS", heading_style))
        story.append(_verdict_table(report["verdicts"]))
        story.append(Spacer(1, 15))

    if report.get("deviations"):
        story.append(Paragraph("CONVERGENCE SWEEP", heading_style))
        story.append(_sweep_table(report))
        story.append(Spacer(1, 15))

    flags = (report.get("hypotheses") or {}).get("flags")
    if flags:
        story.append(Paragraph("HYPOTHESIS FLAGS", heading_style))
        story.append(Paragraph(escape(", ".join(flags)), styles['Normal']))
        story.append(Spacer(1, 15))

    for key, note in (report.get("notes") or {}).items():
        story.append(Paragraph(f"<b>{escape(key)}</b>: {escape(_fmt(note))}", styles['Normal']))

    # Footer
    story.append(Spacer(1, 30))
    story.append(Paragraph("---", styles['Normal']))
    story.append(Paragraph(f"Generated on: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}", styles['Normal']))

    try:
        doc.build(story)
        return pdf_path
    except Exception as e:
        logger.error(f"Failed to generate PDF: {str(e)}")
        raise OSError(f"Failed to generate PDF: {str(e)}")
