"""
Human-readable renderings of a ReportDocument: plain text and DOCX.
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import Any, BinaryIO

from docx import Document
from docx.enum.text import WD_ALIGN_PARAGRAPH
from docxtpl import DocxTemplate
from jinja2 import Environment, PackageLoader, StrictUndefined

from .footprints import DEFECT_ORDER, DefectType
from .report import ReportDocument

BASE_DIR = Path(__file__).resolve().parents[2]
TEMPLATE_DIR = BASE_DIR / "reports" / "templates"

TEXT_TEMPLATE = "report.txt.j2"
DOCX_TEMPLATE = "diagnosis_report.docx"
TEXT_CASE_LIMIT = 50

DEFECT_NAMES = {
    DefectType.ITD: "insufficient training data",
    DefectType.UTD: "unreliable training data",
    DefectType.SD: "structure defect",
}

_environment = Environment(
    loader=PackageLoader("model_triage", "templates"),
    undefined=StrictUndefined,
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
)


def report_context(report: ReportDocument, case_limit: int | None = None) -> dict[str, Any]:
    """Template variables shared by the text and DOCX renderings."""
    context = report.model_dump(mode="json")
    context["dominant_label"] = (
        f"{report.dominant.value} ({DEFECT_NAMES[report.dominant]})" if report.dominant else "none"
    )
    context["defect_rows"] = [
        {
            "defect": defect.value,
            "name": DEFECT_NAMES[defect],
            "count": report.counts.get(defect, 0),
            "ratio": f"{report.ratios.get(defect, 0.0):.3f}",
            "marker": "  <- dominant" if defect is report.dominant else "",
        }
        for defect in DEFECT_ORDER
    ]
    context["class_rows"] = [
        {"label": label, **{defect.value: counts.get(defect, 0) for defect in DEFECT_ORDER}}
        for label, counts in report.by_true_class.items()
    ]
    cases = report.per_case if case_limit is None else report.per_case[:case_limit]
    context["case_rows"] = [
        {
            "case_id": case.case_id,
            "defect": case.defect.value,
            "true_label": case.true_label,
            "predicted_label": case.predicted_label,
            "ranks": " ".join(str(rank) for rank in case.ranks),
        }
        for case in cases
    ]
    context["case_rows_omitted"] = len(report.per_case) - len(cases)
    context["probe_accuracy_text"] = ", ".join(f"{value:.3f}" for value in report.probe_train_accuracy)
    injection = report.injection
    if injection is None:
        context["injection_text"] = ""
    elif injection.kind is DefectType.ITD:
        context["injection_text"] = (
            f"removed {injection.removed_case_count} cases of classes {injection.itd_classes}"
        )
    elif injection.kind is DefectType.UTD:
        context["injection_text"] = (
            f"relabeled {injection.relabeled_case_count} cases "
            f"{injection.utd_source} -> {injection.utd_target}"
        )
    else:
        context["injection_text"] = f"removed hidden layer {injection.removed_layer}"
    return context


def render_text(report: ReportDocument) -> str:
    template = _environment.get_template(TEXT_TEMPLATE)
    return template.render(report_context(report, TEXT_CASE_LIMIT))


def build_docx_template() -> io.BytesIO:
    """Default DOCX diagnosis template with docxtpl placeholders."""
    doc = Document()

    title = doc.add_heading("Model Triage Report", level=0)
    title.alignment = WD_ALIGN_PARAGRAPH.CENTER

    doc.add_paragraph("Tool version: {{ tool_version }}")
    doc.add_paragraph("Base test accuracy: {{ base_test_accuracy }}")
    doc.add_paragraph("Faulty cases: {{ faulty_case_count }} of {{ test_case_count }}")
    doc.add_paragraph("Thresholds: t_a={{ thresholds.ascend }}, t_d={{ thresholds.descend }}")
    doc.add_paragraph("{% if injection %}Injected defect: {{ injection.kind }} ({{ injection_text }}){% endif %}")

    doc.add_heading("Defect ratios", level=2)
    doc.add_paragraph("{%p for row in defect_rows %}")
    p = doc.add_paragraph()
    p.add_run("{{ row.defect }}").bold = True
    p.add_run(" ({{ row.name }}): {{ row.count }} cases, ratio {{ row.ratio }}{{ row.marker }}")
    doc.add_paragraph("{%p endfor %}")

    doc.add_heading("Dominant defect", level=2)
    doc.add_paragraph("{{ dominant_label }}")
    doc.add_paragraph(
        "{% if suggested_stall_layer %}SD cases stop improving after hidden layer "
        "{{ suggested_stall_layer }}.{% endif %}"
    )

    doc.add_heading("Faulty case trajectories", level=2)
    doc.add_paragraph("{%p for row in case_rows %}")
    doc.add_paragraph(
        "Case {{ row.case_id }} [{{ row.defect }}] true {{ row.true_label }} -> "
        "{{ row.predicted_label }}: {{ row.ranks }}"
    )
    doc.add_paragraph("{%p endfor %}")

    doc.add_heading("Rule set", level=2)
    doc.add_paragraph("{{ interpretation }}")

    buffer = io.BytesIO()
    doc.save(buffer)
    buffer.seek(0)
    return buffer


def render_docx(
    report: ReportDocument,
    output_path: str | Path,
    template: str | Path | BinaryIO | None = None,
) -> Path:
    """
    Render the report into a DOCX file.

    Without ``template`` the file in TEMPLATE_DIR is used when present,
    otherwise the built-in default.
    """
    if template is None:
        custom = TEMPLATE_DIR / DOCX_TEMPLATE
        template = custom if custom.exists() else build_docx_template()
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)

    doc = DocxTemplate(template)
    doc.render(report_context(report, TEXT_CASE_LIMIT), autoescape=True)
    doc.save(output_path)
    return output_path
