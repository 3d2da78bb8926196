#!/usr/bin/env python3
"""
Script to write the default DOCX diagnosis template to reports/templates/.
Edit the written file to restyle report.docx; `--docx` picks it up.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from model_triage.renderer import DOCX_TEMPLATE, TEMPLATE_DIR, build_docx_template


def create_report_template() -> Path:
    """Save the built-in docxtpl template where render_docx looks for overrides."""
    TEMPLATE_DIR.mkdir(parents=True, exist_ok=True)
    template_path = TEMPLATE_DIR / DOCX_TEMPLATE
    template_path.write_bytes(build_docx_template().getvalue())

    print(f"Template created at: {template_path}")
    return template_path


if __name__ == "__main__":
    create_report_template()
