"""Keypoint matching and detection/localization metrics."""

from toolsight.metrics.matching import match_all, match_frame
from toolsight.metrics.report import (
    aggregate,
    format_report,
    records_frame,
    report_frame,
    write_records_csv,
    write_report,
)

__all__ = [
    "aggregate",
    "format_report",
    "match_all",
    "match_frame",
    "records_frame",
    "report_frame",
    "write_records_csv",
    "write_report",
]
