"""Aggregated precision, recall, detection accuracy and RMSE."""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from toolsight.exceptions import UsageError
from toolsight.models.models import ClassMetrics, ClassTaxonomy, MatchRecord, MetricReport
from toolsight.utils import atomic_write

logger = logging.getLogger(__name__)


def _percent(numerator: int, denominator: int) -> Optional[float]:
    return 100.0 * numerator / denominator if denominator else None


def _rmse(errors: Sequence[float]) -> Optional[float]:
    if not errors:
        return None
    return float(np.sqrt(np.mean(np.square(errors))))


def aggregate(records: Sequence[MatchRecord], taxonomy: ClassTaxonomy, tau: float) -> MetricReport:
    """
    Summarize match records.

    Per class: precision TP/(TP+FP), recall TP/(TP+FN), accuracy TP/GT and
    RMSE over TP errors. Averages run over the classes where each value is
    defined; a class without TP has no RMSE and is left out of the RMSE mean.

    Args:
        records: Records of the whole test set
        taxonomy: Class names for the report
        tau: Threshold the records were matched with

    Returns:
        MetricReport with per-class rows and averages

    Raises:
        UsageError: If ``records`` is empty
    """
    if not records:
        raise UsageError("cannot aggregate an empty record set")
    per_class: List[ClassMetrics] = []
    all_errors: List[float] = []
    totals = {"TP": 0, "FP": 0, "FN": 0}
    for class_id in sorted({r.class_id for r in records}):
        counts = {"TP": 0, "FP": 0, "FN": 0}
        errors = []
        for record in records:
            if record.class_id != class_id:
                continue
            counts[record.outcome] += 1
            if record.outcome == "TP":
                errors.append(record.error)
        for key in totals:
            totals[key] += counts[key]
        all_errors.extend(errors)
        tp, fp, fn = counts["TP"], counts["FP"], counts["FN"]
        per_class.append(
            ClassMetrics(
                class_id=class_id,
                class_name=taxonomy.class_name(class_id),
                tp=tp,
                fp=fp,
                fn=fn,
                precision=_percent(tp, tp + fp),
                recall=_percent(tp, tp + fn),
                accuracy=_percent(tp, tp + fn),
                rmse=_rmse(errors),
            )
        )

    def mean_of(values) -> float:
        values = [v for v in values if v is not None]
        return float(np.mean(values)) if values else 0.0

    class_rmse = [m.rmse for m in per_class if m.rmse is not None]
    gt_count = totals["TP"] + totals["FN"]
    return MetricReport(
        tau=tau,
        per_class=per_class,
        precision=mean_of(m.precision for m in per_class),
        recall=mean_of(m.recall for m in per_class),
        accuracy=_percent(totals["TP"], gt_count) or 0.0,
        rmse_mean=float(np.mean(class_rmse)) if class_rmse else None,
        rmse_std=float(np.std(class_rmse)) if class_rmse else None,
        rmse_pooled=_rmse(all_errors),
        tp=totals["TP"],
        fp=totals["FP"],
        fn=totals["FN"],
        gt_count=gt_count,
    )


def report_frame(report: MetricReport) -> pd.DataFrame:
    """Per-class rows plus a closing ``mean`` row."""
    rows = [
        {
            "class": m.class_name,
            "TP": m.tp,
            "FP": m.fp,
            "FN": m.fn,
            "precision %": m.precision,
            "recall %": m.recall,
            "accuracy %": m.accuracy,
            "RMSE px": m.rmse,
        }
        for m in report.per_class
    ]
    rows.append(
        {
            "class": "mean",
            "TP": report.tp,
            "FP": report.fp,
            "FN": report.fn,
            "precision %": report.precision,
            "recall %": report.recall,
            "accuracy %": report.accuracy,
            "RMSE px": report.rmse_mean,
        }
    )
    return pd.DataFrame(rows)


def format_report(report: MetricReport) -> str:
    """Aligned text table followed by the summary lines."""
    table = report_frame(report).to_string(index=False, float_format=lambda v: f"{v:.2f}", na_rep="-")
    pooled = "n/a" if report.rmse_pooled is None else f"{report.rmse_pooled:.2f} px"
    return (
        f"{table}\n\n"
        f"tau = {report.tau:.2f} px\n"
        f"detection accuracy = {report.accuracy:.2f} %\n"
        f"localization RMSE = {report.rmse_text()} (pooled {pooled})"
    )


def write_report(path: Union[str, Path], report: MetricReport) -> None:
    atomic_write(path, (report.model_dump_json(indent=2) + "\n").encode("utf-8"))


def records_frame(records: Sequence[MatchRecord], taxonomy: ClassTaxonomy) -> pd.DataFrame:
    rows: List[Dict] = []
    for r in records:
        rows.append(
            {
                "video": r.video_id,
                "frame": r.frame_index,
                "class": taxonomy.class_name(r.class_id),
                "outcome": r.outcome,
                "gt_x": r.gt[0] if r.gt else None,
                "gt_y": r.gt[1] if r.gt else None,
                "pred_x": r.pred[0] if r.pred else None,
                "pred_y": r.pred[1] if r.pred else None,
                "error": r.error,
            }
        )
    columns = ["video", "frame", "class", "outcome", "gt_x", "gt_y", "pred_x", "pred_y", "error"]
    return pd.DataFrame(rows, columns=columns)


def write_records_csv(path: Union[str, Path], records: Sequence[MatchRecord], taxonomy: ClassTaxonomy) -> None:
    text = records_frame(records, taxonomy).to_csv(index=False)
    atomic_write(path, text.encode("utf-8"))
    logger.info(f"Wrote {len(records)} match records to {path}")

