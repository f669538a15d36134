"""Report serialization: JSON (lossless) and CSV (one row per attacked image)."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .campaign import CampaignReport, DictionaryStats, SweepResult

CSV_COLUMNS = ["sample_id", "success", "queries", "j", "l0", "l2", "linf", "initial_sample_id"]


def report_to_json(report: CampaignReport) -> str:
    return json.dumps(report.to_dict(), indent=2, allow_nan=False) + "\n"


def report_to_csv(report: CampaignReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in report.rows:
        writer.writerow(["" if getattr(r, c) is None else _cell(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def emit_report(report: CampaignReport, fmt: str, path) -> None:
    if fmt == "json":
        text = report_to_json(report)
    elif fmt == "csv":
        text = report_to_csv(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    Path(path).write_text(text)


def load_report(path) -> CampaignReport:
    return CampaignReport.from_dict(json.loads(Path(path).read_text()))


def sweep_to_json(result: SweepResult) -> str:
    payload = {
        "rates": result.rates,
        "budgets": result.budgets,
        "fooling_rates": result.fooling_rates,
        "fr_non_decreasing": result.fr_non_decreasing,
        "reports": [r.to_dict() for r in result.reports],
    }
    return json.dumps(payload, indent=2, allow_nan=False) + "\n"


def sweep_to_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["rate", "k", "fr", "aq", "successes", "dataset_size"])
    for rate, k, rep in zip(result.rates, result.budgets, result.reports):
        writer.writerow([repr(rate), k, repr(rep.fr), "" if rep.aq is None else repr(rep.aq),
                         rep.successes, rep.dataset_size])
    return buf.getvalue()


def stats_to_csv(stats: DictionaryStats) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sample_id", "successes", "mean_queries", "share"])
    for e in stats.entries:
        writer.writerow([e["sample_id"], e["successes"], repr(e["mean_queries"]), repr(e["share"])])
    return buf.getvalue()
