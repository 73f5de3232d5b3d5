"""Audit report document and its json / csv / text renderings."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .errors import UnknownFormat
from .evalmetrics import ClassificationScores, ConfusionMatrix
from .fairaudit import FAIL, INDETERMINATE, METRICS, PASS, AuditReport

SCHEMA_VERSION = 1
FORMATS = ("json", "csv", "text")

CSV_FIELDS = ("attribute", "group", "reference_group", "metric", "group_rate", "reference_rate",
              "ratio", "verdict", "suppressed")


@dataclass
class PipelineReport:
    """Classification scores plus the fairness audit of one set of predictions."""

    metadata: dict
    scores: ClassificationScores
    confusion: ConfusionMatrix
    audit: AuditReport
    model_selection: dict | None = None
    schema_version: int = SCHEMA_VERSION

    @property
    def verdict(self) -> str:
        return self.audit.verdict

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "metadata": self.metadata,
            "classification": {"scores": self.scores.to_dict(),
                               "confusion": self.confusion.to_dict()},
            "model_selection": self.model_selection,
            "audit": self.audit.to_dict(),
            "verdict": self.verdict,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema_version {d.get('schema_version')!r}")
        return cls(
            metadata=d["metadata"],
            scores=ClassificationScores.from_dict(d["classification"]["scores"]),
            confusion=ConfusionMatrix.from_dict(d["classification"]["confusion"]),
            audit=AuditReport.from_dict(d["audit"]),
            model_selection=d.get("model_selection"),
            schema_version=d["schema_version"],
        )


def make_metadata(dataset_sha256: str | None, model: str | None, seed: int | None,
                  timestamp: str | None) -> dict:
    return {"dataset_sha256": dataset_sha256, "model": model, "seed": seed,
            "timestamp": timestamp, "tool_version": __version__}


def to_json(report: PipelineReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def from_json(text: str) -> PipelineReport:
    return PipelineReport.from_dict(json.loads(text))


def load_report(path) -> PipelineReport:
    return from_json(Path(path).read_text(encoding="utf-8"))


def to_csv(report: PipelineReport) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for rec in report.audit.records:
        row = rec.to_dict()
        w.writerow({k: "" if row[k] is None else row[k] for k in CSV_FIELDS})
    return buf.getvalue()


def _num(x, width=6):
    return f"{'n/a':>{width}}" if x is None else f"{x:>{width}.2f}"


_MARK = {PASS: " ", FAIL: "!", INDETERMINATE: "?"}


def to_text(report: PipelineReport) -> str:
    s = report.scores
    cfg = report.audit.config
    lines = [
        "Classification (positive class)",
        f"  precision {_num(s.precision)}   recall {_num(s.recall)}   f1 {_num(s.f1)}",
        f"  tp={report.confusion.tp} fp={report.confusion.fp} "
        f"fn={report.confusion.fn} tn={report.confusion.tn}",
        "",
        f"Fairness audit: pass band [{cfg.tau:.2f}, {1 / cfg.tau:.2f}], "
        f"overall {report.verdict.upper()}",
    ]
    if not report.audit.attributes:
        lines.append("  no attributes audited")
        return "\n".join(lines) + "\n"
    metrics = [m for m in METRICS if m in cfg.metrics]
    for a in report.audit.attributes:
        lines.append("")
        lines.append(f"{a.attribute} (reference: {a.reference})")
        header = f"  {'Group (size ratio)':<26}{'PPR':>6}{'PPGR':>6}{'FPR':>6}{'FNR':>6}  "
        header += "".join(f"{m:>8}" for m in metrics)
        lines.append(header)
        for sl in a.slices:
            r = a.rates[sl.group]
            label = f"{sl.group} ({sl.size_ratio:.2f})"
            if sl.group in a.suppressed:
                label += " [suppressed]"
            row = f"  {label:<26}{_num(r.ppr)}{_num(r.ppgr)}{_num(r.fpr)}{_num(r.fnr)}  "
            for m in metrics:
                rec = a.record(sl.group, m)
                row += f"{_num(rec.ratio, 7)}{_MARK[rec.verdict]}"
            lines.append(row)
    lines.append("")
    lines.append("ratios are group rate / reference rate; '!' fails the band, '?' indeterminate")
    return "\n".join(lines) + "\n"


def render(report: PipelineReport, fmt: str = "json") -> str:
    if fmt == "json":
        return to_json(report)
    if fmt == "csv":
        return to_csv(report)
    if fmt == "text":
        return to_text(report)
    raise UnknownFormat(f"unknown format {fmt!r}; expected one of {FORMATS}")
