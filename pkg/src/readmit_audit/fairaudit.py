"""Group fairness audit: per-group rates, reference-group disparity ratios and
parity verdicts under the four-fifths rule.

Rates per group:

* ``ppr``  -- the group's share of all predicted positives for the attribute
* ``ppgr`` -- predicted positives within the group, ``(tp + fp) / size``
* ``fpr``  -- ``fp / (fp + tn)``
* ``fnr``  -- ``fn / (fn + tp)``

Each parity test divides a group's rate by the reference group's rate and
passes when the ratio lies in ``[tau, 1 / tau]`` (``[0.8, 1.25]`` by default).
"""
from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatch, MissingReference, UnknownReference
from .evalmetrics import ConfusionMatrix, confusion, safe_ratio

EP, PP, FPRP, FNRP = "EP", "PP", "FPRP", "FNRP"
METRICS = (EP, PP, FPRP, FNRP)
METRIC_RATE = {EP: "ppr", PP: "ppgr", FPRP: "fpr", FNRP: "fnr"}
ERROR_RATE_METRICS = (FPRP, FNRP)

PASS, FAIL, INDETERMINATE = "pass", "fail", "indeterminate"

LARGEST_GROUP = "largest_group"

# References used for the MIMIC-style clinical schema.
CLINICAL_REFERENCES = {
    "gender": "M",
    "ethnicity": "White",
    "insurance": "Medicare",
    "language": "English",
}

# Absorbs float error in ratios such as 0.4 / 0.5 at the band edges.
BOUND_EPS = 1e-12


@dataclass(frozen=True)
class GroupSlice:
    attribute: str
    group: str
    cm: ConfusionMatrix
    size: int
    size_ratio: float

    def to_dict(self):
        return {"attribute": self.attribute, "group": self.group, "cm": self.cm.to_dict(),
                "size": self.size, "size_ratio": self.size_ratio}

    @classmethod
    def from_dict(cls, d):
        return cls(d["attribute"], d["group"], ConfusionMatrix.from_dict(d["cm"]),
                   int(d["size"]), float(d["size_ratio"]))


@dataclass(frozen=True)
class GroupRates:
    ppr: float | None
    ppgr: float | None
    fpr: float | None
    fnr: float | None

    def rate(self, metric: str) -> float | None:
        return getattr(self, METRIC_RATE[metric])

    def defined(self, name: str) -> bool:
        return getattr(self, name) is not None

    def to_dict(self):
        return {"ppr": self.ppr, "ppgr": self.ppgr, "fpr": self.fpr, "fnr": self.fnr}

    @classmethod
    def from_dict(cls, d):
        return cls(d["ppr"], d["ppgr"], d["fpr"], d["fnr"])


@dataclass(frozen=True)
class DisparityRecord:
    attribute: str
    group: str
    reference_group: str
    metric: str
    group_rate: float | None
    reference_rate: float | None
    ratio: float | None
    verdict: str
    suppressed: bool = False

    def to_dict(self):
        return {
            "attribute": self.attribute, "group": self.group,
            "reference_group": self.reference_group, "metric": self.metric,
            "group_rate": self.group_rate, "reference_rate": self.reference_rate,
            "ratio": self.ratio, "verdict": self.verdict, "suppressed": self.suppressed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class AuditConfig:
    sensitive_attributes: Sequence[str] = ()
    reference_rule: str | Mapping[str, str] = LARGEST_GROUP
    tau: float = 0.8
    min_group_size: int = 10
    # "symmetric": FPR/FNR ratios must sit inside [tau, 1/tau] like EP/PP.
    # "one_sided": only error rates above the reference (ratio > 1/tau) fail.
    error_rate_mode: str = "symmetric"
    metrics: Sequence[str] = METRICS

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        if self.min_group_size < 0:
            raise ValueError("min_group_size must be non-negative")
        if self.error_rate_mode not in ("symmetric", "one_sided"):
            raise ValueError(f"unknown error_rate_mode {self.error_rate_mode!r}")
        unknown = set(self.metrics) - set(METRICS)
        if unknown:
            raise ValueError(f"unknown metrics {sorted(unknown)}")
        self.sensitive_attributes = list(self.sensitive_attributes)
        self.metrics = list(self.metrics)
        if not isinstance(self.reference_rule, str):
            self.reference_rule = dict(self.reference_rule)
        elif self.reference_rule != LARGEST_GROUP:
            raise ValueError(f"unknown reference rule {self.reference_rule!r}")

    def to_dict(self):
        return {
            "sensitive_attributes": list(self.sensitive_attributes),
            "reference_rule": self.reference_rule,
            "tau": self.tau,
            "min_group_size": self.min_group_size,
            "error_rate_mode": self.error_rate_mode,
            "metrics": list(self.metrics),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class AttributeAudit:
    attribute: str
    reference: str
    slices: list[GroupSlice]
    rates: dict[str, GroupRates]
    records: list[DisparityRecord]
    suppressed: list[str] = field(default_factory=list)

    def record(self, group: str, metric: str) -> DisparityRecord:
        for r in self.records:
            if r.group == group and r.metric == metric:
                return r
        raise KeyError((group, metric))

    def to_dict(self):
        return {
            "attribute": self.attribute,
            "reference": self.reference,
            "slices": [s.to_dict() for s in self.slices],
            "rates": {g: self.rates[g].to_dict() for g in sorted(self.rates)},
            "records": [r.to_dict() for r in self.records],
            "suppressed": list(self.suppressed),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            attribute=d["attribute"],
            reference=d["reference"],
            slices=[GroupSlice.from_dict(s) for s in d["slices"]],
            rates={g: GroupRates.from_dict(r) for g, r in d["rates"].items()},
            records=[DisparityRecord.from_dict(r) for r in d["records"]],
            suppressed=list(d["suppressed"]),
        )


@dataclass
class AuditReport:
    config: AuditConfig
    attributes: list[AttributeAudit]
    verdict: str

    def attribute(self, name: str) -> AttributeAudit:
        for a in self.attributes:
            if a.attribute == name:
                return a
        raise KeyError(name)

    @property
    def records(self) -> list[DisparityRecord]:
        return [r for a in self.attributes for r in a.records]

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "attributes": [a.to_dict() for a in self.attributes],
            "verdict": self.verdict,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(AuditConfig.from_dict(d["config"]),
                   [AttributeAudit.from_dict(a) for a in d["attributes"]], d["verdict"])


def slice_by_group(y_true, y_pred, groups, attribute: str) -> list[GroupSlice]:
    """One confusion-matrix slice per distinct group token, lexicographic order."""
    t = np.asarray(y_true)
    p = np.asarray(y_pred)
    g = np.asarray([str(x) for x in groups], dtype=object)
    if not (t.shape == p.shape == g.shape):
        raise LengthMismatch(
            f"y_true={t.size}, y_pred={p.size}, groups={g.size} rows for {attribute!r}")
    n = t.size
    out = []
    for token in sorted(set(g.tolist())):
        mask = g == token
        cm = confusion(t[mask], p[mask])
        out.append(GroupSlice(attribute, token, cm, cm.total, cm.total / n))
    return out


def group_rates(slice_: GroupSlice, total_predicted_positive: int) -> GroupRates:
    cm = slice_.cm
    return GroupRates(
        ppr=safe_ratio(cm.predicted_positive, total_predicted_positive),
        ppgr=safe_ratio(cm.predicted_positive, slice_.size),
        fpr=safe_ratio(cm.fp, cm.fp + cm.tn),
        fnr=safe_ratio(cm.fn, cm.fn + cm.tp),
    )


def select_reference(slices: Sequence[GroupSlice], rule=LARGEST_GROUP) -> str:
    """Reference token for one attribute's slices.

    ``rule`` is ``"largest_group"`` or a mapping attribute -> token. Attributes
    absent from the mapping fall back to the largest group; ties on size go to
    the lexicographically smallest token.
    """
    if not slices:
        raise ValueError("no slices to choose a reference from")
    attribute = slices[0].attribute
    tokens = {s.group for s in slices}
    if not isinstance(rule, str) and attribute in rule:
        ref = str(rule[attribute])
        if ref not in tokens:
            raise UnknownReference(
                f"reference {ref!r} for {attribute!r} not among groups {sorted(tokens)}")
        return ref
    return min(slices, key=lambda s: (-s.size_ratio, s.group)).group


def verdict_for(ratio: float | None, tau: float = 0.8, one_sided: bool = False) -> str:
    if ratio is None:
        return INDETERMINATE
    upper = 1.0 / tau
    if ratio > upper + BOUND_EPS:
        return FAIL
    if not one_sided and ratio < tau - BOUND_EPS:
        return FAIL
    return PASS


def disparity(rates_by_group: Mapping[str, GroupRates], reference: str, metric: str,
              tau: float = 0.8, attribute: str = "", error_rate_mode: str = "symmetric",
              suppressed=()) -> list[DisparityRecord]:
    if reference not in rates_by_group:
        raise MissingReference(f"reference group {reference!r} has no rates")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    one_sided = error_rate_mode == "one_sided" and metric in ERROR_RATE_METRICS
    ref_rate = rates_by_group[reference].rate(metric)
    out = []
    for group in sorted(rates_by_group):
        rate = rates_by_group[group].rate(metric)
        if group == reference:
            ratio, verdict = 1.0, PASS
        else:
            if rate is None or ref_rate is None or ref_rate == 0:
                ratio = None
            else:
                ratio = rate / ref_rate
            verdict = verdict_for(ratio, tau, one_sided)
        out.append(DisparityRecord(attribute, group, reference, metric, rate, ref_rate,
                                   ratio, verdict, group in suppressed))
    return out


def audit_attribute(y_true, y_pred, groups, attribute: str, config: AuditConfig) -> AttributeAudit:
    slices = slice_by_group(y_true, y_pred, groups, attribute)
    total_pp = sum(s.cm.predicted_positive for s in slices)
    rates = {s.group: group_rates(s, total_pp) for s in slices}
    reference = select_reference(slices, config.reference_rule)
    suppressed = [s.group for s in slices if s.size < config.min_group_size]
    records = []
    for metric in config.metrics:
        records.extend(disparity(rates, reference, metric, config.tau, attribute,
                                 config.error_rate_mode, suppressed))
    return AttributeAudit(attribute, reference, slices, rates, records, suppressed)


def overall_verdict(records) -> str:
    """``fail`` if any unsuppressed record fails; else ``indeterminate`` if any
    unsuppressed record is indeterminate; else ``pass``."""
    live = [r for r in records if not r.suppressed]
    if any(r.verdict == FAIL for r in live):
        return FAIL
    if any(r.verdict == INDETERMINATE for r in live):
        return INDETERMINATE
    return PASS


def run_audit(y_true, y_pred, sensitive_columns: Mapping[str, Sequence], config: AuditConfig) -> AuditReport:
    attributes = config.sensitive_attributes
    for attr in attributes:
        if attr not in sensitive_columns:
            raise KeyError(f"no group column supplied for attribute {attr!r}")
    audits = [audit_attribute(y_true, y_pred, sensitive_columns[a], a, config)
              for a in attributes]
    return AuditReport(config, audits, overall_verdict(r for a in audits for r in a.records))


EXIT_CODES = {PASS: 0, FAIL: 2, INDETERMINATE: 3}


def exit_code(report: AuditReport) -> int:
    """CI-gate exit status: 0 all pass, 2 any failure, 3 indeterminate only."""
    return EXIT_CODES[report.verdict]
