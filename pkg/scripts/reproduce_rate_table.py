"""Audit the row-level fixture rebuilt from the published MLP group rates and
print the per-group rates and parity ratios next to the published ones.

Usage: python3 scripts/reproduce_rate_table.py [--format text|json|csv]
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from readmit_audit.evalmetrics import confusion, scores
from readmit_audit.fairaudit import AuditConfig, METRIC_RATE, run_audit
from readmit_audit.report import PipelineReport, make_metadata, render

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
CELLS = {"tp": (1, 1), "fp": (0, 1), "fn": (1, 0), "tn": (0, 0)}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--format", choices=("text", "json", "csv"), default="text")
    args = ap.parse_args(argv)
    published = json.loads((FIXTURES / "mimic_mlp_group_rates.json").read_text())
    counts = json.loads((FIXTURES / "mimic_mlp_group_counts.json").read_text())["counts"]

    for attribute in sorted(counts):
        # each attribute was solved as its own population
        t, p, g = [], [], []
        for group, cm in sorted(counts[attribute].items()):
            for cell, (yt, yp) in CELLS.items():
                t += [yt] * cm[cell]
                p += [yp] * cm[cell]
                g += [group] * cm[cell]
        t, p = np.array(t), np.array(p)
        config = AuditConfig([attribute], published["references"])
        audit = run_audit(t, p, {attribute: g}, config)
        cm = confusion(t, p)
        report = PipelineReport(make_metadata(None, "fixture", None, None), scores(cm), cm, audit)
        if args.format != "text":
            sys.stdout.write(render(report, args.format))
            continue
        print(render(report, "text"))
        print(f"quoted ratios for {attribute}:")
        for q in published["quoted_ratios"]:
            if q["attribute"] != attribute:
                continue
            rec = audit.attribute(attribute).record(q["group"], q["metric"])
            note = " (quoted value not reproducible from rounded rates)" \
                if q.get("rounding_exception") else ""
            print(f"  {q['metric']:<5} {q['group']:<12} quoted {q['ratio']:.3f}  "
                  f"recomputed {rec.ratio:.3f}  {rec.verdict}{note}")
        print()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
