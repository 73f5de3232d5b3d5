"""Search for integer confusion counts that reproduce a table of published
per-group rates, and write them out as an audit fixture.

The published table gives, per attribute and group, a size ratio and four
rates (ppr, ppgr, fpr, fnr) rounded to two decimals, plus a list of quoted
disparity ratios.  For each attribute we look for a population of N rows,
partitioned into that attribute's groups, such that

* every recomputed size ratio and rate rounds to the published value
  (|value - published| < 0.005), and
* every quoted disparity ratio is reproduced within RATIO_TOL.  Quoted
  ratios flagged as rounding exceptions target the ratio recomputed from the
  published rates instead.

Every condition is linear in the integer counts.  A rate band reads
|fp - fpr * (fp + tn)| <= h * (fp + tn).  An EP ratio is pp_g / pp_ref,
linear already.  For the other metrics the reference group's rate is pinned
to a constant v (the published value, or a value moved by 0.001 steps inside
its rounding band if the published one admits no solution), which makes
"ratio within RATIO_TOL" linear in the other group's counts.  The search is
therefore an exact integer program, solved with HiGHS via scipy's milp,
minimising N.

Attributes are solved independently: the published table is not consistent
enough across attributes to share one global confusion matrix.

Usage: python3 scripts/build_rate_fixture.py [--out PATH]
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

HERE = Path(__file__).resolve().parent
RATES = HERE.parent / "tests" / "fixtures" / "mimic_mlp_group_rates.json"
OUT = HERE.parent / "tests" / "fixtures" / "mimic_mlp_group_counts.json"
H = 0.00499  # strictly inside the rounding interval
RATIO_TOL = 0.015  # quoted-ratio band used by the search (tests allow 0.02)
METRIC_RATE = {"EP": "ppr", "PP": "ppgr", "FPRP": "fpr", "FNRP": "fnr"}
CELLS = ("tp", "fp", "fn", "tn")
PIN_STEPS = (0, 1, -1, 2, -2, 3, -3, 4, -4)


def ratio_target(doc, q):
    if not q.get("rounding_exception"):
        return q["ratio"]
    rate = METRIC_RATE[q["metric"]]
    groups = doc["groups"][q["attribute"]]
    return groups[q["group"]][rate] / groups[doc["references"][q["attribute"]]][rate]


def build_program(doc, attribute, pins):
    """Variables: N, then (tp, fp, fn, tn) per group in sorted order."""
    rates = doc["groups"][attribute]
    ref = doc["references"][attribute]
    groups = sorted(rates)
    nvar = 1 + 4 * len(groups)

    def var(g, cell):
        return 1 + 4 * groups.index(g) + CELLS.index(cell)

    def parts(g):
        n = [(var(g, c), 1.0) for c in CELLS]
        pp = [(var(g, "tp"), 1.0), (var(g, "fp"), 1.0)]
        all_pp = [(var(h, c), 1.0) for h in groups for c in ("tp", "fp")]
        pos = [(var(g, "tp"), 1.0), (var(g, "fn"), 1.0)]
        neg = [(var(g, "fp"), 1.0), (var(g, "tn"), 1.0)]
        return {"size_ratio": (n, [(0, 1.0)]), "ppr": (pp, all_pp), "ppgr": (pp, n),
                "fpr": ([(var(g, "fp"), 1.0)], neg), "fnr": ([(var(g, "fn"), 1.0)], pos)}

    rows, lo, hi = [], [], []

    def add(coefs, lower=-np.inf, upper=np.inf):
        row = np.zeros(nvar)
        for i, c in coefs:
            row[i] += c
        rows.append(row)
        lo.append(lower)
        hi.append(upper)

    def band(num, den, low, high):
        """low * den <= num <= high * den."""
        add(num + [(i, -high * c) for i, c in den], upper=0.0)
        add(num + [(i, -low * c) for i, c in den], lower=0.0)

    add([(var(g, c), 1.0) for g in groups for c in CELLS] + [(0, -1.0)], 0.0, 0.0)
    for g in groups:
        p = parts(g)
        for rate, (num, den) in p.items():
            band(num, den, rates[g][rate] - H, rates[g][rate] + H)
        add(p["fnr"][1], lower=1)  # fnr defined
        add(p["fpr"][1], lower=1)  # fpr defined
    for rate, v in pins.items():
        num, den = parts(ref)[rate]
        band(num, den, v, v)
    for q in doc["quoted_ratios"]:
        if q["attribute"] != attribute:
            continue
        rate = METRIC_RATE[q["metric"]]
        target = ratio_target(doc, q)
        num, den = parts(q["group"])[rate]
        if rate == "ppr":
            scale, den = 1.0, parts(ref)["ppr"][0]
        else:
            scale = pins[rate]
        band(num, den, (target - RATIO_TOL) * scale, (target + RATIO_TOL) * scale)

    c = np.zeros(nvar)
    c[0] = 1.0
    return c, LinearConstraint(np.array(rows), np.array(lo), np.array(hi)), groups, var


def run(doc, attribute, pins):
    c, cons, groups, var = build_program(doc, attribute, pins)
    res = milp(c, constraints=cons, integrality=np.ones_like(c),
               bounds=Bounds(np.zeros_like(c), np.full_like(c, 1e6)),
               options={"time_limit": 60.0})
    if res.x is None:
        return None
    x = np.round(res.x).astype(int)
    return {g: {cell: int(x[var(g, cell)]) for cell in CELLS} for g in groups}


def solve_attribute(doc, attribute):
    """Counts for one attribute, plus the reference pins that were used."""
    ref_rates = doc["groups"][attribute][doc["references"][attribute]]
    needed = sorted({METRIC_RATE[q["metric"]] for q in doc["quoted_ratios"]
                     if q["attribute"] == attribute} - {"ppr"})
    # Try pins closest to the published values first.
    candidates = [{}]
    for rate in needed:
        candidates = [{**p, rate: round(ref_rates[rate] + 0.001 * k, 3)}
                      for p in candidates for k in PIN_STEPS]
    candidates.sort(key=lambda p: sum(abs(v - ref_rates[r]) for r, v in p.items()))
    for pins in candidates:
        counts = run(doc, attribute, pins)
        if counts is not None:
            return counts, pins
    raise SystemExit(f"no integer solution for {attribute}")


def recompute(counts):
    """Per-group size ratio and rates from confusion counts."""
    N = sum(sum(cm.values()) for cm in counts.values())
    PP = sum(cm["tp"] + cm["fp"] for cm in counts.values())
    out = {}
    for g, cm in counts.items():
        n = sum(cm.values())
        out[g] = {"size_ratio": n / N, "ppr": (cm["tp"] + cm["fp"]) / PP,
                  "ppgr": (cm["tp"] + cm["fp"]) / n, "fpr": cm["fp"] / (cm["fp"] + cm["tn"]),
                  "fnr": cm["fn"] / (cm["fn"] + cm["tp"])}
    return out


def check(doc, attribute, counts):
    """Worst gap to the published rates and to the quoted ratio targets."""
    got = recompute(counts)
    pub = doc["groups"][attribute]
    worst = max(abs(got[g][k] - pub[g][k]) for g in pub for k in got[g])
    ref = doc["references"][attribute]
    worst_ratio = 0.0
    for q in doc["quoted_ratios"]:
        if q["attribute"] == attribute:
            rate = METRIC_RATE[q["metric"]]
            ratio = got[q["group"]][rate] / got[ref][rate]
            worst_ratio = max(worst_ratio, abs(ratio - ratio_target(doc, q)))
    return worst, worst_ratio


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(OUT))
    args = ap.parse_args(argv)
    doc = json.loads(RATES.read_text())
    result = {}
    for attribute in sorted(doc["groups"]):
        counts, pins = solve_attribute(doc, attribute)
        worst, worst_ratio = check(doc, attribute, counts)
        n = sum(sum(cm.values()) for cm in counts.values())
        print(f"{attribute}: N={n} pins={pins} rate gap {worst:.5f} ratio gap {worst_ratio:.5f}",
              flush=True)
        assert worst < 0.005 and worst_ratio <= RATIO_TOL + 1e-9
        result[attribute] = counts
    Path(args.out).write_text(json.dumps({"counts": result}, indent=1) + "\n")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
