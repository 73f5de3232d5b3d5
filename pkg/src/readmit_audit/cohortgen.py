"""Synthetic readmission cohorts with controlled group marginals and
injectable per-group bias, plus the exact rates each config implies.

Generative model, per row:

1. one group per attribute, drawn independently from that attribute's shares;
2. an outcome ``label ~ Bernoulli(base_positive_rate)``;
3. a *presenting class* that equals the label, except that positives present
   as negatives with probability ``noise_flip_rate_positive`` and negatives as
   positives with ``noise_flip_rate_negative``;
4. ``numeric_features`` unit-variance Gaussians centred at
   ``+-feature_signal_strength / 2`` according to the presenting class.

A classifier that recovers the presenting class therefore has FPR close to the
negative flip rate and FNR close to the positive flip rate of each group. The
manifest records, per group, the exact rates of the Bayes-optimal rule that
knows each row's groups, marginalised over the other attributes.
"""
from __future__ import annotations

import itertools
import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .errors import ConfigInvalid, UnknownAttribute
from .tabular import Dataset, FeatureSpec, save_schema, write_dataset

# Group shares of a MIMIC-III-like adult readmission cohort.
CLINICAL_SHARES = {
    "insurance": {"Government": 0.04, "Medicaid": 0.12, "Medicare": 0.43, "Private": 0.39,
                  "Self pay": 0.02},
    "gender": {"F": 0.43, "M": 0.57},
    "ethnicity": {"Asian": 0.03, "Black": 0.11, "Hispanic": 0.05, "Other": 0.13, "White": 0.69},
    "language": {"English": 0.67, "Non-English": 0.33},
}

LABEL_COLUMN = "readmitted"
ID_COLUMN = "row_id"


@dataclass
class GroupDistribution:
    attribute: str
    groups: dict[str, float]
    # Rescale shares to sum to exactly 1 (published shares are rounded).
    normalize: bool = False

    def __post_init__(self):
        self.groups = {str(k): float(v) for k, v in self.groups.items()}
        if not self.groups:
            raise ConfigInvalid(f"attribute {self.attribute!r} has no groups")
        if any(v <= 0 for v in self.groups.values()):
            raise ConfigInvalid(f"attribute {self.attribute!r} has a non-positive share")
        total = sum(self.groups.values())
        if self.normalize:
            self.groups = {k: v / total for k, v in self.groups.items()}
        elif abs(total - 1.0) > 1e-9:
            raise ConfigInvalid(f"shares for {self.attribute!r} sum to {total}, not 1")


@dataclass
class BiasInjection:
    attribute: str
    group: str
    base_positive_rate: float = 0.5
    feature_signal_strength: float = 1.0
    noise_flip_rate_positive: float = 0.0
    noise_flip_rate_negative: float = 0.0

    def __post_init__(self):
        for name in ("base_positive_rate", "noise_flip_rate_positive", "noise_flip_rate_negative"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigInvalid(f"{name}={v} outside [0, 1]")
        if self.feature_signal_strength < 0:
            raise ConfigInvalid("feature_signal_strength must be >= 0")


@dataclass
class CohortConfig:
    n_rows: int
    seed: int = 0
    distributions: list[GroupDistribution] = field(default_factory=list)
    injections: list[BiasInjection] = field(default_factory=list)
    balance_labels: bool = False
    numeric_features: int = 8
    # Parameters for rows not covered by any injection.
    base_positive_rate: float = 0.5
    feature_signal_strength: float = 1.0
    noise_flip_rate_positive: float = 0.0
    noise_flip_rate_negative: float = 0.0

    def validate(self) -> None:
        if self.n_rows < 1:
            raise ConfigInvalid("n_rows must be >= 1")
        if self.seed < 0:
            raise ConfigInvalid("seed must be non-negative")
        if self.numeric_features < 0:
            raise ConfigInvalid("numeric_features must be >= 0")
        self.default_params()  # range checks
        attrs = [d.attribute for d in self.distributions]
        if len(set(attrs)) != len(attrs):
            raise ConfigInvalid(f"duplicate attributes in {attrs}")
        groups = {d.attribute: d.groups for d in self.distributions}
        seen = set()
        for inj in self.injections:
            if inj.attribute not in groups:
                raise ConfigInvalid(f"injection on unknown attribute {inj.attribute!r}")
            if inj.group not in groups[inj.attribute]:
                raise ConfigInvalid(f"injection on unknown group {inj.attribute}={inj.group!r}")
            key = (inj.attribute, inj.group)
            if key in seen:
                raise ConfigInvalid(f"more than one injection for {key}")
            seen.add(key)
        if self.balance_labels:
            prevalence = sum(w * p.base_positive_rate for w, p in _cells(self))
            if prevalence <= 0 or prevalence >= 1:
                raise ConfigInvalid("balance_labels needs both label classes to occur")

    def default_params(self) -> BiasInjection:
        return BiasInjection("", "", self.base_positive_rate, self.feature_signal_strength,
                             self.noise_flip_rate_positive, self.noise_flip_rate_negative)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CohortConfig":
        d = dict(d)
        d["distributions"] = [GroupDistribution(**x) for x in d.get("distributions", [])]
        d["injections"] = [BiasInjection(**x) for x in d.get("injections", [])]
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from None

    @classmethod
    def load(cls, path) -> "CohortConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _row_params(config: CohortConfig, combo: dict[str, str]) -> BiasInjection:
    # A row in several injected groups takes the earliest-listed injection.
    for inj in config.injections:
        if combo.get(inj.attribute) == inj.group:
            return inj
    return config.default_params()


def _cells(config: CohortConfig):
    """(probability, params) for every combination of injected-attribute groups."""
    injected = [d for d in config.distributions
                if any(i.attribute == d.attribute for i in config.injections)]
    if not injected:
        yield 1.0, config.default_params()
        return
    for combo in itertools.product(*[list(d.groups.items()) for d in injected]):
        w = math.prod(share for _, share in combo)
        groups = {d.attribute: g for d, (g, _) in zip(injected, combo)}
        yield w, _row_params(config, groups)


def bayes_rule_rates(p: float, flip_pos: float, flip_neg: float, signal: float,
                     n_features: int) -> tuple[float, float]:
    """``(FPR, FNR)`` of the Bayes-optimal rule ``P(label=1 | x) >= 0.5`` for
    one cell with label prevalence ``p``.

    The features enter only through ``z = sum(x) / sqrt(d)``, which is
    ``N(+-c, 1)`` with ``c = signal * sqrt(d) / 2`` given the presenting class,
    so the rule is a threshold on ``z``.
    """
    c = signal * math.sqrt(n_features) / 2.0
    # posterior >= 1/2  <=>  a * r >= b, with r = exp(2 c z) the likelihood ratio
    a = p * (1 - flip_pos) - (1 - p) * flip_neg
    b = (1 - p) * (1 - flip_neg) - p * flip_pos
    if c == 0 or a == 0:
        hit_pos = hit_neg = 1.0 if a >= b else 0.0
    elif a > 0:
        if b <= 0:
            hit_pos = hit_neg = 1.0
        else:
            z_star = math.log(b / a) / (2 * c)
            hit_pos, hit_neg = float(ndtr(c - z_star)), float(ndtr(-c - z_star))
    else:
        if b >= 0:
            hit_pos = hit_neg = 0.0
        else:
            z_star = math.log(b / a) / (2 * c)
            hit_pos, hit_neg = float(ndtr(z_star - c)), float(ndtr(z_star + c))
    fpr = flip_neg * hit_pos + (1 - flip_neg) * hit_neg
    fnr = flip_pos * (1 - hit_neg) + (1 - flip_pos) * (1 - hit_pos)
    return fpr, fnr


@dataclass
class GroundTruthManifest:
    config: CohortConfig
    # attribute -> group -> expected quantities
    groups: dict[str, dict[str, dict[str, float]]]
    overall_positive_rate: float

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "groups": self.groups,
                "overall_positive_rate": self.overall_positive_rate}

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruthManifest":
        return cls(CohortConfig.from_dict(d["config"]), d["groups"], d["overall_positive_rate"])


def build_manifest(config: CohortConfig) -> GroundTruthManifest:
    """Exact expected per-group quantities implied by ``config``."""
    config.validate()
    d = config.numeric_features
    prevalence = 0.0
    for w, p in _cells(config):
        prevalence += w * p.base_positive_rate
    if config.balance_labels:
        w_pos, w_neg = 0.5 / prevalence, 0.5 / (1 - prevalence)
    else:
        w_pos = w_neg = 1.0

    out = {}
    for dist in config.distributions:
        others = [x for x in config.distributions
                  if x.attribute != dist.attribute
                  and any(i.attribute == x.attribute for i in config.injections)]
        entries = {}
        for group, share in dist.groups.items():
            pos = neg = fp = fn = 0.0
            for combo in itertools.product(*[list(x.groups.items()) for x in others]):
                w = share * math.prod(s for _, s in combo)
                groups = {x.attribute: g for x, (g, _) in zip(others, combo)}
                groups[dist.attribute] = group
                p = _row_params(config, groups)
                cell_pos = p.base_positive_rate * w_pos
                cell_prev = cell_pos / (cell_pos + (1 - p.base_positive_rate) * w_neg)
                fpr, fnr = bayes_rule_rates(cell_prev, p.noise_flip_rate_positive,
                                            p.noise_flip_rate_negative,
                                            p.feature_signal_strength, d)
                pos += w * p.base_positive_rate * w_pos
                neg += w * (1 - p.base_positive_rate) * w_neg
                fp += w * (1 - p.base_positive_rate) * w_neg * fpr
                fn += w * p.base_positive_rate * w_pos * fnr
            own = _row_params(config, {dist.attribute: group})
            size = pos + neg
            entries[group] = {
                "configured_share": share,
                "positive_rate": own.base_positive_rate,
                "noise_flip_rate_positive": own.noise_flip_rate_positive,
                "noise_flip_rate_negative": own.noise_flip_rate_negative,
                "feature_signal_strength": own.feature_signal_strength,
                "expected_share": size,
                "expected_label_rate": pos / size,
                "expected_ppgr": ((pos - fn) + fp) / size,
                "expected_fpr": fp / neg if neg > 0 else None,
                "expected_fnr": fn / pos if pos > 0 else None,
            }
        out[dist.attribute] = entries
    return GroundTruthManifest(config, out, 0.5 if config.balance_labels else prevalence)


def manifest_rates(manifest: GroundTruthManifest, attribute: str) -> dict[str, dict[str, float]]:
    if attribute not in manifest.groups:
        raise UnknownAttribute(f"attribute {attribute!r} not in manifest")
    return {g: dict(v) for g, v in manifest.groups[attribute].items()}


def cohort_schema(config: CohortConfig) -> tuple[FeatureSpec, ...]:
    return (
        FeatureSpec(ID_COLUMN, "categorical", "identifier"),
        *[FeatureSpec(d.attribute, "categorical", "sensitive") for d in config.distributions],
        *[FeatureSpec(f"x{j}", "numeric", "feature") for j in range(config.numeric_features)],
        FeatureSpec(LABEL_COLUMN, "boolean", "label"),
    )


def _draw_block(config: CohortConfig, rng: np.random.Generator, n: int):
    groups = {}
    for dist in config.distributions:
        tokens = np.array(list(dist.groups), dtype=object)
        groups[dist.attribute] = tokens[rng.choice(len(tokens), size=n, p=list(dist.groups.values()))]

    base = np.full(n, config.base_positive_rate)
    signal = np.full(n, config.feature_signal_strength)
    flip_pos = np.full(n, config.noise_flip_rate_positive)
    flip_neg = np.full(n, config.noise_flip_rate_negative)
    assigned = np.zeros(n, dtype=bool)
    for inj in config.injections:
        hit = (groups[inj.attribute] == inj.group) & ~assigned
        base[hit] = inj.base_positive_rate
        signal[hit] = inj.feature_signal_strength
        flip_pos[hit] = inj.noise_flip_rate_positive
        flip_neg[hit] = inj.noise_flip_rate_negative
        assigned |= hit

    label = rng.random(n) < base
    u = rng.random(n)
    presenting = np.where(label, u >= flip_pos, u < flip_neg)
    sign = np.where(presenting, 1.0, -1.0)
    x = rng.standard_normal((n, config.numeric_features)) + (sign * signal / 2.0)[:, None]
    return groups, label, x


def generate_cohort(config: CohortConfig) -> tuple[Dataset, GroundTruthManifest]:
    """Draw a cohort; deterministic in ``config`` (including row order).

    With ``balance_labels``, blocks of rows are drawn until ``ceil(n/2)``
    positives and ``floor(n/2)`` negatives are collected, keeping generation
    order, which leaves each class's conditional distribution untouched.
    """
    manifest = build_manifest(config)
    rng = np.random.default_rng(config.seed)
    n = config.n_rows
    if not config.balance_labels:
        groups, label, x = _draw_block(config, rng, n)
    else:
        need = {True: (n + 1) // 2, False: n // 2}
        parts = []
        while need[True] > 0 or need[False] > 0:
            g, lab, xb = _draw_block(config, rng, n)
            keep = np.zeros(lab.size, dtype=bool)
            for cls in (True, False):
                idx = np.flatnonzero(lab == cls)[:need[cls]]
                keep[idx] = True
                need[cls] -= idx.size
            parts.append(({k: v[keep] for k, v in g.items()}, lab[keep], xb[keep]))
        groups = {k: np.concatenate([p[0][k] for p in parts]) for k in parts[0][0]}
        label = np.concatenate([p[1] for p in parts])
        x = np.concatenate([p[2] for p in parts])

    columns = {ID_COLUMN: np.array([f"r{i:06d}" for i in range(n)], dtype=object)}
    columns.update(groups)
    for j in range(config.numeric_features):
        columns[f"x{j}"] = x[:, j].copy()
    columns[LABEL_COLUMN] = label.astype(np.int8)
    return Dataset(cohort_schema(config), columns), manifest


def write_cohort(dataset: Dataset, manifest: GroundTruthManifest, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"data": out / "cohort.csv", "schema": out / "schema.json",
             "manifest": out / "manifest.json"}
    write_dataset(dataset, paths["data"])
    save_schema(dataset.schema, paths["schema"])
    paths["manifest"].write_text(json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8")
    return paths


def clinical_config(n_rows: int, seed: int = 0, **kwargs) -> CohortConfig:
    """Config with the four clinical sensitive attributes at MIMIC-like shares."""
    dists = [GroupDistribution(a, s, normalize=True) for a, s in CLINICAL_SHARES.items()]
    return CohortConfig(n_rows=n_rows, seed=seed, distributions=dists, **kwargs)


def symmetric_config(n_rows: int, seed: int, attributes: Sequence[str] = ("gender", "language"),
                     **kwargs) -> CohortConfig:
    """Two equal-share groups per attribute and no injections."""
    dists = [GroupDistribution(a, {"A": 0.5, "B": 0.5}) for a in attributes]
    return CohortConfig(n_rows=n_rows, seed=seed, distributions=dists, **kwargs)
