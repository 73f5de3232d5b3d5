import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from readmit_audit.cohortgen import (CLINICAL_SHARES, LABEL_COLUMN, BiasInjection, CohortConfig,
                                     GroundTruthManifest, GroupDistribution, bayes_rule_rates,
                                     build_manifest, clinical_config, generate_cohort,
                                     manifest_rates, symmetric_config, write_cohort)
from readmit_audit.errors import ConfigInvalid, UnknownAttribute
from readmit_audit.tabular import load_dataset, load_schema


def gender_config(n=2000, seed=0, **kwargs):
    return CohortConfig(n_rows=n, seed=seed,
                        distributions=[GroupDistribution("gender", {"F": 0.43, "M": 0.57})],
                        **kwargs)


def test_male_share_within_binomial_bound():
    ds, _ = generate_cohort(gender_config(10_000, seed=7))
    share = float(np.mean(ds.columns["gender"] == "M"))
    assert abs(share - 0.57) <= 3 * math.sqrt(0.57 * 0.43 / 10_000)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=15, deadline=None)
def test_marginals_converge(seed):
    n = 4000
    ds, _ = generate_cohort(clinical_config(n, seed=seed, numeric_features=1))
    for attribute, shares in CLINICAL_SHARES.items():
        total = sum(shares.values())
        for group, s in shares.items():
            p = s / total
            # 4 sigma keeps the family of ~16 checks from flaking
            assert abs(np.mean(ds.columns[attribute] == group) - p) <= 4 * math.sqrt(p * (1 - p) / n)


def test_generation_is_deterministic():
    config = clinical_config(500, seed=3, injections=[BiasInjection("gender", "F", 0.3)])
    a, ma = generate_cohort(config)
    b, mb = generate_cohort(config)
    for name in a.columns:
        assert np.array_equal(a.columns[name], b.columns[name])
    assert ma.to_dict() == mb.to_dict()


def test_different_seeds_differ():
    a, _ = generate_cohort(gender_config(seed=1))
    b, _ = generate_cohort(gender_config(seed=2))
    assert not np.array_equal(a.columns["x0"], b.columns["x0"])


@given(st.integers(1, 300), st.integers(0, 1000), st.floats(0.05, 0.95))
@settings(max_examples=40, deadline=None)
def test_balance_labels(n, seed, base):
    ds, manifest = generate_cohort(gender_config(n, seed, balance_labels=True,
                                                 base_positive_rate=base, numeric_features=2))
    pos = int(ds.columns[LABEL_COLUMN].sum())
    assert ds.n_rows == n and abs(pos - (n - pos)) <= 1
    assert manifest.overall_positive_rate == 0.5


def test_injection_passthrough():
    config = gender_config(injections=[BiasInjection("gender", "F", base_positive_rate=0.6),
                                       BiasInjection("gender", "M", base_positive_rate=0.4)])
    rates = manifest_rates(build_manifest(config), "gender")
    assert rates["F"]["positive_rate"] == 0.6
    assert rates["M"]["positive_rate"] == 0.4
    assert rates["F"]["expected_label_rate"] == pytest.approx(0.6)


def test_symmetric_config_gives_identical_entries():
    rates = manifest_rates(build_manifest(symmetric_config(100, 0)), "gender")
    a, b = rates["A"], rates["B"]
    assert {k: v for k, v in a.items()} == {k: v for k, v in b.items()}


def test_insurance_manifest_entries():
    rates = manifest_rates(build_manifest(clinical_config(100)), "insurance")
    assert set(rates) == set(CLINICAL_SHARES["insurance"])
    total = sum(CLINICAL_SHARES["insurance"].values())
    for g, s in CLINICAL_SHARES["insurance"].items():
        assert rates[g]["configured_share"] == pytest.approx(s / total)


def test_unknown_attribute():
    with pytest.raises(UnknownAttribute):
        manifest_rates(build_manifest(gender_config()), "insurance")


@pytest.mark.parametrize("make", [
    lambda: GroupDistribution("g", {"a": 0.5, "b": 0.6}),
    lambda: GroupDistribution("g", {"a": 0.0, "b": 1.0}),
    lambda: GroupDistribution("g", {}),
    lambda: BiasInjection("g", "a", base_positive_rate=1.5),
    lambda: BiasInjection("g", "a", feature_signal_strength=-1),
    lambda: gender_config(n=0).validate(),
    lambda: gender_config(injections=[BiasInjection("race", "a")]).validate(),
    lambda: gender_config(injections=[BiasInjection("gender", "X")]).validate(),
    lambda: gender_config(injections=[BiasInjection("gender", "F"),
                                      BiasInjection("gender", "F")]).validate(),
    lambda: gender_config(balance_labels=True, base_positive_rate=0.0).validate(),
    lambda: CohortConfig.from_dict({"n_rows": 5, "colour": "red"}),
])
def test_config_invalid(make):
    with pytest.raises(ConfigInvalid):
        make()


def test_normalize_rescales_rounded_shares():
    d = GroupDistribution("insurance", CLINICAL_SHARES["ethnicity"], normalize=True)
    assert math.isclose(sum(d.groups.values()), 1.0)


def test_config_round_trip(tmp_path):
    config = clinical_config(50, seed=4, injections=[BiasInjection("language", "English", 0.2)])
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config.to_dict()))
    assert CohortConfig.load(path) == config


def test_write_cohort_files(tmp_path):
    ds, manifest = generate_cohort(gender_config(40, numeric_features=3))
    paths = write_cohort(ds, manifest, tmp_path)
    again = load_dataset(paths["data"], load_schema(paths["schema"]))
    assert again.columns["gender"].tolist() == ds.columns["gender"].tolist()
    np.testing.assert_allclose(again.columns["x2"], ds.columns["x2"], rtol=1e-15)
    doc = json.loads(paths["manifest"].read_text())
    assert GroundTruthManifest.from_dict(doc).groups == manifest.groups


def monte_carlo_rates(p, flip_pos, flip_neg, signal, d, n, seed):
    """Empirical FPR/FNR of the exact posterior rule on simulated rows."""
    rng = np.random.default_rng(seed)
    label = rng.random(n) < p
    u = rng.random(n)
    presenting = np.where(label, u >= flip_pos, u < flip_neg)
    x = rng.standard_normal((n, d)) + np.where(presenting, signal / 2, -signal / 2)[:, None]
    # class-conditional likelihoods of the presenting class, then mix by flips
    log_lp = -0.5 * ((x - signal / 2) ** 2).sum(1)
    log_ln = -0.5 * ((x + signal / 2) ** 2).sum(1)
    lik1 = p * ((1 - flip_pos) * np.exp(log_lp) + flip_pos * np.exp(log_ln))
    lik0 = (1 - p) * (flip_neg * np.exp(log_lp) + (1 - flip_neg) * np.exp(log_ln))
    pred = lik1 >= lik0
    fpr = np.mean(pred[~label])
    fnr = np.mean(~pred[label])
    return fpr, fnr


@pytest.mark.parametrize("p,fp,fn,signal,d", [
    (0.5, 0.0, 0.0, 1.0, 4),
    (0.5, 0.1, 0.3, 2.0, 8),
    (0.3, 0.2, 0.05, 1.0, 2),
    (0.7, 0.0, 0.4, 0.5, 3),
    (0.5, 0.6, 0.6, 1.5, 2),
])
def test_bayes_rule_rates_match_monte_carlo(p, fp, fn, signal, d):
    n = 200_000
    fpr, fnr = bayes_rule_rates(p, fp, fn, signal, d)
    mc_fpr, mc_fnr = monte_carlo_rates(p, fp, fn, signal, d, n, seed=1)
    # binomial standard error on the smaller class, 5 sigma
    tol = 5 * math.sqrt(0.25 / (n * min(p, 1 - p)))
    assert abs(fpr - mc_fpr) <= tol and abs(fnr - mc_fnr) <= tol


def test_bayes_rule_rates_degenerate_signal():
    # no signal: the rule predicts the majority posterior class for everyone
    assert bayes_rule_rates(0.7, 0.0, 0.0, 0.0, 8) == (1.0, 0.0)
    assert bayes_rule_rates(0.3, 0.0, 0.0, 0.0, 8) == (0.0, 1.0)


def test_higher_negative_flip_raises_manifest_fpr():
    config = gender_config(injections=[BiasInjection("gender", "F", noise_flip_rate_negative=0.3)],
                           noise_flip_rate_negative=0.1, feature_signal_strength=2.0)
    rates = manifest_rates(build_manifest(config), "gender")
    assert rates["F"]["expected_fpr"] > rates["M"]["expected_fpr"]


def test_earliest_injection_wins():
    config = CohortConfig(
        n_rows=3000, seed=0, numeric_features=1,
        distributions=[GroupDistribution("gender", {"F": 0.5, "M": 0.5}),
                       GroupDistribution("language", {"E": 0.5, "N": 0.5})],
        injections=[BiasInjection("gender", "F", base_positive_rate=0.9),
                    BiasInjection("language", "N", base_positive_rate=0.1)])
    ds, manifest = generate_cohort(config)
    both = (ds.columns["gender"] == "F") & (ds.columns["language"] == "N")
    assert ds.columns[LABEL_COLUMN][both].mean() > 0.8
    # N rows: half are F (0.9), half are M (0.1)
    assert manifest.groups["language"]["N"]["expected_label_rate"] == pytest.approx(0.5)
