import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from fairaudit.errors import AllStrataUndefinedError, EmptyGroupError, LengthMismatchError, UnknownStratumError
from fairaudit.metrics import (
    GROUND_TRUTH,
    PREDICTED,
    FairnessReport,
    OutcomeVector,
    accuracy,
    cdd_stratum,
    cdd_weighted,
    disparate_impact,
    dp_ratio,
    full_report,
    positive_rate,
    spd,
)

U, P = 0, 1


def _from_rates(ru, rp, n=20):
    """Outcomes/groups with n members per group and the given positive counts."""
    ku, kp = round(ru * n), round(rp * n)
    out = [1] * ku + [0] * (n - ku) + [1] * kp + [0] * (n - kp)
    groups = [U] * n + [P] * n
    return out, groups


def test_positive_rate_examples():
    assert positive_rate([1, 1, 0, 0], [U, U, P, P], U) == 1.0
    assert positive_rate([1, 0, 1, 0], [U, U, P, P], P) == 0.5
    out = [1, 0, 0, 1, 1, 0]
    groups = [U, U, U, P, P, P]
    assert positive_rate(out, groups, U) == pytest.approx(float(oracles.rate(out, groups, U)))
    assert positive_rate(out, groups, U) == pytest.approx(1 / 3)


def test_positive_rate_empty_group():
    with pytest.raises(EmptyGroupError):
        positive_rate([1, 0], [P, P], U)


@pytest.mark.parametrize("ru,rp,expected", [(0.5, 0.5, 1.0), (0.25, 0.5, 0.5), (0.0, 0.0, 1.0), (0.0, 0.4, 0.0)])
def test_dp_ratio_examples(ru, rp, expected):
    out, groups = _from_rates(ru, rp)
    assert dp_ratio(out, groups) == pytest.approx(expected)
    assert dp_ratio(out, groups) == pytest.approx(float(oracles.dp(out, groups)))


def test_spd_and_disparate_impact():
    out, groups = _from_rates(0.5, 0.5)
    assert spd(out, groups) == 0.0 and disparate_impact(out, groups) == 1.0
    out, groups = _from_rates(0.2, 0.4)
    assert spd(out, groups) == pytest.approx(-0.2)
    assert disparate_impact(out, groups) == pytest.approx(0.5)
    out, groups = _from_rates(0.4, 0.0)
    assert math.isinf(disparate_impact(out, groups))
    out, groups = _from_rates(0.0, 0.0)
    assert disparate_impact(out, groups) == 1.0


def test_cdd_stratum_examples():
    # equal unprivileged share (0.3) among + and -
    out = [1] * 10 + [0] * 10
    groups = [U] * 3 + [P] * 7 + [U] * 3 + [P] * 7
    assert cdd_stratum(out, groups, ["r"] * 20, "r") == (pytest.approx(1.0), True)
    # among +, 1 of 4 unprivileged; among -, 2 of 4
    out = [1, 1, 1, 1, 0, 0, 0, 0]
    groups = [U, P, P, P, U, U, P, P]
    ratio, defined = cdd_stratum(out, groups, ["r"] * 8, "r")
    assert defined and ratio == pytest.approx(0.5)
    ratio, defined = cdd_stratum([1, 1], [U, P], ["r", "r"], "r")
    assert not defined and math.isnan(ratio)
    with pytest.raises(UnknownStratumError):
        cdd_stratum([1, 0], [U, P], ["r", "r"], "s")


def test_cdd_weighted_examples():
    # stratum a (10 rows) ratio 1.0, stratum b (30 rows) ratio 0.5
    a_out = [1] * 5 + [0] * 5
    a_groups = [U, P, P, P, P, U, P, P, P, P]
    b_out = [1] * 10 + [0] * 20
    b_groups = [U] * 8 + [P] * 2 + [U] * 8 + [P] * 12
    out = a_out + b_out
    groups = a_groups + b_groups
    strata = ["a"] * 10 + ["b"] * 30
    summary, per = cdd_weighted(out, groups, strata)
    assert summary == pytest.approx(0.625)
    assert per["a"].weight == pytest.approx(0.25) and per["b"].weight == pytest.approx(0.75)
    # one undefined stratum is dropped and the rest renormalized
    c_out = [1] * 5 + [0] * 5
    c_groups = [U, U, P, P, P, U, U, U, P, P]  # ratio 0.4/0.6
    summary, per = cdd_weighted(c_out + [1, 1, 1], c_groups + [U, P, U], ["c"] * 10 + ["d"] * 3)
    assert summary == pytest.approx(2 / 3)
    assert not per["d"].defined and per["d"].weight == 0.0
    assert per["c"].weight == 1.0


def test_cdd_weighted_constant_ratio():
    out = [1, 0, 1, 0] * 3
    groups = [U, U, P, P] * 3
    summary, _ = cdd_weighted(out, groups, ["a"] * 4 + ["b"] * 4 + ["c"] * 4)
    assert summary == pytest.approx(1.0)


def test_cdd_weighted_all_undefined():
    with pytest.raises(AllStrataUndefinedError):
        cdd_weighted([1, 1, 0, 0], [U, P, U, P], ["a", "a", "b", "b"])


def test_accuracy_examples():
    truth = OutcomeVector([1, 0, 1, 1], GROUND_TRUTH)
    assert accuracy(OutcomeVector([1, 0, 1, 1]), truth) == 1.0
    assert accuracy(OutcomeVector([0, 1, 0, 0]), truth) == 0.0
    assert accuracy(OutcomeVector([1, 0, 0, 1]), truth) == 0.75
    with pytest.raises(LengthMismatchError):
        accuracy([1, 0], [1])
    with pytest.raises(ValueError):
        accuracy(truth, truth)


def test_full_report_ground_truth_has_no_accuracy(fixture1):
    r = full_report(fixture1.labels, fixture1.protected, fixture1.explanatory)
    assert r.accuracy is None and r.kind == GROUND_TRUTH


def test_full_report_fixture1(fixture1):
    r = full_report(fixture1.labels, fixture1.protected, fixture1.explanatory)
    assert r.dp == pytest.approx(0.50)
    assert r.cdd_weighted == pytest.approx(0.625)
    assert r.n == 40 and sum(r.counts.values()) == 40


def test_full_report_matches_components(fixture2):
    rng = np.random.default_rng(0)
    pred = OutcomeVector(rng.integers(0, 2, fixture2.n_instances), PREDICTED)
    truth = OutcomeVector(fixture2.labels, GROUND_TRUTH)
    r = full_report(pred, fixture2.protected, fixture2.explanatory, truth=truth)
    assert r.dp == dp_ratio(pred, fixture2.protected)
    assert r.spd == spd(pred, fixture2.protected)
    assert r.disparate_impact == disparate_impact(pred, fixture2.protected)
    assert r.cdd_weighted == cdd_weighted(pred, fixture2.protected, fixture2.explanatory)[0]
    assert r.accuracy == accuracy(pred, truth)


def test_report_json_roundtrip(fixture1):
    r = full_report(fixture1.labels, fixture1.protected, fixture1.explanatory)
    again = FairnessReport.from_dict(json.loads(json.dumps(r.to_dict())))
    assert again.to_dict() == r.to_dict()
    out, groups = _from_rates(0.4, 0.0)
    r = full_report(out, groups, ["a"] * 40)
    assert json.loads(json.dumps(r.to_dict()))["disparate_impact"] == "inf"
    assert math.isinf(FairnessReport.from_dict(r.to_dict()).disparate_impact)


small_instances = st.integers(2, 30).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
        st.lists(st.sampled_from("abc"), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
    )
)


def _check_against_oracle(out, groups, strata, truth):
    if len(set(groups)) < 2:
        with pytest.raises(EmptyGroupError):
            dp_ratio(out, groups)
        return
    assert dp_ratio(out, groups) == pytest.approx(float(oracles.dp(out, groups)), abs=1e-12)
    ru, rp = oracles.rate(out, groups, U), oracles.rate(out, groups, P)
    assert spd(out, groups) == pytest.approx(float(ru - rp), abs=1e-12)
    summary, per = oracles.cdd(out, groups, strata)
    if summary is None:
        with pytest.raises(AllStrataUndefinedError):
            cdd_weighted(out, groups, strata)
    else:
        got, got_per = cdd_weighted(out, groups, strata)
        assert got == pytest.approx(float(summary), abs=1e-12)
        for r, ratio in per.items():
            assert got_per[r].defined == (ratio is not None)
            if ratio is not None:
                assert got_per[r].ratio == pytest.approx(float(ratio), abs=1e-12)
    assert accuracy(out, truth) == pytest.approx(float(oracles.accuracy(out, truth)), abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(small_instances)
def test_metrics_equal_counting_oracle(case):
    _check_against_oracle(*case)


@settings(max_examples=200, deadline=None)
@given(small_instances, st.randoms(use_true_random=False))
def test_metric_ranges_and_symmetries(case, rnd):
    out, groups, strata, _ = case
    if len(set(groups)) < 2:
        return
    d = dp_ratio(out, groups)
    assert 0.0 <= d <= 1.0
    swapped = [1 - g for g in groups]
    assert dp_ratio(out, swapped) == pytest.approx(d)
    assert spd(out, swapped) == pytest.approx(-spd(out, groups))
    di = disparate_impact(out, groups)
    di_swapped = disparate_impact(out, swapped)
    if 0 < di < math.inf:
        assert di_swapped == pytest.approx(1 / di)
    if d == 1.0:
        assert spd(out, groups) == pytest.approx(0.0)
    if abs(spd(out, groups)) < 1e-15:
        assert d == pytest.approx(1.0)
    perm = list(range(len(out)))
    rnd.shuffle(perm)
    assert dp_ratio([out[i] for i in perm], [groups[i] for i in perm]) == pytest.approx(d)
    try:
        summary, per = cdd_weighted(out, groups, strata)
    except AllStrataUndefinedError:
        return
    assert 0.0 <= summary <= 1.0
    assert all(0.0 <= c.ratio <= 1.0 for c in per.values() if c.defined)
    assert sum(c.weight for c in per.values() if c.defined) == pytest.approx(1.0)
    shuffled = cdd_weighted([out[i] for i in perm], [groups[i] for i in perm], [strata[i] for i in perm])[0]
    assert shuffled == pytest.approx(summary)


def test_single_stratum_equals_stratum_ratio():
    out = [1, 1, 1, 0, 0, 0, 1, 0]
    groups = [U, P, P, U, U, P, U, P]
    strata = ["all"] * 8
    summary, _ = cdd_weighted(out, groups, strata)
    assert summary == pytest.approx(cdd_stratum(out, groups, strata, "all")[0])


def test_full_report_all_strata_undefined():
    out = [1, 1, 1, 1]
    groups = [U, P, U, P]
    strata = ["a", "a", "b", "b"]
    with pytest.raises(AllStrataUndefinedError):
        full_report(out, groups, strata)
    r = full_report(out, groups, strata, undefined_cdd="nan")
    assert math.isnan(r.cdd_weighted) and r.dp == 1.0
    assert not any(c.defined for c in r.cdd_per_stratum.values())
