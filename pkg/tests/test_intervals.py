import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import mp_oracle
from sdci.dist import LocationFamily
from sdci.errors import ConfigError, DomainError
from sdci.intervals import (
    Interval, Kind, MarginalFamily, SignDecision, cbar_delta, classify, classify_outside,
    interval_bounds, marginal_interval, mqc_case, mqc_psi_breakpoints, qc_constants,
    sign_threshold,
)
from sdci.oracle import GridSpec, acceptance_region, invert_acceptance_grid

FAMILIES = [
    MarginalFamily.symmetric(),
    MarginalFamily.one_sided(),
    MarginalFamily.pratt(),
    MarginalFamily.qc(0.85),
    MarginalFamily.mqc(0.85),
    MarginalFamily.mqc(0.6),
    MarginalFamily.mqc(0.995),
    MarginalFamily.mqc_delta(0.5),
]
FAMILY_IDS = [f"{f.kind.value}-{f.psi or f.delta or ''}" for f in FAMILIES]
ALPHAS = [0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5]
Y_GRID = np.round(np.arange(-6.0, 6.0001, 0.01), 10)


def is_subset(inner: Interval, outer: Interval, tol=1e-9) -> bool:
    # endpoints within tol count as equal, then closedness decides
    def end_ok(o, i, o_closed, i_closed, sign):
        if o == i or abs(o - i) <= tol:
            return o_closed or not i_closed or o != i
        return sign * (i - o) > 0

    return (end_ok(outer.lower, inner.lower, outer.lower_closed, inner.lower_closed, 1)
            and end_ok(outer.upper, inner.upper, outer.upper_closed, inner.upper_closed, -1))


# ---------------------------------------------------------------- Interval


def test_interval_membership_respects_closedness():
    iv = Interval(0.0, 2.0, True, False)
    assert 0.0 in iv and 1.0 in iv
    assert 2.0 not in iv and -1e-300 not in iv


def test_interval_negation_swaps_closedness():
    iv = -Interval(0.0, 2.0, True, False)
    assert (iv.lower, iv.upper, iv.lower_closed, iv.upper_closed) == (-2.0, 0.0, False, True)


def test_infinite_ends_are_open():
    iv = Interval(-math.inf, 1.0, True, True)
    assert not iv.lower_closed and iv.upper_closed
    assert iv.length == math.inf


@pytest.mark.parametrize("lo,hi", [(1.0, 0.0), (math.nan, 1.0), (0.0, math.nan)])
def test_interval_rejects_bad_bounds(lo, hi):
    with pytest.raises(DomainError):
        Interval(lo, hi)


def test_interval_scaled():
    iv = Interval(1.0, 3.0, True, False).scaled(2.0)
    assert (iv.lower, iv.upper, iv.lower_closed, iv.upper_closed) == (2.0, 6.0, True, False)
    with pytest.raises(DomainError):
        iv.scaled(-1.0)


# ---------------------------------------------------------------- configuration


@pytest.mark.parametrize("make", [
    lambda: MarginalFamily.qc(0.4),
    lambda: MarginalFamily.mqc(1.0),
    lambda: MarginalFamily(Kind.QC),
    lambda: MarginalFamily(Kind.SYMMETRIC, psi=0.8),
    lambda: MarginalFamily.mqc_delta(0.0),
    lambda: MarginalFamily.mqc_delta(math.inf),
    lambda: MarginalFamily(Kind.PRATT, delta=1.0),
    lambda: MarginalFamily.from_name("bonferroni"),
])
def test_invalid_family_configuration(make):
    with pytest.raises(ConfigError):
        make()


def test_from_name_round_trip():
    fam = MarginalFamily.from_name("mqc", psi=0.85)
    assert fam == MarginalFamily.mqc(0.85)
    assert fam.describe() == {"family": "mqc", "psi": 0.85}
    assert MarginalFamily.mqc_delta(0.5).target_delta == 0.5
    assert MarginalFamily.qc(0.7).target_delta == 0.0


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
def test_alpha_out_of_range(alpha):
    with pytest.raises(DomainError):
        interval_bounds(MarginalFamily.symmetric(), [0.0], alpha)


@pytest.mark.parametrize("fam", FAMILIES[1:], ids=FAMILY_IDS[1:])
def test_non_symmetric_families_need_alpha_below_half(fam):
    with pytest.raises(DomainError):
        interval_bounds(fam, [0.0], 0.5)
    with pytest.raises(DomainError):
        sign_threshold(fam, [0.1, 0.6])
    assert interval_bounds(MarginalFamily.symmetric(), [0.0], 0.8).upper[0] > 0


def test_non_finite_observation_rejected():
    with pytest.raises(DomainError):
        interval_bounds(MarginalFamily.symmetric(), [math.inf], 0.05)


# ---------------------------------------------------------------- worked examples


def test_symmetric_at_zero():
    c = mp_oracle.upper_quantile(0.025)
    iv = marginal_interval(MarginalFamily.symmetric(), 0.0, 0.05)
    assert iv.lower == pytest.approx(-c, abs=1e-12)
    assert iv.upper == pytest.approx(c, abs=1e-12)
    assert not iv.lower_closed and not iv.upper_closed
    assert classify(iv) is SignDecision.NOT_DETERMINING


def test_one_sided_half_lines():
    fam = MarginalFamily.one_sided()
    assert marginal_interval(fam, 1.7, 0.05) == Interval(0.0, math.inf, False, False)
    assert marginal_interval(fam, -1.7, 0.05) == Interval(-math.inf, 0.0, False, True)
    assert marginal_interval(fam, 1.6, 0.05) == Interval(-math.inf, math.inf)


def test_pratt_example():
    z = mp_oracle.upper_quantile(0.1)
    iv = marginal_interval(MarginalFamily.pratt(), 2.5, 0.1)
    assert iv.lower == 0.0 and not iv.lower_closed
    assert iv.upper == pytest.approx(2.5 + z, abs=1e-12)
    below = marginal_interval(MarginalFamily.pratt(), 1.0, 0.1)
    assert below.lower == pytest.approx(1.0 - z, abs=1e-12)
    neg = marginal_interval(MarginalFamily.pratt(), -2.5, 0.1)
    assert neg.upper == 0.0 and neg.upper_closed
    assert classify(neg) is SignDecision.NON_POSITIVE


def test_mqc_constants_example():
    k = qc_constants(0.05, 0.7)
    assert k.cbar == pytest.approx(mp_oracle.upper_quantile(0.035), abs=1e-12)
    assert k.ctilde == pytest.approx(mp_oracle.upper_quantile(0.015), abs=1e-12)
    assert k.cbar == pytest.approx(1.81, abs=0.01)
    assert k.ctilde == pytest.approx(2.170, abs=1e-3)
    assert float(sign_threshold(MarginalFamily.mqc(0.7), 0.05)) == k.cbar


def test_mqc_example_intervals():
    fam = MarginalFamily.mqc(0.7)
    k = qc_constants(0.05, 0.7)
    # just below the threshold the interval is the inflated symmetric one
    iv = marginal_interval(fam, 1.80, 0.05)
    assert iv.lower == pytest.approx(-(k.cbar + k.c_half), abs=1e-12)
    assert classify(iv) is SignDecision.NOT_DETERMINING
    # between cbar and c_{alpha/2}: closed at zero
    iv = marginal_interval(fam, 1.85, 0.05)
    assert iv.lower == 0.0 and iv.lower_closed
    assert iv.upper == pytest.approx(1.85 + k.c_half, abs=1e-12)
    assert classify(iv) is SignDecision.NON_NEGATIVE
    # between c_{alpha/2} and ctilde: open at zero
    iv = marginal_interval(fam, 2.0, 0.05)
    assert iv.lower == 0.0 and not iv.lower_closed
    assert classify(iv) is SignDecision.POSITIVE
    # past ctilde the interval separates from zero
    assert marginal_interval(fam, 2.2, 0.05).lower > 0.0


def test_mqc_delta_example():
    fam = MarginalFamily.mqc_delta(0.5)
    thr = float(sign_threshold(fam, 0.1))
    assert thr == pytest.approx(0.5 + mp_oracle.cbar_delta(0.1, 0.5), abs=1e-10)
    assert thr == pytest.approx(1.84, abs=0.01)
    iv = marginal_interval(fam, 1.9, 0.1)
    assert iv.lower > 0.5
    assert classify_outside(iv, 0.5) is SignDecision.POSITIVE
    assert classify_outside(marginal_interval(fam, 1.8, 0.1), 0.5) is SignDecision.NOT_DETERMINING
    assert classify_outside(-iv, 0.5) is SignDecision.NEGATIVE


@pytest.mark.parametrize("alpha,delta", [(0.01, 0.2), (0.05, 1.0), (0.1, 0.5), (0.25, 3.0)])
def test_cbar_delta_matches_high_precision(alpha, delta):
    assert float(cbar_delta(alpha, delta)) == pytest.approx(mp_oracle.cbar_delta(alpha, delta), abs=1e-11)


@pytest.mark.parametrize("fam,alpha,p", [
    (MarginalFamily.symmetric(), 0.05, 0.025),
    (MarginalFamily.one_sided(), 0.05, 0.05),
    (MarginalFamily.pratt(), 0.2, 0.2),
    (MarginalFamily.qc(0.9), 0.1, 0.09),
    (MarginalFamily.mqc(0.6), 0.01, 0.006),
])
def test_sign_threshold_quantiles(fam, alpha, p):
    assert float(sign_threshold(fam, alpha)) == pytest.approx(mp_oracle.upper_quantile(p), abs=1e-12)


@pytest.mark.parametrize("fam", FAMILIES, ids=FAMILY_IDS)
@pytest.mark.parametrize("alpha", [0.01, 0.05, 0.2])
def test_threshold_is_where_determination_starts(fam, alpha):
    thr = float(sign_threshold(fam, alpha))
    decide = classify_outside if fam.kind is Kind.MQC_DELTA else (lambda iv, _d: classify(iv))
    d = fam.target_delta
    assert decide(marginal_interval(fam, thr, alpha), d).determined
    assert decide(marginal_interval(fam, -thr, alpha), d).determined
    assert not decide(marginal_interval(fam, thr * (1 - 1e-9), alpha), d).determined


# ---------------------------------------------------------------- classification


@pytest.mark.parametrize("iv,expected", [
    (Interval(0.3, 2.1), SignDecision.POSITIVE),
    (Interval(0.0, 2.1), SignDecision.POSITIVE),
    (Interval(0.0, 3.1, True, False), SignDecision.NON_NEGATIVE),
    (Interval(-0.2, 1.5), SignDecision.NOT_DETERMINING),
    (Interval(-3.0, 0.0, False, True), SignDecision.NON_POSITIVE),
    (Interval(-3.0, 0.0), SignDecision.NEGATIVE),
    (Interval(-3.0, -0.1), SignDecision.NEGATIVE),
    (Interval(-math.inf, math.inf), SignDecision.NOT_DETERMINING),
    (Interval(0.0, 0.0, True, True), SignDecision.NON_NEGATIVE),
])
def test_classify(iv, expected):
    assert classify(iv) is expected


@pytest.mark.parametrize("iv,expected", [
    (Interval(0.6, 2.0), SignDecision.POSITIVE),
    (Interval(0.5, 2.0), SignDecision.POSITIVE),
    (Interval(0.5, 2.0, True), SignDecision.NOT_DETERMINING),
    (Interval(0.4, 2.0), SignDecision.NOT_DETERMINING),
    (Interval(-2.0, -0.5), SignDecision.NEGATIVE),
])
def test_classify_outside(iv, expected):
    assert classify_outside(iv, 0.5) is expected


# ---------------------------------------------------------------- structural properties


NESTED = [f for f in FAMILIES if f.kind in (Kind.SYMMETRIC, Kind.ONE_SIDED, Kind.PRATT, Kind.QC)]


@pytest.mark.parametrize("fam", NESTED, ids=[f"{f.kind.value}-{f.psi or ''}" for f in NESTED])
def test_nesting_in_alpha(fam):
    alphas = ALPHAS if fam.kind is Kind.SYMMETRIC else [a for a in ALPHAS if a < 0.5] + [0.49]
    for a_big, a_small in zip(alphas[1:], alphas[:-1]):
        wide = interval_bounds(fam, Y_GRID, a_small)
        narrow = interval_bounds(fam, Y_GRID, a_big)
        for i in range(Y_GRID.size):
            assert is_subset(narrow.interval(i), wide.interval(i)), (Y_GRID[i], a_big, a_small)


@pytest.mark.parametrize("fam,y,a_small,a_big", [
    (MarginalFamily.mqc(0.85), 5.356, 0.05, 0.0514),
    (MarginalFamily.mqc(0.85), 3.27, 0.2, 0.3),
    (MarginalFamily.mqc_delta(0.5), 5.79, 0.05, 0.06),
])
def test_modified_intervals_are_not_nested_in_flat_zone(fam, y, a_small, a_big):
    # between g(cbar + c) and cbar + 2c the lower end is cbar + c, which
    # falls as alpha grows, so the higher-level interval does not contain
    # the lower-level one; the acceptance-region inversion agrees
    wide = marginal_interval(fam, y, a_small)
    narrow = marginal_interval(fam, y, a_big)
    assert narrow.lower < wide.lower - 1e-3
    grid = GridSpec(lo=-1.0, hi=9.0, step=1e-5)
    for a, iv in ((a_small, wide), (a_big, narrow)):
        hull = invert_acceptance_grid(acceptance_region(fam, a), y, grid)
        assert hull.lower == pytest.approx(iv.lower, abs=2e-5)


@pytest.mark.parametrize("fam", FAMILIES, ids=FAMILY_IDS)
@pytest.mark.parametrize("alpha", [0.01, 0.05, 0.1, 0.25])
def test_reflection(fam, alpha):
    pos = interval_bounds(fam, Y_GRID, alpha)
    neg = interval_bounds(fam, -Y_GRID, alpha)
    np.testing.assert_array_equal(neg.lower, -pos.upper)
    np.testing.assert_array_equal(neg.upper, -pos.lower)
    if fam.kind in (Kind.ONE_SIDED, Kind.PRATT):
        # zero is attached to the non-positive side only
        at_zero = (pos.lower == 0.0) & (Y_GRID > 0)
        assert not pos.lower_closed[at_zero].any()
        assert neg.upper_closed[at_zero].all()
    else:
        np.testing.assert_array_equal(neg.lower_closed, pos.upper_closed)
        np.testing.assert_array_equal(neg.upper_closed, pos.lower_closed)


@pytest.mark.parametrize("fam", FAMILIES, ids=FAMILY_IDS)
@pytest.mark.parametrize("alpha", [0.01, 0.05, 0.1, 0.25])
def test_endpoints_non_decreasing(fam, alpha):
    b = interval_bounds(fam, Y_GRID, alpha)
    assert np.all(b.lower[1:] >= b.lower[:-1] - 1e-10)
    assert np.all(b.upper[1:] >= b.upper[:-1] - 1e-10)


@settings(max_examples=300, deadline=None)
@given(fam=st.sampled_from(FAMILIES), y=st.floats(-30, 30), alpha=st.floats(1e-4, 0.49))
def test_interval_contains_observation(fam, y, alpha):
    assert y in marginal_interval(fam, y, alpha)


@settings(max_examples=200, deadline=None)
@given(fam=st.sampled_from(FAMILIES), y=st.floats(0.0, 30), alpha=st.floats(1e-4, 0.49))
def test_positive_observation_never_gets_negative_decision(fam, y, alpha):
    d = classify(marginal_interval(fam, y, alpha))
    assert d not in (SignDecision.NEGATIVE, SignDecision.NON_POSITIVE)


@settings(max_examples=200, deadline=None)
@given(fam=st.sampled_from(FAMILIES), y=st.floats(-20, 20), alpha=st.floats(1e-3, 0.49),
       sigma=st.floats(0.05, 20))
def test_scale_equivariance(fam, y, alpha, sigma):
    scaled_fam = fam.with_base(LocationFamily(scale=sigma))
    if fam.kind is Kind.MQC_DELTA:
        scaled_fam = MarginalFamily.mqc_delta(fam.delta * sigma, base=LocationFamily(scale=sigma))
    direct = marginal_interval(scaled_fam, y * sigma, alpha)
    std = marginal_interval(fam, y, alpha).scaled(sigma)
    for got, want in ((direct.lower, std.lower), (direct.upper, std.upper)):
        if math.isinf(want):
            assert got == want
        else:
            assert got == pytest.approx(want, abs=1e-9 * sigma, rel=1e-10)


# ---------------------------------------------------------------- relations between families


@pytest.mark.parametrize("alpha", [0.01, 0.05, 0.1, 0.3])
def test_qc_at_half_is_symmetric(alpha):
    a = interval_bounds(MarginalFamily.qc(0.5), Y_GRID, alpha)
    b = interval_bounds(MarginalFamily.symmetric(), Y_GRID, alpha)
    np.testing.assert_allclose(a.lower, b.lower, atol=1e-12)
    np.testing.assert_allclose(a.upper, b.upper, atol=1e-12)


def test_qc_lower_endpoints_approach_pratt():
    alpha = 0.05
    y = Y_GRID[np.abs(Y_GRID) <= 3.0]
    qc = interval_bounds(MarginalFamily.qc(0.999), y, alpha)
    pratt = interval_bounds(MarginalFamily.pratt(), y, alpha)
    pos = y >= 0
    np.testing.assert_allclose(qc.lower[pos], pratt.lower[pos], atol=1e-2)
    np.testing.assert_allclose(qc.upper[~pos], pratt.upper[~pos], atol=1e-2)


@pytest.mark.parametrize("psi", [0.6, 0.85, 0.95])
@pytest.mark.parametrize("alpha", [0.01, 0.05, 0.2])
def test_mqc_never_longer_than_qc_once_determined(psi, alpha):
    y = Y_GRID[Y_GRID >= qc_constants(alpha, psi).cbar]
    mqc = interval_bounds(MarginalFamily.mqc(psi), y, alpha)
    qc = interval_bounds(MarginalFamily.qc(psi), y, alpha)
    assert np.all(mqc.lower >= qc.lower - 1e-12)
    np.testing.assert_allclose(mqc.upper, qc.upper, atol=1e-12)


# ---------------------------------------------------------------- MQC piecewise cases


def test_psi_breakpoints():
    p1_small, _ = mqc_psi_breakpoints(0.1)
    assert p1_small > 0.999
    p1, p2 = mqc_psi_breakpoints(0.25)
    assert p1 == pytest.approx(0.978, abs=0.002)
    assert p1 < p2 < 1.0
    assert mqc_psi_breakpoints(0.3)[0] < p1


@pytest.mark.parametrize("alpha", [0.1, 0.25, 0.4])
def test_breakpoints_separate_cases(alpha):
    p1, p2 = mqc_psi_breakpoints(alpha)
    assert mqc_case(alpha, p1 - 1e-4) == 1
    if p2 - p1 > 2e-4:
        assert mqc_case(alpha, 0.5 * (p1 + p2)) == 2
    if p2 + 1e-6 < 1.0:
        assert mqc_case(alpha, min(p2 + 1e-4, 0.5 * (p2 + 1.0))) == 3


def test_qc_constants_reject_bad_psi():
    with pytest.raises(ConfigError):
        qc_constants(0.05, 1.0)
