import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from remigration.mobility import ResearcherTimeline
from remigration.rates import (
    CANONICAL_COHORTS,
    Cell,
    Cohort,
    ExposureLedger,
    NoAbroadPublicationsError,
    UndefinedRateError,
    accumulate_exposure,
    assign_cohort,
    collaborative_ratio,
    country_return_share,
    departure_rate,
    pearson,
    rate_table,
    return_rate,
)
from remigration.synth import GroundTruth, Identity, oracle_rates

from conftest import make_record


def tl(rid, countries, start=2000):
    return ResearcherTimeline.from_countries(rid, {start + i: c for i, c in enumerate(countries) if c is not None})


def truth_of(careers):
    t = GroundTruth()
    for rid, (start, countries) in careers.items():
        t.identities[rid] = Identity(rid, rid, "X Y", "female", 0, {start + i: c for i, c in enumerate(countries)})
    return t


def test_cohort_assignment():
    assert assign_cohort(1999).label == "1998-2001"
    assert assign_cohort(1997) is None
    assert assign_cohort(2009).label == "2006-2009"
    assert assign_cohort(2002) is CANONICAL_COHORTS[1]


def test_non_mover_exposure():
    led = accumulate_exposure([tl("a", ["DE"] * 4)])
    assert led.person_years_in_germany == 4 and led.departure_events == 0
    assert led.person_years_outside == 0


def test_departure_and_return_hand_trace():
    led = accumulate_exposure([tl("a", ["DE", "DE", "US", "US", "DE"])])
    assert led.person_years_in_germany == 3
    assert led.person_years_outside == 2
    assert led.departure_events == 1 and led.return_events == 1
    # Departure seen in year 3 of the career is at age 2; ages partition PY and events.
    assert led.departure == {("all", 1): Cell(1, 0), ("all", 2): Cell(1, 1), ("all", 5): Cell(1, 0)}
    assert led.returns == {("all", 2, 1): Cell(1, 0), ("all", 2, 2): Cell(1, 1)}


def test_only_first_return_counts():
    led = accumulate_exposure([tl("a", ["DE", "US", "DE", "FR", "FR", "DE"])])
    assert led.departure_events == 2
    assert led.return_events == 1 and led.person_years_outside == 1


def test_window_end_censoring():
    last = accumulate_exposure([tl("a", ["DE", "DE"], start=2015)])
    edge = accumulate_exposure([tl("a", ["DE", "DE"], start=2015)], censor="window_end")
    assert last.person_years_in_germany == 2
    assert edge.person_years_in_germany == 6
    with pytest.raises(ValueError):
        accumulate_exposure([], censor="never")


def test_foreign_origin_excluded():
    led = accumulate_exposure([tl("a", ["US", "DE", "DE"])])
    assert led.person_years_in_germany == 0


def test_rates_from_ledger():
    led = ExposureLedger(departure={("all", 1): Cell(1000, 8)})
    r = departure_rate(led)
    assert r.rate_per_1000 == 8.0 and r.person_years == 1000 and r.events == 8
    with pytest.raises(UndefinedRateError):
        departure_rate(ExposureLedger())
    with pytest.raises(UndefinedRateError):
        return_rate(led)


def test_gender_rates_exclude_unknown():
    tls = [tl("f", ["DE", "US"]), tl("m", ["DE", "DE"]), tl("u", ["DE", "DE"])]
    led = accumulate_exposure(tls, genders={"f": "female", "m": "male"})
    assert departure_rate(led, "female").person_years == 1
    assert departure_rate(led, "male").person_years == 2
    assert departure_rate(led).person_years == 5


def test_return_rate_by_years_since():
    led = accumulate_exposure([tl("a", ["DE", "US", "US", "DE"]), tl("b", ["DE", "US", "DE"])])
    assert return_rate(led, years_since=1).rate_per_1000 == 500.0
    assert return_rate(led, years_since=2).rate_per_1000 == 1000.0


def test_country_return_share():
    tls = [tl("a", ["DE", "US", "DE"]), tl("b", ["DE", "US", "US"]), tl("c", ["DE", "FR", "DE"])]
    assert country_return_share(tls, "US") == 0.5
    assert country_return_share(tls, "FR") == 1.0
    with pytest.raises(UndefinedRateError):
        country_return_share(tls, "GB")


def test_collaborative_ratio():
    t = tl("a", ["DE", "US", "US"])
    recs = [make_record(f"r{i}", "a", 2001 + i % 2, "US", publication_id=f"p{i}") for i in range(4)]
    pubs = {"p0": {"US", "DE"}, "p1": {"US"}, "p2": {"US", "DE"}, "p3": {"US"}}
    cr = collaborative_ratio(t, recs, pubs)
    assert (cr.german_linked, cr.total, cr.ratio) == (2, 4, 0.5)
    with pytest.raises(NoAbroadPublicationsError):
        collaborative_ratio(t, [make_record("r9", "a", 2000)], pubs)


def test_pearson_examples():
    xs = [1.0, 2.0, 3.0, 4.0, 5.0]
    assert pearson(xs, [2 * x + 1 for x in xs]) == 1.0
    assert pearson(xs, [-x for x in xs]) == -1.0
    with pytest.raises(UndefinedRateError):
        pearson(xs, [3.0] * 5)
    with pytest.raises(ValueError):
        pearson([1.0], [2.0])


def test_single_mover_oracle_hand_trace():
    truth = truth_of({"a": (2000, ["DE", "DE", "DE", "US", "US"])})
    led = oracle_rates(truth)
    assert led.departure_events == 1 and led.person_years_in_germany == 3
    assert led.person_years_outside == 2 and led.return_events == 0


careers = st.dictionaries(
    st.text("abcdef", min_size=1, max_size=3),
    st.tuples(st.integers(1996, 2010), st.lists(st.sampled_from(["DE", "DE", "US", "FR"]), min_size=1, max_size=11)),
    max_size=8,
)


@given(careers, st.sampled_from([None] + list(CANONICAL_COHORTS)), st.sampled_from(["last_pub", "window_end"]), st.integers(1996, 2020), st.integers(0, 10))
def test_ledger_equals_oracle(cs, cohort, censor, p0, span):
    truth = truth_of(cs)
    tls = {k: ResearcherTimeline.from_countries(k, i.countries) for k, i in truth.identities.items()}
    period = (p0, p0 + span)
    assert accumulate_exposure(tls, cohort, period, censor=censor) == oracle_rates(truth, cohort, period, censor=censor)


@given(careers)
def test_rate_identity(cs):
    tls = [tl(k, c, start) for k, (start, c) in cs.items()]
    led = accumulate_exposure(tls)
    for kind in ("departure", "return"):
        for r in rate_table(led, kind, ages=[None, 1, 2, 3], years_since=[None, 1, 2], genders=[None]):
            assert abs(r.rate_per_1000 * r.person_years / 1000 - r.events) <= 1e-12 * max(1, r.events)


@given(careers, st.integers(-5, 5))
def test_translation_invariance(cs, shift):
    cs = {k: (max(1996, min(2005, s)), c) for k, (s, c) in cs.items()}
    shifted = {k: (s + shift, c) for k, (s, c) in cs.items()}
    cohort = Cohort("x", 1996, 2005)
    moved = Cohort("x", 1996 + shift, 2005 + shift)
    a = accumulate_exposure([tl(k, c, s) for k, (s, c) in cs.items()], cohort, period=(1980, 2040))
    b = accumulate_exposure([tl(k, c, s) for k, (s, c) in shifted.items()], moved, period=(1980, 2040))
    assert a.departure == b.departure and a.returns == b.returns


@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=3, max_size=30), st.floats(0.1, 10), st.floats(-100, 100), st.floats(0.1, 10), st.floats(-100, 100))
def test_pearson_affine_invariance(pts, a, b, c, d):
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if np.ptp(xs) < 1e-3 or np.ptp(ys) < 1e-3:
        return
    r = pearson(xs, ys)
    assert -1.0 <= r <= 1.0
    assert pearson(a * xs + b, c * ys + d) == pytest.approx(r, abs=1e-9)


def test_pearson_hand_computed():
    xs = [1.0, 2.0, 3.0, 4.0, 5.0]
    ys = [2.0, 4.0, 5.0, 4.0, 5.0]
    # means 3 and 4; Sxy = 6, Sxx = 10, Syy = 6
    assert abs(pearson(xs, ys) - 6 / math.sqrt(60)) <= 1e-12


@given(st.lists(st.integers(0, 10), min_size=1, max_size=20))
def test_collaborative_ratio_in_unit_interval(linked):
    t = tl("a", ["DE", "US"])
    recs = [make_record(f"r{i}", "a", 2001, "US", publication_id=f"p{i}") for i in range(len(linked))]
    pubs = {f"p{i}": {"US", "DE"} if v % 2 else {"US"} for i, v in enumerate(linked)}
    assert 0.0 <= collaborative_ratio(t, recs, pubs).ratio <= 1.0
