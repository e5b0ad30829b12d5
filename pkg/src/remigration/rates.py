"""Cohort person-time rates of leaving and returning to Germany.

Exposure is counted in whole person-years. Every observed year a
researcher's effective country is Germany is one person-year at risk of
departure; a departure first observed in year ``Y`` belongs to the
person-year ``Y - 1``, so its age at departure is ``Y - first_pub_year``.
Return exposure covers the first spell abroad only: each abroad year of
that spell is at risk of a return in the following year. Observation ends
at the last publication year unless window-end censoring is requested.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .countries import GERMANY
from .gender import FEMALE, MALE
from .mobility import detect_events
from .records import FIRST_YEAR, LAST_YEAR

PER = 1000
ALL = "all"


class UndefinedRateError(ZeroDivisionError):
    pass


class Cohort(NamedTuple):
    label: str
    start: int
    end: int

    def __contains__(self, year):
        return self.start <= year <= self.end


CANONICAL_COHORTS = (
    Cohort("1998-2001", 1998, 2001),
    Cohort("2002-2005", 2002, 2005),
    Cohort("2006-2009", 2006, 2009),
)


def assign_cohort(first_pub_year, cohorts=CANONICAL_COHORTS):
    for cohort in cohorts:
        if first_pub_year in cohort:
            return cohort
    return None


@dataclass
class Cell:
    person_years: int = 0
    events: int = 0


@dataclass
class ExposureLedger:
    """Person-years and event counts keyed by stratum.

    ``departure`` is keyed by ``(gender, age_at_departure)`` and ``returns``
    by ``(gender, age_at_departure, years_since_departure)``.
    """

    cohort: Cohort | None = None
    period: tuple = (FIRST_YEAR, LAST_YEAR)
    departure: dict = field(default_factory=dict)
    returns: dict = field(default_factory=dict)

    def _cell(self, table, key):
        cell = table.get(key)
        if cell is None:
            cell = table[key] = Cell()
        return cell

    @staticmethod
    def _total(table, attr):
        return sum(getattr(c, attr) for c in table.values())

    @property
    def person_years_in_germany(self):
        return self._total(self.departure, "person_years")

    @property
    def person_years_outside(self):
        return self._total(self.returns, "person_years")

    @property
    def departure_events(self):
        return self._total(self.departure, "events")

    @property
    def return_events(self):
        return self._total(self.returns, "events")

    def sorted(self):
        """Copy with deterministic key order (for comparison and export)."""
        return ExposureLedger(
            self.cohort,
            self.period,
            {k: self.departure[k] for k in sorted(self.departure)},
            {k: self.returns[k] for k in sorted(self.returns)},
        )


def _spells(timeline, events, end):
    """Yield (year, country) over [first, end] from the event list."""
    changes = {e.year: e.to_country for e in events}
    country = timeline.origin_country
    for year in range(timeline.first_pub_year, end + 1):
        country = changes.get(year, country)
        yield year, country


def accumulate_exposure(
    timelines,
    cohort=None,
    period=(FIRST_YEAR, LAST_YEAR),
    genders=None,
    censor="last_pub",
    home=GERMANY,
    require_home_origin=True,
):
    """Build the exposure ledger for one cohort (None = everyone) and period.

    ``genders`` maps researcher id to a label; without it every researcher
    is filed under ``"all"``. ``censor`` is ``"last_pub"`` or ``"window_end"``.
    """
    if censor not in ("last_pub", "window_end"):
        raise ValueError(f"unknown censoring rule {censor!r}")
    p0, p1 = period
    ledger = ExposureLedger(cohort, (p0, p1))
    timelines = timelines.values() if isinstance(timelines, dict) else timelines
    for tl in timelines:
        first = tl.first_pub_year
        if cohort is not None and first not in cohort:
            continue
        if require_home_origin and tl.origin_country != home:
            continue
        gender = genders.get(tl.revised_author_id, "unknown") if genders is not None else ALL
        end = tl.last_pub_year if censor == "last_pub" else max(tl.last_pub_year, LAST_YEAR)
        events = detect_events(tl)
        departures = {e.year for e in events if e.from_country == home}
        returns = {e.year for e in events if e.to_country == home}
        for year, country in _spells(tl, events, end):
            if country == home and p0 <= year <= p1:
                cell = ledger._cell(ledger.departure, (gender, year + 1 - first))
                cell.person_years += 1
                if year + 1 in departures:
                    cell.events += 1
        if not departures:
            continue
        left = min(departures)
        back = min((y for y in returns if y > left), default=None)
        last_abroad = (back - 1) if back is not None else end
        age = left - first
        for year in range(left, last_abroad + 1):
            if p0 <= year <= p1:
                cell = ledger._cell(ledger.returns, (gender, age, year - left + 1))
                cell.person_years += 1
                if back == year + 1:
                    cell.events += 1
    return ledger.sorted()


class RateResult(NamedTuple):
    kind: str
    cohort: str
    gender: str
    age_at_departure: int | None
    years_since_departure: int | None
    person_years: int
    events: int
    rate_per_1000: float


def _select(table, gender, age, years_since=None):
    py = ev = 0
    for key, cell in table.items():
        g, a = key[0], key[1]
        if gender is not None and g != gender:
            continue
        if age is not None and a != age:
            continue
        if years_since is not None and key[2] != years_since:
            continue
        py += cell.person_years
        ev += cell.events
    return py, ev


def _rate(kind, ledger, py, ev, gender, age, years_since):
    if py <= 0:
        raise UndefinedRateError(f"no {kind} exposure for gender={gender} age={age} years_since={years_since}")
    label = ledger.cohort.label if ledger.cohort is not None else ALL
    return RateResult(kind, label, gender or ALL, age, years_since, py, ev, ev / py * PER)


def departure_rate(ledger, gender=None, age=None):
    """Departures per 1,000 person-years in Germany.

    ``gender=None`` pools everyone, unknown gender included.
    """
    py, ev = _select(ledger.departure, gender, age)
    return _rate("departure", ledger, py, ev, gender, age, None)


def return_rate(ledger, gender=None, age=None, years_since=None):
    """First returns per 1,000 person-years abroad."""
    py, ev = _select(ledger.returns, gender, age, years_since)
    return _rate("return", ledger, py, ev, gender, age, years_since)


def rate_table(ledger, kind, ages=range(1, 6), years_since=range(1, 6), genders=(FEMALE, MALE, None)):
    """Rows for every stratum with positive exposure."""
    rows = []
    for gender in genders:
        for age in ages:
            spans = years_since if kind == "return" else [None]
            for s in spans:
                try:
                    if kind == "departure":
                        rows.append(departure_rate(ledger, gender, age))
                    else:
                        rows.append(return_rate(ledger, gender, age, s))
                except UndefinedRateError:
                    continue
    return rows


def first_departure(timeline, home=GERMANY):
    for e in detect_events(timeline):
        if e.from_country == home:
            return e
    return None


def country_return_share(timelines, host_country, home=GERMANY):
    """Share of researchers first leaving for ``host_country`` who later return."""
    timelines = timelines.values() if isinstance(timelines, dict) else timelines
    went = returned = 0
    for tl in timelines:
        if tl.origin_country != home:
            continue
        dep = first_departure(tl, home)
        if dep is None or dep.to_country != host_country:
            continue
        went += 1
        if any(tl.effective[y] == home for y in range(dep.year + 1, tl.last_pub_year + 1)):
            returned += 1
    if not went:
        raise UndefinedRateError(f"no researchers left {home} for {host_country}")
    return returned / went


class NoAbroadPublicationsError(ValueError):
    pass


class CollabRatio(NamedTuple):
    revised_author_id: str
    german_linked: int
    total: int

    @property
    def ratio(self):
        return self.german_linked / self.total


def abroad_years(timeline, home=GERMANY):
    dep = first_departure(timeline, home)
    if dep is None:
        return []
    return [y for y in range(dep.year, timeline.last_pub_year + 1) if timeline.effective[y] != home]


def collaborative_ratio(timeline, records, publication_countries, home=GERMANY):
    """Share of a researcher's abroad-period publications with any German affiliation.

    ``records`` are the researcher's own records; ``publication_countries``
    maps publication id to the countries on every record of that publication
    (own and co-authors').
    """
    years = set(abroad_years(timeline, home))
    pubs = sorted({r.publication_id for r in records if r.year in years})
    if not pubs:
        raise NoAbroadPublicationsError(f"{timeline.revised_author_id} has no publications abroad")
    linked = sum(1 for p in pubs if home in publication_countries.get(p, ()))
    return CollabRatio(timeline.revised_author_id, linked, len(pubs))


def publication_countries(store):
    out = {}
    for rec in store.records:
        if rec.country is not None:
            out.setdefault(rec.publication_id, set()).add(rec.country)
    return out


def pearson(xs, ys):
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("pearson needs two equal-length sequences of at least two values")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = math.fsum(dx * dx), math.fsum(dy * dy)
    if sxx == 0 or syy == 0:
        raise UndefinedRateError("correlation undefined for a constant sequence")
    r = math.fsum(dx * dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))
