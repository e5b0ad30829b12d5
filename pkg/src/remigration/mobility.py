"""Yearly mode countries, migration events, mobility categories and career stages."""

import csv
import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple

from .countries import GERMANY


class Category(str, enum.Enum):
    NON_MOVER = "non_mover"
    IMMIGRANT_OR_TRANSIENT = "immigrant_or_transient"
    OUTWARD = "outward"
    RETURNEE = "returnee"


class Stage(str, enum.Enum):
    EARLY = "early"
    MID = "mid"
    SENIOR = "senior"


EARLY_CAREER_MAX_AGE = 7
SENIOR_MIN_AGE = 14


class MigrationEvent(NamedTuple):
    revised_author_id: str
    year: int
    from_country: str
    to_country: str


def mode_country(countries):
    """Set of the most frequent countries among ``countries`` (None ignored)."""
    counts = Counter(c for c in countries if c is not None)
    if not counts:
        return frozenset()
    top = max(counts.values())
    return frozenset(c for c, n in counts.items() if n == top)


@dataclass
class ResearcherTimeline:
    revised_author_id: str
    yearly_mode: dict  # year -> frozenset of country codes
    effective: dict = field(init=False, repr=False)

    def __post_init__(self):
        if not self.yearly_mode:
            raise ValueError(f"timeline for {self.revised_author_id!r} has no resolvable year")
        if any(not s for s in self.yearly_mode.values()):
            raise ValueError("mode sets must be non-empty")
        self.yearly_mode = {y: frozenset(self.yearly_mode[y]) for y in sorted(self.yearly_mode)}
        self.effective = _resolve(self.yearly_mode)

    @classmethod
    def from_countries(cls, revised_author_id, countries):
        """Timeline from one known country per year."""
        return cls(revised_author_id, {y: frozenset([c]) for y, c in countries.items()})

    @property
    def first_pub_year(self):
        return next(iter(self.yearly_mode))

    @property
    def last_pub_year(self):
        return next(reversed(self.yearly_mode))

    @property
    def origin_country(self):
        return self.effective[self.first_pub_year]

    @property
    def current_country(self):
        return self.effective[self.last_pub_year]

    def years(self):
        return range(self.first_pub_year, self.last_pub_year + 1)


def _resolve(modes):
    out = {}
    prev = None
    years = list(modes)
    for y in range(years[0], years[-1] + 1):
        tie = modes.get(y)
        if tie is None:
            country = prev
        elif len(tie) == 1:
            (country,) = tie
        elif prev in tie:
            country = prev
        else:
            country = min(tie)
        out[y] = country
        prev = country
    return out


def effective_country(timeline, year):
    """Tie- and gap-resolved country for ``year``.

    Years after the last publication carry the last effective country
    forward; years before the first publication are an error.
    """
    if year < timeline.first_pub_year:
        raise ValueError(f"year {year} precedes first publication {timeline.first_pub_year}")
    if year > timeline.last_pub_year:
        return timeline.effective[timeline.last_pub_year]
    return timeline.effective[year]


def build_timelines(store):
    """One timeline per author id; years without a resolvable country are gaps."""
    timelines = {}
    per_author = {}
    for (author_id, year), ids in store.year_index.items():
        modes = mode_country(store.by_id[r].country for r in ids)
        if modes:
            per_author.setdefault(author_id, {})[year] = modes
    for author_id in store.author_index:
        if author_id in per_author:
            timelines[author_id] = ResearcherTimeline(author_id, per_author[author_id])
    return timelines


def detect_events(timeline):
    events = []
    eff = timeline.effective
    years = list(eff)
    for prev, year in zip(years, years[1:]):
        if eff[year] != eff[prev]:
            events.append(MigrationEvent(timeline.revised_author_id, year, eff[prev], eff[year]))
    return events


def classify(timeline, evaluation_year, home=GERMANY):
    """Mobility category at ``evaluation_year``, or None if never in ``home`` so far."""
    if evaluation_year < timeline.first_pub_year:
        raise ValueError("evaluation year precedes first publication")
    end = min(evaluation_year, timeline.last_pub_year)
    series = [timeline.effective[y] for y in range(timeline.first_pub_year, end + 1)]
    origin, current = series[0], series[-1]
    if origin == home:
        if all(c == home for c in series):
            return Category.NON_MOVER
        if current != home:
            return Category.OUTWARD
        return Category.RETURNEE
    if home in series:
        return Category.IMMIGRANT_OR_TRANSIENT
    return None


def academic_age(timeline, year):
    if year < timeline.first_pub_year:
        raise ValueError("year precedes first publication")
    return year - timeline.first_pub_year


def career_stage(age):
    if age < 0:
        raise ValueError("academic age cannot be negative")
    if age <= EARLY_CAREER_MAX_AGE:
        return Stage.EARLY
    if age >= SENIOR_MIN_AGE:
        return Stage.SENIOR
    return Stage.MID


def write_events(events, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MigrationEvent._fields)
        writer.writerows(events)


def read_events(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return [
            MigrationEvent(r["revised_author_id"], int(r["year"]), r["from_country"], r["to_country"])
            for r in csv.DictReader(fh)
        ]
