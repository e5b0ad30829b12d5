import os

import pytest
from hypothesis import HealthCheck, settings

from remigration.records import Affiliation, AuthorshipRecord, RecordStore

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

CITY_OF = {"DE": "Berlin", "US": "Boston", "FR": "Paris", "GB": "London", "CH": "Zurich"}


def make_record(record_id="r1", author_id="a1", year=2005, country="DE", **kw):
    aff = kw.pop("affiliation", None)
    if aff is None:
        city = CITY_OF.get(country, "Rostock")
        aff = Affiliation(f"University of {city}", city, "Main Street 1", country)
    base = dict(
        record_id=record_id,
        author_id=author_id,
        publication_id=kw.pop("publication_id", f"p-{record_id}"),
        year=year,
        author_full_name="Anna Schmidt",
        affiliation=aff,
        coauthor_names=("Jan Weber",),
        journal_title="Physical Review Letters",
        publication_title="Quantum optics of cold atoms",
        keywords=("laser",),
        subject_tags=("physics",),
        funding_texts=("German Research Foundation",),
        grant_numbers=("GR-1",),
    )
    base.update(kw)
    return AuthorshipRecord(**base)


def record_dict(**kw):
    return make_record(**kw).to_dict()


def career(author_id, countries, start=2000, per_year=1, prefix=None):
    """Records realising one country per year (None = no publication that year)."""
    prefix = prefix or author_id
    out = []
    for k, c in enumerate(countries):
        if c is None:
            continue
        for j in range(per_year):
            out.append(make_record(f"{prefix}-{k}-{j}", author_id, start + k, c))
    return out


@pytest.fixture
def small_store():
    return RecordStore(career("a1", ["DE", "DE", "US", "US", "DE"]) + career("a2", ["DE", "DE", "DE"]))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
