"""Authorship records: data model, parsing, serialisation and indexes.

One record links one author to one publication through a single
affiliation. Records outside the 1996-2020 observation window are rejected
at parse time rather than clamped.
"""

import csv
import io
import json
from dataclasses import dataclass, field, replace
from typing import NamedTuple

from .countries import UnknownCountryError, normalize_country

FIRST_YEAR = 1996
LAST_YEAR = 2020

LIST_FIELDS = ("coauthor_names", "keywords", "subject_tags", "funding_texts", "grant_numbers")
AFFILIATION_FIELDS = ("institution", "city", "address_line", "country")
JSONL_FIELDS = (
    "record_id",
    "author_id",
    "publication_id",
    "year",
    "author_full_name",
    "coauthor_names",
    "affiliation",
    "journal_title",
    "publication_title",
    "keywords",
    "subject_tags",
    "funding_texts",
    "grant_numbers",
)
CSV_FIELDS = tuple(
    f for name in JSONL_FIELDS for f in (AFFILIATION_FIELDS if name == "affiliation" else (name,))
)
MAX_REJECT_SHARE = 0.5


class RecordIOError(OSError):
    """The input stream could not be read or decoded."""


class SchemaMismatchError(ValueError):
    """More than half of the input rows failed validation."""


class RecordValidationError(ValueError):
    pass


@dataclass(frozen=True)
class Affiliation:
    institution: str = ""
    city: str = ""
    address_line: str = ""
    country: str | None = None

    @property
    def text(self):
        return " ".join(p for p in (self.institution, self.city, self.address_line) if p)

    def is_empty(self):
        return not (self.institution or self.city or self.address_line)


@dataclass(frozen=True)
class AuthorshipRecord:
    record_id: str
    author_id: str
    publication_id: str
    year: int
    author_full_name: str
    affiliation: Affiliation
    coauthor_names: tuple = ()
    journal_title: str = ""
    publication_title: str = ""
    keywords: tuple = ()
    subject_tags: tuple = ()
    funding_texts: tuple = ()
    grant_numbers: tuple = ()

    @property
    def country(self):
        return self.affiliation.country

    def with_country(self, country):
        return replace(self, affiliation=replace(self.affiliation, country=country))

    def to_dict(self):
        out = {}
        for name in JSONL_FIELDS:
            if name == "affiliation":
                a = self.affiliation
                out[name] = {
                    "institution": a.institution,
                    "city": a.city,
                    "address_line": a.address_line,
                    "country": a.country,
                }
            elif name in LIST_FIELDS:
                out[name] = list(getattr(self, name))
            else:
                out[name] = getattr(self, name)
        return out


class Reject(NamedTuple):
    line: int
    reason: str


def _text(value, name, required=False):
    if value is None:
        value = ""
    if not isinstance(value, str):
        raise RecordValidationError(f"{name} must be text")
    value = value.strip()
    if required and not value:
        raise RecordValidationError(f"{name} is empty")
    return value


def _text_list(value, name):
    if value is None:
        return ()
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise RecordValidationError(f"{name} must be a list of text")
    return tuple(v.strip() for v in value if v.strip())


def _year(value):
    if isinstance(value, bool):
        raise RecordValidationError("year must be an integer")
    if isinstance(value, str):
        try:
            value = int(value.strip())
        except ValueError:
            raise RecordValidationError("year must be an integer") from None
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if not isinstance(value, int):
        raise RecordValidationError("year must be an integer")
    if not FIRST_YEAR <= value <= LAST_YEAR:
        raise RecordValidationError("year out of window")
    return value


def record_from_dict(row):
    """Validate one decoded row and build a record from it.

    Raises RecordValidationError with a short reason on failure.
    """
    if not isinstance(row, dict):
        raise RecordValidationError("row is not an object")
    missing = [k for k in JSONL_FIELDS if k not in row]
    if missing:
        raise RecordValidationError(f"missing field {missing[0]}")
    extra = sorted(set(row) - set(JSONL_FIELDS))
    if extra:
        raise RecordValidationError(f"unexpected field {extra[0]}")
    aff = row["affiliation"]
    if not isinstance(aff, dict) or set(aff) != set(AFFILIATION_FIELDS):
        raise RecordValidationError("malformed affiliation")
    try:
        country = normalize_country(aff["country"])
    except UnknownCountryError as exc:
        raise RecordValidationError(str(exc)) from None
    affiliation = Affiliation(
        institution=_text(aff["institution"], "institution"),
        city=_text(aff["city"], "city"),
        address_line=_text(aff["address_line"], "address_line"),
        country=country,
    )
    if affiliation.is_empty():
        raise RecordValidationError("affiliation has no text")
    ids = {}
    for name in ("record_id", "author_id", "publication_id"):
        value = row[name]
        if isinstance(value, int) and not isinstance(value, bool):
            value = str(value)
        ids[name] = _text(value, name, required=True)
    return AuthorshipRecord(
        year=_year(row["year"]),
        author_full_name=_text(row["author_full_name"], "author_full_name", required=True),
        affiliation=affiliation,
        coauthor_names=_text_list(row["coauthor_names"], "coauthor_names"),
        journal_title=_text(row["journal_title"], "journal_title"),
        publication_title=_text(row["publication_title"], "publication_title"),
        keywords=_text_list(row["keywords"], "keywords"),
        subject_tags=_text_list(row["subject_tags"], "subject_tags"),
        funding_texts=_text_list(row["funding_texts"], "funding_texts"),
        grant_numbers=_text_list(row["grant_numbers"], "grant_numbers"),
        **ids,
    )


@dataclass(frozen=True, eq=False)
class RecordStore:
    """Immutable collection of authorship records with author/year indexes."""

    records: tuple
    rejects: tuple = ()
    by_id: dict = field(init=False, repr=False)
    author_index: dict = field(init=False, repr=False)
    year_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        records = tuple(self.records)
        by_id, author_index, year_index = {}, {}, {}
        for rec in records:
            if rec.record_id in by_id:
                raise RecordValidationError(f"duplicate record_id {rec.record_id!r}")
            by_id[rec.record_id] = rec
            author_index.setdefault(rec.author_id, []).append(rec.record_id)
            year_index.setdefault((rec.author_id, rec.year), []).append(rec.record_id)
        object.__setattr__(self, "records", records)
        object.__setattr__(self, "rejects", tuple(self.rejects))
        object.__setattr__(self, "by_id", by_id)
        object.__setattr__(self, "author_index", {k: tuple(v) for k, v in author_index.items()})
        object.__setattr__(self, "year_index", {k: tuple(v) for k, v in year_index.items()})

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __eq__(self, other):
        if not isinstance(other, RecordStore):
            return NotImplemented
        return self.records == other.records

    def __getitem__(self, record_id):
        return self.by_id[record_id]

    @property
    def author_ids(self):
        return list(self.author_index)

    def records_of(self, author_id):
        return [self.by_id[r] for r in self.author_index.get(author_id, ())]

    def publication_index(self):
        """Map publication_id to the ids of every record linked to it."""
        index = {}
        for rec in self.records:
            index.setdefault(rec.publication_id, []).append(rec.record_id)
        return index

    def with_records(self, records):
        return RecordStore(records, rejects=self.rejects)


def missing_country_records(store):
    return [r.record_id for r in store.records if r.country is None]


def _decode(input_stream):
    try:
        data = input_stream.read()
    except (OSError, ValueError) as exc:
        raise RecordIOError(f"cannot read input: {exc}") from exc
    if isinstance(data, str):
        return data
    try:
        return data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise RecordIOError(f"input is not UTF-8: {exc}") from exc


def _iter_jsonl(text):
    # Only \n separates rows; splitlines() would also break on U+2028 etc. inside strings.
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            yield lineno, json.loads(line)
        except json.JSONDecodeError as exc:
            yield lineno, RecordValidationError(f"invalid json: {exc.msg}")


def _split_list(value):
    if value is None or value == "":
        return []
    return [v for v in value.split(";")]


def _iter_csv(text):
    reader = csv.DictReader(io.StringIO(text, newline=""))
    header_ok = reader.fieldnames is not None and tuple(reader.fieldnames) == CSV_FIELDS
    for row in reader:
        lineno = reader.line_num
        if not header_ok:
            yield lineno, RecordValidationError("csv header does not match schema")
            continue
        if None in row or any(v is None for v in row.values()):
            yield lineno, RecordValidationError("wrong number of columns")
            continue
        out = {k: row[k] for k in CSV_FIELDS if k not in AFFILIATION_FIELDS}
        out["affiliation"] = {k: row[k] for k in AFFILIATION_FIELDS}
        out["affiliation"]["country"] = row["country"] or None
        for name in LIST_FIELDS:
            out[name] = _split_list(row[name])
        yield lineno, out


def parse_records(input_stream, format="jsonl"):
    """Parse a UTF-8 byte (or text) stream into a :class:`RecordStore`.

    Malformed rows are skipped and listed in ``store.rejects`` as
    ``Reject(line, reason)``. Raises RecordIOError if the stream cannot be
    read and SchemaMismatchError if more than half the rows are rejected.
    """
    if format not in ("jsonl", "csv"):
        raise ValueError(f"unsupported format {format!r}")
    text = _decode(input_stream)
    rows = _iter_jsonl(text) if format == "jsonl" else _iter_csv(text)
    records, rejects, seen = [], [], set()
    total = 0
    for lineno, row in rows:
        total += 1
        if isinstance(row, Exception):
            rejects.append(Reject(lineno, str(row)))
            continue
        try:
            rec = record_from_dict(row)
        except RecordValidationError as exc:
            rejects.append(Reject(lineno, str(exc)))
            continue
        if rec.record_id in seen:
            rejects.append(Reject(lineno, "duplicate record_id"))
            continue
        seen.add(rec.record_id)
        records.append(rec)
    if total and len(rejects) / total > MAX_REJECT_SHARE:
        raise SchemaMismatchError(f"{len(rejects)} of {total} rows rejected; first: {rejects[0].reason}")
    return RecordStore(records, rejects=rejects)


def write_records(store, stream, format="jsonl"):
    """Write records to a text stream in the same schema parse_records reads."""
    if format == "jsonl":
        for rec in store.records:
            stream.write(json.dumps(rec.to_dict(), ensure_ascii=False, sort_keys=False))
            stream.write("\n")
    elif format == "csv":
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for rec in store.records:
            d = rec.to_dict()
            aff = d.pop("affiliation")
            row = []
            for name in CSV_FIELDS:
                if name in AFFILIATION_FIELDS:
                    value = aff[name] or ""
                elif name in LIST_FIELDS:
                    value = ";".join(d[name])
                else:
                    value = d[name]
                row.append(value)
            writer.writerow(row)
    else:
        raise ValueError(f"unsupported format {format!r}")


def dumps_records(store, format="jsonl"):
    buf = io.StringIO()
    write_records(store, buf, format)
    return buf.getvalue()


def write_rejects(rejects, stream):
    for rej in rejects:
        stream.write(json.dumps({"line": rej.line, "reason": rej.reason}) + "\n")


def load_store(path, format=None):
    if format is None:
        format = "csv" if str(path).endswith(".csv") else "jsonl"
    try:
        with open(path, "rb") as fh:
            return parse_records(fh, format)
    except FileNotFoundError as exc:
        raise RecordIOError(str(exc)) from exc


def save_store(store, path, format=None):
    if format is None:
        format = "csv" if str(path).endswith(".csv") else "jsonl"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        write_records(store, fh, format)
