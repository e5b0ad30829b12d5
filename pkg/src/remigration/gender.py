"""First-name gender inference from an offline name table."""

import csv
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources

FEMALE = "female"
MALE = "male"
UNKNOWN = "unknown"
LABELS = (FEMALE, MALE)

# Letters that NFKD does not decompose into base + combining mark.
_FOLD = str.maketrans({"ß": "ss", "ø": "o", "æ": "ae", "œ": "oe", "ł": "l", "đ": "d", "ð": "d", "þ": "th", "ı": "i"})


def fold(text):
    text = text.lower().translate(_FOLD)
    return "".join(c for c in unicodedata.normalize("NFKD", text) if not unicodedata.combining(c))


def normalize_first_name(full_name):
    """Lower-cased, accent-folded first given name, or "" if there is none.

    Handles "Given Middle Surname" and "Surname, Given Middle". Initials
    (single letters, with or without a period) are skipped.
    """
    if not full_name or not full_name.strip():
        return ""
    if "," in full_name:
        _, _, given = full_name.partition(",")
        tokens = given.split()
    else:
        tokens = full_name.split()[:-1]
    for tok in tokens:
        tok = fold(tok).strip(".")
        letters = [c for c in tok if c.isalpha()]
        if len(letters) > 1:
            return tok
    return ""


@dataclass
class NameGenderTable:
    entries: dict = field(default_factory=dict)  # name -> (gender, probability)

    def __post_init__(self):
        for name, (gender, p) in self.entries.items():
            if gender not in LABELS:
                raise ValueError(f"bad gender {gender!r} for {name!r}")
            if not 0.5 <= p <= 1.0:
                raise ValueError(f"probability {p} for {name!r} outside [0.5, 1]")

    def __contains__(self, name):
        return name in self.entries

    def __len__(self):
        return len(self.entries)

    def lookup(self, name):
        return self.entries.get(name)

    @classmethod
    def read_csv(cls, path_or_file):
        if hasattr(path_or_file, "read"):
            rows = list(csv.DictReader(path_or_file))
        else:
            with open(path_or_file, encoding="utf-8", newline="") as fh:
                rows = list(csv.DictReader(fh))
        entries = {}
        for row in rows:
            name = fold(row["name"].strip())
            entries[name] = (row["gender"].strip().lower(), float(row["probability"]))
        return cls(entries)

    @classmethod
    def default(cls):
        with resources.files("remigration.data").joinpath("name_gender.csv").open(encoding="utf-8") as fh:
            return cls.read_csv(fh)


@dataclass
class GenderAssignment:
    labels: dict = field(default_factory=dict)  # profile id -> label
    methods: dict = field(default_factory=dict)  # profile id -> "table" | "manual" | "none"

    def __getitem__(self, profile_id):
        return self.labels.get(profile_id, UNKNOWN)

    def coverage(self):
        if not self.labels:
            return 0.0
        return sum(1 for v in self.labels.values() if v != UNKNOWN) / len(self.labels)

    def known(self):
        """Profiles usable in gender-disaggregated analyses."""
        return {k: v for k, v in self.labels.items() if v != UNKNOWN}

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["revised_author_id", "gender", "method"])
            for pid in self.labels:
                writer.writerow([pid, self.labels[pid], self.methods[pid]])

    @classmethod
    def read_csv(cls, path):
        out = cls()
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                out.labels[row["revised_author_id"]] = row["gender"]
                out.methods[row["revised_author_id"]] = row["method"]
        return out


def read_overrides(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return {row["revised_author_id"]: row["gender"].strip().lower() for row in csv.DictReader(fh)}


def assign_gender(profiles, table, probability_floor=0.8, manual_overrides=None):
    """Label each profile female, male or unknown.

    ``profiles`` maps profile id to a full name. A manual override wins,
    then a table hit at or above ``probability_floor``; everything else is
    unknown.
    """
    manual_overrides = manual_overrides or {}
    out = GenderAssignment()
    for pid, full_name in profiles.items():
        override = manual_overrides.get(pid)
        if override in LABELS:
            out.labels[pid], out.methods[pid] = override, "manual"
            continue
        hit = table.lookup(normalize_first_name(full_name))
        if hit is not None and hit[1] >= probability_floor:
            out.labels[pid], out.methods[pid] = hit[0], "table"
        else:
            out.labels[pid], out.methods[pid] = UNKNOWN, "none"
    return out


def profile_names(store):
    """Most frequent full name per author id (first seen wins ties)."""
    names = {}
    for author_id in store.author_index:
        counts = Counter(r.author_full_name for r in store.records_of(author_id))
        names[author_id] = max(counts, key=lambda n: counts[n])
    return names
