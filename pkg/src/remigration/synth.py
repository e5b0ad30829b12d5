"""Synthetic scholarly populations with planted ground truth.

The generator simulates yearly countries for each researcher with
per-person-year Bernoulli hazards, then emits authorship records that
realise those countries (optionally with tied years, hidden countries,
publication gaps and merged author profiles). Every random draw comes from
a Philox stream keyed by (seed, purpose, researcher index), so output does
not depend on iteration order.

Hazards are aligned with the person-year exposure used by the rate
estimator: every observed year is one Bernoulli trial whose outcome decides
the next year's country. A career's nominal observation length is
``observed_years``; a success in the final year extends observation by a
year so that the event is seen.
"""

import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.optimize import linear_sum_assignment

from .countries import GERMANY
from .gender import FEMALE, MALE, NameGenderTable
from .mobility import MigrationEvent
from .records import LAST_YEAR, Affiliation, AuthorshipRecord, RecordStore
from .rates import ALL, ExposureLedger

HOSTS = ("US", "GB", "FR", "CH", "NL", "AT", "IT", "ES", "SE", "CA")
HOST_WEIGHTS = (0.30, 0.15, 0.10, 0.12, 0.07, 0.08, 0.05, 0.05, 0.04, 0.04)

CITIES = {
    "DE": ("Berlin", "Munich", "Hamburg", "Heidelberg", "Rostock", "Leipzig", "Cologne", "Freiburg", "Dresden", "Tübingen"),
    "US": ("Boston", "Chicago", "Seattle", "Houston", "Stanford", "Berkeley", "Pittsburgh", "Baltimore"),
    "GB": ("London", "Oxford", "Cambridge", "Edinburgh", "Manchester", "Bristol"),
    "FR": ("Paris", "Lyon", "Marseille", "Toulouse", "Grenoble", "Strasbourg"),
    "CH": ("Zurich", "Geneva", "Basel", "Lausanne", "Bern"),
    "NL": ("Amsterdam", "Utrecht", "Leiden", "Delft", "Groningen"),
    "AT": ("Vienna", "Graz", "Innsbruck", "Salzburg", "Linz"),
    "IT": ("Rome", "Milan", "Bologna", "Padua", "Turin", "Pisa"),
    "ES": ("Madrid", "Barcelona", "Valencia", "Seville", "Granada"),
    "SE": ("Stockholm", "Uppsala", "Lund", "Gothenburg", "Umea"),
    "CA": ("Toronto", "Montreal", "Vancouver", "Ottawa", "Calgary"),
}
INSTITUTION_PATTERNS = ("University of {city}", "{city} Institute of Technology", "{city} Medical School", "{city} Center for Advanced Study")
STREETS = ("Main Street", "Park Road", "Station Road", "Campus Drive", "Science Avenue", "Hospital Lane", "Market Square")
NOISE_INSTITUTIONS = ("Research Center", "Institute for Advanced Study", "Department of Physics", "Faculty of Medicine")

SURNAMES = (
    "Schmidt Müller Schneider Fischer Weber Meyer Wagner Becker Schulz Hoffmann Koch Richter Klein Wolf Schröder "
    "Neumann Schwarz Zimmermann Braun Krüger Hofmann Hartmann Lange Schmitt Werner Krause Meier Lehmann Köhler "
    "Herrmann Walter Mayer Huber Kaiser Fuchs Peters Lang Scholz Möller Weiß Jung Hahn Vogel Friedrich Keller "
    "Günther Frank Berger Winkler Roth Beck Lorenz Baumann Franke Albrecht Ludwig Winter Simon Kraus Böhm "
    "Smith Johnson Brown Garcia Rossi Dubois Novak Kowalski Tanaka Nakamura Chen Wang Okafor Silva Andersson"
).split()
UNCOVERED_NAMES = {
    FEMALE: ("Ngozi", "Anahera", "Xochitl", "Sigrun", "Oksana", "Zainab", "Amaia", "Tove"),
    MALE: ("Tenzin", "Kofi", "Oluwaseun", "Ruairi", "Eero", "Yerlan", "Mateus", "Aarav"),
}

TOPICS = (
    {
        "discipline": "Physics and Astronomy",
        "words": "quantum laser optical photon spectroscopy plasma electron magnetic particle galaxy star cosmic neutrino detector radiation beam crystal lattice superconductivity collider".split(),
        "journals": ("Physical Review Letters", "Journal of Applied Physics", "Astrophysical Journal"),
        "subjects": ("physics", "astronomy", "optics", "nuclear physics", "condensed matter", "astrophysics"),
    },
    {
        "discipline": "Medicine",
        "words": "patient clinical surgery cancer therapy tumor cardiac disease treatment trial mortality diagnosis hospital infection chronic pediatric oncology outcome cohort syndrome".split(),
        "journals": ("The Lancet", "Journal of Clinical Oncology", "European Heart Journal"),
        "subjects": ("medicine", "oncology", "cardiology", "surgery", "pediatrics", "epidemiology"),
    },
    {
        "discipline": "Computer Science",
        "words": "algorithm network learning software database compiler distributed neural parallel graph security protocol robot vision retrieval encryption scheduling cloud semantic verification".split(),
        "journals": ("IEEE Transactions on Computers", "Lecture Notes in Computer Science", "Communications of the ACM"),
        "subjects": ("computer science", "artificial intelligence", "software engineering", "networks", "information systems", "theory of computation"),
    },
    {
        "discipline": "Chemistry and Chemical Engineering",
        "words": "synthesis catalyst polymer molecule reaction organic solvent oxidation ligand electrochemical nanoparticle membrane enzyme kinetics chromatography peptide crystalline hydrogen carbon spectrometry".split(),
        "journals": ("Journal of the American Chemical Society", "Angewandte Chemie", "Chemical Engineering Journal"),
        "subjects": ("chemistry", "chemical engineering", "catalysis", "organic chemistry", "polymer science", "electrochemistry"),
    },
    {
        "discipline": "Economics and Social Science",
        "words": "economic policy labor market migration inequality education welfare household wage trade finance governance survey employment regional pension taxation voting demographic".split(),
        "journals": ("American Economic Review", "European Sociological Review", "Journal of Public Economics"),
        "subjects": ("economics", "sociology", "political science", "demography", "public policy", "finance"),
    },
)
GENERIC_WORDS = "analysis study effects approach results evaluation model novel new method".split()
FUNDERS = (
    "German Research Foundation",
    "Federal Ministry of Education and Research",
    "European Research Council",
    "Alexander von Humboldt Foundation",
    "Volkswagen Foundation",
    "National Science Foundation",
    "National Institutes of Health",
    "Swiss National Science Foundation",
    "Wellcome Trust",
    "Max Planck Society",
)

# Philox stream purposes.
_IDENTITY, _STATES, _RECORDS, _LINKS, _MERGE = range(5)


@dataclass
class GeneratorConfig:
    researcher_count: int = 1000
    seed: int = 0
    first_year_min: int = 1998
    first_year_max: int = 2005
    observed_years: int = 15
    publications_per_year: float = 1.5
    merge_publications_per_year: float = 12.0
    gap_probability: float = 0.0
    departure_hazard: float = 0.01
    female_departure_multiplier: float = 1.0
    early_career_departure_multiplier: float = 1.0
    return_hazard: float = 0.15
    return_hazard_decay: float = 1.0
    transfer_hazard: float = 0.0
    immigrant_fraction: float = 0.0
    tie_probability: float = 0.0
    missing_country_probability: float = 0.0
    merge_contamination: float = 0.0
    female_share: float = 0.4
    unknown_name_share: float = 0.2
    collaboration_probability: float = 0.3
    affiliation_noise: float = 0.0
    topic_count: int = 3

    def validate(self):
        if self.researcher_count <= 0:
            raise ValueError("researcher_count must be positive")
        if self.seed is None:
            raise ValueError("seed is mandatory")
        for name in (
            "gap_probability",
            "departure_hazard",
            "return_hazard",
            "transfer_hazard",
            "immigrant_fraction",
            "tie_probability",
            "missing_country_probability",
            "merge_contamination",
            "female_share",
            "unknown_name_share",
            "collaboration_probability",
            "affiliation_noise",
        ):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        for name in ("female_departure_multiplier", "early_career_departure_multiplier", "return_hazard_decay", "publications_per_year"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 1 <= self.topic_count <= len(TOPICS):
            raise ValueError(f"topic_count must lie in [1, {len(TOPICS)}]")
        if not self.first_year_min <= self.first_year_max or self.first_year_max + self.observed_years - 1 > LAST_YEAR:
            raise ValueError("first-year range does not fit the observation window")
        return self

    @classmethod
    def from_mapping(cls, values):
        kinds = {f.name: f.type for f in fields(cls)}
        out = {}
        for key, raw in values.items():
            key = key.split(".", 1)[1] if key.startswith("synth.") else key
            if key not in kinds:
                raise KeyError(f"unknown generator setting {key!r}")
            kind = kinds[key]
            kind = {"int": int, "float": float}.get(kind, kind) if isinstance(kind, str) else kind
            out[key] = kind(raw)
        return cls(**out)

    def to_text(self):
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())


@dataclass
class Identity:
    identity_id: str
    author_id: str
    full_name: str
    gender: str
    topic: int
    countries: dict  # year -> true country
    events: list = field(default_factory=list)

    @property
    def first_year(self):
        return min(self.countries)

    @property
    def last_year(self):
        return max(self.countries)


@dataclass
class GroundTruth:
    identities: dict = field(default_factory=dict)  # identity id -> Identity
    record_identity: dict = field(default_factory=dict)
    record_country: dict = field(default_factory=dict)
    hidden: set = field(default_factory=set)
    merged_authors: set = field(default_factory=set)
    topic_disciplines: list = field(default_factory=list)

    def identities_of(self, author_id):
        return [i for i in self.identities.values() if i.author_id == author_id]

    def write_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            meta = {"type": "meta", "merged_authors": sorted(self.merged_authors), "topic_disciplines": self.topic_disciplines}
            fh.write(json.dumps(meta) + "\n")
            for ident in self.identities.values():
                row = asdict(ident)
                row["countries"] = {str(y): c for y, c in ident.countries.items()}
                row["events"] = [list(e) for e in ident.events]
                fh.write(json.dumps({"type": "identity", **row}, ensure_ascii=False) + "\n")
            for rid, iid in self.record_identity.items():
                fh.write(json.dumps({"type": "record", "record_id": rid, "identity_id": iid, "country": self.record_country[rid], "hidden": rid in self.hidden}) + "\n")

    @classmethod
    def read_jsonl(cls, path):
        truth = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                row = json.loads(line)
                kind = row.pop("type")
                if kind == "meta":
                    truth.merged_authors = set(row["merged_authors"])
                    truth.topic_disciplines = row["topic_disciplines"]
                elif kind == "identity":
                    row["countries"] = {int(y): c for y, c in row["countries"].items()}
                    row["events"] = [MigrationEvent(*e) for e in row["events"]]
                    truth.identities[row["identity_id"]] = Identity(**row)
                else:
                    truth.record_identity[row["record_id"]] = row["identity_id"]
                    truth.record_country[row["record_id"]] = row["country"]
                    if row["hidden"]:
                        truth.hidden.add(row["record_id"])
        return truth


def _rng(seed, purpose, index):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, purpose, index])))


def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def _host(rng, exclude=None):
    hosts = [h for h in HOSTS if h != exclude]
    weights = np.array([w for h, w in zip(HOSTS, HOST_WEIGHTS) if h != exclude])
    return hosts[int(rng.choice(len(hosts), p=weights / weights.sum()))]


def _name_pools(table):
    pools = {FEMALE: [], MALE: []}
    for name, (gender, p) in sorted(table.entries.items()):
        if p >= 0.9 and name.isalpha():
            pools[gender].append(name.capitalize())
    return pools


def random_affiliation(rng, country, noise=0.0):
    if rng.random() < noise:
        return Affiliation(_pick(rng, NOISE_INSTITUTIONS), "", f"{_pick(rng, STREETS)} {int(rng.integers(1, 200))}", country)
    city = _pick(rng, CITIES[country])
    return Affiliation(
        _pick(rng, INSTITUTION_PATTERNS).format(city=city),
        city,
        f"{_pick(rng, STREETS)} {int(rng.integers(1, 200))}",
        country,
    )


def synthetic_affiliations(n, countries=("DE",) + HOSTS[:9], seed=0, noise=0.0):
    """``(affiliation, country)`` pairs with disjoint per-country city lexicons."""
    rng = _rng(seed, 99, 0)
    out = []
    for _ in range(n):
        country = countries[int(rng.integers(len(countries)))]
        out.append((random_affiliation(rng, country, noise), country))
    return out


def _simulate(cfg, rng, first, gender, immigrant):
    """Yearly countries and planted events for one researcher."""
    countries, events = {}, []
    if immigrant:
        state, arrival = _host(rng), first + int(rng.integers(1, 4))
    else:
        state, arrival = GERMANY, None
    abroad_for = 0 if state == GERMANY else 1
    year = first
    while True:
        countries[year] = state
        u = rng.random()
        if arrival is not None and year < arrival:
            nxt = GERMANY if year + 1 == arrival else state
        elif state == GERMANY:
            h = cfg.departure_hazard
            if gender == FEMALE:
                h *= cfg.female_departure_multiplier
            if year + 1 - first <= 7:
                h *= cfg.early_career_departure_multiplier
            nxt = _host(rng) if u < min(h, 1.0) else GERMANY
        else:
            h = cfg.return_hazard * cfg.return_hazard_decay ** max(abroad_for - 1, 0)
            if u < min(h, 1.0):
                nxt = GERMANY
            elif rng.random() < cfg.transfer_hazard:
                nxt = _host(rng, exclude=state)
            else:
                nxt = state
        done = year - first + 1 >= cfg.observed_years and nxt == state
        if done or year + 1 > LAST_YEAR:
            break
        if nxt != state:
            events.append((year + 1, state, nxt))
        abroad_for = 0 if nxt == GERMANY else (abroad_for + 1 if nxt == state else 1)
        state = nxt
        year += 1
    return countries, events


def _far_name(rng, pool, surnames, other):
    from rapidfuzz.distance import Levenshtein

    for _ in range(200):
        name = f"{_pick(rng, pool)} {_pick(rng, surnames)}"
        if Levenshtein.normalized_similarity(name.casefold(), other.casefold()) < 0.3:
            return name
    raise RuntimeError("could not draw a sufficiently different name")


def generate(config=None, name_table=None):
    """Generate ``(RecordStore, GroundTruth)``; deterministic for a given config."""
    cfg = (config or GeneratorConfig()).validate()
    table = name_table or NameGenderTable.default()
    pools = _name_pools(table)
    n = cfg.researcher_count
    merge_pairs = int(round(cfg.merge_contamination * n / (1.0 + cfg.merge_contamination)))
    merge_rng = _rng(cfg.seed, _MERGE, 0)
    merged_members = merge_rng.permutation(n)[: 2 * merge_pairs] if merge_pairs else np.array([], dtype=int)
    partner = {}
    for a, b in zip(merged_members[0::2], merged_members[1::2]):
        a, b = sorted((int(a), int(b)))
        partner[b] = a

    truth = GroundTruth(topic_disciplines=[TOPICS[t]["discipline"] for t in range(cfg.topic_count)])
    profiles = []  # per identity: dict of emitted features
    for i in range(n):
        rng = _rng(cfg.seed, _IDENTITY, i)
        gender = FEMALE if rng.random() < cfg.female_share else MALE
        if rng.random() < cfg.unknown_name_share:
            given = _pick(rng, UNCOVERED_NAMES[gender])
        else:
            given = _pick(rng, pools[gender])
        full = f"{given} {_pick(rng, SURNAMES)}"
        topic = int(rng.integers(cfg.topic_count))
        funder = _pick(rng, FUNDERS)
        everyone = pools[FEMALE] + pools[MALE]
        team = sorted({f"{_pick(rng, everyone)} {_pick(rng, SURNAMES)}" for _ in range(5)})
        if i in partner:
            base = profiles[partner[i]]
            gender_pool = pools[gender] if rng.random() >= cfg.unknown_name_share else list(UNCOVERED_NAMES[gender])
            full = _far_name(rng, gender_pool, SURNAMES, base["name"])
            if cfg.topic_count > 1:
                topic = (base["topic"] + 1 + int(rng.integers(cfg.topic_count - 1))) % cfg.topic_count
            funder = _pick(rng, [f for f in FUNDERS if f != base["funder"]])
            while set(team) & set(base["team"]):
                team = sorted({f"{_pick(rng, everyone)} {_pick(rng, SURNAMES)}" for _ in range(5)})
        first = int(rng.integers(cfg.first_year_min, cfg.first_year_max + 1))
        immigrant = rng.random() < cfg.immigrant_fraction
        countries, planted = _simulate(cfg, _rng(cfg.seed, _STATES, i), first, gender, immigrant)
        author_id = f"A{(partner[i] if i in partner else i):06d}"
        identity = Identity(
            f"I{i:06d}", author_id, full, gender, topic, countries,
            [MigrationEvent(author_id, y, f, t) for y, f, t in planted],
        )
        truth.identities[identity.identity_id] = identity
        if i in partner:
            truth.merged_authors.add(author_id)
        profiles.append({
            "name": full,
            "topic": topic,
            "funder": funder,
            "team": team,
            "subjects": sorted(_rng(cfg.seed, _IDENTITY, n + i).choice(TOPICS[topic]["subjects"], size=2, replace=False).tolist()),
            "grant": f"GR-{cfg.seed}-{i:06d}",
            "intensity": cfg.merge_publications_per_year if (i in partner or i in partner.values()) else cfg.publications_per_year,
        })

    identities = list(truth.identities.values())
    # Year plans: per identity and year, the list of (country, affiliation) per publication.
    plans, tie_years = [], []
    for i, ident in enumerate(identities):
        rng = _rng(cfg.seed, _RECORDS, i)
        lam = max(profiles[i]["intensity"] - 1.0, 0.0)
        years = sorted(ident.countries)
        home_aff, plan, ties = {}, {}, set()
        prev_country = None
        for y in years:
            country = ident.countries[y]
            if country != prev_country:
                home_aff[country] = random_affiliation(rng, country, cfg.affiliation_noise)
            count = 1 + int(rng.poisson(lam))
            inner = years[0] < y < years[-1]
            if inner and cfg.gap_probability and rng.random() < cfg.gap_probability:
                prev_country = country
                continue
            if y > years[0] and country == prev_country and rng.random() < cfg.tie_probability:
                other = _host(rng, exclude=country) if country == GERMANY else GERMANY
                half = max(1, (count + 1) // 2)
                plan[y] = [(country, home_aff[country])] * half + [(other, random_affiliation(rng, other))] * half
                ties.add(y)
            else:
                plan[y] = [(country, home_aff[country])] * count
            prev_country = country
        plans.append(plan)
        tie_years.append(ties)

    records = []
    counter = {"pub": 0}

    def emit(i, year, country, affiliation, publication_id, title, journal, keywords, rng):
        p = profiles[i]
        coauthors = list(p["team"])
        if len(coauthors) > 3 and rng.random() < 0.3:
            del coauthors[int(rng.integers(len(coauthors)))]
        rid = f"R{len(records):07d}"
        hidden = rng.random() < cfg.missing_country_probability
        rec = AuthorshipRecord(
            record_id=rid,
            author_id=identities[i].author_id,
            publication_id=publication_id,
            year=year,
            author_full_name=p["name"],
            affiliation=Affiliation(affiliation.institution, affiliation.city, affiliation.address_line, None if hidden else country),
            coauthor_names=tuple(coauthors),
            journal_title=journal,
            publication_title=title,
            keywords=tuple(keywords),
            subject_tags=tuple(p["subjects"]),
            funding_texts=(p["funder"],),
            grant_numbers=(p["grant"],),
        )
        records.append(rec)
        truth.record_identity[rid] = identities[i].identity_id
        truth.record_country[rid] = country
        if hidden:
            truth.hidden.add(rid)

    # Who is publishing from Germany each year (collaboration partners).
    in_germany = {}
    for i, ident in enumerate(identities):
        for y in plans[i]:
            if ident.countries[y] == GERMANY and y not in tie_years[i]:
                in_germany.setdefault(y, []).append(i)

    for i, ident in enumerate(identities):
        rng = _rng(cfg.seed, _LINKS, i)
        topic = TOPICS[profiles[i]["topic"]]
        for y, pubs in sorted(plans[i].items()):
            for country, aff in pubs:
                pid = f"P{counter['pub']:07d}"
                counter["pub"] += 1
                order = rng.permutation(len(topic["words"]))
                words = [topic["words"][k] for k in order[:5]] + [_pick(rng, GENERIC_WORDS)]
                title = " ".join(words).capitalize()
                journal = _pick(rng, topic["journals"])
                keywords = [topic["words"][k] for k in order[5:8]]
                emit(i, y, country, aff, pid, title, journal, keywords, rng)
                abroad = ident.countries[y] != GERMANY and country != GERMANY
                if abroad and rng.random() < cfg.collaboration_probability:
                    partners = [j for j in in_germany.get(y, ()) if j != i]
                    if partners:
                        j = partners[int(rng.integers(len(partners)))]
                        jaff = plans[j][y][0][1]
                        emit(j, y, GERMANY, jaff, pid, title, journal, keywords, rng)
    return RecordStore(records), truth


# --- oracles ------------------------------------------------------------


def oracle_rates(truth, cohort=None, period=(1996, LAST_YEAR), genders=None, censor="last_pub", home=GERMANY, by="author"):
    """Exposure ledger by literal per-year enumeration of true countries.

    ``genders`` maps researcher keys (author ids when ``by="author"``,
    identity ids when ``by="identity"``) to labels; ``"true"`` uses the
    planted genders.
    """
    p0, p1 = period
    ledger = ExposureLedger(cohort, (p0, p1))
    for ident in truth.identities.values():
        years = sorted(ident.countries)
        first, last = years[0], years[-1]
        if cohort is not None and not (cohort.start <= first <= cohort.end):
            continue
        if ident.countries[first] != home:
            continue
        key = ident.author_id if by == "author" else ident.identity_id
        if genders == "true":
            g = ident.gender
        elif genders is None:
            g = ALL
        else:
            g = genders.get(key, "unknown")
        end = last if censor == "last_pub" else max(last, LAST_YEAR)
        country = None
        left = None
        returned = False
        for y in range(first, end + 1):
            country = ident.countries.get(y, country)
            nxt = ident.countries.get(y + 1, country) if y + 1 <= end else None
            if country == home and p0 <= y <= p1:
                cell = ledger._cell(ledger.departure, (g, y + 1 - first))
                cell.person_years += 1
                if nxt is not None and nxt != home:
                    cell.events += 1
            if left is None and country != home:
                left = y
            if left is not None and not returned and country != home:
                if p0 <= y <= p1:
                    cell = ledger._cell(ledger.returns, (g, left - first, y - left + 1))
                    cell.person_years += 1
                    if nxt == home:
                        cell.events += 1
                if nxt == home:
                    returned = True
    return ledger.sorted()


def naive_change_points(author_id, countries):
    years = sorted(countries)
    return [
        MigrationEvent(author_id, b, countries[a], countries[b])
        for a, b in zip(years, years[1:])
        if countries[a] != countries[b]
    ]


def truth_timelines(truth):
    """Timelines built directly from planted countries, keyed by author id."""
    from .mobility import ResearcherTimeline

    return {i.author_id: ResearcherTimeline.from_countries(i.author_id, i.countries) for i in truth.identities.values()}


# --- scoring ------------------------------------------------------------


def _pairs(n):
    return n * (n - 1) // 2


def pairwise_scores(predicted, actual):
    """Pairwise precision, recall and F1 of two labelings over the same items.

    Both arguments map item -> cluster label.
    """
    items = list(actual)
    joint, pred_sizes, true_sizes = {}, {}, {}
    for it in items:
        p, t = predicted[it], actual[it]
        joint[(p, t)] = joint.get((p, t), 0) + 1
        pred_sizes[p] = pred_sizes.get(p, 0) + 1
        true_sizes[t] = true_sizes.get(t, 0) + 1
    tp = sum(_pairs(c) for c in joint.values())
    pp = sum(_pairs(c) for c in pred_sizes.values())
    ap = sum(_pairs(c) for c in true_sizes.values())
    return _prf(tp, pp, ap)


def _prf(tp, n_pred, n_true):
    precision = tp / n_pred if n_pred else 1.0
    recall = tp / n_true if n_true else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def event_scores(predicted, actual):
    pred, true = set(predicted), set(actual)
    return _prf(len(pred & true), len(pred), len(true))


def permuted_accuracy(predicted, actual):
    """Accuracy after the best one-to-one relabeling of predicted labels."""
    keys = list(actual)
    if not keys:
        return 1.0
    plabels = sorted({predicted[k] for k in keys}, key=str)
    tlabels = sorted({actual[k] for k in keys}, key=str)
    counts = np.zeros((len(plabels), len(tlabels)))
    pi = {l: i for i, l in enumerate(plabels)}
    ti = {l: i for i, l in enumerate(tlabels)}
    for k in keys:
        counts[pi[predicted[k]], ti[actual[k]]] += 1
    rows, cols = linear_sum_assignment(-counts)
    return float(counts[rows, cols].sum() / len(keys))


@dataclass
class Inference:
    # None means "not supplied" and skips the matching score
    revised_ids: dict = None  # record id -> revised author id
    countries: dict = None  # record id -> imputed country (hidden records)
    events: list = None  # MigrationEvent keyed by revised id
    topics: dict = None  # revised id -> topic label

    @classmethod
    def from_truth(cls, truth):
        revised = dict(truth.record_identity)
        ident = truth.identities
        return cls(
            revised_ids=revised,
            countries={r: truth.record_country[r] for r in truth.hidden},
            events=[MigrationEvent(i.identity_id, e.year, e.from_country, e.to_country) for i in ident.values() for e in i.events],
            topics={i.identity_id: i.topic for i in ident.values()},
        )


def _majority_identity(inferred, truth):
    votes = {}
    for rid, rev in inferred.revised_ids.items():
        votes.setdefault(rev, {}).setdefault(truth.record_identity[rid], 0)
        votes[rev][truth.record_identity[rid]] += 1
    return {rev: max(sorted(v), key=lambda k: v[k]) for rev, v in votes.items()}


def score_inference(inferred, truth):
    """Quality of an inference run against planted truth."""
    report = {}
    if inferred.revised_ids is not None:
        p, r, f = pairwise_scores(inferred.revised_ids, {k: truth.record_identity[k] for k in inferred.revised_ids})
        report.update(disambiguation_precision=p, disambiguation_recall=r, disambiguation_f1=f)
    if inferred.countries is not None and truth.hidden:
        hits = sum(1 for rid in truth.hidden if inferred.countries.get(rid) == truth.record_country[rid])
        report["imputation_accuracy"] = hits / len(truth.hidden)
    owner = _majority_identity(inferred, truth) if inferred.revised_ids else {}
    if inferred.events is not None:
        predicted = [(owner.get(e.revised_author_id, e.revised_author_id), e.year, e.from_country, e.to_country) for e in inferred.events]
        actual = [(i.identity_id, e.year, e.from_country, e.to_country) for i in truth.identities.values() for e in i.events]
        p, r, f = event_scores(predicted, actual)
        report.update(event_precision=p, event_recall=r, event_f1=f)
    if inferred.topics is not None:
        predicted = {}
        for rev, label in inferred.topics.items():
            predicted.setdefault(owner.get(rev, rev), label)
        actual = {k: truth.identities[k].topic for k in predicted if k in truth.identities}
        report["topic_accuracy"] = permuted_accuracy({k: predicted[k] for k in actual}, actual)
    return report


def planted_corpus(n_docs=300, n_topics=3, words_per_topic=30, doc_length=40, seed=0):
    """Documents drawn from disjoint topic vocabularies; returns (docs, labels)."""
    rng = _rng(seed, 7, 0)
    vocab = [[f"t{k}w{j:02d}" for j in range(words_per_topic)] for k in range(n_topics)]
    # Zipf-like word weights within each topic.
    weights = 1.0 / np.arange(1, words_per_topic + 1)
    weights /= weights.sum()
    docs, labels = [], []
    for d in range(n_docs):
        k = d % n_topics
        docs.append([vocab[k][j] for j in rng.choice(words_per_topic, size=doc_length, p=weights)])
        labels.append(k)
    return docs, labels


def expected_binomial_se(rate, exposure):
    return math.sqrt(rate * (1.0 - rate) / exposure)


def discipline_lexicon(topic_count=len(TOPICS)):
    """Discipline -> keywords for the planted topics (for drafting a discipline map)."""
    return {t["discipline"]: list(t["words"]) + list(t["subjects"]) for t in TOPICS[:topic_count]}
