"""End-to-end pipeline run and the tabular reports behind the figures."""

import csv
import hashlib
import json
import os
import shutil
import statistics
import tempfile
from collections import Counter
from dataclasses import dataclass, field

from . import __version__
from .config import parse_cohorts
from .countries import GERMANY
from .disambiguation import AuthorDisambiguator
from .gender import FEMALE, LABELS, MALE, UNKNOWN, NameGenderTable, assign_gender, profile_names, read_overrides
from .imputer import CountryClassifier, impute, train, training_pairs
from .mobility import Category, academic_age, build_timelines, classify, detect_events, write_events
from .rates import (
    ALL,
    NoAbroadPublicationsError,
    UndefinedRateError,
    accumulate_exposure,
    collaborative_ratio,
    first_departure,
    pearson,
    publication_countries,
    rate_table,
    return_rate,
)
from .records import load_store, save_store
from .topics import MULTIDISCIPLINARY, DisciplineMap, GibbsLDA, assign_discipline, build_documents, detect_collocations, propose_discipline_map

STAGES = ("ingest", "impute", "disambiguate", "gender", "mobility", "disciplines", "rates", "report")
RATE_COLUMNS = ("cohort", "gender", "age_at_departure", "years_since_departure", "person_years", "events", "rate_per_1000")
DATA_ERRORS = (ValueError, OSError, ZeroDivisionError)


class StageError(RuntimeError):
    """A pipeline stage failed; ``data_error`` separates bad input from bugs."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
        self.data_error = isinstance(cause, DATA_ERRORS)


@dataclass
class Assignments:
    genders: dict = field(default_factory=dict)  # revised id -> label
    categories: dict = field(default_factory=dict)  # revised id -> Category or None
    disciplines: dict = field(default_factory=dict)  # revised id -> discipline
    evaluation_year: int = 2020


# --- report builders ----------------------------------------------------


def _median(values):
    return statistics.median(values) if values else 0


def summarize_population(store, timelines, assignments):
    """Headline counts of researchers and publications by gender and category."""
    pubs = {a: {r.publication_id for r in store.records_of(a)} for a in store.author_index}
    by_gender = {g: {"researchers": 0, "publications": 0} for g in (FEMALE, MALE, UNKNOWN)}
    by_category = {c.value: {"researchers": 0, "publications": 0} for c in Category}
    gender_pubs = {g: set() for g in by_gender}
    category_pubs = {c: set() for c in by_category}
    ages = {c: {g: [] for g in (ALL, FEMALE, MALE)} for c in by_category}
    for a in sorted(pubs):
        g = assignments.genders.get(a, UNKNOWN)
        by_gender[g]["researchers"] += 1
        gender_pubs[g] |= pubs[a]
        cat = assignments.categories.get(a)
        if cat is None:
            continue
        cat = Category(cat).value
        by_category[cat]["researchers"] += 1
        category_pubs[cat] |= pubs[a]
        age = academic_age(timelines[a], assignments.evaluation_year)
        ages[cat][ALL].append(age)
        if g in LABELS:
            ages[cat][g].append(age)
    for g in by_gender:
        by_gender[g]["publications"] = len(gender_pubs[g])
    for c in by_category:
        by_category[c]["publications"] = len(category_pubs[c])
    per_discipline = Counter(assignments.disciplines.get(a) for a in pubs if a in assignments.disciplines)
    sizes = sorted(per_discipline.values())
    return {
        "researchers": len(pubs),
        "publications": len({p for s in pubs.values() for p in s}),
        "by_gender": by_gender,
        "by_category": by_category,
        "researchers_per_discipline": {
            "min": sizes[0] if sizes else 0,
            "max": sizes[-1] if sizes else 0,
            "median": _median(sizes),
        },
        "median_academic_age": {c: {g: _median(v) for g, v in per.items()} for c, per in ages.items()},
    }


def pyramid_rows(timelines, assignments):
    """(category, gender, academic_age, count) for every occupied cell."""
    counts = Counter()
    for a in sorted(timelines):
        cat = assignments.categories.get(a)
        if cat is None:
            continue
        age = academic_age(timelines[a], assignments.evaluation_year)
        counts[(Category(cat).value, assignments.genders.get(a, UNKNOWN), age)] += 1
    return [(*k, n) for k, n in sorted(counts.items())]


def flow_rows(timelines, home=GERMANY):
    """(host_country, first_departures, returned, return_share) per host."""
    went, back = Counter(), Counter()
    for a in sorted(timelines):
        tl = timelines[a]
        if tl.origin_country != home:
            continue
        dep = first_departure(tl, home)
        if dep is None:
            continue
        went[dep.to_country] += 1
        if any(tl.effective[y] == home for y in range(dep.year + 1, tl.last_pub_year + 1)):
            back[dep.to_country] += 1
    order = sorted(went, key=lambda c: (-went[c], c))
    return [(c, went[c], back[c], back[c] / went[c]) for c in order]


def cohort_ledgers(timelines, cohorts, genders, period, censor):
    return {c.label: accumulate_exposure(timelines, c, period, genders, censor) for c in cohorts}


def rate_rows(ledgers, max_age=5, max_years_since=5):
    """Departure rows (age 1..max_age) and first-return rows (years since 1..max)."""
    departure, returns = [], []
    for label, ledger in ledgers.items():
        departure += rate_table(ledger, "departure", ages=range(1, max_age + 1))
        returns += rate_table(ledger, "return", ages=[None], years_since=range(1, max_years_since + 1))
    return departure, returns


def female_share_rows(timelines, assignments, cohorts):
    """(discipline, cohort, group, female, male, female_share) over known genders."""
    counts = {}
    for a in sorted(timelines):
        g = assignments.genders.get(a, UNKNOWN)
        cat = assignments.categories.get(a)
        disc = assignments.disciplines.get(a)
        if g not in LABELS or cat is None or disc is None:
            continue
        first = timelines[a].first_pub_year
        for c in cohorts:
            if first in c:
                cell = counts.setdefault((disc, c.label, Category(cat).value), Counter())
                cell[g] += 1
    return [(d, c, grp, n[FEMALE], n[MALE], n[FEMALE] / (n[FEMALE] + n[MALE])) for (d, c, grp), n in sorted(counts.items())]


def collab_ratios(timelines, store, home=GERMANY):
    """Collaborative ratio per German-origin researcher with a departure."""
    pub_countries = publication_countries(store)
    out = {}
    for a in sorted(timelines):
        tl = timelines[a]
        if tl.origin_country != home or first_departure(tl, home) is None:
            continue
        try:
            out[a] = collaborative_ratio(tl, store.records_of(a), pub_countries, home)
        except NoAbroadPublicationsError:
            continue
    return out


def scatter_rows(timelines, assignments, ratios, cohorts, period, censor):
    """Per scope and discipline: mean collaborative ratio against the first-return rate."""
    rows = []
    scopes = [(ALL, None)] + [(c.label, c) for c in cohorts]
    disciplines = sorted({d for d in assignments.disciplines.values() if d is not None})
    for label, cohort in scopes:
        for disc in disciplines:
            members = {a: timelines[a] for a in sorted(timelines) if assignments.disciplines.get(a) == disc}
            if cohort is not None:
                members = {a: tl for a, tl in members.items() if tl.first_pub_year in cohort}
            crs = [ratios[a].ratio for a in members if a in ratios]
            if not crs:
                continue
            ledger = accumulate_exposure(members, cohort, period, None, censor)
            try:
                rate = return_rate(ledger)
            except UndefinedRateError:
                continue
            rows.append((label, disc, len(crs), sum(crs) / len(crs), rate.rate_per_1000))
    return rows


def correlation_rows(scatter, cohorts):
    rows = []
    for label in [ALL] + [c.label for c in cohorts]:
        pts = [(r[3], r[4]) for r in scatter if r[0] == label]
        try:
            r = pearson([p[0] for p in pts], [p[1] for p in pts])
        except (ValueError, UndefinedRateError):
            r = None
        rows.append((label, r, len(pts)))
    return rows


# --- run ----------------------------------------------------------------


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


class _Run:
    def __init__(self, cfg, workdir):
        self.cfg = cfg
        self.dir = workdir
        self.metrics = {}

    def path(self, name):
        return os.path.join(self.dir, name)

    def ingest(self):
        cfg = self.cfg
        self.raw = load_store(cfg.input.path, cfg.input.format)
        with open(self.path("rejects.jsonl"), "w", encoding="utf-8") as fh:
            for rej in self.raw.rejects:
                fh.write(json.dumps({"line": rej.line, "reason": rej.reason}) + "\n")
        self.metrics["records"] = len(self.raw)
        self.metrics["rejects"] = len(self.raw.rejects)

    def impute(self):
        s = self.cfg.imputer
        if s.model:
            clf = CountryClassifier.load(s.model)
        else:
            pairs = training_pairs(self.raw, limit=s.training_limit, seed=self.cfg.seed)
            clf, acc = train(
                pairs,
                split_fraction=s.split_fraction,
                seed=self.cfg.seed,
                epochs=s.epochs,
                hidden_units=s.hidden_units,
                learning_rate=s.learning_rate,
                batch_size=s.batch_size,
                min_df=s.min_df,
            )
            self.metrics["imputer_holdout_accuracy"] = acc
        clf.save(self.path("country_model.json"))
        self.imputed, report = impute(self.raw, clf, s.floor)
        write_table(self.path("imputation.csv"), ("record_id", "predicted", "confidence", "status"), report)
        self.metrics["imputed"] = sum(1 for e in report if e.status == "imputed")
        self.metrics["imputation_low_confidence"] = sum(1 for e in report if e.status != "imputed")

    def disambiguate(self):
        s = self.cfg.disambiguator
        model = AuthorDisambiguator(s.country_threshold, s.publication_threshold, s.merge_threshold).fit(self.imputed)
        self.id_map = model.id_map_
        self.id_map.write_csv(self.path("revised_ids.csv"))
        self.store = model.transform(self.imputed)
        save_store(self.store, self.path("store.jsonl"))
        self.metrics["flagged_profiles"] = len(model.flagged_)
        self.metrics["revised_profiles"] = len(self.store.author_index)

    def gender(self):
        s = self.cfg.gender
        table = NameGenderTable.read_csv(s.table) if s.table else NameGenderTable.default()
        overrides = read_overrides(s.overrides) if s.overrides else None
        self.genders = assign_gender(profile_names(self.store), table, s.floor, overrides)
        self.genders.write_csv(self.path("genders.csv"))
        self.metrics["gender_coverage"] = self.genders.coverage()

    def mobility(self):
        year = self.cfg.mobility.evaluation_year
        self.timelines = build_timelines(self.store)
        events = [e for a in sorted(self.timelines) for e in detect_events(self.timelines[a])]
        write_events(events, self.path("events.csv"))
        self.categories = {}
        for a in sorted(self.timelines):
            tl = self.timelines[a]
            self.categories[a] = classify(tl, year) if tl.first_pub_year <= year else None

    def disciplines(self):
        s = self.cfg.disciplines
        docs = build_documents(self.store)
        colloc = detect_collocations(docs, s.collocation_min_count, s.collocation_threshold)
        docs = [colloc.apply(d) for d in docs]
        lda = GibbsLDA(n_topics=s.k, alpha=s.alpha or None, beta=s.beta, n_iter=s.iters, random_state=self.cfg.seed).fit(docs)
        lda.save(self.path("lda_model.json"))
        if s.map:
            dmap = DisciplineMap.read_csv(s.map)
            if not dmap.covers(s.k):
                raise ValueError(f"discipline map {s.map} does not cover all {s.k} topics")
        else:
            from .synth import discipline_lexicon

            dmap = propose_discipline_map(lda, discipline_lexicon(), s.top_n)
        dmap.write_csv(self.path("discipline_map.csv"))
        self.disc = {}
        rows = []
        for doc, dist in zip(docs, lda.doc_topic_):
            self.disc[doc.revised_author_id] = assign_discipline(dist, dmap)
            top = int(dist.argmax())
            rows.append((doc.revised_author_id, self.disc[doc.revised_author_id], top, float(dist[top])))
        write_table(self.path("disciplines.csv"), ("revised_author_id", "discipline", "top_topic", "top_share"), rows)
        self.metrics["multidisciplinary"] = sum(1 for d in self.disc.values() if d == MULTIDISCIPLINARY)

    def rates(self):
        s = self.cfg.rates
        self.cohorts = parse_cohorts(s.cohorts)
        self.period = (s.period_start, s.period_end)
        self.ledgers = cohort_ledgers(self.timelines, self.cohorts, self.genders.labels, self.period, s.censor)
        departure, returns = rate_rows(self.ledgers, s.max_age, s.max_years_since)
        for name, rows in (("rates_departure.csv", departure), ("rates_return.csv", returns)):
            write_table(self.path(name), RATE_COLUMNS, [r[1:] for r in rows])

    def report(self):
        s = self.cfg.rates
        assignments = Assignments(self.genders.labels, self.categories, self.disc, self.cfg.mobility.evaluation_year)
        rows = [(a, self.timelines[a].first_pub_year, _fmt(self.categories[a] and self.categories[a].value), self.genders[a], self.disc.get(a)) for a in sorted(self.timelines)]
        write_table(self.path("researchers.csv"), ("revised_author_id", "first_pub_year", "category", "gender", "discipline"), rows)
        write_table(self.path("pyramid.csv"), ("category", "gender", "academic_age", "count"), pyramid_rows(self.timelines, assignments))
        write_table(self.path("country_flows.csv"), ("host_country", "first_departures", "returned", "return_share"), flow_rows(self.timelines))
        write_table(
            self.path("female_share.csv"),
            ("discipline", "cohort", "group", "female", "male", "female_share"),
            female_share_rows(self.timelines, assignments, self.cohorts),
        )
        ratios = collab_ratios(self.timelines, self.store)
        write_table(self.path("collaborative_ratios.csv"), ("revised_author_id", "german_linked", "total", "ratio"), [(*r, r.ratio) for r in ratios.values()])
        scatter = scatter_rows(self.timelines, assignments, ratios, self.cohorts, self.period, s.censor)
        write_table(self.path("scatter.csv"), ("scope", "discipline", "researchers", "collaborative_ratio", "return_rate_per_1000"), scatter)
        write_table(self.path("correlations.csv"), ("scope", "pearson_r", "n"), correlation_rows(scatter, self.cohorts))
        _write_json(self.path("summary.json"), summarize_population(self.store, self.timelines, assignments))


def run_pipeline(config):
    """Run every stage and write the report bundle to ``config.output_dir``.

    Outputs are staged in a scratch directory and moved into place only when
    every stage succeeds. Returns the manifest.
    """
    out_dir = os.path.abspath(config.output_dir)
    parent = os.path.dirname(out_dir)
    os.makedirs(parent, exist_ok=True)
    work = tempfile.mkdtemp(prefix=".partial-", dir=parent)
    run = _Run(config, work)
    try:
        for stage in STAGES:
            try:
                getattr(run, stage)()
            except Exception as exc:
                raise StageError(stage, exc) from exc
        names = sorted(os.listdir(work))
        manifest = {
            "version": __version__,
            "seed": config.seed,
            "config": {k: v for k, v in config.to_flat().items() if k != "output.dir"},
            "stages": list(STAGES),
            "metrics": run.metrics,
            "outputs": {n: _sha256(os.path.join(work, n)) for n in names},
        }
        _write_json(os.path.join(work, "manifest.json"), manifest)
        os.makedirs(out_dir, exist_ok=True)
        for n in names + ["manifest.json"]:
            os.replace(os.path.join(work, n), os.path.join(out_dir, n))
    finally:
        shutil.rmtree(work, ignore_errors=True)
    return manifest


def load_outputs(out_dir):
    """Read a report bundle back (CSV rows as dicts, JSON as objects)."""
    bundle = {}
    for name in sorted(os.listdir(out_dir)):
        path = os.path.join(out_dir, name)
        if name.endswith(".csv"):
            with open(path, encoding="utf-8", newline="") as fh:
                bundle[name] = list(csv.DictReader(fh))
        elif name.endswith(".json") and name != "lda_model.json" and name != "country_model.json":
            with open(path, encoding="utf-8") as fh:
                bundle[name] = json.load(fh)
    return bundle
