"""Command-line entry point: one subcommand per stage plus ``report`` for a full run.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

import argparse
import csv
import json
import os
import sys

from .config import ConfigError, PipelineConfig, parse_cohorts, read_kv
from .pipeline import RATE_COLUMNS, StageError, cohort_ledgers, rate_rows, run_pipeline, write_table

OK, USAGE, DATA, INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _ingest(args):
    from .records import load_store, save_store

    store = load_store(args.input, args.format)
    save_store(store, args.out)
    if args.rejects:
        with open(args.rejects, "w", encoding="utf-8") as fh:
            for rej in store.rejects:
                fh.write(json.dumps({"line": rej.line, "reason": rej.reason}) + "\n")
    print(f"{len(store)} records, {len(store.rejects)} rejected")


def _impute(args):
    from .imputer import CountryClassifier, impute, train, training_pairs
    from .records import load_store, save_store

    store = load_store(args.store)
    if args.train:
        clf, acc = train(training_pairs(store, seed=args.seed), seed=args.seed, epochs=args.epochs)
        clf.save(args.model)
        print(f"held-out accuracy {acc:.4f}")
    else:
        clf = CountryClassifier.load(args.model)
    store, report = impute(store, clf, args.floor)
    save_store(store, args.out)
    if args.report:
        write_table(args.report, ("record_id", "predicted", "confidence", "status"), report)
    print(f"{sum(e.status == 'imputed' for e in report)} of {len(report)} missing countries imputed")


def _disambiguate(args):
    from .disambiguation import AuthorDisambiguator
    from .records import load_store, save_store

    store = load_store(args.store)
    model = AuthorDisambiguator(args.country_threshold, args.pub_threshold, args.merge_threshold).fit(store)
    model.id_map_.write_csv(args.map)
    save_store(model.transform(store), args.out)
    print(f"{len(model.flagged_)} suspicious profiles split into {sum(len(c) for c in model.clusters_.values())} clusters")


def _gender(args):
    from .gender import NameGenderTable, assign_gender, profile_names, read_overrides
    from .records import load_store

    store = load_store(args.store)
    table = NameGenderTable.read_csv(args.table) if args.table else NameGenderTable.default()
    overrides = read_overrides(args.overrides) if args.overrides else None
    result = assign_gender(profile_names(store), table, args.floor, overrides)
    result.write_csv(args.out)
    print(f"coverage {result.coverage():.4f}")


def _mobility(args):
    from .mobility import build_timelines, classify, detect_events, write_events
    from .records import load_store

    timelines = build_timelines(load_store(args.store))
    events = [e for a in sorted(timelines) for e in detect_events(timelines[a])]
    write_events(events, args.out)
    if args.categories:
        rows = []
        for a in sorted(timelines):
            tl = timelines[a]
            cat = classify(tl, args.evaluation_year) if tl.first_pub_year <= args.evaluation_year else None
            rows.append((a, cat.value if cat else ""))
        write_table(args.categories, ("revised_author_id", "category"), rows)
    print(f"{len(events)} events over {len(timelines)} researchers")


def _disciplines(args):
    from .records import load_store
    from .topics import DisciplineMap, GibbsLDA, assign_discipline, build_documents, detect_collocations, select_k

    docs = build_documents(load_store(args.store))
    colloc = detect_collocations(docs)
    docs = [colloc.apply(d) for d in docs]
    k = args.k
    if args.select_k:
        k, scores = select_k(docs, [int(x) for x in args.select_k.split(",")], seed=args.seed, n_iter=args.iters)
        print("coherence " + " ".join(f"K={kk}:{v:.4f}" for kk, v in scores.items()))
    lda = GibbsLDA(n_topics=k, n_iter=args.iters, random_state=args.seed).fit(docs)
    if args.model_out:
        lda.save(args.model_out)
    dmap = DisciplineMap.read_csv(args.map) if args.map else DisciplineMap.default()
    if not dmap.covers(k):
        raise ValueError(f"discipline map does not cover all {k} topics")
    rows = [(d.revised_author_id, assign_discipline(p, dmap)) for d, p in zip(docs, lda.doc_topic_)]
    write_table(args.out, ("revised_author_id", "discipline"), rows)
    print(f"K={k}, {len(rows)} researchers assigned")


def _rates(args):
    from .gender import GenderAssignment
    from .mobility import build_timelines
    from .records import load_store

    timelines = build_timelines(load_store(args.store))
    genders = GenderAssignment.read_csv(args.genders).labels if args.genders else None
    cohorts = parse_cohorts(args.cohorts)
    ledgers = cohort_ledgers(timelines, cohorts, genders, (args.period_start, args.period_end), args.censor)
    departure, returns = rate_rows(ledgers)
    os.makedirs(args.out_dir, exist_ok=True)
    write_table(os.path.join(args.out_dir, "rates_departure.csv"), RATE_COLUMNS, [r[1:] for r in departure])
    write_table(os.path.join(args.out_dir, "rates_return.csv"), RATE_COLUMNS, [r[1:] for r in returns])
    print(f"{len(departure)} departure rows, {len(returns)} return rows")


def _report(args):
    values = read_kv(args.config)
    if args.output_dir:
        values["output.dir"] = args.output_dir
    manifest = run_pipeline(PipelineConfig.from_mapping(values))
    print(f"wrote {len(manifest['outputs']) + 1} files")


def _synth(args):
    from .records import save_store
    from .synth import GeneratorConfig, generate

    values = read_kv(args.config) if args.config else {}
    if args.seed is not None:
        values["seed"] = args.seed
    if args.researchers is not None:
        values["researcher_count"] = args.researchers
    cfg = GeneratorConfig.from_mapping(values)
    store, truth = generate(cfg)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    save_store(store, args.out)
    truth.write_jsonl(truth_path(args.out))
    print(f"{len(store)} records, {len(truth.identities)} identities")


def truth_path(records_path):
    root, _ = os.path.splitext(records_path)
    return root + ".truth.jsonl"


def _score(args):
    from .disambiguation import RevisedIdMap
    from .mobility import read_events
    from .records import load_store
    from .synth import GroundTruth, Inference, score_inference

    truth = GroundTruth.read_jsonl(args.truth)
    inferred = Inference()
    if args.revised_ids:
        inferred.revised_ids = RevisedIdMap.read_csv(args.revised_ids).mapping
    if args.store:
        inferred.countries = {r.record_id: r.country for r in load_store(args.store).records if r.record_id in truth.hidden}
    if args.events:
        inferred.events = read_events(args.events)
    if args.topics:
        with open(args.topics, encoding="utf-8", newline="") as fh:
            inferred.topics = {r["revised_author_id"]: r[args.topic_column] for r in csv.DictReader(fh)}
    json.dump(score_inference(inferred, truth), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def build_parser():
    p = _Parser(prog="remigration", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="validate and normalise raw records")
    s.add_argument("--input", required=True)
    s.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    s.add_argument("--out", required=True)
    s.add_argument("--rejects")
    s.set_defaults(func=_ingest)

    s = sub.add_parser("impute", help="fill missing affiliation countries")
    s.add_argument("--store", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--train", action="store_true", help="train on labelled rows and save to --model")
    s.add_argument("--floor", type=float, default=0.5)
    s.add_argument("--epochs", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.set_defaults(func=_impute)

    s = sub.add_parser("disambiguate", help="split merged author profiles")
    s.add_argument("--store", required=True)
    s.add_argument("--country-threshold", type=int, default=6)
    s.add_argument("--pub-threshold", type=int, default=292)
    s.add_argument("--merge-threshold", type=float, default=0.5)
    s.add_argument("--map", required=True, help="revised id CSV to write")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_disambiguate)

    s = sub.add_parser("gender", help="infer gender from first names")
    s.add_argument("--store", required=True)
    s.add_argument("--table")
    s.add_argument("--overrides")
    s.add_argument("--floor", type=float, default=0.8)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_gender)

    s = sub.add_parser("mobility", help="migration events and categories")
    s.add_argument("--store", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--categories")
    s.add_argument("--evaluation-year", type=int, default=2020)
    s.set_defaults(func=_mobility)

    s = sub.add_parser("disciplines", help="topic model and discipline assignment")
    s.add_argument("--store", required=True)
    s.add_argument("--k", type=int, default=30)
    s.add_argument("--iters", type=int, default=1000)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--map")
    s.add_argument("--select-k", help="comma-separated K grid; overrides --k")
    s.add_argument("--model-out")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_disciplines)

    s = sub.add_parser("rates", help="cohort departure and return rates")
    s.add_argument("--store", required=True)
    s.add_argument("--genders")
    s.add_argument("--cohorts", default="1998-2001,2002-2005,2006-2009")
    s.add_argument("--censor", choices=("last_pub", "window_end"), default="last_pub")
    s.add_argument("--period-start", type=int, default=1996)
    s.add_argument("--period-end", type=int, default=2020)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=_rates)

    s = sub.add_parser("report", help="run the full pipeline from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--output-dir")
    s.set_defaults(func=_report)

    s = sub.add_parser("synth", help="generate a synthetic population with ground truth")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--researchers", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_synth)

    s = sub.add_parser("score", help="score inferred artifacts against ground truth")
    s.add_argument("--truth", required=True)
    s.add_argument("--revised-ids")
    s.add_argument("--store")
    s.add_argument("--events")
    s.add_argument("--topics")
    s.add_argument("--topic-column", default="top_topic")
    s.set_defaults(func=_score)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return USAGE
    except SystemExit as exc:  # --help
        return exc.code or OK
    try:
        args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA if exc.data_error else INTERNAL
    except (ConfigError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA
    except (ValueError, OSError, ZeroDivisionError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return DATA
    except Exception as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return INTERNAL
    return OK


if __name__ == "__main__":
    sys.exit(main())
