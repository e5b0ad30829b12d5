"""Author-profile disambiguation.

Only profiles flagged as outliers (too many affiliation countries or too
many publications) are examined. Their records are compared pairwise, the
resulting distance matrix is clustered with average linkage, and each
cluster gets a fresh author id. Clustering is conservative: it starts from
singletons and stops as soon as the cheapest merge would exceed the
threshold.
"""

import csv
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from rapidfuzz import process
from rapidfuzz.distance import Levenshtein
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

UNINFORMATIVE = 0.5
CHANNELS = ("author_name", "coauthor_overlap", "subject_overlap", "funding_overlap", "grant_overlap")
_CHANNEL_FIELDS = {
    "coauthor_overlap": "coauthor_names",
    "subject_overlap": "subject_tags",
    "funding_overlap": "funding_texts",
    "grant_overlap": "grant_numbers",
}


@dataclass(frozen=True)
class SimilarityWeights:
    author_name: float = 0.4
    coauthor_overlap: float = 0.3
    subject_overlap: float = 0.1
    funding_overlap: float = 0.1
    grant_overlap: float = 0.1

    def __post_init__(self):
        values = self.as_tuple()
        if any(v < 0 for v in values):
            raise ValueError("similarity weights must be non-negative")
        if abs(sum(values) - 1.0) > 1e-9:
            raise ValueError(f"similarity weights sum to {sum(values)}, expected 1")

    def as_tuple(self):
        return tuple(getattr(self, c) for c in CHANNELS)


def _norm_name(name):
    return " ".join(name.casefold().split())


def _norm_set(values):
    return frozenset(" ".join(v.casefold().split()) for v in values if v.strip())


def name_similarity(a, b):
    return Levenshtein.normalized_similarity(_norm_name(a), _norm_name(b))


def jaccard(a, b):
    """Jaccard index, or the uninformative value when both sets are empty."""
    if not a and not b:
        return UNINFORMATIVE
    return len(a & b) / len(a | b)


def pair_similarity(a, b, w=None):
    w = w or SimilarityWeights()
    score = w.author_name * name_similarity(a.author_full_name, b.author_full_name)
    for channel, attr in _CHANNEL_FIELDS.items():
        score += getattr(w, channel) * jaccard(_norm_set(getattr(a, attr)), _norm_set(getattr(b, attr)))
    return min(max(score, 0.0), 1.0)


def _jaccard_matrix(sets):
    vocab = {}
    rows, cols = [], []
    for i, s in enumerate(sets):
        for item in s:
            rows.append(i)
            cols.append(vocab.setdefault(item, len(vocab)))
    n = len(sets)
    incidence = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, max(len(vocab), 1)))
    inter = (incidence @ incidence.T).toarray()
    sizes = np.array([len(s) for s in sets], dtype=float)
    union = sizes[:, None] + sizes[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union > 0, inter / np.where(union > 0, union, 1.0), UNINFORMATIVE)
    return out


def build_distance_matrix(records, w=None):
    """Pairwise ``1 - similarity`` over the records of one author id."""
    records = list(records)
    if len(records) < 2:
        raise ValueError("need at least two records to build a distance matrix")
    w = w or SimilarityWeights()
    names = [_norm_name(r.author_full_name) for r in records]
    uniq = sorted(set(names))
    where = {u: i for i, u in enumerate(uniq)}
    pos = np.array([where[n] for n in names])
    name_sim = process.cdist(uniq, uniq, scorer=Levenshtein.normalized_similarity, dtype=np.float64)
    sim = w.author_name * name_sim[np.ix_(pos, pos)]
    for channel, attr in _CHANNEL_FIELDS.items():
        weight = getattr(w, channel)
        if weight:
            sim = sim + weight * _jaccard_matrix([_norm_set(getattr(r, attr)) for r in records])
    dist = 1.0 - np.clip(sim, 0.0, 1.0)
    dist = np.clip((dist + dist.T) / 2.0, 0.0, 1.0)
    np.fill_diagonal(dist, 0.0)
    return dist


def check_distance_matrix(matrix):
    d = np.asarray(matrix, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("distance matrix must be square")
    if not np.allclose(d, d.T, atol=1e-12):
        raise ValueError("distance matrix must be symmetric")
    if np.any(np.diag(d) != 0):
        raise ValueError("distance matrix must have a zero diagonal")
    if d.size and (d.min() < 0 or d.max() > 1):
        raise ValueError("distances must lie in [0, 1]")
    return d


def average_linkage(matrix, threshold):
    """Agglomerate singletons while the smallest average linkage is <= threshold.

    Ties are broken by the lexicographically smallest pair of cluster
    indices, where a cluster's index is its smallest member. Returns
    ``(clusters, merges)``; ``merges`` lists ``(i, j, linkage)`` in order.
    """
    d = check_distance_matrix(matrix)
    n = d.shape[0]
    if n == 0:
        return [], []
    link = d.copy()
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    active = np.ones(n, dtype=bool)
    sizes = np.ones(n)
    members = {i: [i] for i in range(n)}
    merges = []
    while len(members) > 1:
        live = upper & active[:, None] & active[None, :]
        masked = np.where(live, link, np.inf)
        flat = int(np.argmin(masked))
        i, j = divmod(flat, n)
        height = masked[i, j]
        if height > threshold:
            break
        merges.append((i, j, float(height)))
        # Lance-Williams update for average linkage; i < j so i stays the min member.
        row = (sizes[i] * link[i] + sizes[j] * link[j]) / (sizes[i] + sizes[j])
        link[i, :] = row
        link[:, i] = row
        link[i, i] = 0.0
        sizes[i] += sizes[j]
        active[j] = False
        members[i].extend(members.pop(j))
    clusters = [sorted(members[k]) for k in sorted(members)]
    return clusters, merges


def cluster(matrix, merge_threshold=0.5):
    return average_linkage(matrix, merge_threshold)[0]


class AverageLinkageClustering(ClusterMixin, BaseEstimator):
    """Threshold-stopped average-linkage clustering of a precomputed distance matrix."""

    def __init__(self, distance_threshold=0.5):
        self.distance_threshold = distance_threshold

    def fit(self, X, y=None):
        if not 0.0 <= self.distance_threshold <= 1.0:
            raise ValueError("distance_threshold must lie in [0, 1]")
        clusters, merges = average_linkage(X, self.distance_threshold)
        labels = np.empty(sum(len(c) for c in clusters), dtype=int)
        for k, members in enumerate(clusters):
            labels[members] = k
        self.labels_ = labels
        self.clusters_ = clusters
        self.merges_ = merges
        self.n_clusters_ = len(clusters)
        return self


def flag_suspicious(store, country_threshold=6, publication_threshold=292):
    """Author ids with more than ``country_threshold`` countries or more than
    ``publication_threshold`` publications."""
    flagged = set()
    for author_id, ids in store.author_index.items():
        recs = [store.by_id[r] for r in ids]
        countries = {r.country for r in recs if r.country is not None}
        pubs = {r.publication_id for r in recs}
        if len(countries) > country_threshold or len(pubs) > publication_threshold:
            flagged.add(author_id)
    return flagged


@dataclass
class RevisedIdMap:
    mapping: dict = field(default_factory=dict)  # record_id -> revised author id
    provenance: dict = field(default_factory=dict)  # revised id -> original author id

    def revised_ids(self):
        return sorted(set(self.mapping.values()))

    def apply(self, store):
        """Return a copy of ``store`` with author ids replaced by revised ids."""
        return store.with_records(replace(r, author_id=self.mapping.get(r.record_id, r.author_id)) for r in store.records)

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["record_id", "original_author_id", "revised_author_id"])
            for rid, rev in self.mapping.items():
                writer.writerow([rid, self.provenance[rev], rev])

    @classmethod
    def read_csv(cls, path):
        out = cls()
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                out.mapping[row["record_id"]] = row["revised_author_id"]
                out.provenance[row["revised_author_id"]] = row["original_author_id"]
        return out


def reissue_ids(store, clusters_by_author):
    """Give every cluster of a flagged author a fresh id; others keep theirs.

    ``clusters_by_author`` maps author id to index lists over
    ``store.records_of(author_id)``.
    """
    id_map = RevisedIdMap()
    for author_id, ids in store.author_index.items():
        clusters = clusters_by_author.get(author_id)
        if clusters is None:
            for rid in ids:
                id_map.mapping[rid] = author_id
            id_map.provenance[author_id] = author_id
            continue
        covered = sorted(i for c in clusters for i in c)
        if covered != list(range(len(ids))):
            raise ValueError(f"clusters for {author_id!r} do not partition its records")
        for k, members in enumerate(clusters, start=1):
            revised = f"{author_id}.{k}"
            id_map.provenance[revised] = author_id
            for i in members:
                id_map.mapping[ids[i]] = revised
    return id_map


class AuthorDisambiguator(BaseEstimator):
    """Split suspicious author ids into single-person clusters."""

    def __init__(self, country_threshold=6, publication_threshold=292, merge_threshold=0.5, weights=None):
        self.country_threshold = country_threshold
        self.publication_threshold = publication_threshold
        self.merge_threshold = merge_threshold
        self.weights = weights

    def fit(self, store, y=None):
        w = self.weights if isinstance(self.weights, SimilarityWeights) else SimilarityWeights(*(self.weights or ()))
        self.flagged_ = flag_suspicious(store, self.country_threshold, self.publication_threshold)
        self.clusters_ = {}
        self.merge_heights_ = {}
        for author_id in sorted(self.flagged_):
            recs = store.records_of(author_id)
            if len(recs) < 2:
                self.clusters_[author_id] = [[0]]
                continue
            clusters, merges = average_linkage(build_distance_matrix(recs, w), self.merge_threshold)
            self.clusters_[author_id] = clusters
            self.merge_heights_[author_id] = [m[2] for m in merges]
        self.id_map_ = reissue_ids(store, self.clusters_)
        return self

    def transform(self, store):
        check_is_fitted(self, "id_map_")
        return self.id_map_.apply(store)

    def fit_transform(self, store, y=None):
        return self.fit(store).transform(store)
