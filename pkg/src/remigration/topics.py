"""Researcher disciplines from a topic model over their publication text.

Each researcher gets one document built from titles, venue names and
keywords. Frequent collocations are joined into single tokens, an LDA model
is fitted by collapsed Gibbs sampling, and each document's dominant topic
is mapped to one of 17 disciplines (or "Multidisciplinary" when no topic
is dominant enough).
"""

import csv
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from nltk.stem import PorterStemmer
from numba import njit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS
from sklearn.utils.validation import check_is_fitted

CANONICAL_DISCIPLINES = (
    "Agricultural, Biological and Environmental Sciences",
    "Biochemistry, Genetics and Molecular Biology",
    "Chemistry and Chemical Engineering",
    "Computer Science",
    "Earth and Planetary Sciences",
    "Economics and Social Science",
    "Engineering",
    "Energy",
    "Health Professions",
    "Immunology and Microbiology",
    "Materials Science",
    "Mathematics",
    "Medicine",
    "Neuroscience",
    "Pharmacology, Toxicology and Pharmaceutics",
    "Physics and Astronomy",
    "Psychology",
)
MULTIDISCIPLINARY = "Multidisciplinary"
DOMINANCE_THRESHOLD = 0.3
MODEL_FORMAT = "remigration.gibbs_lda"
MODEL_VERSION = 1

_WORD_RE = re.compile(r"[^\W\d_]+")
_STEM_EXCEPTIONS = {"data": "datum", "physics": "physics", "mathematics": "mathematics", "news": "news"}
_stemmer = PorterStemmer()


def stem(word):
    return _STEM_EXCEPTIONS.get(word) or _stemmer.stem(word)


def tokenize(text):
    """Lower-case word tokens with punctuation and stop words removed, stemmed."""
    words = _WORD_RE.findall(text.lower())
    return [stem(w) for w in words if len(w) > 1 and w not in ENGLISH_STOP_WORDS]


@dataclass
class AuthorDocument:
    revised_author_id: str
    segments: list  # token lists; collocations never span two segments
    tokens: list = field(init=False)
    bag: Counter = field(init=False)

    def __post_init__(self):
        self.segments = [list(s) for s in self.segments if s]
        self.tokens = [t for s in self.segments for t in s]
        self.bag = Counter(self.tokens)

    @property
    def is_empty(self):
        return not self.tokens


def build_document(revised_author_id, records):
    records = list(records)
    if not records:
        raise ValueError("a document needs at least one record")
    segments = []
    for rec in records:
        for text in (rec.publication_title, rec.journal_title, *rec.keywords):
            segments.append(tokenize(text))
    return AuthorDocument(revised_author_id, segments)


def build_documents(store):
    return [build_document(a, store.records_of(a)) for a in store.author_index]


# --- collocations -------------------------------------------------------


def _pmi(pair_count, a_count, b_count, total):
    return math.log(pair_count * total / (a_count * b_count))


def _join(segment, accepted):
    out, i = [], 0
    while i < len(segment):
        if i + 1 < len(segment) and (segment[i], segment[i + 1]) in accepted:
            out.append(f"{segment[i]}_{segment[i + 1]}")
            i += 2
        else:
            out.append(segment[i])
            i += 1
    return out


def _scored_pairs(segments, min_count, threshold, keep=lambda a, b: True):
    unigrams, bigrams = Counter(), Counter()
    for seg in segments:
        unigrams.update(seg)
        bigrams.update(zip(seg, seg[1:]))
    total = sum(unigrams.values())
    accepted = {}
    for (a, b), n in bigrams.items():
        if n >= min_count and keep(a, b):
            score = _pmi(n, unigrams[a], unigrams[b], total)
            if score >= threshold:
                accepted[(a, b)] = score
    return accepted


@dataclass
class Collocations:
    bigrams: dict  # (a, b) -> pmi
    trigrams: dict  # (a_b, c) or (a, b_c) -> pmi

    def apply_segment(self, segment):
        return _join(_join(segment, self.bigrams), self.trigrams)

    def apply(self, document):
        return AuthorDocument(document.revised_author_id, [self.apply_segment(s) for s in document.segments])

    def tokens(self):
        joined = [f"{a}_{b}" for a, b in self.bigrams] + [f"{a}_{b}" for a, b in self.trigrams]
        return sorted(joined)


def detect_collocations(documents, min_count=5, score_threshold=3.0):
    """Frequent, high-PMI bigrams, then trigrams built on accepted bigrams.

    PMI is ``ln(n_ab * N / (n_a * n_b))`` with ``N`` the corpus token count.
    """
    segments = [s for d in documents for s in d.segments]
    if not segments:
        raise ValueError("empty corpus")
    bigrams = _scored_pairs(segments, min_count, score_threshold)
    joined = [_join(s, bigrams) for s in segments]

    def one_side_joined(a, b):
        return ("_" in a) != ("_" in b) and a.count("_") <= 1 and b.count("_") <= 1

    trigrams = _scored_pairs(joined, min_count, score_threshold, keep=one_side_joined)
    return Collocations(bigrams, trigrams)


# --- collapsed Gibbs sampler --------------------------------------------


@njit(cache=True)
def _sweep(words, docs, z, ndk, nkw, nk, alpha, beta, vbeta, u):
    n_topics = nk.shape[0]
    cum = np.empty(n_topics)
    for i in range(words.shape[0]):
        w = words[i]
        d = docs[i]
        k = z[i]
        ndk[d, k] -= 1
        nkw[k, w] -= 1
        nk[k] -= 1
        total = 0.0
        for t in range(n_topics):
            total += (ndk[d, t] + alpha) * (nkw[t, w] + beta) / (nk[t] + vbeta)
            cum[t] = total
        r = u[i] * total
        k = 0
        while k < n_topics - 1 and cum[k] <= r:
            k += 1
        z[i] = k
        ndk[d, k] += 1
        nkw[k, w] += 1
        nk[k] += 1


@njit(cache=True)
def _sweep_fixed(words, docs, z, ndk, nkw, nk, alpha, beta, vbeta, u):
    # Fold-in: topic-word counts are frozen, only document counts move.
    n_topics = nk.shape[0]
    cum = np.empty(n_topics)
    for i in range(words.shape[0]):
        w = words[i]
        d = docs[i]
        ndk[d, z[i]] -= 1
        total = 0.0
        for t in range(n_topics):
            total += (ndk[d, t] + alpha) * (nkw[t, w] + beta) / (nk[t] + vbeta)
            cum[t] = total
        r = u[i] * total
        k = 0
        while k < n_topics - 1 and cum[k] <= r:
            k += 1
        z[i] = k
        ndk[d, k] += 1


def _doc_tokens(doc):
    return doc.tokens if isinstance(doc, AuthorDocument) else list(doc)


def _normalize_rows(counts, prior):
    m = counts + prior
    return m / m.sum(axis=1, keepdims=True)


class GibbsLDA(TransformerMixin, BaseEstimator):
    """Latent Dirichlet allocation fitted by collapsed Gibbs sampling.

    ``alpha`` defaults to ``50 / n_topics``. ``components_`` holds the
    topic-word distributions and ``doc_topic_`` the training documents'
    topic distributions, both from the final sample.
    """

    def __init__(self, n_topics=30, alpha=None, beta=0.01, n_iter=1000, random_state=0, transform_iter=50):
        self.n_topics = n_topics
        self.alpha = alpha
        self.beta = beta
        self.n_iter = n_iter
        self.random_state = random_state
        self.transform_iter = transform_iter

    @property
    def alpha_(self):
        return 50.0 / self.n_topics if self.alpha is None else float(self.alpha)

    def _encode(self, documents, grow):
        words, docs = [], []
        for d, doc in enumerate(documents):
            for tok in _doc_tokens(doc):
                j = self.word_index_.get(tok)
                if j is None and grow:
                    j = self.word_index_[tok] = len(self.word_index_)
                if j is not None:
                    words.append(j)
                    docs.append(d)
        return np.array(words, dtype=np.int64), np.array(docs, dtype=np.int64)

    def fit(self, documents, y=None, callback=None):
        documents = list(documents)
        if self.n_topics < 2:
            raise ValueError("n_topics must be at least 2")
        if len(documents) < self.n_topics:
            raise ValueError("need at least as many documents as topics")
        vocab = sorted({t for doc in documents for t in _doc_tokens(doc)})
        if not vocab:
            raise ValueError("empty vocabulary")
        self.vocabulary_ = vocab
        self.word_index_ = {t: i for i, t in enumerate(vocab)}
        words, docs = self._encode(documents, grow=False)
        rng = np.random.default_rng(self.random_state)
        K, V, D = self.n_topics, len(vocab), len(documents)
        z = rng.integers(K, size=len(words)).astype(np.int64)
        ndk = np.zeros((D, K), dtype=np.int64)
        nkw = np.zeros((K, V), dtype=np.int64)
        np.add.at(ndk, (docs, z), 1)
        np.add.at(nkw, (z, words), 1)
        nk = nkw.sum(axis=1)
        alpha, beta = self.alpha_, float(self.beta)
        for it in range(self.n_iter):
            _sweep(words, docs, z, ndk, nkw, nk, alpha, beta, V * beta, rng.random(len(words)))
            if callback is not None:
                callback(it, ndk)
        self.words_, self.docs_, self.z_ = words, docs, z
        self.ndk_, self.nkw_ = ndk, nkw
        self._set_distributions()
        return self

    def _set_distributions(self):
        self.components_ = _normalize_rows(self.nkw_.astype(float), float(self.beta))
        self.doc_topic_ = _normalize_rows(self.ndk_.astype(float), self.alpha_)

    @property
    def topic_word_(self):
        return self.components_

    def transform(self, documents):
        """Topic distributions for new documents, by fold-in sampling."""
        check_is_fitted(self, "nkw_")
        documents = list(documents)
        words, docs = self._encode(documents, grow=False)
        rng = np.random.default_rng(self.random_state)
        K = self.n_topics
        z = rng.integers(K, size=len(words)).astype(np.int64)
        ndk = np.zeros((len(documents), K), dtype=np.int64)
        np.add.at(ndk, (docs, z), 1)
        nk = self.nkw_.sum(axis=1)
        beta = float(self.beta)
        for _ in range(self.transform_iter):
            _sweep_fixed(words, docs, z, ndk, self.nkw_, nk, self.alpha_, beta, len(self.vocabulary_) * beta, rng.random(len(words)))
        return _normalize_rows(ndk.astype(float), self.alpha_)

    def fit_transform(self, documents, y=None):
        return self.fit(documents).doc_topic_

    def top_words(self, n=10):
        check_is_fitted(self, "components_")
        order = np.argsort(-self.components_, axis=1, kind="stable")[:, :n]
        return [[self.vocabulary_[j] for j in row] for row in order]

    # --- persistence ---

    def to_dict(self):
        check_is_fitted(self, "nkw_")
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "hyperparameters": self.get_params(),
            "vocabulary": self.vocabulary_,
            "words": self.words_.tolist(),
            "docs": self.docs_.tolist(),
            "assignments": self.z_.tolist(),
            "doc_topic_counts": self.ndk_.tolist(),
            "topic_word_counts": self.nkw_.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("format") != MODEL_FORMAT or data.get("version") != MODEL_VERSION:
            raise ValueError("not an LDA model file")
        model = cls(**data["hyperparameters"])
        model.vocabulary_ = list(data["vocabulary"])
        model.word_index_ = {t: i for i, t in enumerate(model.vocabulary_)}
        model.words_ = np.array(data["words"], dtype=np.int64)
        model.docs_ = np.array(data["docs"], dtype=np.int64)
        model.z_ = np.array(data["assignments"], dtype=np.int64)
        model.ndk_ = np.array(data["doc_topic_counts"], dtype=np.int64).reshape(-1, model.n_topics)
        model.nkw_ = np.array(data["topic_word_counts"], dtype=np.int64)
        model._set_distributions()
        return model

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit_lda(documents, K, alpha=None, beta=0.01, iterations=1000, seed=0):
    return GibbsLDA(n_topics=K, alpha=alpha, beta=beta, n_iter=iterations, random_state=seed).fit(documents)


# --- coherence and model selection --------------------------------------


def _document_sets(documents):
    sets = {}
    for d, doc in enumerate(documents):
        for tok in set(_doc_tokens(doc)):
            sets.setdefault(tok, set()).add(d)
    return sets


def coherence(model, documents, top_n=10, rescale=True):
    """Mean UMass coherence of each topic's ``top_n`` words.

    For words ranked ``w_1..w_n`` the UMass term for ``l < m`` is
    ``log((D(w_m, w_l) + 1) / D(w_l))`` where ``D`` counts documents. With
    ``rescale`` each term is mapped affinely onto [0, 1] between its own
    extremes (never co-occurring, always co-occurring), which reduces to
    ``log(1 + D(w_m, w_l)) / log(1 + D(w_l))``.
    """
    doc_sets = _document_sets(documents)
    scores = []
    for words in model.top_words(top_n):
        terms = []
        for m in range(1, len(words)):
            for l in range(m):
                d_l = len(doc_sets.get(words[l], ()))
                d_ml = len(doc_sets.get(words[m], set()) & doc_sets.get(words[l], set()))
                if rescale:
                    terms.append(math.log1p(d_ml) / math.log1p(d_l) if d_l else 0.0)
                else:
                    terms.append(math.log((d_ml + 1) / d_l) if d_l else 0.0)
        scores.append(sum(terms) / len(terms) if terms else 0.0)
    return float(np.mean(scores))


def select_k(documents, k_grid, seed=0, top_n=10, **lda_params):
    """Fit one model per K and return the most coherent K and all scores.

    Ties go to the smaller K.
    """
    k_grid = list(k_grid)
    if not k_grid:
        raise ValueError("empty K grid")
    documents = list(documents)
    scores = {}
    for k in k_grid:
        model = GibbsLDA(n_topics=k, random_state=seed, **lda_params).fit(documents)
        scores[k] = coherence(model, documents, top_n=top_n)
    best = max(sorted(scores), key=lambda k: scores[k])
    return best, scores


# --- disciplines --------------------------------------------------------


@dataclass
class DisciplineMap:
    topics: dict  # topic index -> discipline name
    multidisciplinary_threshold: float = DOMINANCE_THRESHOLD

    def __post_init__(self):
        bad = sorted({d for d in self.topics.values() if d not in CANONICAL_DISCIPLINES})
        if bad:
            raise ValueError(f"not a canonical discipline: {bad[0]!r}")

    def covers(self, n_topics):
        return set(range(n_topics)) <= set(self.topics)

    @classmethod
    def read_csv(cls, path_or_file, threshold=DOMINANCE_THRESHOLD):
        if hasattr(path_or_file, "read"):
            rows = list(csv.DictReader(path_or_file))
        else:
            with open(path_or_file, encoding="utf-8", newline="") as fh:
                rows = list(csv.DictReader(fh))
        return cls({int(r["topic_index"]): r["discipline"].strip() for r in rows}, threshold)

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["topic_index", "discipline"])
            for k in sorted(self.topics):
                writer.writerow([k, self.topics[k]])

    @classmethod
    def default(cls):
        """The 30-topic mapping of the reference configuration."""
        with resources.files("remigration.data").joinpath("discipline_map.csv").open(encoding="utf-8") as fh:
            return cls.read_csv(fh)


def assign_discipline(row, discipline_map):
    row = np.asarray(row, dtype=float)
    top = int(np.argmax(row))
    if row[top] <= discipline_map.multidisciplinary_threshold:
        return MULTIDISCIPLINARY
    return discipline_map.topics[top]


def propose_discipline_map(model, lexicon, top_n=20):
    """Draft a topic-to-discipline map from a keyword lexicon.

    Each topic goes to the discipline whose (tokenised) keywords carry the
    most probability mass among the topic's ``top_n`` words. The result is
    meant to be reviewed and edited like any other map file.
    """
    stems = {disc: {t for w in words for t in tokenize(w)} for disc, words in lexicon.items()}
    order = np.argsort(-model.components_, axis=1, kind="stable")[:, :top_n]
    topics = {}
    for k, row in enumerate(order):
        mass = {
            disc: sum(model.components_[k, j] for j in row if model.vocabulary_[j] in words)
            for disc, words in sorted(stems.items())
        }
        topics[k] = max(mass, key=lambda disc: mass[disc])
    return DisciplineMap(topics)
