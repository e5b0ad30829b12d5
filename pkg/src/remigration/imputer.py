"""Missing affiliation-country imputation.

Affiliation text (institution, city, address) is turned into tf-idf
bag-of-words vectors and fed to a one-hidden-layer ReLU network trained
with plain mini-batch gradient descent on the cross-entropy loss.
"""

import json
import re
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .records import Affiliation

UNKNOWN = "unknown"
MODEL_FORMAT = "remigration.country_classifier"
MODEL_VERSION = 1

_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text):
    return _TOKEN_RE.findall(text.lower())


def _affiliation_text(item):
    if isinstance(item, Affiliation):
        return item.text
    if isinstance(item, str):
        return item
    raise TypeError(f"expected Affiliation or str, got {type(item).__name__}")


@dataclass(frozen=True)
class TfidfVocabulary:
    tokens: tuple
    idf: np.ndarray
    document_count: int

    def __post_init__(self):
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return (
            isinstance(other, TfidfVocabulary)
            and self.tokens == other.tokens
            and self.document_count == other.document_count
            and np.array_equal(self.idf, other.idf)
        )


def build_vocabulary(affiliations, min_df=2):
    """Document frequencies over affiliation texts, pruned at ``min_df``.

    idf uses the smoothed form ``ln((1 + n) / (1 + df)) + 1``.
    """
    docs = [tokenize(_affiliation_text(a)) for a in affiliations]
    if not docs:
        raise ValueError("cannot build a vocabulary from no affiliations")
    df = {}
    for tokens in docs:
        for tok in set(tokens):
            df[tok] = df.get(tok, 0) + 1
    kept = sorted(t for t, c in df.items() if c >= min_df)
    n = len(docs)
    idf = np.array([np.log((1.0 + n) / (1.0 + df[t])) + 1.0 for t in kept])
    return TfidfVocabulary(tuple(kept), idf, n)


def vectorize_many(items, vocab):
    rows, cols, vals = [], [], []
    for r, item in enumerate(items):
        counts = {}
        for tok in tokenize(_affiliation_text(item)):
            j = vocab.index.get(tok)
            if j is not None:
                counts[j] = counts.get(j, 0) + 1
        if not counts:
            continue
        idx = np.fromiter(sorted(counts), dtype=np.int64)
        w = np.array([counts[j] for j in idx], dtype=float) * vocab.idf[idx]
        w /= np.sqrt(np.dot(w, w))
        rows.extend([r] * len(idx))
        cols.extend(idx.tolist())
        vals.extend(w.tolist())
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(items), len(vocab)))


def vectorize(affiliation, vocab):
    """L2-normalised tf-idf row vector for a single affiliation (1 x V csr)."""
    return vectorize_many([affiliation], vocab)


class AffiliationVectorizer(TransformerMixin, BaseEstimator):
    def __init__(self, min_df=2):
        self.min_df = min_df

    def fit(self, X, y=None):
        self.vocabulary_ = build_vocabulary(list(X), self.min_df)
        return self

    def transform(self, X):
        check_is_fitted(self, "vocabulary_")
        return vectorize_many(list(X), self.vocabulary_)


# --- network ---------------------------------------------------------------


def init_params(n_in, n_hidden, n_out, rng):
    return {
        "W1": rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, n_hidden)),
        "b1": np.zeros(n_hidden),
        "W2": rng.normal(0.0, np.sqrt(2.0 / n_hidden), size=(n_hidden, n_out)),
        "b2": np.zeros(n_out),
    }


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(params, X):
    pre = X @ params["W1"] + params["b1"]
    hidden = np.maximum(pre, 0.0)
    return pre, hidden, softmax(hidden @ params["W2"] + params["b2"])


def loss_and_grad(params, X, y):
    """Mean cross-entropy of integer labels ``y`` and its gradients."""
    n = X.shape[0]
    pre, hidden, probs = forward(params, X)
    loss = -np.mean(np.log(probs[np.arange(n), y] + 1e-300))
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = {"W2": hidden.T @ delta, "b2": delta.sum(axis=0)}
    dhidden = (delta @ params["W2"].T) * (pre > 0)
    grads["W1"] = X.T @ dhidden
    grads["b1"] = dhidden.sum(axis=0)
    return loss, grads


class CountryClassifier(ClassifierMixin, BaseEstimator):
    """Predict an affiliation's country from its text.

    Parameters
    ----------
    hidden_units : int
        Width of the single ReLU hidden layer.
    learning_rate, batch_size, epochs : training schedule for mini-batch
        gradient descent.
    min_df : int
        Minimum document frequency for vocabulary tokens.
    random_state : int
        Seed for weight initialisation and batch shuffling.
    """

    def __init__(self, hidden_units=256, learning_rate=0.1, batch_size=32, epochs=20, min_df=2, random_state=0):
        self.hidden_units = hidden_units
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.min_df = min_df
        self.random_state = random_state

    def fit(self, X, y):
        X = list(X)
        y = list(y)
        if len(X) != len(y):
            raise ValueError("X and y have different lengths")
        classes = sorted(set(y))
        if len(classes) < 2:
            raise ValueError("degenerate label set")
        self.classes_ = np.array(classes, dtype=object)
        self.vocabulary_ = build_vocabulary(X, self.min_df)
        if len(self.vocabulary_) == 0:
            raise ValueError("empty vocabulary; lower min_df")
        features = vectorize_many(X, self.vocabulary_)
        lookup = {c: i for i, c in enumerate(classes)}
        labels = np.array([lookup[c] for c in y])

        rng = np.random.default_rng(self.random_state)
        params = init_params(len(self.vocabulary_), self.hidden_units, len(classes), rng)
        n = features.shape[0]
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                batch = order[start : start + self.batch_size]
                _, grads = loss_and_grad(params, features[batch].toarray(), labels[batch])
                for name in params:
                    params[name] -= self.learning_rate * grads[name]
        self.params_ = params
        return self

    def _features(self, X):
        check_is_fitted(self, "params_")
        return vectorize_many(list(X), self.vocabulary_)

    def predict_proba(self, X):
        return forward(self.params_, self._features(X).toarray())[2]

    def predict_with_confidence(self, X):
        """Labels and softmax confidences; rows with no known token get ("unknown", 0)."""
        feats = self._features(X)
        probs = forward(self.params_, feats.toarray())[2]
        best = probs.argmax(axis=1)
        empty = np.diff(feats.indptr) == 0
        labels = [UNKNOWN if e else self.classes_[b] for b, e in zip(best, empty)]
        conf = np.where(empty, 0.0, probs[np.arange(len(best)), best])
        return labels, conf

    def predict(self, X):
        return np.array(self.predict_with_confidence(X)[0], dtype=object)

    # --- persistence ---

    def to_dict(self):
        check_is_fitted(self, "params_")
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "hyperparameters": self.get_params(),
            "training_seed": self.random_state,
            "classes": list(self.classes_),
            "vocabulary": {
                "tokens": list(self.vocabulary_.tokens),
                "idf": self.vocabulary_.idf.tolist(),
                "document_count": self.vocabulary_.document_count,
            },
            "weights": {k: v.tolist() for k, v in self.params_.items()},
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("format") != MODEL_FORMAT or data.get("version") != MODEL_VERSION:
            raise ValueError("not a country classifier model file")
        clf = cls(**data["hyperparameters"])
        voc = data["vocabulary"]
        clf.vocabulary_ = TfidfVocabulary(tuple(voc["tokens"]), np.array(voc["idf"], dtype=float), voc["document_count"])
        clf.classes_ = np.array(data["classes"], dtype=object)
        clf.params_ = {k: np.array(v, dtype=float) for k, v in data["weights"].items()}
        return clf

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train(labeled, split_fraction=0.8, seed=0, epochs=20, **params):
    """Fit on a random ``split_fraction`` of ``(affiliation, country)`` pairs.

    Returns the classifier and its accuracy on the held-out rows.
    """
    labeled = list(labeled)
    if not 0.0 < split_fraction < 1.0:
        raise ValueError("split_fraction must lie in (0, 1)")
    if len({c for _, c in labeled}) < 2:
        raise ValueError("degenerate label set")
    order = np.random.default_rng(seed).permutation(len(labeled))
    n_train = int(round(split_fraction * len(labeled)))
    n_train = min(max(n_train, 1), len(labeled) - 1)
    fit_rows = [labeled[i] for i in order[:n_train]]
    test_rows = [labeled[i] for i in order[n_train:]]
    clf = CountryClassifier(epochs=epochs, random_state=seed, **params)
    clf.fit([a for a, _ in fit_rows], [c for _, c in fit_rows])
    predicted = clf.predict([a for a, _ in test_rows])
    accuracy = float(np.mean([p == c for p, (_, c) in zip(predicted, test_rows)]))
    return clf, accuracy


def predict(classifier, affiliation):
    labels, conf = classifier.predict_with_confidence([affiliation])
    return labels[0], float(conf[0])


class ImputationEntry(NamedTuple):
    record_id: str
    predicted: str
    confidence: float
    status: str  # "imputed" | "low confidence"


def impute(store, classifier, confidence_floor=0.5):
    """Fill missing record countries where the classifier is confident enough.

    Returns the new store and one report entry per record that lacked a
    country. Existing countries are never touched.
    """
    missing = [r for r in store.records if r.country is None]
    if not missing:
        return store, []
    labels, conf = classifier.predict_with_confidence([r.affiliation for r in missing])
    fills, report = {}, []
    for rec, label, c in zip(missing, labels, conf):
        c = float(c)
        if label != UNKNOWN and c >= confidence_floor:
            fills[rec.record_id] = label
            report.append(ImputationEntry(rec.record_id, label, c, "imputed"))
        else:
            report.append(ImputationEntry(rec.record_id, label, c, "low confidence"))
    records = [r.with_country(fills[r.record_id]) if r.record_id in fills else r for r in store.records]
    return store.with_records(records), report


def training_pairs(store, limit=None, seed=0):
    """(affiliation, country) pairs from records that already carry a country."""
    pairs = [(r.affiliation, r.country) for r in store.records if r.country is not None]
    if limit is not None and len(pairs) > limit:
        keep = np.sort(np.random.default_rng(seed).choice(len(pairs), size=limit, replace=False))
        pairs = [pairs[i] for i in keep]
    return pairs
