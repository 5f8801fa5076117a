"""LDA over sessions as bags of activity n-grams, topic-count selection and fingerprints."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numba import njit
from scipy.special import gammaln, logsumexp, rel_entr

logger = logging.getLogger(__name__)

METRICS = ("griffiths2004", "cao2009", "arun2010", "deveaud2014")
MINIMIZE = ("cao2009", "arun2010")
MAXIMIZE = ("griffiths2004", "deveaud2014")


@dataclass(frozen=True)
class DocTermMatrix:
    counts: np.ndarray  # (docs, terms) int64
    terms: tuple[str, ...]
    doc_ids: tuple[str, ...]
    ngram_order: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    @property
    def doc_lengths(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def subset(self, rows: Sequence[int]) -> "DocTermMatrix":
        rows = list(rows)
        return DocTermMatrix(self.counts[rows], self.terms, tuple(self.doc_ids[i] for i in rows), self.ngram_order)

    def row(self, doc_id: str) -> dict[str, int]:
        i = self.doc_ids.index(doc_id)
        return {t: int(c) for t, c in zip(self.terms, self.counts[i]) if c}


def ngrams(sentence: Sequence[str], w: int) -> list[str]:
    return ["_".join(sentence[i : i + w]) for i in range(len(sentence) - w + 1)]


def build_docs(
    corpus: Iterable[Sequence[str]],
    ngram_order: int = 1,
    doc_ids: Sequence[str] | None = None,
    terms: Sequence[str] | None = None,
) -> DocTermMatrix:
    """Sliding-window w-gram counts per document.

    Documents shorter than ``ngram_order`` are dropped with a warning.  Passing
    ``terms`` fixes the column space (w-grams outside it are ignored), so train
    and test matrices can share one term index.
    """
    if ngram_order < 1:
        raise ValueError("ngram_order must be >= 1")
    sentences = [tuple(s) for s in corpus]
    if not sentences:
        raise ValueError("empty corpus")
    ids = list(doc_ids) if doc_ids is not None else [str(i) for i in range(len(sentences))]
    bags, kept = [], []
    for doc_id, s in zip(ids, sentences):
        grams = ngrams(s, ngram_order)
        if not grams:
            logger.warning("document %s shorter than %d tokens; dropped", doc_id, ngram_order)
            continue
        bags.append(Counter(grams))
        kept.append(doc_id)
    if not bags:
        raise ValueError(f"every document is shorter than the n-gram order {ngram_order}")
    vocab = tuple(terms) if terms is not None else tuple(sorted(set().union(*bags)))
    index = {t: j for j, t in enumerate(vocab)}
    counts = np.zeros((len(bags), len(vocab)), dtype=np.int64)
    for i, bag in enumerate(bags):
        for t, c in bag.items():
            j = index.get(t)
            if j is not None:
                counts[i, j] = c
    return DocTermMatrix(counts, vocab, tuple(kept), ngram_order)


# -- collapsed Gibbs sampling -------------------------------------------------------------


@njit(cache=True)
def _gibbs_sweep(words, docs, z, nkw, ndk, nk, alpha, beta, vbeta, u):
    K = nk.shape[0]
    cdf = np.empty(K)
    for i in range(words.shape[0]):
        w = words[i]
        d = docs[i]
        k = z[i]
        nkw[k, w] -= 1
        ndk[d, k] -= 1
        nk[k] -= 1
        total = 0.0
        for t in range(K):
            total += (nkw[t, w] + beta) / (nk[t] + vbeta) * (ndk[d, t] + alpha)
            cdf[t] = total
        r = u[i] * total
        k = 0
        while k < K - 1 and cdf[k] <= r:
            k += 1
        z[i] = k
        nkw[k, w] += 1
        ndk[d, k] += 1
        nk[k] += 1


@njit(cache=True)
def _foldin_sweep(words, docs, z, ndk, phi, alpha, u):
    K = phi.shape[0]
    cdf = np.empty(K)
    for i in range(words.shape[0]):
        w = words[i]
        d = docs[i]
        ndk[d, z[i]] -= 1
        total = 0.0
        for t in range(K):
            total += phi[t, w] * (ndk[d, t] + alpha)
            cdf[t] = total
        r = u[i] * total
        k = 0
        while k < K - 1 and cdf[k] <= r:
            k += 1
        z[i] = k
        ndk[d, k] += 1


def _tokens(counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    docs, words = np.nonzero(counts)
    reps = counts[docs, words]
    return np.repeat(words, reps).astype(np.int64), np.repeat(docs, reps).astype(np.int64)


def _log_likelihood(nkw: np.ndarray, nk: np.ndarray, beta: float) -> float:
    """log P(w | z) with the topic-word distributions integrated out."""
    K, V = nkw.shape
    return float(
        K * (gammaln(V * beta) - V * gammaln(beta))
        + gammaln(nkw + beta).sum()
        - gammaln(nk + V * beta).sum()
    )


@dataclass(frozen=True)
class LdaModel:
    k: int
    phi: np.ndarray  # (k, terms)
    theta: np.ndarray  # (docs, k)
    alpha: float
    beta: float
    seed: int
    iterations: int
    burn_in: int
    terms: tuple[str, ...] = ()
    doc_ids: tuple[str, ...] = ()
    log_likelihoods: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_samples(self) -> int:
        return len(self.log_likelihoods)


def fit_lda(
    dtm: DocTermMatrix,
    k: int,
    alpha: float | None = None,
    beta: float = 0.1,
    iterations: int = 2000,
    burn_in: int = 500,
    seed: int = 0,
    thin: int = 10,
) -> LdaModel:
    """Collapsed Gibbs sampling; phi and theta are posterior means averaged over
    every ``thin``-th sweep after burn-in (the final sweep is always included).
    ``alpha`` defaults to 50/k."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if iterations <= burn_in or burn_in < 0:
        raise ValueError("need 0 <= burn_in < iterations")
    alpha = 50.0 / k if alpha is None else float(alpha)
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    n_docs, V = dtm.counts.shape
    if k > V:
        logger.warning("k=%d exceeds the number of terms (%d)", k, V)
    words, docs = _tokens(dtm.counts)
    rng = np.random.default_rng(seed)
    z = rng.integers(0, k, size=len(words)).astype(np.int64)
    nkw = np.zeros((k, V), dtype=np.int64)
    ndk = np.zeros((n_docs, k), dtype=np.int64)
    np.add.at(nkw, (z, words), 1)
    np.add.at(ndk, (docs, z), 1)
    nk = nkw.sum(axis=1)
    doc_len = ndk.sum(axis=1, keepdims=True)

    phi_sum = np.zeros((k, V))
    theta_sum = np.zeros((n_docs, k))
    lls = []
    for it in range(1, iterations + 1):
        _gibbs_sweep(words, docs, z, nkw, ndk, nk, alpha, beta, V * beta, rng.random(len(words)))
        if it > burn_in and ((it - burn_in) % thin == 0 or it == iterations):
            phi_sum += (nkw + beta) / (nk[:, None] + V * beta)
            theta_sum += (ndk + alpha) / (doc_len + k * alpha)
            lls.append(_log_likelihood(nkw, nk, beta))
    n = len(lls)
    phi = phi_sum / n
    theta = theta_sum / n
    phi /= phi.sum(axis=1, keepdims=True)
    theta /= theta.sum(axis=1, keepdims=True)
    return LdaModel(k, phi, theta, alpha, beta, seed, iterations, burn_in,
                    dtm.terms, dtm.doc_ids, np.asarray(lls))


def fold_in(model: LdaModel, dtm: DocTermMatrix, sweeps: int = 100, seed: int = 0) -> np.ndarray:
    """Estimate theta for new documents with phi frozen; averages the second half of the chain."""
    if dtm.terms != model.terms:
        raise ValueError("test documents must share the model's term index")
    words, docs = _tokens(dtm.counts)
    k = model.k
    rng = np.random.default_rng(seed)
    z = rng.integers(0, k, size=len(words)).astype(np.int64)
    ndk = np.zeros((dtm.counts.shape[0], k), dtype=np.int64)
    np.add.at(ndk, (docs, z), 1)
    doc_len = ndk.sum(axis=1, keepdims=True)
    theta_sum = np.zeros(ndk.shape)
    n = 0
    for it in range(1, sweeps + 1):
        _foldin_sweep(words, docs, z, ndk, model.phi, model.alpha, rng.random(len(words)))
        if it > sweeps // 2:
            theta_sum += (ndk + model.alpha) / (doc_len + k * model.alpha)
            n += 1
    return theta_sum / n


def document_entropy(phi: np.ndarray, theta: np.ndarray, counts: np.ndarray) -> float:
    """Bits per term: -sum n_dw log2(theta_d . phi_w) / sum n_dw."""
    p = theta @ phi
    mask = counts > 0
    return float(-(counts[mask] * np.log2(p[mask])).sum() / counts.sum())


def lda_heldout_entropy(
    dtm_train: DocTermMatrix,
    dtm_test: DocTermMatrix,
    k: int,
    seed: int = 0,
    fold_in_sweeps: int = 100,
    **fit_kwargs,
) -> float:
    """Per-term cross-entropy of held-out documents under an LDA fit on the training ones."""
    if dtm_train.terms != dtm_test.terms:
        raise ValueError("train and test matrices must share one term index")
    model = fit_lda(dtm_train, k, seed=seed, **fit_kwargs)
    theta = fold_in(model, dtm_test, fold_in_sweeps, seed)
    return document_entropy(model.phi, theta, dtm_test.counts)


def kfold_lda_entropy(
    corpus: Sequence[Sequence[str]],
    ngram_orders: Iterable[int],
    k_values: Iterable[int],
    folds: int = 5,
    seed: int = 0,
    **fit_kwargs,
) -> dict[tuple[int, int], list[float]]:
    """Held-out LDA entropy for every (w, k), one value per fold.

    Folds are the same seeded partition used for n-gram cross-validation.
    """
    from .ngram import kfold_splits

    splits = kfold_splits(corpus, folds, seed)
    out: dict[tuple[int, int], list[float]] = {}
    for w in sorted(set(ngram_orders)):
        full = build_docs(corpus, w)
        for split in splits:
            test_set = set(split.test_index)
            train_rows = [i for i in range(len(corpus)) if i not in test_set and len(corpus[i]) >= w]
            test_rows = [i for i in split.test_index if len(corpus[i]) >= w]
            train = build_docs([corpus[i] for i in train_rows], w, terms=full.terms)
            test = build_docs([corpus[i] for i in test_rows], w, terms=full.terms)
            for k in sorted(set(k_values)):
                h = lda_heldout_entropy(train, test, k, seed=seed + split.fold, **fit_kwargs)
                out.setdefault((w, k), []).append(h)
    return out


# -- topic-count metrics -------------------------------------------------------------------------


def griffiths2004(model: LdaModel) -> float:
    """Harmonic-mean estimate of log P(w | k) over the retained samples."""
    lls = np.asarray(model.log_likelihoods, dtype=float)
    if lls.size == 0:
        raise ValueError("model has no retained likelihood samples")
    return float(math.log(lls.size) - logsumexp(-lls))


def _pairs(k: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(k, 1)


def cao2009(phi: np.ndarray) -> float:
    """Mean pairwise cosine similarity of topic-term rows (lower is better)."""
    phi = np.asarray(phi, dtype=float)
    unit = phi / np.linalg.norm(phi, axis=1, keepdims=True)
    sim = unit @ unit.T
    i, j = _pairs(len(phi))
    return float(np.clip(sim[i, j], 0.0, 1.0).mean())


def _sym_kl(p: np.ndarray, q: np.ndarray) -> float:
    return float(np.sum(p * np.log(p / q)) + np.sum(q * np.log(q / p)))


def arun2010(phi: np.ndarray, theta: np.ndarray, doc_lengths: np.ndarray) -> float:
    """Symmetric KL divergence between the singular-value distribution of phi and
    the length-weighted topic-mass distribution (both sorted descending)."""
    sv = np.linalg.svd(np.asarray(phi, dtype=float), compute_uv=False)
    mass = np.asarray(doc_lengths, dtype=float) @ np.asarray(theta, dtype=float)
    p = np.sort(sv)[::-1]
    q = np.sort(mass)[::-1]
    p = p / p.sum()
    q = q / q.sum()
    eps = 1e-300
    return _sym_kl(np.maximum(p, eps), np.maximum(q, eps))


def _jsd(p: np.ndarray, q: np.ndarray) -> float:
    m = 0.5 * (p + q)
    return 0.5 * float(rel_entr(p, m).sum() + rel_entr(q, m).sum()) / math.log(2)


def deveaud2014(phi: np.ndarray) -> float:
    """Mean pairwise Jensen-Shannon divergence (bits) of topic-term rows (higher is better)."""
    phi = np.asarray(phi, dtype=float)
    i, j = _pairs(len(phi))
    return float(np.mean([_jsd(phi[a], phi[b]) for a, b in zip(i, j)]))


def model_metrics(model: LdaModel, dtm: DocTermMatrix) -> dict[str, float]:
    return {
        "griffiths2004": griffiths2004(model),
        "cao2009": cao2009(model.phi),
        "arun2010": arun2010(model.phi, model.theta, dtm.doc_lengths),
        "deveaud2014": deveaud2014(model.phi),
    }


@dataclass(frozen=True)
class TopicSelectionReport:
    ks: tuple[int, ...]
    ngram_order: int
    raw: dict[str, tuple[float, ...]]
    normalized: dict[str, tuple[float, ...]]
    chosen_k: int
    models: dict[int, LdaModel] = field(default_factory=dict, compare=False, repr=False)

    def rows(self) -> list[tuple[int, int, str, float, float]]:
        """(k, ngram_order, metric, raw, normalized), sorted by k then metric order."""
        return [
            (k, self.ngram_order, m, self.raw[m][i], self.normalized[m][i])
            for i, k in enumerate(self.ks)
            for m in METRICS
            if m in self.raw
        ]

    def argbest(self, metric: str) -> int:
        values = np.asarray(self.raw[metric])
        idx = int(np.argmin(values)) if metric in MINIMIZE else int(np.argmax(values))
        return self.ks[idx]


def normalize(values: Sequence[float]) -> tuple[float, ...]:
    """Min-max scaling to [0, 1]; a constant series maps to 0.5."""
    v = np.asarray(values, dtype=float)
    lo, hi = v.min(), v.max()
    if hi - lo <= 1e-12 * max(1.0, abs(hi)):
        return tuple(0.5 for _ in v)
    return tuple(float(x) for x in (v - lo) / (hi - lo))


def choose_k(ks: Sequence[int], normalized: dict[str, Sequence[float]], tolerance: float = 0.05) -> int:
    """Largest k where some metric sits within ``tolerance`` of its objective
    (0 for minimized metrics, 1 for maximized ones); falls back to the largest k."""
    best = None
    for i, k in enumerate(ks):
        near = any(normalized[m][i] <= tolerance for m in MINIMIZE if m in normalized) or any(
            normalized[m][i] >= 1 - tolerance for m in MAXIMIZE if m in normalized
        )
        if near and (best is None or k > best):
            best = k
    return best if best is not None else max(ks)


def _fit_and_score(task) -> tuple[LdaModel, dict[str, float]]:
    dtm, k, seed, fit_kwargs = task
    model = fit_lda(dtm, k, seed=seed, **fit_kwargs)
    return model, model_metrics(model, dtm)


def select_k(
    dtm: DocTermMatrix,
    k_range: Iterable[int],
    metrics: Sequence[str] = METRICS,
    seed: int = 0,
    keep_models: bool = False,
    jobs: int = 1,
    **fit_kwargs,
) -> TopicSelectionReport:
    """Fit one model per k (all with the same seed) and score the four selection metrics.

    ``jobs > 1`` fits the k values in worker processes; results do not depend on it.
    """
    ks = tuple(sorted(set(k_range)))
    if not ks:
        raise ValueError("empty k range")
    if ks[0] < 2 or ks[-1] > dtm.counts.shape[0]:
        raise ValueError(f"k range must lie within [2, {dtm.counts.shape[0]}] (number of documents)")
    unknown = set(metrics) - set(METRICS)
    if unknown:
        raise ValueError(f"unknown metrics: {sorted(unknown)}")
    raw: dict[str, list[float]] = {m: [] for m in METRICS if m in metrics}
    models = {}
    tasks = [(dtm, k, seed, fit_kwargs) for k in ks]
    if jobs > 1 and len(ks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            fitted = list(pool.map(_fit_and_score, tasks))
    else:
        fitted = [_fit_and_score(t) for t in tasks]
    for k, (model, scores) in zip(ks, fitted):
        for m in raw:
            raw[m].append(scores[m])
        if keep_models:
            models[k] = model
    normalized = {m: normalize(v) for m, v in raw.items()}
    return TopicSelectionReport(
        ks, dtm.ngram_order, {m: tuple(v) for m, v in raw.items()}, normalized,
        choose_k(ks, normalized), models,
    )


# -- fingerprints -----------------------------------------------------------------------------


@dataclass(frozen=True)
class Fingerprint:
    topic: int  # 1-indexed
    top_terms: tuple[tuple[str, float], ...]
    members: tuple[str, ...]


@dataclass(frozen=True)
class FingerprintReport:
    fingerprints: tuple[Fingerprint, ...]
    assignment: dict[str, int]

    @property
    def distinct_patterns(self) -> int:
        return len(self.fingerprints)


def assign_topics(theta: np.ndarray) -> np.ndarray:
    """1-indexed argmax topic per row; ties go to the lowest topic id."""
    return np.argmax(np.asarray(theta), axis=1) + 1


def extract_fingerprints(model: LdaModel, doc_ids: Sequence[str] | None = None, top_n: int = 8) -> FingerprintReport:
    ids = list(doc_ids) if doc_ids is not None else list(model.doc_ids)
    if len(ids) != model.theta.shape[0]:
        raise ValueError("one document id per theta row is required")
    topics = assign_topics(model.theta)
    assignment = {doc: int(t) for doc, t in zip(ids, topics)}
    prints = []
    for t in sorted(set(assignment.values())):
        row = model.phi[t - 1]
        order = sorted(range(len(row)), key=lambda j: (-row[j], j))[:top_n]
        terms = model.terms or tuple(str(j) for j in range(len(row)))
        prints.append(Fingerprint(
            topic=t,
            top_terms=tuple((terms[j], float(row[j])) for j in order),
            members=tuple(d for d in ids if assignment[d] == t),
        ))
    return FingerprintReport(tuple(prints), assignment)
