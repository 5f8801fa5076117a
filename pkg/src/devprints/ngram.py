"""Back-off n-gram language models over session token sequences.

All log-probabilities and entropies are base 2.  A sentence of length L is
padded with ``order - 1`` begin markers and one end marker; the end marker is
predicted and counted in the entropy denominator, the begin markers are not.
"""

from __future__ import annotations

import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

BOS, EOS, UNK = "<s>", "</s>", "<unk>"

Sentences = Sequence[Sequence[str]]


class ZeroProbabilityError(ValueError):
    """A scored token received probability zero (unsmoothed model)."""


@dataclass(frozen=True)
class Smoothing:
    """Smoothing configuration.

    ``method`` is ``"katz"`` (Good-Turing discounted back-off), ``"additive"``
    (add-``k``) or ``"mle"`` (no smoothing).  Training tokens seen fewer than
    ``min_count`` times are mapped to ``<unk>``; ``min_count=1`` disables this.
    """

    method: str = "katz"
    k: float = 1.0
    gt_max: int = 5
    min_count: int = 2

    def __post_init__(self):
        if self.method not in ("katz", "additive", "mle"):
            raise ValueError(f"unknown smoothing method {self.method!r}")
        if self.method == "additive" and self.k <= 0:
            raise ValueError("additive smoothing needs k > 0")
        if self.gt_max < 1 or self.min_count < 1:
            raise ValueError("gt_max and min_count must be >= 1")

    def describe(self) -> str:
        if self.method == "additive":
            return f"additive(k={self.k:g})"
        if self.method == "katz":
            return f"katz(gt_max={self.gt_max})"
        return "mle"


def _discounter(count_of_counts: Counter, gt_max: int):
    """Good-Turing discount ratios d(r), falling back to absolute discounting.

    Returns (function r -> d(r), description).  The largest cut-off K <= gt_max
    for which every ratio lies in (0, 1) is used; counts above K are kept.
    """
    n = count_of_counts
    for K in range(gt_max, 0, -1):
        if n[1] == 0 or any(n[r] == 0 for r in range(1, K + 2)):
            continue
        a = (K + 1) * n[K + 1] / n[1]
        if a >= 1:
            continue
        ratios = {}
        for r in range(1, K + 1):
            r_star = (r + 1) * n[r + 1] / n[r]
            ratios[r] = (r_star / r - a) / (1 - a)
        if all(0 < d < 1 for d in ratios.values()):
            return (lambda r, _d=ratios: _d.get(r, 1.0)), f"good-turing(K={K})"
    if n[1] > 0 and n[2] > 0:
        D = n[1] / (n[1] + 2 * n[2])
    else:
        D = 0.5
    return (lambda r, _D=D: (r - _D) / r), f"absolute(D={D:.4f})"


@dataclass
class NGramModel:
    order: int
    smoothing: Smoothing
    vocabulary: tuple[str, ...]
    counts: dict[int, dict[tuple, Counter]]
    boundaries: bool = True
    discounting: dict[int, str] = field(default_factory=dict)
    _star: dict[int, dict[tuple, dict[str, float]]] = field(default_factory=dict, repr=False)
    _alpha: dict[int, dict[tuple, float]] = field(default_factory=dict, repr=False)
    _unigram_floor: float = field(default=0.0, repr=False)

    @property
    def predicted(self) -> tuple[str, ...]:
        """Tokens the model assigns probability to (vocabulary plus sentinels)."""
        extra = (EOS, UNK) if self.boundaries else (UNK,)
        return tuple(self.vocabulary) + tuple(t for t in extra if t not in self.vocabulary)

    def map_token(self, token: str) -> str:
        return token if token in self._known else UNK

    def __post_init__(self):
        self._known = set(self.vocabulary)
        self._pred_set = set(self.predicted)
        if self.smoothing.method == "katz":
            self._build_katz()

    # Katz tables are built once; scoring only reads them.
    def _build_katz(self):
        predicted = self.predicted
        for m in range(1, self.order + 1):
            table = self.counts.get(m, {})
            coc = Counter(c for dist in table.values() for c in dist.values())
            d, desc = _discounter(coc, self.smoothing.gt_max)
            self.discounting[m] = desc
            star_m, alpha_m = {}, {}
            for h, dist in table.items():
                total = sum(dist.values())
                star = {w: d(c) * c / total for w, c in dist.items()}
                unseen = [w for w in predicted if w not in dist]
                left = 1.0 - sum(star.values())
                if not unseen:
                    s = sum(star.values())
                    star = {w: p / s for w, p in star.items()}
                    left = 0.0
                elif left < 1e-12:
                    # every continuation count exceeds the cut-off: reserve novel-event mass
                    reserve = 1.0 / (total + 1)
                    star = {w: p * (1 - reserve) for w, p in star.items()}
                    left = reserve
                star_m[h] = star
                if m == 1:
                    alpha_m[h] = left / len(unseen) if unseen else 0.0
                else:
                    lower = sum(self._katz(w, h[1:]) for w in unseen)
                    alpha_m[h] = left / lower if unseen else 0.0
            self._star[m] = star_m
            self._alpha[m] = alpha_m

    def _katz(self, token: str, context: tuple) -> float:
        m = len(context) + 1
        star = self._star[m].get(context)
        if star is None:
            if m == 1:
                return 1.0 / len(self._pred_set)
            return self._katz(token, context[1:])
        p = star.get(token)
        if p is not None:
            return p
        alpha = self._alpha[m][context]
        if m == 1:
            return alpha
        return alpha * self._katz(token, context[1:])

    def _context(self, history: Sequence[str]) -> tuple:
        need = self.order - 1
        if need == 0:
            return ()
        hist = [self.map_token(t) if t != BOS else BOS for t in history[-need:]]
        return tuple([BOS] * (need - len(hist)) + hist)

    def prob(self, token: str, history: Sequence[str] = ()) -> float:
        """P(token | last order-1 tokens of history); unknown tokens score as <unk>."""
        if token not in self._pred_set:
            token = UNK
        h = self._context(history)
        method = self.smoothing.method
        if method == "katz":
            return self._katz(token, h)
        dist = self.counts[self.order].get(h)
        if method == "additive":
            k = self.smoothing.k
            total = sum(dist.values()) if dist else 0
            c = dist.get(token, 0) if dist else 0
            return (c + k) / (total + k * len(self._pred_set))
        if not dist:
            return 0.0
        return dist.get(token, 0) / sum(dist.values())

    def distribution(self, history: Sequence[str] = ()) -> dict[str, float]:
        return {w: self.prob(w, history) for w in self.predicted}

    def contexts(self) -> list[tuple]:
        """Every context seen in training, across all orders."""
        return [h for m in range(1, self.order + 1) for h in self.counts.get(m, {})]


def _pad(sentence: Sequence[str], order: int, boundaries: bool) -> list[str]:
    return [BOS] * (order - 1) + list(sentence) + ([EOS] if boundaries else [])


def train(corpus: Sentences, n: int, smoothing: Smoothing | None = None, boundaries: bool = True) -> NGramModel:
    """Count 1..n-grams over the padded corpus and build the smoothed model."""
    if n < 1:
        raise ValueError("n-gram order must be >= 1")
    sentences = [tuple(s) for s in corpus]
    if not sentences:
        raise ValueError("cannot train on an empty corpus")
    smoothing = smoothing or Smoothing()
    freq = Counter(t for s in sentences for t in s)
    vocab = tuple(sorted(t for t, c in freq.items() if c >= smoothing.min_count))
    known = set(vocab)
    if any(c < smoothing.min_count for c in freq.values()):
        vocab = vocab + (UNK,) if UNK not in known else vocab
    counts: dict[int, dict[tuple, Counter]] = {m: defaultdict(Counter) for m in range(1, n + 1)}
    for s in sentences:
        padded = _pad([t if t in known else UNK for t in s], n, boundaries)
        for i in range(n - 1, len(padded)):
            for m in range(1, n + 1):
                counts[m][tuple(padded[i - m + 1 : i])][padded[i]] += 1
    counts = {m: dict(tab) for m, tab in counts.items()}
    return NGramModel(n, smoothing, vocab, counts, boundaries)


def sequence_log_prob(model: NGramModel, sentence: Sequence[str]) -> float:
    """log2 P(sentence), including the end marker.  Returns -inf on a zero-probability token."""
    padded = _pad(sentence, model.order, model.boundaries)
    total = 0.0
    for i in range(model.order - 1, len(padded)):
        p = model.prob(padded[i], padded[:i])
        if p <= 0.0:
            return -math.inf
        total += math.log2(p)
    return total


def scored_tokens(model: NGramModel, sentences: Sentences) -> int:
    extra = 1 if model.boundaries else 0
    return sum(len(s) + extra for s in sentences)


def cross_entropy(model: NGramModel, corpus: Sentences) -> float:
    """Bits per token over the corpus (end markers counted, begin markers not)."""
    sentences = list(corpus)
    if not sentences:
        raise ValueError("cannot score an empty corpus")
    total = 0.0
    for i, s in enumerate(sentences):
        lp = sequence_log_prob(model, s)
        if lp == -math.inf:
            raise ZeroProbabilityError(
                f"sentence {i} has a zero-probability token under {model.smoothing.describe()}; "
                "enable smoothing (katz or additive)"
            )
        total += lp
    h = -total / scored_tokens(model, sentences)
    return max(h, 0.0)


def perplexity(model: NGramModel, corpus: Sentences) -> float:
    return 2.0 ** cross_entropy(model, corpus)


# -- k-fold protocol --------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusSplit:
    fold: int
    train: tuple[tuple[str, ...], ...]
    test: tuple[tuple[str, ...], ...]
    test_index: tuple[int, ...]
    seed: int


def kfold_splits(corpus: Sentences, folds: int = 5, seed: int = 0) -> list[CorpusSplit]:
    """Seeded random partition of the corpus into ``folds`` near-equal test parts."""
    sentences = [tuple(s) for s in corpus]
    if folds < 2 or folds > len(sentences):
        raise ValueError(f"folds must be in [2, {len(sentences)}], got {folds}")
    order = np.random.default_rng(seed).permutation(len(sentences))
    parts = np.array_split(order, folds)
    splits = []
    for f, part in enumerate(parts):
        test_idx = sorted(int(i) for i in part)
        held = set(test_idx)
        splits.append(CorpusSplit(
            fold=f,
            train=tuple(s for i, s in enumerate(sentences) if i not in held),
            test=tuple(sentences[i] for i in test_idx),
            test_index=tuple(test_idx),
            seed=seed,
        ))
    return splits


@dataclass(frozen=True)
class FoldEntropy:
    fold: int
    entropy: float
    n_tokens: int
    n_oov: int

    @property
    def perplexity(self) -> float:
        return 2.0 ** self.entropy

    @property
    def oov_rate(self) -> float:
        return self.n_oov / self.n_tokens if self.n_tokens else 0.0


@dataclass(frozen=True)
class EntropyReport:
    order: int
    folds: tuple[FoldEntropy, ...]
    method: str

    @property
    def entropies(self) -> tuple[float, ...]:
        return tuple(f.entropy for f in self.folds)

    @property
    def mean(self) -> float:
        return float(np.mean(self.entropies))

    @property
    def std(self) -> float:
        return float(np.std(self.entropies, ddof=1)) if len(self.folds) > 1 else 0.0

    @property
    def perplexity(self) -> float:
        return 2.0 ** self.mean

    @property
    def n_tokens(self) -> int:
        return sum(f.n_tokens for f in self.folds)

    @property
    def n_oov(self) -> int:
        return sum(f.n_oov for f in self.folds)


def kfold_cross_entropy(
    corpus: Sentences,
    n_values: Iterable[int],
    folds: int = 5,
    seed: int = 0,
    smoothing: Smoothing | None = None,
) -> dict[int, EntropyReport]:
    smoothing = smoothing or Smoothing()
    splits = kfold_splits(corpus, folds, seed)
    reports = {}
    for n in sorted(set(n_values)):
        results = []
        for split in splits:
            model = train(split.train, n, smoothing)
            oov = sum(1 for s in split.test for t in s if model.map_token(t) == UNK)
            results.append(FoldEntropy(
                fold=split.fold,
                entropy=cross_entropy(model, split.test),
                n_tokens=scored_tokens(model, split.test),
                n_oov=oov,
            ))
        reports[n] = EntropyReport(n, tuple(results), smoothing.describe())
    return reports


_SENTENCE_END = re.compile(r"(?<=[.!?;])\s+|\n\s*\n")
_PUNCT = re.compile(r"[^\w\s]|_")


def tokenize_text(text: str) -> list[tuple[str, ...]]:
    """Plain text to sentences: split at sentence ends, lowercase, drop punctuation, split on whitespace."""
    sentences = []
    for chunk in _SENTENCE_END.split(text):
        words = _PUNCT.sub(" ", chunk.lower()).split()
        if words:
            sentences.append(tuple(words))
    return sentences
