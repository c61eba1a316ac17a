"""Text ingestion: vocabulary, sentence statistics, IDF, subsampling, noise tables.

All builders are single-threaded; the structures they return are treated as
immutable afterwards and are safe to share across worker threads.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

_TOKEN_RE = re.compile(r"[A-Za-z]+")


def normalize_text(raw: str) -> list[str]:
    """Lowercased tokens: every maximal run of ASCII letters is one token.

    Digits and all other characters act as separators. This is a deliberately
    small tokenizer; it only has to be consistent, not linguistically clever.
    """
    return [m.group(0).lower() for m in _TOKEN_RE.finditer(raw)]


@dataclass
class Vocabulary:
    """Word <-> dense-id map with corpus frequencies.

    Ids are assigned by descending frequency, ties broken lexicographically,
    so construction is deterministic for identical inputs.
    """

    word2id: dict[str, int]
    id2word: list[str]
    freq: np.ndarray  # int64, token count per id
    total_tokens: int

    def __len__(self) -> int:
        return len(self.id2word)

    def __contains__(self, word: str) -> bool:
        return word in self.word2id

    def encode(self, tokens: Iterable[str]) -> np.ndarray:
        """Map tokens to ids, silently dropping out-of-vocabulary tokens."""
        ids = [self.word2id[t] for t in tokens if t in self.word2id]
        return np.asarray(ids, dtype=np.int32)

    def write_tsv(self, path) -> None:
        """Dump `word<TAB>freq` lines ordered by id."""
        with open(path, "w", encoding="utf-8") as fh:
            for wid, word in enumerate(self.id2word):
                fh.write(f"{word}\t{int(self.freq[wid])}\n")


def build_vocabulary(token_stream: Iterable[str], min_count: int = 1) -> Vocabulary:
    """Count tokens and retain words with frequency >= min_count.

    Raises ValueError("empty vocabulary") if nothing survives the threshold.
    """
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    counts = Counter(token_stream)
    kept = [(w, c) for w, c in counts.items() if c >= min_count]
    if not kept:
        raise ValueError("empty vocabulary")
    kept.sort(key=lambda wc: (-wc[1], wc[0]))
    id2word = [w for w, _ in kept]
    freq = np.array([c for _, c in kept], dtype=np.int64)
    word2id = {w: i for i, w in enumerate(id2word)}
    return Vocabulary(word2id, id2word, freq, int(freq.sum()))


@dataclass
class SentenceDataset:
    """Token-id sentences plus per-word document frequencies."""

    sentences: list[np.ndarray]
    doc_freq: np.ndarray  # int64, number of sentences containing each word id
    vocab_size: int

    @property
    def n_sentences(self) -> int:
        return len(self.sentences)

    def token_counts(self) -> np.ndarray:
        """Term frequency over all sentences (int64, length vocab_size)."""
        counts = np.zeros(self.vocab_size, dtype=np.int64)
        for sent in self.sentences:
            if len(sent):
                counts += np.bincount(sent, minlength=self.vocab_size)
        return counts


def encode_sentences(token_lists: Sequence[Sequence[str]], vocab: Vocabulary) -> SentenceDataset:
    """Encode tokenized sentences against a vocabulary.

    OOV tokens are dropped; sentences may become empty (callers that need a
    non-empty sentence raise at use time).
    """
    sentences = [vocab.encode(toks) for toks in token_lists]
    doc_freq = np.zeros(len(vocab), dtype=np.int64)
    for sent in sentences:
        for wid in np.unique(sent):
            doc_freq[wid] += 1
    return SentenceDataset(sentences, doc_freq, len(vocab))


def compute_idf(dataset: SentenceDataset) -> dict[int, float]:
    """IDF(w) = ln(N_S / doc_freq(w)) + 1 for every word seen in >= 1 sentence.

    Words absent from the collection have no entry; querying them is an error
    at the caller.
    """
    n = dataset.n_sentences
    if n < 1:
        raise ValueError("sentence collection is empty")
    seen = np.nonzero(dataset.doc_freq > 0)[0]
    return {int(w): math.log(n / dataset.doc_freq[w]) + 1.0 for w in seen}


def subsample_tokens(token_ids: np.ndarray, vocab: Vocabulary, t: float, rng: np.random.Generator) -> np.ndarray:
    """Keep each occurrence of word w independently with min(1, sqrt(t / f(w))).

    f(w) is the corpus-relative frequency freq(w)/total_tokens.
    """
    if t <= 0:
        raise ValueError(f"subsampling threshold must be > 0, got {t}")
    token_ids = np.asarray(token_ids)
    if len(token_ids) == 0:
        return token_ids
    keep_prob = keep_probabilities(vocab, t)
    mask = rng.random(len(token_ids)) < keep_prob[token_ids]
    return token_ids[mask]


def keep_probabilities(vocab: Vocabulary, t: float) -> np.ndarray:
    """Per-id keep probability min(1, sqrt(t/f(w))); t <= 0 disables (all 1)."""
    if t <= 0:
        return np.ones(len(vocab))
    f = vocab.freq / vocab.total_tokens
    return np.minimum(1.0, np.sqrt(t / f))


@dataclass
class NoiseTable:
    """Sampling structure for the unigram^power noise distribution.

    Sampling probability of word w is freq(w)^power / sum_v freq(v)^power,
    realized by inverse-CDF lookup on a cumulative array.
    """

    probs: np.ndarray  # float64, normalized
    power: float
    cdf: np.ndarray = field(init=False)

    def __post_init__(self):
        self.cdf = np.cumsum(self.probs)
        self.cdf[-1] = 1.0  # guard against accumulated rounding

    def __len__(self) -> int:
        return len(self.probs)

    @classmethod
    def from_counts(cls, counts: np.ndarray, power: float = 0.75) -> "NoiseTable":
        if power <= 0:
            raise ValueError(f"noise power must be > 0, got {power}")
        counts = np.asarray(counts, dtype=np.float64)
        if counts.size == 0:
            raise ValueError("cannot build a noise table over an empty vocabulary")
        weights = np.where(counts > 0, counts, 0.0) ** power
        total = weights.sum()
        if total <= 0:
            raise ValueError("all counts are zero")
        return cls(weights / total, power)

    def sample(self, rng: np.random.Generator, size: int | tuple = 1) -> np.ndarray:
        """Draw word ids; vectorized inverse-CDF."""
        u = rng.random(size)
        return np.searchsorted(self.cdf, u, side="right").astype(np.int32)


def build_noise_table(vocab: Vocabulary, power: float = 0.75) -> NoiseTable:
    """Noise table over a vocabulary's corpus frequencies."""
    if len(vocab) == 0:
        raise ValueError("cannot build a noise table over an empty vocabulary")
    return NoiseTable.from_counts(vocab.freq, power)


def read_sentences(path) -> list[list[str]]:
    """One sentence per line, tokenized with normalize_text."""
    with open(path, encoding="utf-8") as fh:
        return [normalize_text(line) for line in fh]


def stream_tokens(path) -> Iterable[str]:
    """All tokens of a text file in order, line structure ignored."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            yield from normalize_text(line)
