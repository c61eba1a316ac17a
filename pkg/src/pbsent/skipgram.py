"""Source-task trainer: continuous Skip-gram with negative sampling.

Produces an input and an output embedding table. Training may be sharded
across threads with lock-free updates (valid but nondeterministic); the
single-threaded mode is bit-reproducible for a fixed seed and backend.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import NoiseTable, Vocabulary, build_noise_table, keep_probabilities
from .kernels import _softplus, get_backend


@dataclass
class EmbeddingMatrix:
    """V x d embedding table, role-tagged as the input or output side."""

    role: str  # "input" or "output"
    vectors: np.ndarray

    def __post_init__(self):
        if self.role not in ("input", "output"):
            raise ValueError(f"role must be 'input' or 'output', got {self.role!r}")
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ValueError("embedding matrix must be 2-D")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding matrix contains non-finite entries")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]


@dataclass
class SkipgramConfig:
    dim: int = 300
    window: int = 5
    negatives: int = 15
    epochs: int = 5
    lr0: float = 0.025
    subsample: float = 1e-4
    power: float = 0.75
    min_count: int = 5
    seed: int = 1
    threads: int = 1
    backend: str | None = None  # None = auto

    def __post_init__(self):
        if self.dim < 1 or self.window < 1 or self.negatives < 1 or self.epochs < 1:
            raise ValueError("dim, window, negatives and epochs must all be >= 1")
        if self.lr0 < 0:
            raise ValueError("lr0 must be >= 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


def neg_loss(i_vec, o_pos, o_negs) -> float:
    """Negative-sampling loss -[ln s(i.o+) + sum_n ln s(-i.o_n)].

    Computed through the stable softplus so large-magnitude dot products do
    not overflow.
    """
    i_vec = np.asarray(i_vec, dtype=np.float64)
    o_pos = np.asarray(o_pos, dtype=np.float64)
    o_negs = np.asarray(o_negs, dtype=np.float64).reshape(-1, i_vec.shape[-1]) if len(o_negs) else np.empty((0, len(i_vec)))
    if i_vec.shape != o_pos.shape:
        raise ValueError(f"dimension mismatch: {i_vec.shape} vs {o_pos.shape}")
    loss = _softplus(-float(i_vec @ o_pos))
    if len(o_negs):
        loss += _softplus(o_negs @ i_vec).sum()
    return float(loss)


def neg_loss_with_grads(i_vec, o_pos, o_negs):
    """Loss plus analytic gradients w.r.t. i_vec, o_pos and each o_neg."""
    i_vec = np.asarray(i_vec, dtype=np.float64)
    o_pos = np.asarray(o_pos, dtype=np.float64)
    o_negs = np.asarray(o_negs, dtype=np.float64).reshape(-1, i_vec.shape[-1]) if len(o_negs) else np.empty((0, len(i_vec)))
    a_pos = float(i_vec @ o_pos)
    a_negs = o_negs @ i_vec
    loss = _softplus(-a_pos) + _softplus(a_negs).sum()
    s_pos = 1.0 / (1.0 + np.exp(-a_pos)) if a_pos >= 0 else np.exp(a_pos) / (1.0 + np.exp(a_pos))
    s_negs = _stable_sigmoid(a_negs)
    grad_i = (s_pos - 1.0) * o_pos + s_negs @ o_negs
    grad_pos = (s_pos - 1.0) * i_vec
    grad_negs = s_negs[:, None] * i_vec[None, :]
    return float(loss), grad_i, grad_pos, grad_negs


def _stable_sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def extract_contexts(sentence, t: int, window: int, rng: np.random.Generator) -> np.ndarray:
    """Bag of context ids around position t with a dynamic window.

    The effective half-width b is drawn uniformly from {1..window} per target
    and truncated at the sequence boundaries; position t itself is excluded.
    """
    sentence = np.asarray(sentence)
    if not 0 <= t < len(sentence):
        raise IndexError(f"position {t} outside sentence of length {len(sentence)}")
    b = int(rng.integers(1, window + 1))
    lo = max(0, t - b)
    hi = min(len(sentence), t + b + 1)
    idx = [j for j in range(lo, hi) if j != t]
    return sentence[idx]


def train_skipgram(vocab: Vocabulary, sentences, cfg: SkipgramConfig,
                   noise: NoiseTable | None = None,
                   epoch_losses: list | None = None):
    """Train input/output embeddings over id-encoded sentences.

    Input rows are initialized U(-0.5/d, 0.5/d), output rows at zero. Noise
    defaults to the vocabulary unigram distribution raised to cfg.power.
    When `epoch_losses` is a list it receives the mean pair loss per epoch
    (single-thread only).

    Returns (input EmbeddingMatrix, output EmbeddingMatrix).
    """
    if len(vocab) == 0:
        raise ValueError("empty vocabulary")
    sentences = [np.ascontiguousarray(s, dtype=np.int32) for s in sentences]
    if sum(len(s) for s in sentences) == 0:
        raise ValueError("empty corpus")
    if noise is None:
        noise = build_noise_table(vocab, cfg.power)

    d = cfg.dim
    init_rng = np.random.default_rng(cfg.seed)
    inp = init_rng.uniform(-0.5 / d, 0.5 / d, size=(len(vocab), d))
    outp = np.zeros((len(vocab), d))
    keep_prob = keep_probabilities(vocab, cfg.subsample)

    backend = get_backend(cfg.backend)
    track = epoch_losses is not None
    stats = backend.train(inp, outp, sentences, keep_prob, noise.cdf,
                          cfg.window, cfg.negatives, cfg.epochs, cfg.lr0,
                          cfg.seed, threads=cfg.threads, track_loss=track)
    if track:
        loss_sum, loss_cnt = stats
        epoch_losses.extend((loss_sum / np.maximum(loss_cnt, 1)).tolist())
    return EmbeddingMatrix("input", inp), EmbeddingMatrix("output", outp)
