"""Training-kernel backends: compiled Cython core with a pure-NumPy fallback.

The backend is chosen at import/use time: the compiled extension when it
built successfully, otherwise the NumPy implementation. `PBSENT_KERNEL`
(``cython`` / ``python``) forces a choice. Both backends are deterministic
for a fixed seed in single-thread mode, but they consume independent random
streams, so their trained matrices differ numerically between backends.
"""

from __future__ import annotations

import os
import threading
import warnings

import numpy as np

try:
    from . import _sgns
except ImportError:  # compiled kernel unavailable; fall back below
    _sgns = None


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x):
    return np.logaddexp(0.0, x)


def flatten_sentences(sentences) -> tuple[np.ndarray, np.ndarray]:
    """Pack id sentences into (tokens, offsets) for the compiled kernel."""
    offsets = np.zeros(len(sentences) + 1, dtype=np.int64)
    for i, s in enumerate(sentences):
        offsets[i + 1] = offsets[i] + len(s)
    tokens = np.empty(offsets[-1], dtype=np.int32)
    for i, s in enumerate(sentences):
        tokens[offsets[i]:offsets[i + 1]] = s
    return tokens, offsets


def _shard_bounds(offsets: np.ndarray, threads: int) -> list[tuple[int, int]]:
    """Contiguous sentence ranges with roughly balanced token counts."""
    n_sent = len(offsets) - 1
    threads = max(1, min(threads, n_sent))
    total = int(offsets[-1])
    bounds, lo = [], 0
    for t in range(threads):
        target = (t + 1) * total / threads
        hi = int(np.searchsorted(offsets, target, side="left"))
        hi = max(hi, lo + 1) if lo < n_sent else lo
        if t == threads - 1:
            hi = n_sent
        bounds.append((lo, min(hi, n_sent)))
        lo = min(hi, n_sent)
    return [(a, b) for a, b in bounds if b > a]


class CythonBackend:
    name = "cython"

    def train(self, inp, outp, sentences, keep_prob, cdf, window, negatives,
              epochs, lr0, seed, threads=1, track_loss=False):
        tokens, offsets = flatten_sentences(sentences)
        if track_loss:
            loss_sum = np.zeros(epochs)
            loss_cnt = np.zeros(epochs, dtype=np.int64)
        else:
            loss_sum = np.empty(0)
            loss_cnt = np.empty(0, dtype=np.int64)
        shards = _shard_bounds(offsets, threads)
        if len(shards) == 1:
            lo, hi = shards[0]
            _sgns.train_shard(inp, outp, tokens, offsets, keep_prob, cdf,
                              window, negatives, epochs, lr0, seed, lo, hi,
                              loss_sum, loss_cnt)
        else:
            workers = [
                threading.Thread(
                    target=_sgns.train_shard,
                    args=(inp, outp, tokens, offsets, keep_prob, cdf,
                          window, negatives, epochs, lr0,
                          seed + 0x9E3779B9 * (i + 1), lo, hi,
                          loss_sum, loss_cnt),
                )
                for i, (lo, hi) in enumerate(shards)
            ]
            for w in workers:
                w.start()
            for w in workers:
                w.join()
        if track_loss:
            return loss_sum, loss_cnt
        return None


class PythonBackend:
    """NumPy reference implementation of the same pair-update protocol.

    Much slower than the compiled kernel (see benchmarks/bench_sgns.py);
    single-threaded only.
    """

    name = "python"

    def train(self, inp, outp, sentences, keep_prob, cdf, window, negatives,
              epochs, lr0, seed, threads=1, track_loss=False):
        if threads > 1:
            warnings.warn("python kernel is single-threaded; ignoring threads=%d" % threads)
        rng = np.random.default_rng(seed)
        total = sum(len(s) for s in sentences)
        schedule = float(epochs) * total + 1.0
        floor = lr0 * 1e-4
        processed = 0
        loss_sum = np.zeros(epochs)
        loss_cnt = np.zeros(epochs, dtype=np.int64)
        for epoch in range(epochs):
            for sent in sentences:
                processed += len(sent)
                lr = max(lr0 * (1.0 - processed / schedule), floor)
                if len(sent) == 0:
                    continue
                keep = rng.random(len(sent)) < keep_prob[sent]
                sen = sent[keep]
                m = len(sen)
                for i in range(m):
                    target = int(sen[i])
                    b = int(rng.integers(1, window + 1))
                    lo = max(0, i - b)
                    hi = min(m, i + b + 1)
                    for j in range(lo, hi):
                        if j == i:
                            continue
                        ctx = int(sen[j])
                        negs = self._draw_negatives(rng, cdf, negatives, ctx)
                        rows = np.concatenate(([ctx], negs))
                        iv = inp[target].copy()
                        O = outp[rows]
                        act = O @ iv
                        sg = _sigmoid(act)
                        coef = sg.copy()
                        coef[0] -= 1.0
                        grad_i = coef @ O
                        np.subtract.at(outp, rows, (lr * coef)[:, None] * iv)
                        inp[target] = iv - lr * grad_i
                        if track_loss:
                            loss_sum[epoch] += _softplus(-act[0]) + _softplus(act[1:]).sum()
                            loss_cnt[epoch] += 1
        if track_loss:
            return loss_sum, loss_cnt
        return None

    @staticmethod
    def _draw_negatives(rng, cdf, k, positive):
        negs = np.searchsorted(cdf, rng.random(k), side="right")
        bad = negs == positive
        attempts = 0
        while bad.any() and attempts < 100:
            negs[bad] = np.searchsorted(cdf, rng.random(int(bad.sum())), side="right")
            bad = negs == positive
            attempts += 1
        return negs[negs != positive]


def available_backends() -> tuple[str, ...]:
    return ("cython", "python") if _sgns is not None else ("python",)


def get_backend(name: str | None = None):
    """Resolve a kernel backend by name, env var, or auto-detection."""
    name = name or os.environ.get("PBSENT_KERNEL", "auto")
    if name == "auto":
        return CythonBackend() if _sgns is not None else PythonBackend()
    if name == "cython":
        if _sgns is None:
            raise RuntimeError("compiled kernel requested but pbsent._sgns is not built")
        return CythonBackend()
    if name == "python":
        return PythonBackend()
    raise ValueError(f"unknown kernel backend {name!r}")
