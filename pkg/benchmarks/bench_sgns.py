#!/usr/bin/env python3
"""Benchmark the compiled skip-gram kernel against the pure-NumPy fallback.

Trains on a synthetic corpus and reports tokens/second per backend plus the
speedup. The fallback gets a smaller workload so the script stays quick.

Usage: python benchmarks/bench_sgns.py [--dim 100] [--sentences 2000]
"""

import argparse
import time

import numpy as np

from pbsent.corpus import build_vocabulary
from pbsent.kernels import available_backends
from pbsent.skipgram import SkipgramConfig, train_skipgram


def synthetic_corpus(n_sentences, vocab_size=500, sent_len=20, seed=0):
    rng = np.random.default_rng(seed)
    words = [f"w{i:04d}" for i in range(vocab_size)]
    # zipf-ish frequencies so the noise table is non-trivial
    probs = 1.0 / np.arange(1, vocab_size + 1)
    probs /= probs.sum()
    sentences = [[words[j] for j in rng.choice(vocab_size, size=sent_len, p=probs)]
                 for _ in range(n_sentences)]
    vocab = build_vocabulary((t for s in sentences for t in s), min_count=1)
    return vocab, [vocab.encode(s) for s in sentences]


def run(backend, vocab, sentences, dim, epochs, threads=1):
    cfg = SkipgramConfig(dim=dim, window=5, negatives=5, epochs=epochs,
                         subsample=0.0, min_count=1, seed=1, threads=threads,
                         backend=backend)
    tokens = sum(len(s) for s in sentences) * epochs
    start = time.perf_counter()
    train_skipgram(vocab, sentences, cfg)
    elapsed = time.perf_counter() - start
    return tokens / elapsed, elapsed


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dim", type=int, default=100)
    parser.add_argument("--sentences", type=int, default=2000)
    parser.add_argument("--epochs", type=int, default=3)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()

    backends = available_backends()
    print(f"available backends: {', '.join(backends)}")
    vocab, sentences = synthetic_corpus(args.sentences)
    rates = {}
    if "cython" in backends:
        rate, elapsed = run("cython", vocab, sentences, args.dim, args.epochs, args.threads)
        rates["cython"] = rate
        print(f"cython : {rate:12.0f} tokens/s ({elapsed:.2f}s, threads={args.threads})")

    # fallback on a 10x smaller slice, rate extrapolates
    small = sentences[: max(1, len(sentences) // 10)]
    rate, elapsed = run("python", vocab, small, args.dim, args.epochs)
    rates["python"] = rate
    print(f"python : {rate:12.0f} tokens/s ({elapsed:.2f}s on 1/10 corpus)")

    if "cython" in rates:
        print(f"speedup: {rates['cython'] / rates['python']:.1f}x")


if __name__ == "__main__":
    main()
