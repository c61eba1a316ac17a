"""Command-line surface: train-words, embed, eval, bound-check.

Every subcommand takes --seed and --threads; with --threads 1 and a fixed
seed the written artifacts are byte-identical across runs. JSON reports
embed the resolved configuration for provenance.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import closed_form, corpus, formats, neg_trainer, pac_bayes
from .closed_form import Role
from .evaluate import EvalConfig, grid_search_eval
from .neg_trainer import NegTrainConfig
from .skipgram import SkipgramConfig, train_skipgram

EMBED_METHODS = ("average", "average-both", "idf-average", "pb-l2",
                 "pb-idf-l2", "pb-neg", "w-pb-neg")
POSTERIOR_METHODS = ("pb-l2", "pb-idf-l2", "pb-neg", "w-pb-neg")


def _positive_int(value):
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return n


def _lambda_value(value):
    if value.strip().lower() == "inf":
        return math.inf
    lam = float(value)
    if lam <= 0:
        raise argparse.ArgumentTypeError(f"lambda must be > 0 or 'inf', got {value}")
    return lam


def _delta_value(value):
    delta = float(value)
    if not 0.0 < delta < 1.0:
        raise argparse.ArgumentTypeError(f"delta must be in (0, 1), got {value}")
    return delta


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pbsent",
        description="Skip-gram word vectors and PAC-Bayes sentence vectors.")
    sub = parser.add_subparsers(dest="command", required=True)

    tw = sub.add_parser("train-words", help="train skip-gram embeddings on a text corpus")
    tw.add_argument("--corpus", required=True, help="UTF-8 text file, one sentence per line")
    tw.add_argument("--out", required=True, help="output prefix for <prefix>.in.vec / <prefix>.out.vec")
    tw.add_argument("--dim", type=_positive_int, default=300)
    tw.add_argument("--window", type=_positive_int, default=5)
    tw.add_argument("--epochs", type=_positive_int, default=5)
    tw.add_argument("--negative", type=_positive_int, default=15)
    tw.add_argument("--sample", type=float, default=1e-4, help="subsampling threshold t (0 disables)")
    tw.add_argument("--power", type=float, default=0.75, help="noise distribution exponent")
    tw.add_argument("--lr0", type=float, default=0.025)
    tw.add_argument("--min-count", type=_positive_int, default=5)
    tw.add_argument("--save-vocab", default=None, help="optional vocabulary TSV dump path")
    tw.add_argument("--backend", choices=("auto", "cython", "python"), default="auto")
    _shared_flags(tw)

    em = sub.add_parser("embed", help="derive sentence vectors from trained embeddings")
    em.add_argument("--vectors", required=True, help="embedding prefix from train-words")
    em.add_argument("--sentences", required=True, help="one sentence per line")
    em.add_argument("--method", required=True, choices=EMBED_METHODS)
    em.add_argument("--lambda", dest="lam", type=_lambda_value, default=math.inf,
                    help="trade-off parameter; the literal 'inf' selects the plain averaging rows")
    em.add_argument("--sigma2-p", type=float, default=1.0)
    em.add_argument("--epochs", type=_positive_int, default=40)
    em.add_argument("--negative", type=_positive_int, default=15)
    em.add_argument("--lr0", type=float, default=0.025)
    em.add_argument("--mc-samples", type=_positive_int, default=1)
    em.add_argument("--noise-power", type=float, default=0.75)
    em.add_argument("--switch-roles", action="store_true",
                    help="swap the input/output tables (the i- variants)")
    em.add_argument("--emit-var", action="store_true",
                    help="append the posterior variance column (posterior methods only)")
    em.add_argument("--skip-empty", action="store_true",
                    help="emit zero vectors for sentences with no in-vocabulary tokens")
    em.add_argument("--dump-bank", default=None, metavar="PATH",
                    help="also dump the trained posterior bank TSV (pb-neg / w-pb-neg)")
    em.add_argument("--out", required=True, help="sentence-vector TSV path")
    _shared_flags(em)

    ev = sub.add_parser("eval", help="cross-validated classification of sentence vectors")
    ev.add_argument("--train-vectors", default=None)
    ev.add_argument("--test-vectors", default=None)
    ev.add_argument("--variant", action="append", default=[],
                    metavar="LAMBDA=TRAIN_TSV:TEST_TSV",
                    help="repeatable lambda-tagged vector variant searched jointly with C")
    ev.add_argument("--train-labels", required=True)
    ev.add_argument("--test-labels", required=True)
    ev.add_argument("--method", default="features", help="method name recorded in the report")
    ev.add_argument("--c-grid", default="0.0625,0.25,1,4,16")
    ev.add_argument("--folds", type=int, default=5)
    ev.add_argument("--normalize", choices=("none", "l2", "grid-both"), default="grid-both")
    ev.add_argument("--repeats", type=_positive_int, default=3)
    ev.add_argument("--out", required=True, help="JSON report path")
    _shared_flags(ev)

    bc = sub.add_parser("bound-check", help="empirical risk-bound verification on synthetic data")
    bc.add_argument("--trials", type=_positive_int, default=200)
    bc.add_argument("--delta", type=_delta_value, default=0.05)
    bc.add_argument("--lambda", dest="lam", type=float, default=None,
                    help="bound trade-off; defaults to the per-trial sample count")
    bc.add_argument("--vocab-size", type=_positive_int, default=20)
    bc.add_argument("--dim", type=_positive_int, default=4)
    bc.add_argument("--sentence-len", type=_positive_int, default=10)
    bc.add_argument("--k", type=_positive_int, default=4)
    bc.add_argument("--pi", type=float, default=None,
                    help="positive-label probability; defaults to 1/(1+k)")
    bc.add_argument("--gamma", type=float, default=1.0, help="symmetric Dirichlet concentration")
    bc.add_argument("--noise-power", type=float, default=0.75)
    bc.add_argument("--sigma2-p", type=float, default=1.0)
    bc.add_argument("--strategy", choices=("prior-mean", "pb-neg"), default="prior-mean")
    bc.add_argument("--out", required=True, help="JSON report path")
    _shared_flags(bc)
    return parser


def _shared_flags(sub):
    sub.add_argument("--seed", type=int, default=1)
    sub.add_argument("--threads", type=_positive_int, default=1)


def _config_echo(args) -> dict:
    payload = {k: v for k, v in vars(args).items() if k != "command"}
    payload["command"] = args.command
    return {k: (None if v is None else (str(v) if isinstance(v, float) and math.isinf(v) else v))
            for k, v in sorted(payload.items())}


def cmd_train_words(args) -> int:
    try:
        tokens = list(corpus.stream_tokens(args.corpus))
    except OSError as exc:
        print(f"error: cannot read corpus: {exc}", file=sys.stderr)
        return 1
    vocab = corpus.build_vocabulary(tokens, args.min_count)
    sentence_tokens = corpus.read_sentences(args.corpus)
    sentences = [vocab.encode(toks) for toks in sentence_tokens]
    cfg = SkipgramConfig(dim=args.dim, window=args.window, negatives=args.negative,
                         epochs=args.epochs, lr0=args.lr0, subsample=args.sample,
                         power=args.power, min_count=args.min_count, seed=args.seed,
                         threads=args.threads,
                         backend=None if args.backend == "auto" else args.backend)
    inp, outp = train_skipgram(vocab, sentences, cfg)
    formats.write_embedding_pair(args.out, vocab.id2word, inp.vectors, outp.vectors)
    if args.save_vocab:
        vocab.write_tsv(args.save_vocab)
    return 0


def _encode_sentence_file(path, word2id):
    with open(path, encoding="utf-8") as fh:
        lines = [corpus.normalize_text(line) for line in fh]
    return [np.array([word2id[t] for t in toks if t in word2id], dtype=np.int32)
            for toks in lines]


def cmd_embed(args) -> int:
    try:
        words, inputs, outputs = formats.read_embedding_pair(args.vectors)
    except OSError as exc:
        print(f"error: cannot read embeddings: {exc}", file=sys.stderr)
        return 1
    word2id = {w: i for i, w in enumerate(words)}
    try:
        sentences = _encode_sentence_file(args.sentences, word2id)
    except OSError as exc:
        print(f"error: cannot read sentences: {exc}", file=sys.stderr)
        return 1
    if args.emit_var and args.method not in POSTERIOR_METHODS:
        print(f"error: --emit-var is undefined for method {args.method}", file=sys.stderr)
        return 2
    if args.dump_bank and args.method not in ("pb-neg", "w-pb-neg"):
        print(f"error: --dump-bank is undefined for method {args.method}", file=sys.stderr)
        return 2

    empty = [i + 1 for i, s in enumerate(sentences) if len(s) == 0]
    if empty and not args.skip_empty:
        shown = ", ".join(map(str, empty[:20]))
        more = "" if len(empty) <= 20 else f" (+{len(empty) - 20} more)"
        print(f"error: no in-vocabulary tokens on lines: {shown}{more} "
              f"(use --skip-empty to emit zero vectors)", file=sys.stderr)
        return 1

    role = Role.SWITCHED if args.switch_roles else Role.STANDARD
    vectors, variances, bank = _dispatch_embed(args, sentences, inputs, outputs, role)
    formats.write_sentence_vectors(args.out, vectors,
                                   variances if args.emit_var else None)
    if args.dump_bank and bank is not None:
        keys = words if bank.kind == "word" else None
        bank.write_tsv(args.dump_bank, keys=keys)
    if empty:
        print(f"warning: emitted zero vectors for {len(empty)} empty sentences",
              file=sys.stderr)
    return 0


def _dispatch_embed(args, sentences, inputs, outputs, role):
    d = inputs.shape[1]
    n = len(sentences)
    vectors = np.zeros((n, d))
    variances = np.zeros(n)
    method = args.method

    if method in ("pb-neg", "w-pb-neg"):
        cfg = NegTrainConfig(lam=args.lam, sigma2_p=args.sigma2_p, k=args.negative,
                             epochs=args.epochs, lr0=args.lr0,
                             mc_samples=args.mc_samples, seed=args.seed, role=role,
                             noise_power=args.noise_power)
        if method == "pb-neg":
            bank = neg_trainer.train_pb_neg(sentences, inputs, outputs, cfg)
            for i, sent in enumerate(sentences):
                if len(sent):
                    vectors[i] = bank.mu[i]
                    variances[i] = math.exp(bank.log_var[i])
        else:
            bank = neg_trainer.train_w_pb_neg(sentences, inputs, outputs, cfg)
            for i, sent in enumerate(sentences):
                if len(sent):
                    vectors[i] = neg_trainer.compose_sentence_vector(bank, sent)
                    variances[i] = float(np.exp(bank.log_var[sent]).mean())
        return vectors, variances, bank

    idf = None
    if method in ("idf-average", "pb-idf-l2"):
        doc_freq = np.zeros(len(inputs), dtype=np.int64)
        for sent in sentences:
            for wid in np.unique(sent):
                doc_freq[wid] += 1
        dataset = corpus.SentenceDataset(sentences, doc_freq, len(inputs))
        idf = corpus.compute_idf(dataset)

    hypothesis = outputs if role == Role.SWITCHED else inputs
    for i, sent in enumerate(sentences):
        if len(sent) == 0:
            continue
        if method == "average":
            vectors[i] = closed_form.average(sent, hypothesis)
        elif method == "average-both":
            vectors[i] = closed_form.average_both(sent, inputs, outputs)
        elif method == "idf-average":
            weights = np.array([idf[int(w)] for w in sent])
            vectors[i] = (weights[:, None] * hypothesis[sent]).sum(axis=0) / weights.sum()
        elif method == "pb-l2":
            post = closed_form.pb_l2_posterior(sent, inputs, outputs, args.lam,
                                               args.sigma2_p, role)
            vectors[i], variances[i] = post.mu, post.var
        elif method == "pb-idf-l2":
            inv_lambda = 0.0 if math.isinf(args.lam) else 1.0 / args.lam
            post = closed_form.pb_idf_l2_posterior(sent, inputs, outputs,
                                                   inv_lambda, idf, role)
            vectors[i], variances[i] = post.mu, post.var
    return vectors, variances, None


def _parse_variants(specs):
    variants = []
    for spec in specs:
        try:
            lam_text, paths = spec.split("=", 1)
            train_path, test_path = paths.split(":", 1)
        except ValueError:
            raise argparse.ArgumentTypeError(
                f"--variant must look like LAMBDA=TRAIN:TEST, got {spec!r}") from None
        variants.append((_lambda_value(lam_text), train_path, test_path))
    return variants


def cmd_eval(args) -> int:
    if args.folds < 2:
        print(f"error: --folds must be >= 2, got {args.folds}", file=sys.stderr)
        return 2
    try:
        train_labels = formats.read_labels(args.train_labels)
        test_labels = formats.read_labels(args.test_labels)
    except OSError as exc:
        print(f"error: cannot read labels: {exc}", file=sys.stderr)
        return 1
    if args.variant:
        try:
            parsed = _parse_variants(args.variant)
        except argparse.ArgumentTypeError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        variants = []
        for lam, train_path, test_path in parsed:
            variants.append((lam, formats.read_sentence_vectors(train_path),
                             formats.read_sentence_vectors(test_path)))
        train_X, test_X = variants[0][1], variants[0][2]
    elif args.train_vectors and args.test_vectors:
        variants = None
        train_X = formats.read_sentence_vectors(args.train_vectors)
        test_X = formats.read_sentence_vectors(args.test_vectors)
    else:
        print("error: provide --train-vectors/--test-vectors or --variant", file=sys.stderr)
        return 2
    if len(train_X) != len(train_labels):
        print(f"error: {len(train_X)} train vectors vs {len(train_labels)} labels",
              file=sys.stderr)
        return 1
    if len(test_X) != len(test_labels):
        print(f"error: {len(test_X)} test vectors vs {len(test_labels)} labels",
              file=sys.stderr)
        return 1
    c_grid = tuple(float(c) for c in args.c_grid.split(","))
    cfg = EvalConfig(c_grid=c_grid, folds=args.folds, normalize=args.normalize,
                     repeats=args.repeats, seed=args.seed)
    try:
        report = grid_search_eval(train_X, train_labels, test_X, test_labels, cfg,
                                  lambda_variants=variants, method=args.method)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    payload = report.to_dict()
    if isinstance(payload["chosen_lambda"], float) and math.isinf(payload["chosen_lambda"]):
        payload["chosen_lambda"] = "inf"
    for row in payload["cv_table"]:
        if isinstance(row["lambda"], float) and math.isinf(row["lambda"]):
            row["lambda"] = "inf"
    payload["config"] = _config_echo(args)
    _write_json(args.out, payload)
    return 0


def cmd_bound_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    V = args.vocab_size
    counts = rng.integers(1, 100, size=V)
    noise = corpus.NoiseTable.from_counts(counts, args.noise_power)
    pi = 1.0 / (1 + args.k) if args.pi is None else args.pi
    try:
        spec = pac_bayes.GenerativeModelSpec(np.full(V, args.gamma), pi, noise, args.k)
        report = pac_bayes.verify_bound(
            spec, trials=args.trials, delta=args.delta, lam=args.lam,
            posterior_fit=args.strategy, rng=rng, dim=args.dim,
            sentence_len=args.sentence_len, sigma2_p=args.sigma2_p)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    payload = report.to_dict()
    payload["config"] = _config_echo(args)
    _write_json(args.out, payload)
    return 0


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {
        "train-words": cmd_train_words,
        "embed": cmd_embed,
        "eval": cmd_eval,
        "bound-check": cmd_bound_check,
    }[args.command]
    try:
        return handler(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
