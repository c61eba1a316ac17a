"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with -s or check the pytest verdicts).

Criteria are property-based plus a desk-scale end-to-end run; tolerances are
pinned here and nowhere else.
"""

import itertools
import math
import time

import numpy as np
import pytest
from oracles import (
    central_difference,
    kl_to_poe_quadrature,
    l2_gradient,
    minimize_l2,
    minimize_weighted_l2,
    relative_error,
)

from pbsent import closed_form, neg_trainer, pac_bayes
from pbsent.closed_form import GaussianPosterior, Role
from pbsent.corpus import NoiseTable, build_vocabulary
from pbsent.evaluate import EvalConfig, grid_search_eval
from pbsent.neg_trainer import NegTrainConfig
from pbsent.skipgram import SkipgramConfig, neg_loss, neg_loss_with_grads, train_skipgram


def _announce(name):
    print(f"\nACCEPTANCE PASS: {name}")


class TestClosedFormOracle:
    def test_numerical_minimizer_reaches_closed_form(self):
        start = time.monotonic()
        rng = np.random.default_rng(2001)
        lam_grid = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0]
        for _ in range(100):
            d = int(rng.integers(1, 9))
            n = int(rng.integers(1, 11))
            I = rng.uniform(-1, 1, (n, d))
            O = rng.uniform(-1, 1, (n, d))
            lam = float(rng.choice(lam_grid))
            post = closed_form.pb_l2_posterior(np.arange(n), I, O, lam, sigma2_p=1.0)

            mu_hat, var_hat = minimize_l2(I, O, lam, 1.0, rng)
            if relative_error(mu_hat, post.mu) >= 1e-5 or abs(var_hat - post.var) / post.var >= 1e-6:
                mu_hat, var_hat = minimize_l2(I, O, lam, 1.0, rng)  # fresh start
            assert relative_error(mu_hat, post.mu) < 1e-5
            assert abs(var_hat - post.var) / post.var < 1e-6

            g_mu, g_s = l2_gradient(post.mu, math.log(post.var), I, O, lam, 1.0)
            assert math.hypot(np.linalg.norm(g_mu), g_s) < 1e-6
        elapsed = time.monotonic() - start
        assert elapsed < 60.0
        _announce(f"closed-form oracle (100 instances, {elapsed:.1f}s)")


class TestCorollaryIdentities:
    def test_exact_identities_and_role_involution(self):
        rng = np.random.default_rng(2002)
        for _ in range(25):
            d = int(rng.integers(1, 9))
            n = int(rng.integers(1, 11))
            ids = np.arange(n)
            I = rng.uniform(-1, 1, (n, d))
            O = rng.uniform(-1, 1, (n, d))
            idf = {int(i): float(v) for i, v in zip(ids, rng.uniform(1, 4, n))}
            w = np.array([idf[int(i)] for i in ids])

            # lambda = inf reduces to the token mean of the input rows
            inf_post = closed_form.pb_l2_posterior(ids, I, O, math.inf)
            assert np.array_equal(inf_post.mu, I.sum(axis=0) / n)

            # alpha = 1 (lam = |S| at sigma2_p = 1) reduces to the two-table average
            alpha_one = closed_form.pb_l2_posterior(ids, I, O, float(n), 1.0)
            assert np.array_equal(alpha_one.mu, closed_form.average_both(ids, I, O))

            # 1/lambda = 0 reduces to the IDF-weighted input mean
            idf_post = closed_form.pb_idf_l2_posterior(ids, I, O, 0.0, idf)
            expected = (w[:, None] * I).sum(axis=0) / ((1.0 + 0.0) * w.sum())
            assert np.array_equal(idf_post.mu, expected)

            # switching twice is the identity; i-variant == swapped tables
            for role_fn in (
                lambda role, a, b: closed_form.pb_l2_posterior(ids, a, b, 2.0, role=role).mu,
                lambda role, a, b: closed_form.pb_idf_l2_posterior(ids, a, b, 0.5, idf, role=role).mu,
            ):
                assert np.array_equal(role_fn(Role.SWITCHED, I, O), role_fn(Role.STANDARD, O, I))
                assert np.array_equal(role_fn(Role.SWITCHED, O, I), role_fn(Role.STANDARD, I, O))
        _announce("corollary identities (exact, incl. role involution)")


class TestIdfDerivation:
    def test_weighted_minimizer_reaches_idf_closed_form(self):
        rng = np.random.default_rng(2003)
        inv_lams = [1 / 0.25, 1 / 0.5, 1.0, 1 / 2, 1 / 4, 1 / 8]
        for _ in range(50):
            d = int(rng.integers(1, 7))
            n = int(rng.integers(1, 9))
            I = rng.uniform(-1, 1, (n, d))
            O = rng.uniform(-1, 1, (n, d))
            idf_w = rng.uniform(1.0, 4.0, n)
            idf = {int(i): float(v) for i, v in enumerate(idf_w)}
            inv_lambda = float(rng.choice(inv_lams))
            post = closed_form.pb_idf_l2_posterior(np.arange(n), I, O, inv_lambda, idf)
            mu_hat, var_hat = minimize_weighted_l2(I, O, inv_lambda, idf_w, rng)
            if relative_error(mu_hat, post.mu) >= 1e-5:
                mu_hat, var_hat = minimize_weighted_l2(I, O, inv_lambda, idf_w, rng)
            assert relative_error(mu_hat, post.mu) < 1e-5
            assert abs(var_hat - post.var) / post.var < 1e-5
        _announce("IDF closed form vs weighted-objective minimizer (50 instances)")


class TestKlPoeDecomposition:
    def test_offset_is_posterior_independent(self):
        rng = np.random.default_rng(2004)
        for d, m in itertools.product((1, 2), (1, 2, 3)):
            means = rng.uniform(-2, 2, size=(m, d))
            pvars = rng.uniform(0.5, 2.0, size=m)
            prior = pac_bayes.PoEPrior(means, pvars)
            offsets = []
            for _ in range(5):
                q = GaussianPosterior(rng.uniform(-2, 2, size=d), 0.7)
                exact = kl_to_poe_quadrature(q.mu, q.var, means, pvars)
                offsets.append(exact - pac_bayes.kl_to_poe_upto_const(q, prior))
            assert max(offsets) - min(offsets) < 1e-4
        _announce("KL-to-product decomposition vs quadrature (d<=2, |S|<=3)")


class TestBoundVerification:
    def test_violation_rate(self):
        start = time.monotonic()
        rng = np.random.default_rng(2005)
        V = 24
        counts = rng.integers(1, 80, size=V)
        noise = NoiseTable.from_counts(counts, 0.75)
        spec = pac_bayes.GenerativeModelSpec(gamma=np.ones(V), pi=0.2, noise=noise, k=4)
        report = pac_bayes.verify_bound(spec, trials=200, delta=0.05,
                                        posterior_fit="prior-mean", rng=rng,
                                        dim=4, sentence_len=10)
        elapsed = time.monotonic() - start
        assert report.violation_rate <= 0.10
        assert elapsed < 120.0
        _announce(f"bound verification (violation {report.violation_rate:.3f} <= 0.10, {elapsed:.1f}s)")


class TestGradientChecks:
    def test_neg_loss_gradients(self):
        rng = np.random.default_rng(2006)
        for _ in range(50):
            d = int(rng.integers(2, 8))
            k = int(rng.integers(0, 6))
            i = rng.uniform(-1, 1, d)
            o_pos = rng.uniform(-1, 1, d)
            o_negs = rng.uniform(-1, 1, (k, d))
            _, grad_i, grad_pos, grad_negs = neg_loss_with_grads(i, o_pos, o_negs)
            assert relative_error(grad_i, central_difference(
                lambda x: neg_loss(x, o_pos, o_negs), i)) < 1e-4
            assert relative_error(grad_pos, central_difference(
                lambda x: neg_loss(i, x, o_negs), o_pos)) < 1e-4
            if k:
                assert relative_error(grad_negs.ravel(), central_difference(
                    lambda x: neg_loss(i, o_pos, x.reshape(k, d)), o_negs.ravel())) < 1e-4
        _announce("gradient check: negative-sampling loss (50 instances)")

    def test_sentence_objective_gradients(self):
        rng = np.random.default_rng(2007)
        for _ in range(50):
            d, V = 4, 7
            I = rng.uniform(-1, 1, (V, d))
            O = rng.uniform(-1, 1, (V, d))
            n = int(rng.integers(1, 5))
            ids = rng.integers(0, V, n)
            cfg = NegTrainConfig(lam=float(rng.choice([0.25, 1.0, 4.0])), sigma2_p=0.8, k=2)
            eps = rng.normal(size=(int(rng.integers(1, 3)), d))
            negs = rng.integers(0, V, (n, 2))
            mu = rng.normal(size=d)
            s = float(rng.uniform(-1, 0.5))
            _, g_mu, g_s = neg_trainer.pb_neg_objective(mu, s, ids, I, O, cfg, eps, negs)
            assert relative_error(g_mu, central_difference(
                lambda x: neg_trainer.pb_neg_objective(x, s, ids, I, O, cfg, eps, negs)[0], mu)) < 1e-4
            assert relative_error(np.array([g_s]), central_difference(
                lambda x: neg_trainer.pb_neg_objective(mu, float(x[0]), ids, I, O, cfg, eps, negs)[0],
                np.array([s]))) < 1e-4
        _announce("gradient check: per-sentence objective (50 instances)")

    def test_word_objective_gradients(self):
        rng = np.random.default_rng(2008)
        for _ in range(50):
            V, d = 6, 4
            I = rng.uniform(-1, 1, (V, d))
            pm = rng.normal(size=(V, d))
            pvars = rng.uniform(0.5, 3.0, V)
            ids = rng.integers(0, V, int(rng.integers(2, 5)))
            target = int(rng.choice(ids))
            uq = np.unique(ids)
            cfg = NegTrainConfig(lam=float(rng.choice([0.25, 1.0, 4.0])), k=2)
            eps = rng.normal(size=(len(uq), d))
            negs = rng.integers(0, V, 2)
            mu = rng.normal(size=(V, d))
            log_var = rng.uniform(-1, 1, V)
            _, g_mu, g_s = neg_trainer.w_pb_neg_objective(
                mu, log_var, ids, target, I, cfg, eps, negs, pm, pvars)
            assert relative_error(g_mu.ravel(), central_difference(
                lambda x: neg_trainer.w_pb_neg_objective(
                    x.reshape(V, d), log_var, ids, target, I, cfg, eps, negs, pm, pvars)[0],
                mu.ravel())) < 1e-4
            assert relative_error(g_s, central_difference(
                lambda x: neg_trainer.w_pb_neg_objective(
                    mu, x, ids, target, I, cfg, eps, negs, pm, pvars)[0],
                log_var)) < 1e-4
        _announce("gradient check: shared-word objective (50 instances)")


class TestLazySgd:
    def test_lazy_equals_eager(self):
        rng = np.random.default_rng(2009)
        V, d = 18, 6
        I = rng.uniform(-1, 1, (V, d))
        O = rng.uniform(-1, 1, (V, d))
        sentences = [rng.integers(0, V, int(rng.integers(3, 9))).astype(np.int32)
                     for _ in range(50)]
        cfg = NegTrainConfig(lam=1.0, k=3, epochs=5, lr0=0.05, seed=4242)
        lazy = neg_trainer.train_w_pb_neg(sentences, I, O, cfg, lazy=True)
        eager = neg_trainer.train_w_pb_neg(sentences, I, O, cfg, lazy=False)
        mu_gap = np.abs(lazy.mu - eager.mu).max()
        var_gap = np.abs(lazy.log_var - eager.log_var).max()
        assert mu_gap < 1e-6
        assert var_gap < 1e-6
        assert np.all(lazy.var > 0)
        _announce(f"lazy vs eager shared-word training (max abs {max(mu_gap, var_gap):.2e})")


class TestNoiseTable:
    def test_empirical_tv_distance(self):
        rng = np.random.default_rng(2010)
        counts = rng.zipf(1.6, size=50).astype(np.int64)
        table = NoiseTable.from_counts(counts, power=0.75)
        draws = table.sample(np.random.default_rng(77), 10**6)
        emp = np.bincount(draws, minlength=len(counts)) / 10**6
        ref = counts.astype(float) ** 0.75
        ref /= ref.sum()
        tv = 0.5 * np.abs(emp - ref).sum()
        assert tv < 0.01
        _announce(f"noise table empirical distribution (TV {tv:.4f} < 0.01)")


# ----------------------------------------------------------------------
# Desk-scale end to end
# ----------------------------------------------------------------------

def _letters(n):
    alphabet = "abcdefgh"
    combos = ["".join(p) for p in itertools.product(alphabet, repeat=2)]
    return combos[:n]


def _two_topic_corpus(rng):
    topics = [[f"red{s}" for s in _letters(50)], [f"blu{s}" for s in _letters(50)]]
    stop = [f"sw{s}" for s in _letters(20)]

    def sentence(topic):
        length = int(rng.integers(8, 13))
        words = []
        for _ in range(length):
            if rng.random() < 0.3:
                words.append(stop[int(rng.integers(20))])
            else:
                words.append(topics[topic][int(rng.integers(50))])
        return words

    source = [sentence(t % 2) for t in range(4000)]
    train = [(sentence(t % 2), t % 2) for t in range(400)]
    test = [(sentence(t % 2), t % 2) for t in range(100)]
    return source, train, test


class TestEndToEndDeskScale:
    def test_all_methods_beat_majority_and_threshold(self):
        start = time.monotonic()
        rng = np.random.default_rng(2011)
        source, train, test = _two_topic_corpus(rng)

        vocab = build_vocabulary((tok for sent in source for tok in sent), min_count=5)
        source_ids = [vocab.encode(s) for s in source]
        cfg = SkipgramConfig(dim=16, window=5, negatives=5, epochs=5, lr0=0.025,
                             subsample=0.0, min_count=5, seed=11)
        inp, outp = train_skipgram(vocab, source_ids, cfg)

        train_ids = [vocab.encode(s) for s, _ in train]
        test_ids = [vocab.encode(s) for s, _ in test]
        y_train = np.array([label for _, label in train])
        y_test = np.array([label for _, label in test])
        majority = max((y_test == c).mean() for c in np.unique(y_test))
        all_ids = train_ids + test_ids

        idf = _idf_for(all_ids, len(vocab))
        accuracies = {}
        for method, make in _method_table(inp, outp, idf).items():
            vectors = make(all_ids)
            X_train, X_test = vectors[:len(train_ids)], vectors[len(train_ids):]
            cfg_eval = EvalConfig(c_grid=(0.25, 4.0), folds=5, normalize="grid-both",
                                  repeats=1, seed=3)
            report = grid_search_eval(X_train, y_train, X_test, y_test, cfg_eval,
                                      method=method)
            accuracies[method] = report.test_accuracy_mean
            assert report.test_accuracy_mean > 0.85, (method, report.test_accuracy_mean)
            assert report.test_accuracy_mean > majority, method

        elapsed = time.monotonic() - start
        assert elapsed < 300.0
        summary = ", ".join(f"{m}={a:.2f}" for m, a in accuracies.items())
        _announce(f"end-to-end desk scale ({summary}; {elapsed:.0f}s)")


def _idf_for(sentences, vocab_size):
    doc_freq = np.zeros(vocab_size, dtype=np.int64)
    for sent in sentences:
        for wid in np.unique(sent):
            doc_freq[wid] += 1
    idf = {}
    n = len(sentences)
    for wid in np.nonzero(doc_freq)[0]:
        idf[int(wid)] = math.log(n / doc_freq[wid]) + 1.0
    return idf


def _method_table(inp, outp, idf):
    """Every target-task method of the transfer-comparison table."""

    def closed(fn):
        def run(sentences):
            return np.stack([fn(s) for s in sentences])
        return run

    def trained_sentence(role):
        def run(sentences):
            cfg = NegTrainConfig(lam=1.0, k=5, epochs=20, lr0=0.025, seed=5, role=role)
            bank = neg_trainer.train_pb_neg(sentences, inp, outp, cfg)
            return bank.mu.copy()
        return run

    def trained_word(role):
        def run(sentences):
            cfg = NegTrainConfig(lam=1.0, k=5, epochs=10, lr0=0.025, seed=6, role=role)
            bank = neg_trainer.train_w_pb_neg(sentences, inp, outp, cfg)
            return np.stack([neg_trainer.compose_sentence_vector(bank, s) for s in sentences])
        return run

    return {
        "pb-l2": closed(lambda s: closed_form.pb_l2_posterior(s, inp, outp, 2.0).mu),
        "i-pb-l2": closed(lambda s: closed_form.pb_l2_posterior(s, inp, outp, 2.0, role=Role.SWITCHED).mu),
        "pb-idf-l2": closed(lambda s: closed_form.pb_idf_l2_posterior(s, inp, outp, 1.0, idf).mu),
        "i-pb-idf-l2": closed(lambda s: closed_form.pb_idf_l2_posterior(s, inp, outp, 1.0, idf, role=Role.SWITCHED).mu),
        "pb-neg": trained_sentence(Role.STANDARD),
        "i-pb-neg": trained_sentence(Role.SWITCHED),
        "w-pb-neg": trained_word(Role.STANDARD),
        "i-w-pb-neg": trained_word(Role.SWITCHED),
    }


class TestCliDeterminism:
    def test_every_subcommand_byte_identical(self, tmp_path):
        # identical inputs and flags, two runs per subcommand, only the
        # artifact path differs between runs
        from pbsent.cli import main

        rng = np.random.default_rng(42)
        words = [f"w{i}" for i in range(12)]
        corpus_path = tmp_path / "corpus.txt"
        corpus_path.write_text("".join(
            " ".join(words[int(j)] for j in rng.integers(0, 12, 8)) + "\n"
            for _ in range(40)))
        sent_path = tmp_path / "sents.txt"
        sent_path.write_text("".join(
            " ".join(words[int(j)] for j in rng.integers(0, 12, 5)) + "\n"
            for _ in range(10)))
        labels = tmp_path / "labels.txt"
        labels.write_text("".join(f"{i % 2}\n" for i in range(10)))

        def train(prefix):
            assert main(["train-words", "--corpus", str(corpus_path), "--out", str(prefix),
                         "--dim", "8", "--epochs", "2", "--negative", "3",
                         "--min-count", "1", "--sample", "0", "--seed", "9",
                         "--threads", "1"]) == 0

        train(tmp_path / "m1")
        train(tmp_path / "m2")
        artifacts = [(tmp_path / "m1.in.vec", tmp_path / "m2.in.vec"),
                     (tmp_path / "m1.out.vec", tmp_path / "m2.out.vec")]

        def embed(out):
            assert main(["embed", "--vectors", str(tmp_path / "m1"),
                         "--sentences", str(sent_path), "--method", "pb-neg",
                         "--lambda", "2", "--epochs", "3", "--negative", "3",
                         "--seed", "9", "--threads", "1", "--out", str(out)]) == 0

        embed(tmp_path / "e1.tsv")
        embed(tmp_path / "e2.tsv")
        artifacts.append((tmp_path / "e1.tsv", tmp_path / "e2.tsv"))

        def evaluate(out):
            assert main(["eval", "--train-vectors", str(tmp_path / "e1.tsv"),
                         "--train-labels", str(labels),
                         "--test-vectors", str(tmp_path / "e1.tsv"),
                         "--test-labels", str(labels),
                         "--c-grid", "1", "--repeats", "1", "--seed", "9",
                         "--threads", "1", "--out", str(out)]) == 0

        evaluate(tmp_path / "r1.json")
        evaluate(tmp_path / "r2.json")

        def bound(out):
            assert main(["bound-check", "--trials", "10", "--vocab-size", "10",
                         "--dim", "3", "--sentence-len", "5", "--k", "2",
                         "--seed", "9", "--threads", "1", "--out", str(out)]) == 0

        bound(tmp_path / "b1.json")
        bound(tmp_path / "b2.json")

        for a, b in artifacts:
            assert a.read_bytes() == b.read_bytes(), a
        import json
        for a, b in [("r1.json", "r2.json"), ("b1.json", "b2.json")]:
            da = json.loads((tmp_path / a).read_text())
            db = json.loads((tmp_path / b).read_text())
            da["config"].pop("out"), db["config"].pop("out")
            assert da == db, a
        _announce("CLI determinism (all four subcommands)")
