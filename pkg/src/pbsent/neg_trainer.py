"""Iterative posterior training with the negative-sampling surrogate loss.

Two families:

* per-sentence posteriors: each sentence owns an independent Gaussian
  posterior trained on its own objective (minibatch = the sentence);
* per-word posteriors: one shared Gaussian posterior per vocabulary word,
  trained over (sentence, word) pairs; the full-vocabulary regularizer is
  applied lazily, with closed-form catch-up for the means and replayed
  scalar steps for the log-variances, so the flushed state coincides with
  eager application up to floating-point accumulation.

Posterior variances are optimized as s = ln(var), which keeps them positive
by construction. The switched role swaps the input/output tables everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .closed_form import GaussianPosterior, Role, _vectors
from .corpus import NoiseTable, Vocabulary
from .kernels import _sigmoid, _softplus


@dataclass
class NegTrainConfig:
    lam: float = 1.0            # inf disables the prior penalty
    sigma2_p: float = 1.0       # uniform prior variance (per-sentence family)
    k: int = 15                 # negatives per positive
    epochs: int = 40
    lr0: float = 0.025
    mc_samples: int = 1
    seed: int = 1
    role: Role = Role.STANDARD
    noise_power: float = 0.75

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if not self.sigma2_p > 0:
            raise ValueError(f"sigma2_p must be > 0, got {self.sigma2_p}")
        if self.k < 1 or self.mc_samples < 1:
            raise ValueError("k and mc_samples must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lr0 < 0:
            raise ValueError("lr0 must be >= 0")
        self.role = Role(self.role)


@dataclass
class PosteriorBank:
    """Gaussian posteriors keyed by sentence index or by word id.

    Variances live as log_var; lazy-update bookkeeping is internal to the
    trainers and banks come back fully flushed.
    """

    kind: str  # "sentence" or "word"
    mu: np.ndarray       # (n, d)
    log_var: np.ndarray  # (n,)

    def __post_init__(self):
        if self.kind not in ("sentence", "word"):
            raise ValueError(f"kind must be 'sentence' or 'word', got {self.kind!r}")

    def __len__(self) -> int:
        return len(self.mu)

    @property
    def var(self) -> np.ndarray:
        return np.exp(self.log_var)

    def posterior(self, i: int) -> GaussianPosterior:
        return GaussianPosterior(self.mu[i], float(np.exp(self.log_var[i])))

    def write_tsv(self, path, keys=None) -> None:
        """Dump `key<TAB>var<TAB>mu_1...mu_d` rows."""
        keys = range(len(self)) if keys is None else keys
        with open(path, "w", encoding="utf-8") as fh:
            for key, mu_row, lv in zip(keys, self.mu, self.log_var):
                cols = [str(key), format(math.exp(lv), ".8g")]
                cols += [format(v, ".8g") for v in mu_row]
                fh.write("\t".join(cols) + "\n")


def freq_prior_variance(vocab: Vocabulary) -> np.ndarray:
    """Per-word prior variance total_tokens / freq(w), indexed by word id."""
    if vocab.total_tokens <= 0:
        raise ValueError("vocabulary has no tokens")
    return vocab.total_tokens / vocab.freq.astype(np.float64)


def _prior_vars_from_counts(counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Frequency prior from raw counts; zero-count words are inactive."""
    counts = np.asarray(counts, dtype=np.float64)
    active = counts > 0
    total = counts.sum()
    pvars = np.ones_like(counts)
    pvars[active] = total / counts[active]
    return pvars, active


def _epoch_lr(cfg: NegTrainConfig, epoch: int) -> float:
    """Linear per-epoch decay from lr0 to lr0/epochs, floored at lr0*1e-4."""
    return max(cfg.lr0 * (1.0 - epoch / cfg.epochs), cfg.lr0 * 1e-4)


def _noise_from_sentences(sentences, vocab_size: int, power: float) -> NoiseTable:
    counts = np.zeros(vocab_size, dtype=np.int64)
    for s in sentences:
        if len(s):
            counts += np.bincount(s, minlength=vocab_size)
    return NoiseTable.from_counts(counts, power)


def _as_sentences(dataset):
    return dataset.sentences if hasattr(dataset, "sentences") else [np.asarray(s) for s in dataset]


def _role_tables(inputs, outputs, role: Role):
    """(hypothesis side, prior side) after applying the role."""
    I, O = _vectors(inputs), _vectors(outputs)
    if Role(role) == Role.SWITCHED:
        I, O = O, I
    return I, O


def _stable_sigmoid_scalar(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


# ----------------------------------------------------------------------
# Per-sentence posteriors
# ----------------------------------------------------------------------

def _sentence_data_terms(mu, sigma, ids, H_mat, eps, negatives, input_grads=None, lr=None):
    """Data term (1/|S|) sum_w l_neg(h, i_w) averaged over the eps draws.

    Returns (value, grad_mu, grad_s). When `input_grads` is given, gradients
    w.r.t. the hypothesis-side rows are accumulated into it (scaled by the
    caller via lr at application time; here raw gradients are added).
    """
    n = len(ids)
    S_I = H_mat[ids]             # (n, d)
    N_I = H_mat[negatives]       # (n, k, d)
    value = 0.0
    grad_mu = np.zeros(mu.shape[0])
    grad_s = 0.0
    mc = len(eps)
    for e in eps:
        h = mu + sigma * e
        a_pos = S_I @ h
        a_neg = N_I @ h
        value += (_softplus(-a_pos).sum() + _softplus(a_neg).sum()) / n
        coef_pos = (_sigmoid(a_pos) - 1.0) / n
        coef_neg = _sigmoid(a_neg) / n
        g_h = coef_pos @ S_I + np.einsum("nk,nkd->d", coef_neg, N_I)
        grad_mu += g_h
        grad_s += (g_h @ e) * sigma * 0.5
        if input_grads is not None:
            np.add.at(input_grads, ids, (coef_pos / mc)[:, None] * h[None, :])
            np.add.at(input_grads, negatives.ravel(),
                      (coef_neg.ravel() / mc)[:, None] * h[None, :])
    return value / mc, grad_mu / mc, grad_s / mc


def _sentence_penalty_terms(mu, log_var, ids, P_mat, cfg):
    """Prior-pull terms of the per-sentence objective and their gradients."""
    if math.isinf(cfg.lam):
        return 0.0, np.zeros_like(mu), 0.0
    n = len(ids)
    d = mu.shape[0]
    obar = P_mat[ids].mean(axis=0)
    w_quad = n / (2.0 * cfg.sigma2_p * cfg.lam)
    diff = mu - obar
    w_kl = n * d / (2.0 * cfg.lam)
    ratio = math.exp(log_var) / cfg.sigma2_p
    value = w_quad * (diff ** 2).sum() + w_kl * (math.log(cfg.sigma2_p) - log_var + ratio)
    return value, 2.0 * w_quad * diff, w_kl * (ratio - 1.0)


def pb_neg_objective(mu, log_var, sentence, inputs, outputs, cfg: NegTrainConfig,
                     eps, negatives):
    """Surrogate objective value and analytic gradients for one sentence.

    value = (1/|S|) sum_w l_neg(h, i_w)            [mean over the eps draws]
          + (|S| / (2 sigma2_p lam)) ||mu - mean(o)||^2
          + (|S| d / (2 lam)) (ln(sigma2_p / var) + var / sigma2_p)

    with the reparameterized h = mu + sqrt(var) * eps. `eps` is one draw (d,)
    or a stack (mc, d); `negatives` holds k noise ids per sentence token.
    Returns (value, grad_mu, grad_log_var).
    """
    ids = np.asarray(sentence, dtype=np.intp)
    if ids.size == 0:
        raise ValueError("no in-vocabulary tokens")
    H_mat, P_mat = _role_tables(inputs, outputs, cfg.role)
    mu = np.asarray(mu, dtype=np.float64)
    s = float(log_var)
    eps = np.atleast_2d(np.asarray(eps, dtype=np.float64))
    negatives = np.asarray(negatives, dtype=np.intp).reshape(len(ids), -1)

    value, g_mu, g_s = _sentence_data_terms(mu, math.exp(0.5 * s), ids, H_mat, eps, negatives)
    pv, pg_mu, pg_s = _sentence_penalty_terms(mu, s, ids, P_mat, cfg)
    return float(value + pv), g_mu + pg_mu, float(g_s + pg_s)


def _pb_neg_step(mu, log_var, ids, H_mat, P_mat, cfg, noise, rng, lr,
                 freeze_var=False, input_grads=None):
    """One SGD step for one sentence; returns (mu, log_var, objective value)."""
    d = mu.shape[0]
    if freeze_var:
        eps = np.zeros((1, d))
    else:
        eps = rng.standard_normal((cfg.mc_samples, d))
    negatives = noise.sample(rng, (len(ids), cfg.k)).astype(np.intp)
    s = float(log_var)
    value, g_mu, g_s = _sentence_data_terms(mu, math.exp(0.5 * s), ids, H_mat,
                                            eps, negatives, input_grads=input_grads)
    pv, pg_mu, pg_s = _sentence_penalty_terms(mu, s, ids, P_mat, cfg)
    mu = mu - lr * (g_mu + pg_mu)
    if not freeze_var:
        log_var = s - lr * (g_s + pg_s)
    return mu, log_var, float(value + pv)


def train_pb_neg(dataset, inputs, outputs, cfg: NegTrainConfig, *,
                 noise: NoiseTable | None = None,
                 freeze_var: bool = False, train_inputs: bool = False,
                 epoch_values: list | None = None) -> PosteriorBank:
    """Train one posterior per sentence by SGD (minibatch = the sentence).

    Means start at U(-0.5/d, 0.5/d), log-variances at ln(sigma2_p); the
    learning rate decays linearly per epoch. Negatives come from the target
    sentences' unigram^power distribution unless `noise` is given.

    `freeze_var` (no sampling, h = mu) and `train_inputs` (hypothesis-side
    table updated in place) exist for the paragraph-vector reduction and are
    not part of the normal training surface.
    """
    sentences = _as_sentences(dataset)
    if not sentences:
        raise ValueError("empty dataset")
    H_mat, P_mat = _role_tables(inputs, outputs, cfg.role)
    d = H_mat.shape[1]
    if noise is None:
        noise = _noise_from_sentences(sentences, H_mat.shape[0], cfg.noise_power)

    rng = np.random.default_rng(cfg.seed)
    mu = rng.uniform(-0.5 / d, 0.5 / d, size=(len(sentences), d))
    log_var = np.full(len(sentences), math.log(cfg.sigma2_p))

    ids_list = [np.asarray(s, dtype=np.intp) for s in sentences]
    for epoch in range(cfg.epochs):
        lr = _epoch_lr(cfg, epoch)
        total = 0.0
        steps = 0
        for si, ids in enumerate(ids_list):
            if len(ids) == 0:
                continue
            input_grads = np.zeros_like(H_mat) if train_inputs else None
            mu[si], log_var[si], value = _pb_neg_step(
                mu[si], log_var[si], ids, H_mat, P_mat, cfg, noise, rng, lr,
                freeze_var=freeze_var, input_grads=input_grads)
            if train_inputs:
                H_mat -= lr * input_grads
            total += value
            steps += 1
        if epoch_values is not None:
            epoch_values.append(total / max(steps, 1))
    return PosteriorBank("sentence", mu, log_var)


def fit_sentence_posterior(sentence, inputs, outputs, cfg: NegTrainConfig,
                           noise: NoiseTable, rng=None) -> GaussianPosterior:
    """Fit a single sentence's posterior; used by the bound checker."""
    ids = np.asarray(sentence, dtype=np.intp)
    if ids.size == 0:
        raise ValueError("no in-vocabulary tokens")
    H_mat, P_mat = _role_tables(inputs, outputs, cfg.role)
    d = H_mat.shape[1]
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    mu = rng.uniform(-0.5 / d, 0.5 / d, size=d)
    log_var = math.log(cfg.sigma2_p)
    for epoch in range(cfg.epochs):
        lr = _epoch_lr(cfg, epoch)
        mu, log_var, _ = _pb_neg_step(mu, log_var, ids, H_mat, P_mat, cfg,
                                      noise, rng, lr)
    return GaussianPosterior(mu, math.exp(float(log_var)))


# ----------------------------------------------------------------------
# Per-word posteriors (shared across sentences)
# ----------------------------------------------------------------------

def _word_data_terms(mu, log_var, uq, weights, target, H_mat, eps, negatives):
    """l_neg(mean_v h_v, i_target) averaged over draws, with sparse grads.

    `uq` are the sentence's unique word ids, `weights` their occurrence
    fractions. Returns (value, grad over uq rows of mu, grad over uq of s).
    """
    sigma_uq = np.exp(0.5 * log_var[uq])
    i_pos = H_mat[int(target)]
    I_neg = H_mat[negatives]
    value = 0.0
    g_mu_uq = np.zeros((len(uq), mu.shape[1]))
    g_s_uq = np.zeros(len(uq))
    mc = len(eps)
    for e in eps:
        h_words = mu[uq] + sigma_uq[:, None] * e
        h_bar = weights @ h_words
        a_pos = float(h_bar @ i_pos)
        a_neg = I_neg @ h_bar
        value += _softplus(-a_pos) + _softplus(a_neg).sum()
        g_h = (_stable_sigmoid_scalar(a_pos) - 1.0) * i_pos + _sigmoid(a_neg) @ I_neg
        g_mu_uq += weights[:, None] * g_h[None, :]
        g_s_uq += weights * (e @ g_h) * sigma_uq * 0.5
    return value / mc, g_mu_uq / mc, g_s_uq / mc


def w_pb_neg_objective(mu, log_var, sentence, target_word, inputs,
                       cfg: NegTrainConfig, eps, negatives,
                       prior_means, prior_vars, active=None):
    """Objective for one (sentence, target word) sample.

    value = l_neg(mean_v h_v, i_target)           [mean over eps draws]
          + (1/(2 lam)) sum_{v active} [ ||mu_v - prior_v||^2 / pvar_v
                                         + d (ln(pvar_v / var_v) + var_v / pvar_v) ]

    with h_v = mu_v + sqrt(var_v) * eps_v over the sentence's unique words
    (repeats weighted by occurrence count). `eps` has shape (n_unique, d) or
    (mc, n_unique, d); `negatives` holds k noise ids. Returns dense
    (V, d) / (V,) gradients: the data term only touches the sentence's
    words, the regularizer every active word.
    """
    ids = np.asarray(sentence, dtype=np.intp)
    if ids.size == 0:
        raise ValueError("no in-vocabulary tokens")
    H_mat = _vectors(inputs)
    mu = np.asarray(mu, dtype=np.float64)
    log_var = np.asarray(log_var, dtype=np.float64)
    V, d = mu.shape
    uq, counts = np.unique(ids, return_counts=True)
    weights = counts / len(ids)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.ndim == 2:
        eps = eps[None, :, :]
    negatives = np.asarray(negatives, dtype=np.intp).ravel()

    value, g_mu_uq, g_s_uq = _word_data_terms(mu, log_var, uq, weights,
                                              target_word, H_mat, eps, negatives)
    grad_mu = np.zeros((V, d))
    grad_s = np.zeros(V)
    grad_mu[uq] = g_mu_uq
    grad_s[uq] = g_s_uq

    if not math.isinf(cfg.lam):
        act = np.ones(V, dtype=bool) if active is None else np.asarray(active, dtype=bool)
        pm = np.asarray(prior_means, dtype=np.float64)
        pv = np.asarray(prior_vars, dtype=np.float64)
        diff = mu[act] - pm[act]
        var = np.exp(log_var[act])
        inv_pv = 1.0 / pv[act]
        value += ((diff ** 2).sum(axis=1) * inv_pv).sum() / (2.0 * cfg.lam)
        value += d / (2.0 * cfg.lam) * (np.log(pv[act]) - log_var[act] + var * inv_pv).sum()
        grad_mu[act] += diff * inv_pv[:, None] / cfg.lam
        grad_s[act] += d / (2.0 * cfg.lam) * (var * inv_pv - 1.0)
    return float(value), grad_mu, grad_s


class _LazyRegularizer:
    """Deferred prior-pull updates for the shared word posteriors.

    Every step nominally shrinks all active words toward their priors; this
    class replays exactly those per-step updates for a word only when the
    word is next touched (and once more at the end of training). Means use
    the closed-form geometric composition; log-variances replay the scalar
    recursion step by step.
    """

    def __init__(self, mu, log_var, prior_means, prior_vars, active, lam, d,
                 lrs, steps_per_epoch):
        self.mu = mu
        self.log_var = log_var
        self.pm = prior_means
        self.pv = prior_vars
        self.active = active
        self.lam = lam
        self.d = d
        self.lrs = lrs                # per-epoch learning rates
        self.spe = steps_per_epoch
        self.last = np.zeros(len(mu), dtype=np.int64)

    def _segments(self, a: int, b: int):
        """Split pure-reg steps (a, b] into per-epoch runs of constant lr."""
        t = a + 1
        while t <= b:
            epoch = (t - 1) // self.spe
            end = min(b, (epoch + 1) * self.spe)
            yield self.lrs[epoch], end - t + 1
            t = end + 1

    def catch_up(self, words, now: int) -> None:
        """Replay reg-only steps in (last[w], now - 1] for each word."""
        if not math.isinf(self.lam):
            for w in words:
                w = int(w)
                a, b = int(self.last[w]), now - 1
                if b > a and self.active[w]:
                    self._replay(w, a, b)
        self.last[words] = now

    def flush(self, final_step: int) -> None:
        """Bring every active word up to the final step."""
        if math.isinf(self.lam):
            return
        for w in np.nonzero(self.active)[0]:
            a, b = int(self.last[w]), final_step
            if b > a:
                self._replay(int(w), a, b)
            self.last[w] = final_step

    def _replay(self, w: int, a: int, b: int) -> None:
        c_mu = 1.0 / (self.lam * self.pv[w])
        c_s = self.d / (2.0 * self.lam)
        inv_pv = 1.0 / self.pv[w]
        s = float(self.log_var[w])
        factor = 1.0
        for lr, m in self._segments(a, b):
            factor *= (1.0 - lr * c_mu) ** m
            step = lr * c_s
            for _ in range(m):
                s -= step * (math.exp(s) * inv_pv - 1.0)
        self.mu[w] = self.pm[w] + (self.mu[w] - self.pm[w]) * factor
        self.log_var[w] = s


def train_w_pb_neg(dataset, inputs, outputs, cfg: NegTrainConfig, *,
                   lazy: bool = True, noise: NoiseTable | None = None) -> PosteriorBank:
    """Train shared per-word posteriors over (sentence, word) pairs.

    Posteriors start at the prior: mu_w at the prior-side row, variance at
    the frequency prior total/freq(w) computed from the target sentences.
    Words absent from the target corpus stay at initialization and are
    excluded from the regularizer. `lazy=False` applies the full-vocabulary
    regularizer eagerly every step (reference path for tests); both modes
    consume identical random streams.
    """
    sentences = _as_sentences(dataset)
    if not sentences:
        raise ValueError("empty dataset")
    H_mat, P_mat = _role_tables(inputs, outputs, cfg.role)
    V, d = H_mat.shape

    counts = np.zeros(V, dtype=np.int64)
    for s in sentences:
        if len(s):
            counts += np.bincount(np.asarray(s, dtype=np.intp), minlength=V)
    if counts.sum() == 0:
        raise ValueError("empty dataset")
    pvars, active = _prior_vars_from_counts(counts)
    if noise is None:
        noise = NoiseTable.from_counts(counts, cfg.noise_power)

    prior_means = P_mat
    mu = P_mat.copy()
    log_var = np.where(active, np.log(pvars), 0.0)

    rng = np.random.default_rng(cfg.seed)
    steps_per_epoch = int(sum(len(s) for s in sentences))
    lrs = [_epoch_lr(cfg, e) for e in range(cfg.epochs)]
    lazy_reg = _LazyRegularizer(mu, log_var, prior_means, pvars, active,
                                cfg.lam, d, lrs, steps_per_epoch) if lazy else None
    finite_lam = not math.isinf(cfg.lam)

    ids_list = [np.asarray(s, dtype=np.intp) for s in sentences]
    t = 0
    for epoch in range(cfg.epochs):
        lr = lrs[epoch]
        order = rng.permutation(len(ids_list))
        for si in order:
            ids = ids_list[si]
            if len(ids) == 0:
                continue
            uq, counts_uq = np.unique(ids, return_counts=True)
            weights = counts_uq / len(ids)
            for target in ids:
                t += 1
                eps = rng.standard_normal((cfg.mc_samples, len(uq), d))
                negatives = noise.sample(rng, cfg.k).astype(np.intp)
                if lazy_reg is not None:
                    lazy_reg.catch_up(uq, t)
                _, g_mu_uq, g_s_uq = _word_data_terms(mu, log_var, uq, weights,
                                                      target, H_mat, eps, negatives)
                if lazy_reg is not None:
                    if finite_lam:
                        g_mu_uq = g_mu_uq + (mu[uq] - prior_means[uq]) / (cfg.lam * pvars[uq])[:, None]
                        g_s_uq = g_s_uq + d / (2.0 * cfg.lam) * (np.exp(log_var[uq]) / pvars[uq] - 1.0)
                    mu[uq] -= lr * g_mu_uq
                    log_var[uq] -= lr * g_s_uq
                else:
                    grad_mu = np.zeros((V, d))
                    grad_s = np.zeros(V)
                    grad_mu[uq] = g_mu_uq
                    grad_s[uq] = g_s_uq
                    if finite_lam:
                        grad_mu[active] += (mu[active] - prior_means[active]) / (cfg.lam * pvars[active])[:, None]
                        grad_s[active] += d / (2.0 * cfg.lam) * (np.exp(log_var[active]) / pvars[active] - 1.0)
                    mu -= lr * grad_mu
                    log_var -= lr * grad_s
    if lazy_reg is not None:
        lazy_reg.flush(t)
    return PosteriorBank("word", mu, log_var)


def compose_sentence_vector(bank: PosteriorBank, sentence) -> np.ndarray:
    """Sentence vector as the mean posterior mean over the bag of tokens."""
    if bank.kind != "word":
        raise ValueError("compose_sentence_vector needs a word bank")
    ids = np.asarray(sentence, dtype=np.intp)
    if ids.size == 0:
        raise ValueError("no in-vocabulary tokens")
    return bank.mu[ids].sum(axis=0) / len(ids)
