"""PAC-Bayes machinery.

Gaussian and product-of-experts KL terms, the exponential-form risk bound,
a Dirichlet-unigram generative model for synthetic verification, and the
Monte-Carlo bound checker. All operations are pure given an rng; trials can
run in parallel with independent streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .closed_form import GaussianPosterior, Role, _vectors
from .corpus import NoiseTable


def gaussian_kl(q: GaussianPosterior, p_mean, p_var: float) -> float:
    """KL(N(mu_q, var_q I) || N(p_mean, p_var I)) for isotropic Gaussians."""
    p_mean = np.asarray(p_mean, dtype=np.float64)
    if q.mu.shape != p_mean.shape:
        raise ValueError(f"dimension mismatch: {q.mu.shape} vs {p_mean.shape}")
    if not p_var > 0:
        raise ValueError(f"prior variance must be > 0, got {p_var}")
    d = q.dim
    quad = ((q.mu - p_mean) ** 2).sum() / (2.0 * p_var)
    return float(quad + 0.5 * d * (math.log(p_var / q.var) - 1.0 + q.var / p_var))


@dataclass
class PoEPrior:
    """Product of isotropic Gaussian experts, one per sentence token."""

    means: np.ndarray  # (m, d)
    vars: np.ndarray   # (m,)

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.vars = np.atleast_1d(np.asarray(self.vars, dtype=np.float64))
        if len(self.means) != len(self.vars) or len(self.means) < 1:
            raise ValueError("need one positive variance per expert mean")
        if not np.all(self.vars > 0):
            raise ValueError("all expert variances must be > 0")

    def __len__(self) -> int:
        return len(self.means)

    @classmethod
    def from_sentence(cls, sentence, matrix, var, role: Role = Role.STANDARD) -> "PoEPrior":
        """Experts centered at the sentence tokens' rows of one table.

        `var` is either a scalar (uniform) or a per-vocabulary-id array.
        """
        ids = np.asarray(sentence, dtype=np.intp)
        if ids.size == 0:
            raise ValueError("no in-vocabulary tokens")
        means = _vectors(matrix)[ids]
        var = np.asarray(var, dtype=np.float64)
        vars_ = np.full(len(ids), float(var)) if var.ndim == 0 else var[ids]
        return cls(means, vars_)

    def normalized_moments(self) -> tuple[np.ndarray, float]:
        """Mean and variance of the normalized product density.

        A product of isotropic Gaussians is itself an isotropic Gaussian with
        precision equal to the summed expert precisions.
        """
        inv = 1.0 / self.vars
        var = 1.0 / inv.sum()
        mean = var * (inv[:, None] * self.means).sum(axis=0)
        return mean, float(var)


def kl_to_poe_upto_const(q: GaussianPosterior, prior: PoEPrior) -> float:
    """Sum of per-expert KLs: the posterior-dependent part kept by the
    training objective.

    Differs from the exact KL to the normalized product by terms that do not
    depend on the posterior mean (and, at fixed posterior variance, by a
    constant).
    """
    if len(prior) < 1:
        raise ValueError("empty prior")
    return float(sum(gaussian_kl(q, m, float(v)) for m, v in zip(prior.means, prior.vars)))


def kl_to_poe_exact(q: GaussianPosterior, prior: PoEPrior) -> float:
    """Exact KL(q || normalized PoE) via the product's closed-form moments."""
    mean, var = prior.normalized_moments()
    return gaussian_kl(q, mean, var)


def catoni_bound(emp_risk: float, kl: float, lam: float, n: int, delta: float,
                 ell_max: float = 1.0) -> float:
    """Exponential-form PAC-Bayes risk bound.

        (1 - exp(-(lam/n) emp_risk - (kl - ln delta)/n)) / (1 - exp(-lam/n))

    emp_risk must already be rescaled to [0, 1] (divide by ell_max when the
    loss is not [0, 1]-bounded); the returned bound is in the same rescaled
    units.
    """
    if not 0.0 <= emp_risk <= 1.0:
        raise ValueError(f"emp_risk must be in [0, 1] after rescaling, got {emp_risk}")
    if kl < 0:
        raise ValueError(f"kl must be >= 0, got {kl}")
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must be in (0, 1], got {delta}")
    if not ell_max > 0:
        raise ValueError(f"ell_max must be > 0, got {ell_max}")
    numer = -math.expm1(-(lam / n) * emp_risk - (kl - math.log(delta)) / n)
    denom = -math.expm1(-lam / n)
    return numer / denom


@dataclass
class BoundReport:
    """A bound evaluation with all of its ingredients."""

    emp_risk: float
    kl: float
    lam: float
    n: int
    delta: float
    bound: float
    ell_max: float = 1.0

    @classmethod
    def compute(cls, emp_risk, kl, lam, n, delta, ell_max=1.0) -> "BoundReport":
        bound = catoni_bound(emp_risk, kl, lam, n, delta, ell_max)
        return cls(emp_risk, kl, lam, n, delta, bound, ell_max)


# ----------------------------------------------------------------------
# Generative model: Dirichlet unigram positives vs noise negatives
# ----------------------------------------------------------------------

@dataclass
class GenerativeModelSpec:
    """Dirichlet-unigram generative model with a noise distribution."""

    gamma: np.ndarray      # Dirichlet concentration, length V
    pi: float              # positive-label probability of the test draw
    noise: NoiseTable
    k: int                 # negatives per sentence word

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        if not np.all(self.gamma > 0):
            raise ValueError("all Dirichlet concentrations must be > 0")
        if not 0.0 < self.pi < 1.0:
            raise ValueError(f"pi must be in (0, 1), got {self.pi}")
        if len(self.noise) != len(self.gamma):
            raise ValueError("noise table and gamma disagree on vocabulary size")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    @property
    def vocab_size(self) -> int:
        return len(self.gamma)


@dataclass
class GenerativeSample:
    """One sampled training set: word ids with +/-1 labels, plus the latent
    unigram parameter that generated the positives."""

    phi: np.ndarray
    words: np.ndarray
    labels: np.ndarray

    @property
    def n(self) -> int:
        return len(self.words)

    @property
    def sentence(self) -> np.ndarray:
        return self.words[self.labels == 1]


def sample_generative_dataset(spec: GenerativeModelSpec, sentence_len: int,
                              rng: np.random.Generator) -> GenerativeSample:
    """Draw phi, a sentence of positives, and k*len noise negatives."""
    if sentence_len < 1:
        raise ValueError("sentence_len must be >= 1")
    phi = rng.dirichlet(spec.gamma)
    positives = rng.choice(spec.vocab_size, size=sentence_len, p=phi)
    negatives = spec.noise.sample(rng, spec.k * sentence_len)
    words = np.concatenate([positives, negatives]).astype(np.int64)
    labels = np.concatenate([np.ones(sentence_len, dtype=np.int64),
                             -np.ones(spec.k * sentence_len, dtype=np.int64)])
    return GenerativeSample(phi, words, labels)


def sample_test_points(spec: GenerativeModelSpec, phi: np.ndarray, n: int,
                       rng: np.random.Generator):
    """Test draws: y ~ Bernoulli(pi) on {-1,1}; w from phi if y=1 else noise."""
    labels = np.where(rng.random(n) < spec.pi, 1, -1).astype(np.int64)
    words = np.empty(n, dtype=np.int64)
    pos = labels == 1
    words[pos] = rng.choice(spec.vocab_size, size=int(pos.sum()), p=phi)
    words[~pos] = spec.noise.sample(rng, int((~pos).sum()))
    return words, labels


# ----------------------------------------------------------------------
# Risk: sign[h . i_w] with h ~ Q, zero-one loss, sign(0) := +1
# ----------------------------------------------------------------------

def sign_error_probabilities(posterior: GaussianPosterior, inputs, words) -> np.ndarray:
    """P(sign(h . i_w) = -1) per word under h ~ Q, in closed form.

    h . i_w is Gaussian with mean mu . i_w and std sqrt(var) ||i_w||; a word
    with a zero input row always scores 0 and is classified +1.
    """
    X = _vectors(inputs)[np.asarray(words, dtype=np.intp)]
    m = X @ posterior.mu
    s = math.sqrt(posterior.var) * np.linalg.norm(X, axis=1)
    p = np.zeros(len(m))
    nz = s > 0
    p[nz] = ndtr(-m[nz] / s[nz])
    return p


def estimate_risk(posterior: GaussianPosterior, inputs, words, labels,
                  mc_samples: int, rng: np.random.Generator) -> float:
    """Monte-Carlo mean zero-one loss of sign[h . i_w] over h ~ Q.

    Draws are processed in blocks so mc_samples * len(words) can be large
    without materializing the full score matrix.
    """
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    words = np.asarray(words, dtype=np.intp)
    labels = np.asarray(labels)
    if len(words) == 0:
        raise ValueError("empty data")
    X = _vectors(inputs)[words]
    block = max(1, int(2e7) // len(words))
    sigma = math.sqrt(posterior.var)
    wrong = 0
    for start in range(0, mc_samples, block):
        m = min(block, mc_samples - start)
        H = posterior.mu + sigma * rng.standard_normal((m, posterior.dim))
        preds = np.where(H @ X.T >= 0, 1, -1)
        wrong += int((preds != labels[None, :]).sum())
    return wrong / (mc_samples * len(words))


def emp_risk_exact(posterior: GaussianPosterior, inputs, words, labels) -> float:
    """Exact expected zero-one loss over the posterior on a finite dataset."""
    if len(words) == 0:
        raise ValueError("empty data")
    p_neg = sign_error_probabilities(posterior, inputs, words)
    labels = np.asarray(labels)
    per_point = np.where(labels == 1, p_neg, 1.0 - p_neg)
    return float(per_point.mean())


def true_risk_exact(posterior: GaussianPosterior, inputs, phi, noise_probs,
                    pi: float) -> float:
    """Exact generalization risk by enumerating the finite word domain."""
    all_words = np.arange(len(phi))
    p_neg = sign_error_probabilities(posterior, inputs, all_words)
    pos_term = (np.asarray(phi) * p_neg).sum()
    neg_term = (np.asarray(noise_probs) * (1.0 - p_neg)).sum()
    return float(pi * pos_term + (1.0 - pi) * neg_term)


# ----------------------------------------------------------------------
# Bound verification on the generative model
# ----------------------------------------------------------------------

@dataclass
class BoundCheckReport:
    trials: int
    delta: float
    lam: float
    violation_rate: float
    mean_bound: float
    mean_true_risk: float
    mean_emp_risk: float

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "delta": self.delta,
            "lambda": self.lam,
            "violation_rate": self.violation_rate,
            "mean_bound": self.mean_bound,
            "mean_true_risk": self.mean_true_risk,
            "mean_emp_risk": self.mean_emp_risk,
        }


def verify_bound(spec: GenerativeModelSpec, trials: int, delta: float,
                 lam: float | None = None, posterior_fit: str = "prior-mean",
                 rng: np.random.Generator | None = None, *,
                 inputs=None, outputs=None, dim: int = 4,
                 sentence_len: int = 10, sigma2_p: float = 1.0,
                 fit_epochs: int = 20, fit_lr0: float = 0.05) -> BoundCheckReport:
    """Empirically check the risk bound over repeated synthetic datasets.

    Per trial: sample a dataset, choose a posterior (`prior-mean` centers it
    on the product prior's expert average with variance sigma2_p; `pb-neg`
    fits it by SGD on the surrogate objective), then compare the bound built
    from the exact empirical risk and the exact KL to the normalized product
    prior against the exact true risk. Returns the fraction of trials whose
    true risk exceeded the bound.

    Word vectors default to fixed Gaussian rows drawn once before the trials.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    V = spec.vocab_size
    if inputs is None:
        inputs = rng.standard_normal((V, dim)) / math.sqrt(dim)
    if outputs is None:
        outputs = rng.standard_normal((V, dim)) / math.sqrt(dim)
    inputs = _vectors(inputs)
    outputs = _vectors(outputs)

    n = (1 + spec.k) * sentence_len
    lam_value = float(n) if lam is None else float(lam)

    violations = 0
    bounds = np.empty(trials)
    true_risks = np.empty(trials)
    emp_risks = np.empty(trials)
    for t in range(trials):
        sample = sample_generative_dataset(spec, sentence_len, rng)
        prior = PoEPrior.from_sentence(sample.sentence, outputs, sigma2_p)
        posterior = _fit_posterior(posterior_fit, sample, prior, inputs, outputs,
                                   spec, lam_value, sigma2_p, fit_epochs, fit_lr0, rng)
        emp = emp_risk_exact(posterior, inputs, sample.words, sample.labels)
        kl = kl_to_poe_exact(posterior, prior)
        bound = catoni_bound(emp, kl, lam_value, sample.n, delta)
        true = true_risk_exact(posterior, inputs, sample.phi, spec.noise.probs, spec.pi)
        bounds[t] = bound
        true_risks[t] = true
        emp_risks[t] = emp
        violations += true > bound
    return BoundCheckReport(
        trials=trials, delta=delta, lam=lam_value,
        violation_rate=violations / trials,
        mean_bound=float(bounds.mean()),
        mean_true_risk=float(true_risks.mean()),
        mean_emp_risk=float(emp_risks.mean()),
    )


def _fit_posterior(strategy, sample, prior, inputs, outputs, spec, lam_value,
                   sigma2_p, fit_epochs, fit_lr0, rng):
    if strategy == "prior-mean":
        return GaussianPosterior(prior.means.mean(axis=0), sigma2_p)
    if strategy == "pb-neg":
        from .neg_trainer import NegTrainConfig, fit_sentence_posterior

        cfg = NegTrainConfig(lam=lam_value, sigma2_p=sigma2_p, k=spec.k,
                             epochs=fit_epochs, lr0=fit_lr0,
                             seed=int(rng.integers(2**31)))
        return fit_sentence_posterior(sample.sentence, inputs, outputs, cfg,
                                      spec.noise, rng)
    raise ValueError(f"unknown posterior_fit strategy {strategy!r}")
