"""Closed-form sentence-vector estimators.

Every estimator treats a sentence as a bag of in-vocabulary token ids
(duplicates count once per occurrence, OOV already dropped by the encoder)
and is a pure function of immutable inputs, so calls are thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class Role(str, Enum):
    """Which embedding table plays the hypothesis side vs the prior side.

    SWITCHED swaps the input and output tables everywhere, producing the
    `i-` variant of each estimator.
    """

    STANDARD = "standard"
    SWITCHED = "switched"


@dataclass
class GaussianPosterior:
    """Isotropic Gaussian posterior over sentence vectors: N(mu, var * I)."""

    mu: np.ndarray
    var: float

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        if not np.all(np.isfinite(self.mu)):
            raise ValueError("posterior mean has non-finite entries")
        if not self.var > 0:
            raise ValueError(f"posterior variance must be > 0, got {self.var}")

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


def _vectors(mat) -> np.ndarray:
    return mat.vectors if hasattr(mat, "vectors") else np.asarray(mat, dtype=np.float64)


def _gather(sentence, inputs, outputs, role: Role):
    """Sentence rows from both tables, swapped under the switched role."""
    iv, ov = _vectors(inputs), _vectors(outputs)
    if iv.shape != ov.shape:
        raise ValueError(f"input/output tables disagree: {iv.shape} vs {ov.shape}")
    if role == Role.SWITCHED:
        iv, ov = ov, iv
    ids = np.asarray(sentence, dtype=np.intp)
    if ids.size == 0:
        raise ValueError("no in-vocabulary tokens")
    return ids, iv[ids], ov[ids]


def average(sentence, matrix) -> np.ndarray:
    """Plain token mean of one embedding table."""
    ids = np.asarray(sentence, dtype=np.intp)
    if ids.size == 0:
        raise ValueError("no in-vocabulary tokens")
    rows = _vectors(matrix)[ids]
    return rows.sum(axis=0) / len(ids)


def pb_l2_posterior(sentence, inputs, outputs, lam: float, sigma2_p: float = 1.0,
                    role: Role = Role.STANDARD) -> GaussianPosterior:
    """Posterior minimizing the squared-L2 objective with a product prior.

    With a = |S| / (sigma2_p * lam):

        mu  = (1 / ((1 + a) |S|)) * sum_w (i_w + a * o_w)
        var = sigma2_p

    lam = inf encodes a = 0, the plain input average.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    if not sigma2_p > 0:
        raise ValueError(f"prior variance must be > 0, got {sigma2_p}")
    ids, I, O = _gather(sentence, inputs, outputs, role)
    n = len(ids)
    alpha = 0.0 if math.isinf(lam) else n / (sigma2_p * lam)
    mu = (I + alpha * O).sum(axis=0) / ((1.0 + alpha) * n)
    return GaussianPosterior(mu, sigma2_p)


def average_both(sentence, inputs, outputs) -> np.ndarray:
    """Mean of (i_w + o_w) / 2 over the sentence.

    Coincides with pb_l2_posterior at a = 1 (same floating arithmetic).
    """
    ids, I, O = _gather(sentence, inputs, outputs, Role.STANDARD)
    return (I + O).sum(axis=0) / (2.0 * len(ids))


def pb_idf_l2_posterior(sentence, inputs, outputs, inv_lambda: float, idf: dict,
                        role: Role = Role.STANDARD) -> GaussianPosterior:
    """IDF-weighted closed form with per-word prior variances 1/IDF(w).

        mu  = sum_w IDF(w) (i_w + (1/lam) o_w) / ((1 + 1/lam) sum_w IDF(w))
        var = |S| / sum_w IDF(w)

    inv_lambda = 0 encodes lam = inf, the IDF-weighted input average. Every
    occurrence of a repeated token contributes separately.
    """
    if inv_lambda < 0:
        raise ValueError(f"1/lambda must be >= 0, got {inv_lambda}")
    ids, I, O = _gather(sentence, inputs, outputs, role)
    try:
        weights = np.array([idf[int(w)] for w in ids], dtype=np.float64)
    except KeyError as exc:
        raise ValueError(f"missing IDF for word id {exc.args[0]}: word unseen in sentence collection") from None
    wsum = weights.sum()
    mu = (weights[:, None] * (I + inv_lambda * O)).sum(axis=0) / ((1.0 + inv_lambda) * wsum)
    var = len(ids) / wsum
    return GaussianPosterior(mu, var)
