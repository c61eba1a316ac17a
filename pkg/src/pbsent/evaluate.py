"""Downstream sentence-classification harness.

One-vs-rest L2-regularized logistic regression trained from scratch by
deterministic full-batch gradient descent with backtracking line search,
plus stratified cross-validated grid search over (C, normalization,
lambda-variant). Everything is seed-stable: equal inputs and seeds give
identical reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import _sigmoid, _softplus


@dataclass
class EvalConfig:
    c_grid: tuple = (0.0625, 0.25, 1.0, 4.0, 16.0)
    folds: int = 5
    normalize: str = "grid-both"  # none | l2 | grid-both
    repeats: int = 3
    seed: int = 1
    tol: float = 1e-6
    max_iter: int = 1000

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")
        if not self.c_grid:
            raise ValueError("c_grid must be non-empty")
        if any(c <= 0 for c in self.c_grid):
            raise ValueError("all C values must be > 0")
        if self.normalize not in ("none", "l2", "grid-both"):
            raise ValueError(f"unknown normalization {self.normalize!r}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


@dataclass
class EvalReport:
    method: str
    chosen_c: float
    chosen_normalization: str
    chosen_lambda: float | None
    test_accuracy_mean: float
    test_accuracy_std: float
    cv_table: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "chosen_c": self.chosen_c,
            "chosen_normalization": self.chosen_normalization,
            "chosen_lambda": self.chosen_lambda,
            "test_accuracy_mean": self.test_accuracy_mean,
            "test_accuracy_std": self.test_accuracy_std,
            "cv_table": self.cv_table,
        }


def l2_normalize(vectors: np.ndarray) -> np.ndarray:
    """Scale each nonzero row to unit Euclidean norm; zero rows pass through."""
    vectors = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return vectors / safe


class LogisticOvR:
    """One-vs-rest logistic regression with an unregularized bias.

    Per class c the objective is

        (1/C) * 0.5 ||w||^2 + sum_i log(1 + exp(-y_i (w.x_i + b)))

    minimized by full-batch gradient descent with Armijo backtracking, run
    until the gradient norm drops below tol or max_iter steps. Prediction is
    the argmax class score with ties broken toward the smallest class id.
    """

    def __init__(self, classes, weights, biases):
        self.classes_ = classes
        self.weights = weights  # (n_classes, dim)
        self.biases = biases    # (n_classes,)

    def decision_function(self, X):
        return np.asarray(X, dtype=np.float64) @ self.weights.T + self.biases

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]

    def score(self, X, y):
        return float((self.predict(X) == np.asarray(y)).mean())


def fit_logreg_ovr(features, labels, C: float, cfg: EvalConfig) -> LogisticOvR:
    """Fit one binary classifier per class (all deterministic, zero init)."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain non-finite values")
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError(f"need at least 2 classes, got {len(classes)}")
    weights = np.zeros((len(classes), X.shape[1]))
    biases = np.zeros(len(classes))
    for idx, cls in enumerate(classes):
        target = np.where(y == cls, 1.0, -1.0)
        weights[idx], biases[idx] = _fit_binary(X, target, C, cfg)
    return LogisticOvR(classes, weights, biases)


def _fit_binary(X, y, C, cfg):
    n, d = X.shape
    theta = np.zeros(d + 1)  # [w, b]

    def value_and_grad(th):
        w, b = th[:d], th[d]
        z = X @ w + b
        margins = y * z
        val = 0.5 * (w @ w) / C + _softplus(-margins).sum()
        # d softplus(-m)/dz = -y * sigmoid(-m)
        coef = -y * _sigmoid(-margins)
        grad = np.empty(d + 1)
        grad[:d] = w / C + X.T @ coef
        grad[d] = coef.sum()
        return val, grad

    val, grad = value_and_grad(theta)
    step = 1.0
    for _ in range(cfg.max_iter):
        gnorm2 = grad @ grad
        if np.sqrt(gnorm2) < cfg.tol:
            break
        step = min(step * 2.0, 1e8)
        for _ in range(60):
            cand = theta - step * grad
            cand_val, cand_grad = value_and_grad(cand)
            if cand_val <= val - 1e-4 * step * gnorm2:
                break
            step *= 0.5
        else:
            break  # no acceptable step: numerically converged
        theta, val, grad = cand, cand_val, cand_grad
    return theta[:d], theta[d]


def stratified_folds(labels, folds: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Disjoint covering folds whose per-class sizes differ by at most one."""
    y = np.asarray(labels)
    assignments = np.empty(len(y), dtype=np.int64)
    for cls in np.unique(y):
        idx = np.nonzero(y == cls)[0]
        if len(idx) < folds:
            raise ValueError(f"class {cls} has {len(idx)} members, fewer than {folds} folds")
        idx = idx[rng.permutation(len(idx))]
        assignments[idx] = np.arange(len(idx)) % folds
    return [np.nonzero(assignments == f)[0] for f in range(folds)]


def _apply_normalization(name, train, test):
    if name == "l2":
        return l2_normalize(train), l2_normalize(test)
    return np.asarray(train, dtype=np.float64), np.asarray(test, dtype=np.float64)


def grid_search_eval(train_features, train_labels, test_features, test_labels,
                     cfg: EvalConfig, lambda_variants=None,
                     method: str = "features") -> EvalReport:
    """Select (C, normalization, lambda-variant) by stratified CV, refit, test.

    `lambda_variants` is an optional list of (lambda_value, train_features,
    test_features) triples; when omitted the given feature matrices form the
    single variant. Ties in mean CV accuracy go to the smaller C, then
    normalization "none", then the smaller lambda. The whole selection is
    rerun per repeat with fold seed = seed + repeat; the report carries the
    first repeat's choice and the mean/std of the per-repeat test accuracies.
    """
    train_labels = np.asarray(train_labels)
    test_labels = np.asarray(test_labels)
    if lambda_variants is None:
        lambda_variants = [(None, train_features, test_features)]
    variants = [(lam, np.asarray(tr, dtype=np.float64), np.asarray(te, dtype=np.float64))
                for lam, tr, te in lambda_variants]
    for lam, tr, te in variants:
        if len(tr) != len(train_labels):
            raise ValueError(f"variant {lam}: {len(tr)} rows vs {len(train_labels)} labels")
        if len(te) != len(test_labels):
            raise ValueError(f"variant {lam}: {len(te)} test rows vs {len(test_labels)} labels")
    norms = {"none": ["none"], "l2": ["l2"], "grid-both": ["none", "l2"]}[cfg.normalize]

    accuracies = []
    chosen = None
    cv_table = []
    for repeat in range(cfg.repeats):
        rng = np.random.default_rng(cfg.seed + repeat)
        folds = stratified_folds(train_labels, cfg.folds, rng)
        best = None
        table = []
        for v_idx, (lam, tr, te) in enumerate(variants):
            for norm in norms:
                for C in cfg.c_grid:
                    score = _cv_accuracy(tr, train_labels, folds, norm, C, cfg)
                    table.append({"lambda": lam, "normalization": norm,
                                  "c": C, "cv_accuracy": score})
                    # ties: smaller C, then "none", then smaller lambda
                    # (variant order); exact duplicates keep the first seen
                    key = (score, -C, 0 if norm == "none" else -1, -v_idx)
                    if best is None or key > best[0]:
                        best = (key, (lam, norm, C, v_idx))
        lam, norm, C, v_idx = best[1]
        tr, te = _apply_normalization(norm, variants[v_idx][1], variants[v_idx][2])
        model = fit_logreg_ovr(tr, train_labels, C, cfg)
        accuracies.append(model.score(te, test_labels))
        if repeat == 0:
            chosen = (lam, norm, C)
            cv_table = table
    accuracies = np.asarray(accuracies)
    return EvalReport(
        method=method,
        chosen_c=chosen[2],
        chosen_normalization=chosen[1],
        chosen_lambda=chosen[0],
        test_accuracy_mean=float(accuracies.mean()),
        test_accuracy_std=float(accuracies.std()),
        cv_table=cv_table,
    )


def _cv_accuracy(features, labels, folds, norm, C, cfg):
    scores = []
    for f, held_out in enumerate(folds):
        train_idx = np.concatenate([folds[g] for g in range(len(folds)) if g != f])
        tr, te = _apply_normalization(norm, features[train_idx], features[held_out])
        model = fit_logreg_ovr(tr, labels[train_idx], C, cfg)
        scores.append((model.predict(te) == labels[held_out]).mean())
    return float(np.mean(scores))
