"""Mean-embedding baselines: logistic regression, linear SVM and GBDT.

Each estimator follows the scikit-learn contract (``fit``/``decision_function``
/``predict``, ``get_params``) so it can sit behind :class:`MeanEmbedding` in a
:class:`sklearn.pipeline.Pipeline`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.pipeline import make_pipeline
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from dialogic.corpus import LabeledSentence
from dialogic.embeddings import featurize_mean
from dialogic.errors import DegenerateLabels


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _check_binary(y):
    y = np.asarray(y)
    if not (np.any(y == 1) and np.any(y == 0)) or np.any((y != 0) & (y != 1)):
        raise DegenerateLabels("labels must be 0/1 with both classes present")
    return y.astype(np.float64)


class MeanEmbedding(TransformerMixin, BaseEstimator):
    """Map sentences to the mean of their word vectors."""

    def __init__(self, table=None):
        self.table = table

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        texts = [x.text if isinstance(x, LabeledSentence) else x for x in X]
        return np.array([featurize_mean(t, self.table) for t in texts]).reshape(
            len(texts), self.table.dim
        )


class LogisticRegressionGD(ClassifierMixin, BaseEstimator):
    """L2-penalized logistic regression fitted by full-batch gradient descent.

    The intercept is not penalized.
    """

    def __init__(self, l2=1e-3, epochs=500, lr=0.5, seed=0):
        self.l2 = l2
        self.epochs = epochs
        self.lr = lr
        self.seed = seed

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        y = _check_binary(y)
        n, d = X.shape
        rng = np.random.default_rng(self.seed)
        w = rng.normal(scale=1e-3, size=d)
        b = 0.0
        self.loss_curve_ = []
        for _ in range(self.epochs):
            z = X @ w + b
            p = _sigmoid(z)
            loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * self.l2 * (w @ w)
            self.loss_curve_.append(float(loss))
            r = (p - y) / n
            w -= self.lr * (X.T @ r + self.l2 * w)
            b -= self.lr * r.sum()
        self.coef_, self.intercept_ = w, b
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return check_array(X) @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        p = _sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)


class LinearSVM(ClassifierMixin, BaseEstimator):
    """Linear SVM: ``0.5 |w|^2 + c * mean(hinge)`` by subgradient descent.

    The step size decays as ``lr / sqrt(1 + t)``. Scores are raw margins.
    """

    def __init__(self, c=1.0, epochs=500, lr=0.5, seed=0):
        self.c = c
        self.epochs = epochs
        self.lr = lr
        self.seed = seed

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        y = _check_binary(y)
        if self.c < 0:
            raise ValueError("c must be non-negative")
        s = 2.0 * y - 1.0
        n, d = X.shape
        rng = np.random.default_rng(self.seed)
        w = rng.normal(scale=1e-3, size=d)
        b = 0.0
        self.weight_norms_ = []
        for t in range(self.epochs):
            eta = self.lr / np.sqrt(1.0 + t)
            margin = s * (X @ w + b)
            active = margin < 1.0
            gw = w - self.c * (X[active].T @ s[active]) / n
            gb = -self.c * s[active].sum() / n
            w = w - eta * gw
            b = b - eta * gb
            self.weight_norms_.append(float(np.linalg.norm(w)))
        self.coef_, self.intercept_ = w, b
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return check_array(X) @ self.coef_ + self.intercept_

    def hinge_loss(self, X, y):
        s = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
        return float(np.mean(np.maximum(0.0, 1.0 - s * self.decision_function(X))))

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)


@dataclass
class _Node:
    value: float = 0.0
    feature: int = -1
    threshold: float = 0.0
    left: "_Node" = None
    right: "_Node" = None

    @property
    def is_leaf(self):
        return self.left is None


def _best_split(X, residual, idx, sorted_cols):
    """Exact greedy least-squares split over the samples in ``idx``.

    Candidate thresholds are midpoints between consecutive unique values.
    Features are scanned in index order and thresholds ascending; only a
    strictly larger gain replaces the incumbent, so ties resolve to the lowest
    feature index and then the lowest threshold.
    """
    member = np.zeros(X.shape[0], dtype=bool)
    member[idx] = True
    n = idx.size
    total = residual[idx].sum()
    parent = total * total / n
    best = (0.0, -1, 0.0)
    for j, col_order in enumerate(sorted_cols):
        order = col_order[member[col_order]]
        xs = X[order, j]
        change = np.flatnonzero(xs[1:] != xs[:-1])
        if change.size == 0:
            continue
        csum = np.cumsum(residual[order])
        n_left = change + 1
        s_left = csum[change]
        s_right = total - s_left
        gain = s_left**2 / n_left + s_right**2 / (n - n_left) - parent
        k = int(np.argmax(gain))
        if gain[k] > best[0] + 1e-12:
            best = (float(gain[k]), j, float((xs[change[k]] + xs[change[k] + 1]) / 2.0))
    return best


class GradientBoostedTrees(ClassifierMixin, BaseEstimator):
    """Gradient boosting on logistic loss with Newton-step leaf values.

    Each stage fits a depth-limited regression tree to ``y - p`` by exact
    greedy least squares; a leaf outputs ``sum(y - p) / sum(p (1 - p))`` and
    is added with weight ``shrinkage``. Fitting draws no randomness; ``seed``
    is kept for a uniform constructor across model families.
    """

    def __init__(self, n_trees=100, max_depth=3, shrinkage=0.1, min_samples_leaf=1, seed=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.shrinkage = shrinkage
        self.min_samples_leaf = min_samples_leaf
        self.seed = seed

    def fit(self, X, y):
        if self.n_trees < 1 or self.max_depth < 1:
            raise ValueError("n_trees and max_depth must be >= 1")
        X, y = check_X_y(X, y)
        y = _check_binary(y)
        base = float(np.log(y.mean() / (1.0 - y.mean())))
        f = np.full(y.size, base)
        sorted_cols = [np.argsort(X[:, j], kind="stable") for j in range(X.shape[1])]
        self.base_score_ = base
        self.trees_ = []
        self.train_loss_ = [float(np.mean(np.logaddexp(0.0, f) - y * f))]
        for _ in range(self.n_trees):
            p = _sigmoid(f)
            residual = y - p
            hess = p * (1.0 - p)
            tree = self._grow(X, residual, hess, np.arange(y.size), 0, sorted_cols)
            self.trees_.append(tree)
            f = f + self.shrinkage * self._apply(tree, X)
            self.train_loss_.append(float(np.mean(np.logaddexp(0.0, f) - y * f)))
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def _grow(self, X, residual, hess, idx, depth, sorted_cols):
        h = hess[idx].sum()
        value = float(residual[idx].sum() / max(h, 1e-12))
        node = _Node(value)
        if depth >= self.max_depth or idx.size < 2 * self.min_samples_leaf:
            return node
        gain, feature, threshold = _best_split(X, residual, idx, sorted_cols)
        if feature < 0:
            return node
        go_left = X[idx, feature] <= threshold
        left, right = idx[go_left], idx[~go_left]
        if min(left.size, right.size) < self.min_samples_leaf:
            return node
        node.feature, node.threshold = feature, threshold
        node.left = self._grow(X, residual, hess, left, depth + 1, sorted_cols)
        node.right = self._grow(X, residual, hess, right, depth + 1, sorted_cols)
        return node

    @staticmethod
    def _apply(node, X):
        out = np.empty(X.shape[0])
        stack = [(node, np.arange(X.shape[0]))]
        while stack:
            nd, rows = stack.pop()
            if nd.is_leaf:
                out[rows] = nd.value
                continue
            left = X[rows, nd.feature] <= nd.threshold
            stack.append((nd.left, rows[left]))
            stack.append((nd.right, rows[~left]))
        return out

    def decision_function(self, X):
        check_is_fitted(self, "trees_")
        X = check_array(X)
        f = np.full(X.shape[0], self.base_score_)
        for tree in self.trees_:
            f += self.shrinkage * self._apply(tree, X)
        return f

    def predict_proba(self, X):
        p = _sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)


def train_logreg(X, y, l2=1e-3, epochs=500, lr=0.5, seed=0):
    return LogisticRegressionGD(l2=l2, epochs=epochs, lr=lr, seed=seed).fit(X, y)


def train_linear_svm(X, y, c=1.0, epochs=500, lr=0.5, seed=0):
    return LinearSVM(c=c, epochs=epochs, lr=lr, seed=seed).fit(X, y)


def train_gbdt(X, y, n_trees=100, max_depth=3, shrinkage=0.1, seed=0):
    return GradientBoostedTrees(n_trees=n_trees, max_depth=max_depth, shrinkage=shrinkage,
                                seed=seed).fit(X, y)


def text_pipeline(table, estimator):
    """Sentence-level model: mean embedding followed by ``estimator``."""
    return make_pipeline(MeanEmbedding(table), estimator)
