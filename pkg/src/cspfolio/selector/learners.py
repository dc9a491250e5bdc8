"""Small deterministic learners used at the selector nodes.

All follow the scikit-learn estimator protocol (``get_params``/``set_params``,
``fit`` returning self, trailing-underscore fitted attributes) so they can be
cloned and composed with the wider ecosystem.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


class _Standardizer:
    """z-score on training statistics; constant columns are dropped."""

    def __init__(self, X=None, *, keep=None, mean=None, scale=None):
        if X is not None:
            std = X.std(axis=0)
            keep = np.flatnonzero(std > 1e-12)
            mean = X.mean(axis=0)[keep]
            scale = std[keep]
        self.keep = np.asarray(keep, dtype=int)
        self.mean = np.asarray(mean, dtype=float)
        self.scale = np.asarray(scale, dtype=float)

    def __call__(self, X):
        return (X[:, self.keep] - self.mean) / self.scale

    def to_dict(self):
        return {"keep": self.keep.tolist(), "mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(keep=d["keep"], mean=d["mean"], scale=d["scale"])


def _nearest(train, query, k):
    """Indices of the k nearest training rows per query row, ties to the lowest index."""
    d2 = ((query[:, None, :] - train[None, :, :]) ** 2).sum(axis=2)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


class RidgeRegression(RegressorMixin, BaseEstimator):
    """Least squares with a small ridge penalty; the intercept is not penalised."""

    def __init__(self, alpha=1e-8):
        self.alpha = alpha

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        xm, ym = X.mean(axis=0), y.mean()
        Xc = X - xm
        gram = Xc.T @ Xc
        gram[np.diag_indices_from(gram)] += self.alpha * max(1.0, len(X))
        try:
            coef = np.linalg.solve(gram, Xc.T @ (y - ym))
        except np.linalg.LinAlgError:
            coef = np.linalg.lstsq(gram, Xc.T @ (y - ym), rcond=None)[0]
        self.coef_ = coef
        self.intercept_ = float(ym - xm @ coef)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_ + self.intercept_


class KNNRegressor(RegressorMixin, BaseEstimator):
    def __init__(self, k=3):
        self.k = k

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if self.k > len(X):
            raise ValueError(f"k={self.k} exceeds the {len(X)} training samples")
        self.scaler_ = _Standardizer(X)
        self.X_ = self.scaler_(X)
        self.y_ = y.astype(float)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "X_")
        X = check_array(X)
        idx = _nearest(self.X_, self.scaler_(X), self.k)
        return self.y_[idx].mean(axis=1)


class KNNClassifier(ClassifierMixin, BaseEstimator):
    """Majority vote of the k nearest neighbours; vote ties go to the lowest label."""

    def __init__(self, k=3):
        self.k = k

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        if self.k > len(X):
            raise ValueError(f"k={self.k} exceeds the {len(X)} training samples")
        self.classes_, codes = np.unique(y, return_inverse=True)
        self.scaler_ = _Standardizer(X)
        self.X_ = self.scaler_(X)
        self.codes_ = codes
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "X_")
        X = check_array(X)
        idx = _nearest(self.X_, self.scaler_(X), self.k)
        votes = np.zeros((len(X), len(self.classes_)), dtype=int)
        for j in range(idx.shape[1]):
            np.add.at(votes, (np.arange(len(X)), self.codes_[idx[:, j]]), 1)
        return self.classes_[np.argmax(votes, axis=1)]


class RegressionTree(RegressorMixin, BaseEstimator):
    """Greedy variance-reduction binary tree with mean-valued leaves."""

    def __init__(self, min_samples_leaf=4, max_depth=None):
        self.min_samples_leaf = min_samples_leaf
        self.max_depth = max_depth

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        # flat arrays: feature (-1 = leaf), threshold, left, right, value
        self.nodes_ = []
        self._grow(X, y.astype(float), 0)
        self.n_features_in_ = X.shape[1]
        return self

    def _grow(self, X, y, depth):
        node = len(self.nodes_)
        self.nodes_.append([-1, 0.0, -1, -1, float(y.mean())])
        if (self.max_depth is not None and depth >= self.max_depth) or len(y) < 2 * self.min_samples_leaf:
            return node
        split = self._best_split(X, y)
        if split is None:
            return node
        f, thr = split
        mask = X[:, f] <= thr
        left = self._grow(X[mask], y[mask], depth + 1)
        right = self._grow(X[~mask], y[~mask], depth + 1)
        self.nodes_[node][:4] = [f, thr, left, right]
        return node

    def _best_split(self, X, y):
        n = len(y)
        leaf = self.min_samples_leaf
        base = ((y - y.mean()) ** 2).sum()
        best_gain, best = 1e-12 * max(1.0, base), None
        for f in range(X.shape[1]):
            order = np.argsort(X[:, f], kind="stable")
            xs, ys = X[order, f], y[order]
            csum, csq = np.cumsum(ys), np.cumsum(ys * ys)
            total, total_sq = csum[-1], csq[-1]
            i = np.arange(leaf, n - leaf + 1)  # size of the left part
            if not len(i):
                continue
            ls, lq = csum[i - 1], csq[i - 1]
            sse = (lq - ls * ls / i) + (total_sq - lq - (total - ls) ** 2 / (n - i))
            gain = np.where(xs[i - 1] < xs[np.minimum(i, n - 1)], base - sse, -np.inf)
            j = int(np.argmax(gain))
            if gain[j] > best_gain:
                cut = i[j]
                best_gain, best = gain[j], (f, float((xs[cut - 1] + xs[cut]) / 2))
        return best

    def predict(self, X):
        check_is_fitted(self, "nodes_")
        X = check_array(X)
        out = np.empty(len(X))
        for r, row in enumerate(X):
            k = 0
            while self.nodes_[k][0] >= 0:
                f, thr, left, right, _ = self.nodes_[k]
                k = left if row[int(f)] <= thr else right
            out[r] = self.nodes_[k][4]
        return out


class ClusterBest(BaseEstimator):
    """k-means on standardised features; each cluster picks its best branch.

    ``fit(X, costs)`` takes a cost matrix (rows = samples, columns = branches)
    and ``predict`` returns branch indices.
    """

    def __init__(self, n_clusters=2, max_iter=100, seed=0):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.seed = seed

    def fit(self, X, costs):
        X = check_array(X)
        costs = check_array(costs)
        if len(costs) != len(X):
            raise ValueError("X and costs disagree on the number of samples")
        if self.n_clusters > len(X):
            raise ValueError(f"n_clusters={self.n_clusters} exceeds the {len(X)} training samples")
        self.scaler_ = _Standardizer(X)
        Z = self.scaler_(X)
        centers = self._init(Z)
        for _ in range(self.max_iter):
            labels = _nearest(centers, Z, 1)[:, 0]
            new = np.array([Z[labels == c].mean(axis=0) if np.any(labels == c) else centers[c]
                            for c in range(len(centers))])
            if np.allclose(new, centers):
                break
            centers = new
        labels = _nearest(centers, Z, 1)[:, 0]
        overall = int(np.argmin(costs.mean(axis=0)))
        choice = []
        for c in range(len(centers)):
            members = labels == c
            choice.append(int(np.argmin(costs[members].mean(axis=0))) if members.any() else overall)
        self.cluster_centers_ = centers
        self.cluster_choice_ = np.array(choice, dtype=int)
        self.n_features_in_ = X.shape[1]
        return self

    def _init(self, Z):
        # k-means++ with a fixed seed
        rng = np.random.default_rng(self.seed)
        centers = [Z[0]]
        for _ in range(1, self.n_clusters):
            d2 = ((Z[:, None, :] - np.array(centers)[None]) ** 2).sum(axis=2).min(axis=1)
            if d2.sum() <= 0:
                centers.append(Z[len(centers) % len(Z)])
                continue
            centers.append(Z[rng.choice(len(Z), p=d2 / d2.sum())])
        return np.array(centers)

    def predict_cluster(self, X):
        check_is_fitted(self, "cluster_centers_")
        return _nearest(self.cluster_centers_, self.scaler_(check_array(X)), 1)[:, 0]

    def predict(self, X):
        return self.cluster_choice_[self.predict_cluster(X)]


LEARNER_FAMILIES = ("linear", "knn", "tree", "knn-class", "cluster")


def parse_learner(spec: str):
    """``"linear"``, ``"knn:5"``, ``"tree"``, ``"tree:8"``, ``"knn-class:3"``, ``"cluster:4"``.

    Returns (family, integer parameter or None).
    """
    family, _, arg = str(spec).partition(":")
    if family not in LEARNER_FAMILIES:
        raise ValueError(f"unknown learner {spec!r}; choose from {LEARNER_FAMILIES}")
    return family, (int(arg) if arg else None)


def make_learner(spec: str):
    family, arg = parse_learner(spec)
    if family == "linear":
        return RidgeRegression()
    if family == "knn":
        return KNNRegressor(k=arg or 3)
    if family == "tree":
        return RegressionTree(min_samples_leaf=arg or 4)
    if family == "knn-class":
        return KNNClassifier(k=arg or 3)
    return ClusterBest(n_clusters=arg or 2)


def train_learner(kind: str, X, y):
    """Fit a fresh learner of ``kind``.

    ``y`` is a target vector for regressors, a label vector for classifiers and
    a cost matrix for cluster-best.
    """
    X = np.asarray(X, dtype=float)
    if len(X) < 2:
        raise ValueError("need at least two training samples")
    return make_learner(kind).fit(X, y)
