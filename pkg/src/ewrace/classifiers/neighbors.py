"""k-nearest neighbours with a Minkowski distance."""
from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from .base import Classifier, Standardizer

_CHUNK = 512


def knn_vote_share(dist: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Share of label 1 among the ``k`` nearest training rows of each query row.

    Rows of ``dist`` are query-to-training distances. Equal distances at the
    k-th place go to the earlier training rows.
    """
    n_train = dist.shape[1]
    k = min(k, n_train)
    kth = np.partition(dist, k - 1, axis=1)[:, k - 1:k]
    closer = dist < kth
    tied = dist == kth
    room = k - closer.sum(axis=1, keepdims=True)
    take = closer | (tied & (np.cumsum(tied, axis=1) <= room))
    return (take & labels.astype(bool)[None, :]).sum(axis=1) / k


class KNN(Classifier):
    """Probability is the share of crisis labels among the k nearest (standardized) rows."""

    def fit(self, X, y, feature_names=None):
        self.scale = Standardizer(X)
        self.X = self.scale(X)
        self.y = y.astype(np.int8)
        return self

    def predict_proba(self, X):
        Q = self.scale(X)
        out = np.empty(len(Q))
        for a in range(0, len(Q), _CHUNK):
            d = cdist(Q[a:a + _CHUNK], self.X, metric="minkowski", p=self.params["distance"])
            out[a:a + _CHUNK] = knn_vote_share(d, self.y, self.params["k"])
        return out
