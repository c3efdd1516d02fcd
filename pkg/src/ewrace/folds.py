"""Stratified fold assignment shared by the race and by internal model CV."""
from __future__ import annotations

import numpy as np


def stratified_folds(labels, k: int, seed: int) -> np.ndarray:
    """Assign each observation to one of ``k`` folds.

    Within each class the observations are shuffled with ``seed`` and dealt
    round-robin, positives first, so fold sizes differ by at most one and
    every fold gets a class whenever that class has at least ``k`` members.
    The result depends only on ``(labels, k, seed)``.
    """
    y = np.asarray(labels).astype(bool)
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    if k > y.size:
        raise ValueError(f"{k} folds for {y.size} observations")
    rng = np.random.default_rng(seed)
    dealt = np.concatenate([rng.permutation(np.flatnonzero(y)),
                            rng.permutation(np.flatnonzero(~y))])
    folds = np.empty(y.size, dtype=np.int64)
    folds[dealt] = np.arange(y.size) % k
    return folds
