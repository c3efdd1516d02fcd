"""CART classification trees (Gini splits, cost-complexity pruning) and random forests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..folds import stratified_folds
from .base import Classifier


@dataclass(frozen=True)
class Tree:
    """Array-encoded binary tree. Leaves have ``feature == -1``.

    Nodes are numbered in depth-first pre-order, so children always have
    larger indices than their parent. ``value`` is the class-1 share of the
    training rows reaching the node, ``count`` their number.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        return _predict(X, self.feature, self.threshold, self.left, self.right, self.value)


@njit(cache=True)
def _grow(X, y, sample_idx, min_leaf, max_features, seed):
    np.random.seed(seed)
    m = sample_idx.size
    g = X.shape[1]
    cap = 2 * m + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, np.int64)

    order = sample_idx.copy()
    buf = np.empty(m, np.int64)
    feats = np.arange(g)
    vals = np.empty(m)
    ys = np.empty(m)

    stack_node = np.empty(cap, np.int64)
    stack_lo = np.empty(cap, np.int64)
    stack_hi = np.empty(cap, np.int64)
    top = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = m
    top = 1
    n_nodes = 1
    mf = min(max_features, g)

    while top > 0:
        top -= 1
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        n = hi - lo
        n1 = 0.0
        for i in range(lo, hi):
            n1 += y[order[i]]
        value[node] = n1 / n
        count[node] = n
        if n1 == 0.0 or n1 == n or n < 2 * min_leaf:
            continue
        p = n1 / n
        parent_imp = n * 2.0 * p * (1.0 - p)
        best_imp = parent_imp - 1e-12 * n
        best_f = -1
        best_thr = 0.0
        if mf < g:
            for j in range(mf):
                r = np.random.randint(j, g)
                t = feats[j]
                feats[j] = feats[r]
                feats[r] = t
        for jf in range(mf):
            f = feats[jf]
            for i in range(n):
                vals[i] = X[order[lo + i], f]
            srt = np.argsort(vals[:n], kind="mergesort")
            for i in range(n):
                ys[i] = y[order[lo + srt[i]]]
            cum1 = 0.0
            for i in range(n - 1):
                cum1 += ys[i]
                v_here = vals[srt[i]]
                v_next = vals[srt[i + 1]]
                if v_here == v_next:
                    continue
                nl = i + 1
                nr = n - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                pl = cum1 / nl
                pr = (n1 - cum1) / nr
                imp = nl * 2.0 * pl * (1.0 - pl) + nr * 2.0 * pr * (1.0 - pr)
                if imp < best_imp:
                    best_imp = imp
                    best_f = f
                    thr = 0.5 * (v_here + v_next)
                    if thr >= v_next:
                        thr = v_here
                    best_thr = thr
        if best_f < 0:
            continue
        # stable partition of order[lo:hi]
        nl = 0
        for i in range(lo, hi):
            if X[order[i], best_f] <= best_thr:
                nl += 1
        a = 0
        b = nl
        for i in range(lo, hi):
            o = order[i]
            if X[o, best_f] <= best_thr:
                buf[a] = o
                a += 1
            else:
                buf[b] = o
                b += 1
        for i in range(n):
            order[lo + i] = buf[i]
        feature[node] = best_f
        threshold[node] = best_thr
        li = n_nodes
        ri = n_nodes + 1
        n_nodes += 2
        left[node] = li
        right[node] = ri
        # push right first so the left subtree is numbered first
        stack_node[top] = ri
        stack_lo[top] = lo + nl
        stack_hi[top] = hi
        top += 1
        stack_node[top] = li
        stack_lo[top] = lo
        stack_hi[top] = lo + nl
        top += 1
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], count[:n_nodes])


@njit(cache=True)
def _predict(X, feature, threshold, left, right, value):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@njit(cache=True)
def _predict_pruned(X, feature, threshold, left, right, value, cut):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0 and not cut[node]:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@njit(cache=True)
def _predict_forest(X, feature, threshold, left, right, value, roots):
    out = np.zeros(X.shape[0])
    n_trees = roots.size
    for i in range(X.shape[0]):
        acc = 0.0
        for t in range(n_trees):
            node = roots[t]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            acc += value[node]
        out[i] = acc / n_trees
    return out


@njit(cache=True)
def _prune_at(feature, left, right, risk, alpha):
    """Cut mask of the minimal cost-complexity subtree for ``alpha``."""
    n = feature.size
    cost = np.zeros(n)
    cut = np.zeros(n, np.bool_)
    for t in range(n - 1, -1, -1):
        if feature[t] < 0:
            cost[t] = risk[t] + alpha
        else:
            sub = cost[left[t]] + cost[right[t]]
            if risk[t] + alpha <= sub:
                cut[t] = True
                cost[t] = risk[t] + alpha
            else:
                cost[t] = sub
    return cut


@njit(cache=True)
def _weakest_link_alphas(feature, left, right, risk):
    """Increasing complexity parameters at which weakest-link pruning removes nodes."""
    n = feature.size
    cut = np.zeros(n, np.bool_)
    alphas = np.empty(n)
    n_alpha = 0
    sub_risk = np.zeros(n)
    leaves = np.zeros(n)
    reach = np.zeros(n, np.bool_)
    while True:
        for t in range(n - 1, -1, -1):
            if feature[t] < 0 or cut[t]:
                sub_risk[t] = risk[t]
                leaves[t] = 1.0
            else:
                sub_risk[t] = sub_risk[left[t]] + sub_risk[right[t]]
                leaves[t] = leaves[left[t]] + leaves[right[t]]
        if leaves[0] <= 1.0:
            break
        reach[:] = False
        reach[0] = True
        best = np.inf
        for t in range(n):
            if reach[t] and feature[t] >= 0 and not cut[t]:
                reach[left[t]] = True
                reach[right[t]] = True
                gt = (risk[t] - sub_risk[t]) / (leaves[t] - 1.0)
                if gt < best:
                    best = gt
        if best < 0.0:
            best = 0.0
        for t in range(n):
            if reach[t] and feature[t] >= 0 and not cut[t]:
                gt = (risk[t] - sub_risk[t]) / (leaves[t] - 1.0)
                if gt <= best + 1e-12 * (1.0 + abs(best)):
                    cut[t] = True
        alphas[n_alpha] = best
        n_alpha += 1
    return alphas[:n_alpha]


def grow_tree(X, y, min_leaf: int = 1, max_features: int | None = None, seed: int = 0,
              sample_idx=None) -> Tree:
    """Grow an unpruned CART tree on rows ``sample_idx`` (duplicates allowed).

    Splits minimize the summed Gini impurity of the children; ``max_features``
    features are drawn per split (all of them, in column order, by default).
    Growth stops at pure nodes, nodes smaller than ``2 * min_leaf`` and nodes
    without an impurity-reducing split.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if sample_idx is None:
        sample_idx = np.arange(len(y), dtype=np.int64)
    g = X.shape[1]
    mf = g if max_features is None else int(max_features)
    return Tree(*_grow(X, y, np.asarray(sample_idx, dtype=np.int64), int(min_leaf), mf, int(seed)))


def node_risk(tree: Tree) -> np.ndarray:
    """Sum of squared errors of the node's class-1 share over its rows."""
    p = tree.value
    return tree.count * p * (1.0 - p)


def prune(tree: Tree, alpha: float) -> Tree:
    """Minimal cost-complexity subtree (risk + alpha * leaves), re-indexed."""
    cut = _prune_at(tree.feature, tree.left, tree.right, node_risk(tree), float(alpha))
    keep, stack = [], [0]
    while stack:
        t = stack.pop()
        keep.append(t)
        if tree.feature[t] >= 0 and not cut[t]:
            stack.append(tree.right[t])
            stack.append(tree.left[t])
    keep = np.array(keep)
    new_id = np.full(tree.n_nodes, -1)
    new_id[keep] = np.arange(len(keep))
    is_leaf = (tree.feature[keep] < 0) | cut[keep]
    return Tree(
        feature=np.where(is_leaf, -1, tree.feature[keep]),
        threshold=np.where(is_leaf, 0.0, tree.threshold[keep]),
        left=np.where(is_leaf, -1, new_id[tree.left[keep]]),
        right=np.where(is_leaf, -1, new_id[tree.right[keep]]),
        value=tree.value[keep],
        count=tree.count[keep],
    )


def cv_prune_alpha(X, y, min_leaf: int, folds: int, seed: int) -> float:
    """Complexity parameter chosen by ``folds``-fold CV of the held-out squared error.

    Candidates are geometric midpoints of the weakest-link sequence of the
    tree grown on all rows; ties go to the larger (simpler) candidate.
    """
    full = grow_tree(X, y, min_leaf)
    alphas = _weakest_link_alphas(full.feature, full.left, full.right, node_risk(full))
    if alphas.size == 0:
        return 0.0
    seq = np.r_[0.0, alphas]
    cands = np.sqrt(seq[:-1] * seq[1:])
    cands = np.r_[cands, seq[-1] * 2.0 + 1e-12]
    yf = np.asarray(y, dtype=float)
    k = min(folds, int(min(yf.sum(), len(yf) - yf.sum())))
    if k < 2:
        return 0.0
    fold = stratified_folds(y, k, seed)
    err = np.zeros(len(cands))
    for f in range(k):
        tr, te = fold != f, fold == f
        t = grow_tree(X[tr], y[tr], min_leaf)
        risk = node_risk(t)
        Xte = np.ascontiguousarray(X[te])
        for i, a in enumerate(cands):
            cut = _prune_at(t.feature, t.left, t.right, risk, a)
            p = _predict_pruned(Xte, t.feature, t.threshold, t.left, t.right, t.value, cut)
            err[i] += np.sum((yf[te] - p) ** 2)
    best = np.flatnonzero(err <= err.min() * (1 + 1e-12))[-1]
    return float(cands[best])


class ClassificationTree(Classifier):
    """CART tree with a minimum leaf size, pruned at a cross-validated complexity."""

    def fit(self, X, y, feature_names=None):
        p = self.params
        tree = grow_tree(X, y, p["min_leaf"])
        if p["prune"]:
            self.alpha = cv_prune_alpha(X, y, p["min_leaf"], p["cv_folds"], self.seed)
            tree = prune(tree, self.alpha)
        self.tree = tree
        return self

    def predict_proba(self, X):
        return self.tree.predict(np.ascontiguousarray(X, dtype=float))


class RandomForest(Classifier):
    """Bagged unpruned trees with ``mtry`` candidate features per split."""

    def fit(self, X, y, feature_names=None):
        p = self.params
        rng = np.random.default_rng(self.seed)
        n = len(y)
        X = np.ascontiguousarray(X, dtype=float)
        yf = np.asarray(y, dtype=float)
        trees = []
        for _ in range(p["n_trees"]):
            idx = rng.integers(0, n, n)
            tree_seed = int(rng.integers(0, 2**31 - 1))
            trees.append(Tree(*_grow(X, yf, idx, p["min_leaf"], p["mtry"], tree_seed)))
        self.trees = trees
        offsets = np.cumsum([0] + [t.n_nodes for t in trees[:-1]])
        self._roots = np.asarray(offsets, dtype=np.int64)
        self._feature = np.concatenate([t.feature for t in trees])
        self._threshold = np.concatenate([t.threshold for t in trees])
        self._left = np.concatenate([np.where(t.left >= 0, t.left + o, -1)
                                     for t, o in zip(trees, offsets)])
        self._right = np.concatenate([np.where(t.right >= 0, t.right + o, -1)
                                      for t, o in zip(trees, offsets)])
        self._value = np.concatenate([t.value for t in trees])
        return self

    def predict_proba(self, X):
        return _predict_forest(np.ascontiguousarray(X, dtype=float), self._feature,
                               self._threshold, self._left, self._right, self._value,
                               self._roots)
