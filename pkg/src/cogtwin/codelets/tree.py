"""Gini decision tree over integer feature vectors.

Splits are ``x[f] <= t`` with integer ``t`` taken from observed values. Candidate
splits are ranked by exact rational impurity, ties going to the lowest feature
index and then the lowest threshold. A node stops growing when it is pure or
when its samples are indistinguishable; zero-gain splits are still taken so a
consistent dataset is always fitted exactly (XOR needs that).

The serialized form is a preorder node list, portable across processes::

    {"n_features": 2, "nodes": [{"f": 0, "t": 0}, {"leaf": 1}, {"leaf": 0}]}
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field


class ShapeError(ValueError):
    pass


class FitError(ValueError):
    pass


@dataclass
class DecisionTree:
    n_features: int
    feature: list = field(default_factory=list)    # -1 marks a leaf
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    label: list = field(default_factory=list)

    def predict(self, x) -> int:
        return tree_predict(self, x)

    @property
    def n_nodes(self):
        return len(self.feature)

    def labels(self):
        return sorted({lab for f, lab in zip(self.feature, self.label) if f < 0})

    def to_dict(self):
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] < 0:
                nodes.append({"leaf": self.label[i]})
            else:
                nodes.append({"f": self.feature[i], "t": self.threshold[i]})
        return {"n_features": self.n_features, "nodes": nodes}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d):
        nodes = d["nodes"]
        if not nodes:
            raise ValueError("empty tree")
        n = len(nodes)
        tree = cls(n_features=int(d["n_features"]), feature=[-1] * n, threshold=[0] * n,
                   left=[-1] * n, right=[-1] * n, label=[0] * n)
        open_nodes = []  # internal nodes still missing a child
        for i, node in enumerate(nodes):
            if open_nodes:
                parent = open_nodes[-1]
                if tree.left[parent] == -1:
                    tree.left[parent] = i
                else:
                    tree.right[parent] = i
                    open_nodes.pop()
            elif i > 0:
                raise ValueError("preorder node list has trailing nodes")
            if "leaf" in node:
                tree.label[i] = int(node["leaf"])
            else:
                tree.feature[i] = int(node["f"])
                tree.threshold[i] = int(node["t"])
                open_nodes.append(i)
        if open_nodes:
            raise ValueError("truncated preorder node list")
        return tree


def _as_matrix(features):
    import numpy as np

    if len(features) == 0:
        raise FitError("cannot fit on an empty dataset")
    width = len(features[0])
    if any(len(row) != width for row in features):
        raise ShapeError("feature vectors have different lengths")
    return np.asarray(features, dtype=np.int64).reshape(len(features), width)


def tree_fit(features, labels) -> DecisionTree:
    """Fit a tree that reproduces every consistent training pair."""
    import numpy as np

    X = _as_matrix(features)
    if len(labels) != X.shape[0]:
        raise ShapeError(f"{X.shape[0]} feature vectors but {len(labels)} labels")
    classes, y = np.unique(np.asarray(labels, dtype=np.int64), return_inverse=True)
    y = y.reshape(-1)
    n_classes = len(classes)
    tree = DecisionTree(n_features=X.shape[1])

    def add(feature, threshold, label):
        tree.feature.append(feature)
        tree.threshold.append(threshold)
        tree.left.append(-1)
        tree.right.append(-1)
        tree.label.append(label)
        return tree.n_nodes - 1

    # (sample indices, parent node, is-left-child)
    stack = [(np.arange(X.shape[0]), -1, False)]
    while stack:
        idx, parent, is_left = stack.pop()
        split = None
        counts = np.bincount(y[idx], minlength=n_classes)
        if np.count_nonzero(counts) > 1 and X.shape[1] > 0:
            split = _best_split(X[idx], y[idx], n_classes)
        if split is None:
            # argmax returns the first maximum, i.e. the smallest label on ties
            node = add(-1, 0, int(classes[int(np.argmax(counts))]))
        else:
            f, t = split
            node = add(f, t, 0)
            go_left = X[idx, f] <= t
            # right pushed first so the left subtree is emitted first (preorder)
            stack.append((idx[~go_left], node, False))
            stack.append((idx[go_left], node, True))
        if parent >= 0:
            if is_left:
                tree.left[parent] = node
            else:
                tree.right[parent] = node
    return tree


def _best_split(Xs, ys, n_classes):
    import numpy as np

    m, n_feat = Xs.shape
    order = np.argsort(Xs, axis=0, kind="stable")
    vals = np.take_along_axis(Xs, order, axis=0)
    valid = vals[:-1] != vals[1:]                       # split after row i
    if not valid.any():
        return None
    onehot = np.zeros((m, n_feat, n_classes), dtype=np.int64)
    onehot[np.arange(m)[:, None], np.arange(n_feat)[None, :], ys[order]] = 1
    left = np.cumsum(onehot, axis=0)[:-1]               # (m-1, F, K)
    total = left[-1] + onehot[-1]
    right = total[None, :, :] - left
    n_left = np.arange(1, m, dtype=np.int64)[:, None]
    n_right = m - n_left
    sq_left = (left * left).sum(axis=2)
    sq_right = (right * right).sum(axis=2)
    # weighted Gini = 1 - score/m, so maximizing score minimizes impurity; the
    # numerator and denominator are exact integers, so equal ratios give equal floats
    score = (sq_left * n_right + sq_right * n_left) / (n_left * n_right)
    score = np.where(valid, score, -np.inf)
    best = score.max()
    hit = score == best
    f = int(np.argmax(hit.any(axis=0)))
    row = int(np.argmax(hit[:, f]))
    return f, int(vals[row, f])


def tree_predict(tree: DecisionTree, x) -> int:
    if len(x) != tree.n_features:
        raise ShapeError(f"expected {tree.n_features} features, got {len(x)}")
    i = 0
    feature, threshold, left, right = tree.feature, tree.threshold, tree.left, tree.right
    while feature[i] >= 0:
        i = left[i] if x[feature[i]] <= threshold[i] else right[i]
    return tree.label[i]
