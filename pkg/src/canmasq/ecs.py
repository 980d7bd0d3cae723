"""Element-centric similarity between hierarchical clusterings.

A hierarchy is a collection of clusters over N elements, each with a
normalized depth in [0, 1] (0 at the root, 1 at the finest clusters). It
induces a weighted element graph through its element-cluster bipartite graph:
a walker at an element picks one of the clusters containing it with
probability proportional to exp(r * depth), then moves to a uniformly chosen
member of that cluster. A personalized random walk with restart probability
1 - alpha on that graph gives each element an affinity distribution over all
elements; two clusterings are compared element by element through the L1
distance of those distributions.

Two ways of reading a dendrogram as clusters are offered:

* ``"nodes"``: every dendrogram node (leaves included) is one cluster, and its
  depth is its longest path from the root divided by that path plus its
  longest path down to a leaf. This is the construction of the CluSim library.
* ``"levels"``: each of the n - 1 partitions reached after a merge is a level,
  every cluster of that partition is repeated at the level, and the partition
  after merge k sits at depth (n - k) / (n - 1).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .clustering import Dendrogram

log = logging.getLogger(__name__)

_FP_TOL = 1e-10
_FP_MAX_ITER = 10_000

NODES = "nodes"
LEVELS = "levels"
CONSTRUCTIONS = (NODES, LEVELS)
DEFAULT_CONSTRUCTION = NODES


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class HierarchicalClustering:
    """Clusters of N elements with a normalized depth each.

    ``membership[c, i]`` is True when element i belongs to cluster c and
    ``depths[c]`` lies in [0, 1], deeper clusters being finer. Every element
    belongs to at least one cluster.
    """

    membership: np.ndarray
    depths: np.ndarray

    def __post_init__(self):
        membership = np.atleast_2d(np.asarray(self.membership, dtype=bool))
        depths = np.atleast_1d(np.asarray(self.depths, dtype=float))
        if depths.shape != (membership.shape[0],):
            raise ValueError("one depth per cluster required")
        if not membership.any(axis=0).all():
            raise ValueError("every element must belong to a cluster")
        if not membership.any(axis=1).all():
            raise ValueError("empty cluster")
        membership.setflags(write=False)
        depths.setflags(write=False)
        object.__setattr__(self, "membership", membership)
        object.__setattr__(self, "depths", depths)

    @property
    def n_elements(self) -> int:
        return self.membership.shape[1]

    @classmethod
    def from_partition(cls, labels) -> "HierarchicalClustering":
        """A flat partition: one cluster per block, all at depth 1."""
        labels = np.asarray(labels)
        blocks = np.unique(labels)
        return cls(labels[None, :] == blocks[:, None], np.ones(len(blocks)))

    @classmethod
    def from_dendrogram(cls, dend: Dendrogram, construction: str = DEFAULT_CONSTRUCTION) -> "HierarchicalClustering":
        if construction not in CONSTRUCTIONS:
            raise ValueError(f"unknown construction {construction!r}; expected one of {CONSTRUCTIONS}")
        n = dend.n_leaves
        members = dend.node_members()
        if n == 1:
            return cls(np.ones((1, 1), dtype=bool), np.array([0.0 if construction == NODES else 1.0]))
        if construction == NODES:
            return cls._nodes(dend, members)
        return cls._levels(n, members)

    @classmethod
    def _nodes(cls, dend: Dendrogram, members) -> "HierarchicalClustering":
        n = dend.n_leaves
        total = 2 * n - 1
        children = dend.merges[:, :2].astype(int)
        below = np.zeros(total)  # longest path down to a leaf
        for k, (a, b) in enumerate(children):
            below[n + k] = 1 + max(below[a], below[b])
        above = np.zeros(total)  # path length from the root
        for k in range(n - 2, -1, -1):
            above[children[k]] = above[n + k] + 1
        membership = np.zeros((total, n), dtype=bool)
        for node in range(total):
            membership[node, members[node]] = True
        return cls(membership, above / (above + below))

    @classmethod
    def _levels(cls, n: int, members) -> "HierarchicalClustering":
        owner = np.arange(n)
        rows, depths = [], []
        for step in range(n - 1):
            owner[members[n + step]] = n + step
            for cluster in np.unique(owner):
                rows.append(owner == cluster)
                depths.append((n - 1 - step) / (n - 1))
        return cls(np.array(rows), np.array(depths))


def level_weights(depths, r: float) -> np.ndarray:
    """Normalized weights proportional to exp(r * depth)."""
    depths = np.asarray(depths, dtype=float)
    logits = r * depths
    w = np.exp(logits - logits.max())
    return w / w.sum()


def induced_graph(hc: HierarchicalClustering, r: float) -> np.ndarray:
    """Row-stochastic transition matrix of the cluster-induced element graph."""
    M = hc.membership.astype(float)
    B = M.T * level_weights(hc.depths, r)  # element x cluster edge weights
    to_cluster = B / B.sum(axis=1, keepdims=True)
    to_element = M / M.sum(axis=1, keepdims=True)
    return to_cluster @ to_element


def build_affinity(
    hc: HierarchicalClustering, alpha: float = 0.9, r: float = -5.0, *, method: str = "solve"
) -> np.ndarray:
    """Personalized-PageRank affinity matrix of a hierarchical clustering.

    Row i is the stationary distribution of a walk that restarts at element i
    with probability 1 - alpha. ``method="iterate"`` runs the fixed-point
    iteration instead of the direct linear solve.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    N = hc.n_elements
    if N < 1:
        raise ValueError("clustering has no elements")
    W = induced_graph(hc, r)
    eye = np.eye(N)
    if method == "solve":
        # P = (1 - alpha) (I - alpha W)^-1, solved as (I - alpha W)^T P^T = (1 - alpha) I
        P = np.linalg.solve((eye - alpha * W).T, (1.0 - alpha) * eye).T
    elif method == "iterate":
        P = eye.copy()
        for _ in range(_FP_MAX_ITER):
            nxt = (1.0 - alpha) * eye + alpha * (P @ W)
            if np.abs(nxt - P).max() < _FP_TOL:
                P = nxt
                break
            P = nxt
        else:
            raise ConvergenceError("affinity iteration did not converge")
    else:
        raise ValueError(f"unknown method {method!r}")
    return P


def ecs(A1: np.ndarray, A2: np.ndarray, alpha: float = 0.9) -> float:
    """Mean element-wise similarity 1 - |p1_i - p2_i|_1 / (2 alpha), in [0, 1]."""
    A1 = np.asarray(A1, dtype=float)
    A2 = np.asarray(A2, dtype=float)
    if A1.shape != A2.shape:
        raise ValueError(f"affinity shapes differ: {A1.shape} vs {A2.shape}")
    per_element = 1.0 - np.abs(A1 - A2).sum(axis=1) / (2.0 * alpha)
    raw = float(per_element.mean())
    s = min(1.0, max(0.0, raw))
    if abs(raw - s) > 1e-9:
        log.warning("element-centric similarity %.12g clamped to %g", raw, s)
    return s


def moriano_similarity(
    dend_train: Dendrogram,
    dend_test: Dendrogram,
    r: float = -5.0,
    alpha: float = 0.9,
    *,
    train_affinity: np.ndarray | None = None,
    construction: str = DEFAULT_CONSTRUCTION,
) -> float:
    """Similarity of two dendrograms over the same leaves.

    ``train_affinity`` lets a caller reuse the training side's precomputed affinity.
    """
    if dend_train.n_leaves != dend_test.n_leaves:
        raise ValueError(
            f"leaf sets differ: {dend_train.n_leaves} vs {dend_test.n_leaves} elements"
        )
    if train_affinity is None:
        train_affinity = build_affinity(HierarchicalClustering.from_dendrogram(dend_train, construction), alpha, r)
    test_affinity = build_affinity(HierarchicalClustering.from_dendrogram(dend_test, construction), alpha, r)
    return ecs(train_affinity, test_affinity, alpha)
