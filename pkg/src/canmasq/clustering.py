"""Clustering on precomputed dissimilarities.

DBSCAN over a distance matrix (used by the Ganesan17 detector) and Ward
agglomerative clustering producing a dendrogram (used by Moriano22).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

NOISE = -1

# relative tolerance under which two merge costs count as tied
_TIE_RTOL = 1e-10


@dataclass(frozen=True)
class FlatClustering:
    labels: np.ndarray
    n_clusters: int

    def members(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)

    def groups(self) -> list[np.ndarray]:
        return [self.members(k) for k in range(self.n_clusters)]


@dataclass(frozen=True)
class Dendrogram:
    """Merge tree over ``n_leaves`` elements in scipy linkage layout.

    Row k of ``merges`` is ``(left, right, height, size)``; leaves are node ids
    0..n-1 and the cluster formed by row k gets id n + k.
    """

    n_leaves: int
    merges: np.ndarray

    def __post_init__(self):
        merges = np.asarray(self.merges, dtype=float).reshape(-1, 4)
        if merges.shape[0] != max(self.n_leaves - 1, 0):
            raise ValueError(
                f"{self.n_leaves} leaves need {self.n_leaves - 1} merges, got {merges.shape[0]}"
            )
        merges.setflags(write=False)
        object.__setattr__(self, "merges", merges)

    @property
    def heights(self) -> np.ndarray:
        return self.merges[:, 2]

    def node_members(self) -> list[np.ndarray]:
        """Leaf indices under every node id, leaves first."""
        n = self.n_leaves
        members = [np.array([i]) for i in range(n)]
        for left, right, _, _ in self.merges:
            members.append(np.concatenate([members[int(left)], members[int(right)]]))
        return members

    def to_text(self) -> str:
        lines = [f"# leaves {self.n_leaves}"]
        for left, right, height, size in self.merges:
            lines.append(f"{int(left)} {int(right)} {float(height)!r} {int(size)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Dendrogram":
        rows = []
        n_leaves = None
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "leaves":
                    n_leaves = int(parts[1])
                continue
            left, right, height, size = line.split()
            rows.append((int(left), int(right), float(height), int(size)))
        if n_leaves is None:
            n_leaves = len(rows) + 1
        return cls(n_leaves, np.array(rows, dtype=float).reshape(-1, 4))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


def correlation_to_distance(R: np.ndarray) -> np.ndarray:
    """Map correlations to dissimilarities d = 2 (1 - r), zero on the diagonal."""
    D = 2.0 * (1.0 - np.asarray(R, dtype=float))
    np.clip(D, 0.0, 4.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def dbscan_precomputed(D: np.ndarray, eps: float = 1.0, min_samples: int = 1) -> FlatClustering:
    """DBSCAN on a precomputed distance matrix.

    A point's neighbourhood is every point within ``eps`` (inclusive), itself
    included. Clusters are numbered in order of their lowest-index core point.
    Border points join the first cluster that reaches them; points reached by
    no core point get the label ``NOISE``.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if min_samples < 1:
        raise ValueError(f"min_samples must be >= 1, got {min_samples}")
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    adjacency = D <= eps
    np.fill_diagonal(adjacency, True)
    neighbours = [np.flatnonzero(row) for row in adjacency]
    core = np.array([nb.size >= min_samples for nb in neighbours], dtype=bool)

    labels = np.full(n, NOISE, dtype=int)
    k = 0
    for seed in range(n):
        if labels[seed] != NOISE or not core[seed]:
            continue
        labels[seed] = k
        queue = deque([seed])
        while queue:
            p = queue.popleft()
            if not core[p]:
                continue
            for q in neighbours[p]:
                if labels[q] == NOISE:
                    labels[q] = k
                    queue.append(q)
        k += 1
    return FlatClustering(labels, k)


def ward_ahc(D: np.ndarray) -> Dendrogram:
    """Ward agglomerative clustering via the Lance-Williams recurrence.

    ``D`` is treated as a squared-Euclidean-like dissimilarity and updated as

        d(k, i+j) = ((n_i + n_k) d(k, i) + (n_j + n_k) d(k, j) - n_k d(i, j)) / (n_i + n_j + n_k)

    Merge costs within a relative 1e-10 of the minimum are ties, resolved in
    favour of the lexicographically smallest (node id, node id) pair.
    """
    D = np.array(D, dtype=float)
    n = D.shape[0]
    if D.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {D.shape}")
    if n < 1:
        raise ValueError("cannot cluster an empty set")
    if n == 1:
        return Dendrogram(1, np.empty((0, 4)))

    work = D.copy()
    np.fill_diagonal(work, np.inf)
    node_id = np.arange(n)
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    merges = np.empty((n - 1, 4))

    for step in range(n - 1):
        sub = work[np.ix_(active, active)]
        slots = np.flatnonzero(active)
        iu = np.triu_indices(slots.size, k=1)
        costs = sub[iu]
        best = costs.min()
        tied = np.flatnonzero(costs <= best + _TIE_RTOL * abs(best))
        if tied.size == 1:
            pick = tied[0]
        else:
            ids = np.sort(
                np.stack([node_id[slots[iu[0][tied]]], node_id[slots[iu[1][tied]]]]), axis=0
            )
            pick = tied[np.lexsort((ids[1], ids[0]))[0]]
        i, j = slots[iu[0][pick]], slots[iu[1][pick]]
        height = work[i, j]
        ni, nj = size[i], size[j]

        others = active.copy()
        others[[i, j]] = False
        nk = size[others]
        updated = ((ni + nk) * work[i, others] + (nj + nk) * work[j, others] - nk * height) / (
            ni + nj + nk
        )
        work[i, others] = updated
        work[others, i] = updated
        work[j, :] = np.inf
        work[:, j] = np.inf
        active[j] = False

        left, right = sorted((node_id[i], node_id[j]))
        merges[step] = (left, right, height, ni + nj)
        node_id[i] = n + step
        size[i] = ni + nj
    return Dendrogram(n, merges)


def cut_dendrogram(dend: Dendrogram, k: int) -> FlatClustering:
    """Flat clustering left after applying the first n - k merges."""
    n = dend.n_leaves
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    owner = np.arange(n)
    members = dend.node_members()
    for step in range(n - k):
        owner[members[n + step]] = n + step
    _, labels = np.unique(owner, return_inverse=True)
    return FlatClustering(_relabel_by_first_appearance(labels), k)


def _relabel_by_first_appearance(labels: np.ndarray) -> np.ndarray:
    mapping: dict[int, int] = {}
    out = np.empty_like(labels)
    for idx, lab in enumerate(labels):
        out[idx] = mapping.setdefault(int(lab), len(mapping))
    return out
