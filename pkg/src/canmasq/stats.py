"""Statistical kernels shared by the detectors.

Pearson correlation matrices, strictly-upper-triangle vectors, the
Mann-Whitney U test, Spearman rank correlation and the standard normal CDF.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy import special


class DegenerateInputError(ValueError):
    """Raised when a statistic is undefined for the given input (e.g. a constant vector)."""


class MannWhitneyResult(NamedTuple):
    u: float
    pvalue: float


class SpearmanResult(NamedTuple):
    rho: float
    pvalue: float


_SQRT2 = math.sqrt(2.0)


def normal_cdf(z: float) -> float:
    """Standard normal CDF evaluated through the complementary error function."""
    return 0.5 * math.erfc(-z / _SQRT2)


def pearson_matrix(X: np.ndarray) -> np.ndarray:
    """Pairwise Pearson correlations between the columns of ``X``.

    Columns that are constant inside ``X`` have no defined correlation; their
    off-diagonal entries are set to 0 and their diagonal entry to 1.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {X.shape}")
    t, n = X.shape
    if t < 2:
        raise ValueError(f"need at least 2 samples to correlate, got {t}")
    constant = np.ptp(X, axis=0) == 0
    Xc = X - X.mean(axis=0)
    ss = np.einsum("ij,ij->j", Xc, Xc)
    ss[constant] = 1.0
    scale = np.sqrt(ss)
    R = (Xc.T @ Xc) / np.outer(scale, scale)
    R = 0.5 * (R + R.T)
    np.clip(R, -1.0, 1.0, out=R)
    R[constant, :] = 0.0
    R[:, constant] = 0.0
    np.fill_diagonal(R, 1.0)
    return R


def upper_triangle(R: np.ndarray) -> np.ndarray:
    """Row-major vector of the entries r_ij with i < j."""
    R = np.asarray(R)
    n = R.shape[0]
    iu = np.triu_indices(n, k=1)
    return R[iu]


def from_upper_triangle(u: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`upper_triangle` for a unit-diagonal symmetric matrix."""
    u = np.asarray(u, dtype=float)
    if u.shape != (n * (n - 1) // 2,):
        raise ValueError(f"vector of length {u.size} does not match n={n}")
    R = np.eye(n)
    iu = np.triu_indices(n, k=1)
    R[iu] = u
    R[(iu[1], iu[0])] = u
    return R


def midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing the mean of their ranks."""
    x = np.asarray(x, dtype=float).ravel()
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    # boundaries of tie groups in sorted order
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], xs.size]
    group_rank = 0.5 * (starts + ends + 1)
    ranks = np.empty(x.size)
    ranks[order] = np.repeat(group_rank, ends - starts)
    return ranks


def _tie_sizes(x: np.ndarray) -> np.ndarray:
    xs = np.sort(np.asarray(x, dtype=float).ravel())
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    return np.diff(np.r_[starts, xs.size])


def mann_whitney_u(a, b, *, exact: bool = False) -> MannWhitneyResult:
    """Two-sided Mann-Whitney U test.

    ``u`` is the statistic for ``a``: the number of (a_i, b_j) pairs with
    a_i > b_j, ties counting one half. By default the p-value uses the normal
    approximation with tie and continuity corrections. ``exact=True`` computes
    the permutation distribution of U (ties kept as midranks), which is only
    practical for small samples.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    n1, n2 = a.size, b.size
    if n1 == 0 or n2 == 0:
        raise ValueError("Mann-Whitney U needs two non-empty samples")
    pooled = np.concatenate([a, b])
    ranks = midranks(pooled)
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    if exact:
        return MannWhitneyResult(u, _exact_pvalue(pooled, n1, u))

    N = n1 + n2
    ties = _tie_sizes(pooled)
    tie_term = float(np.sum(ties**3 - ties)) / (N * (N - 1)) if N > 1 else 0.0
    var = n1 * n2 / 12.0 * ((N + 1) - tie_term)
    if var <= 0.0:
        return MannWhitneyResult(u, 1.0)
    mu = n1 * n2 / 2.0
    z = (abs(u - mu) - 0.5) / math.sqrt(var)
    p = math.erfc(z / _SQRT2)
    return MannWhitneyResult(u, min(1.0, p))


def _exact_pvalue(pooled: np.ndarray, n1: int, u_obs: float) -> float:
    """P(|U - mean| >= |u_obs - mean|) under all C(N, n1) label assignments.

    Dynamic program over tie groups in sorted order. Picking k of a group of
    size t, after m smaller values of which i went to ``a``, adds
    k * (m - i) + k * (t - k) / 2 to U. U is tracked doubled so it stays integral.
    """
    N = pooled.size
    n2 = N - n1
    groups = _tie_sizes(pooled)
    # dist[i] maps 2U -> number of assignments with i elements chosen for a
    dist: list[dict[int, int]] = [dict() for _ in range(n1 + 1)]
    dist[0][0] = 1
    m = 0
    for t in groups:
        t = int(t)
        nxt: list[dict[int, int]] = [dict() for _ in range(n1 + 1)]
        for i in range(n1 + 1):
            if not dist[i]:
                continue
            for k in range(0, min(t, n1 - i) + 1):
                if (m - i) + (t - k) > n2:
                    continue
                add = k * (2 * (m - i) + (t - k))
                mult = math.comb(t, k)
                target = nxt[i + k]
                for u2, c in dist[i].items():
                    target[u2 + add] = target.get(u2 + add, 0) + c * mult
        dist = nxt
        m += t
    final = dist[n1]
    total = sum(final.values())
    mu2 = n1 * n2  # doubled mean
    obs = abs(round(2 * u_obs) - mu2)
    extreme = sum(c for u2, c in final.items() if abs(u2 - mu2) >= obs)
    return min(1.0, extreme / total)


def spearman(a, b) -> SpearmanResult:
    """Spearman rank correlation with a two-sided t-approximation p-value."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    n = a.size
    if n < 3:
        raise ValueError(f"Spearman correlation needs at least 3 pairs, got {n}")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise DegenerateInputError("Spearman correlation is undefined for a constant vector")
    ra = midranks(a)
    rb = midranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    rho = float(ra @ rb / math.sqrt((ra @ ra) * (rb @ rb)))
    rho = max(-1.0, min(1.0, rho))
    denom = 1.0 - rho * rho
    if denom <= 0.0:
        return SpearmanResult(rho, 0.0)
    dof = n - 2
    t = abs(rho) * math.sqrt(dof / denom)
    p = 2.0 * float(special.stdtr(dof, -t))
    return SpearmanResult(rho, min(1.0, p))
