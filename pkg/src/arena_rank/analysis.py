"""Leaderboards, rank correlation, covariance geometry, clustering and embeddings."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.cluster import hierarchy
from scipy.spatial.distance import squareform

from .models import Array, ParameterSet, standardized_margins

LINKAGES = ("single", "complete", "average")


class UndefinedCorrelationError(ValueError):
    """Kendall's tau-b is undefined when one input is constant."""


@dataclass(frozen=True)
class LeaderboardEntry:
    rank: int
    name: str
    score: float
    index: int


def leaderboard(mu, names) -> list[LeaderboardEntry]:
    """Competitors by descending score; equal scores keep roster order."""
    if isinstance(mu, ParameterSet):
        mu = mu.mu
    mu = np.asarray(mu, dtype=np.float64)
    names = list(names)
    if len(names) != mu.shape[0]:
        raise ValueError(f"{len(names)} names for {mu.shape[0]} scores")
    order = np.argsort(-mu, kind="stable")
    return [LeaderboardEntry(r + 1, names[k], float(mu[k]), int(k)) for r, k in enumerate(order)]


def kendall_tau_b(a, b) -> float:
    """Kendall's tau-b with tie correction."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError("tau needs two vectors of equal length")
    m = a.shape[0]
    if m < 2:
        raise ValueError("tau needs at least two observations")
    iu = np.triu_indices(m, 1)
    sa = np.sign(a[:, None] - a[None, :])[iu]
    sb = np.sign(b[:, None] - b[None, :])[iu]
    n0 = m * (m - 1) // 2
    n1 = int(np.count_nonzero(sa == 0))
    n2 = int(np.count_nonzero(sb == 0))
    s = int(np.sum(sa * sb))
    denom = (n0 - n1) * (n0 - n2)
    if denom == 0:
        raise UndefinedCorrelationError("tau-b is undefined for a constant vector")
    return s / math.sqrt(denom)


def tau_matrix(score_sets) -> Array:
    """Symmetric matrix of pairwise tau-b, one evaluation per unordered pair."""
    sets = [np.asarray(s, dtype=np.float64) for s in score_sets]
    if not sets:
        raise ValueError("need at least one score vector")
    if len({s.shape for s in sets}) != 1:
        raise ValueError("score vectors differ in length")
    k = len(sets)
    tau = np.eye(k)
    for p in range(k):
        for q in range(p + 1, k):
            tau[p, q] = tau[q, p] = kendall_tau_b(sets[p], sets[q])
    return tau


def _square_symmetric(sigma, what="matrix") -> Array:
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError(f"{what} must be square")
    if not np.allclose(sigma, sigma.T, rtol=1e-10, atol=1e-12):
        raise ValueError(f"{what} must be symmetric")
    return sigma


def s_map(sigma) -> Array:
    """Pairwise variances ``s_ij = sigma_ii + sigma_jj - 2 sigma_ij``."""
    sigma = _square_symmetric(sigma, "covariance")
    diag = np.diag(sigma)
    S = diag[:, None] + diag[None, :] - 2.0 * sigma
    np.fill_diagonal(S, 0.0)
    return S


def doubly_centered(sigma) -> Array:
    """``P sigma P`` with the centering matrix ``P = I - 11^T / m``."""
    sigma = _square_symmetric(sigma, "covariance")
    c = sigma - sigma.mean(axis=0, keepdims=True)
    return c - c.mean(axis=1, keepdims=True)


def z_matrix(params: ParameterSet) -> Array:
    """Antisymmetric matrix of standardized margins; plain score differences without covariance."""
    m = params.m
    i, j = np.triu_indices(m, 1)
    Z = np.zeros((m, m))
    z = standardized_margins(params, i, j)
    Z[i, j] = z
    Z[j, i] = -z
    return Z


def dissimilarity_from_z(Z, squared: bool = False) -> Array:
    Z = np.asarray(Z, dtype=np.float64)
    return Z * Z if squared else np.abs(Z)


@dataclass(frozen=True)
class Dendrogram:
    """Merge list in agglomeration order and an optimal leaf ordering.

    Node ids below ``m`` are leaves; merge ``k`` creates node ``m + k``.
    """

    merges: tuple[tuple[int, int, float, int], ...]
    leaf_order: tuple[int, ...]

    @property
    def m(self) -> int:
        return len(self.leaf_order)

    def to_dict(self) -> dict:
        return {
            "merges": [[a, b, h, s] for a, b, h, s in self.merges],
            "leaf_order": list(self.leaf_order),
        }


def _check_dissimilarity(d) -> Array:
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("dissimilarity must be a square matrix")
    if not np.all(np.isfinite(d)):
        raise ValueError("dissimilarity contains NaN or infinite entries")
    if np.any(d < 0):
        raise ValueError("dissimilarity has negative entries")
    if np.any(np.diag(d) != 0):
        raise ValueError("dissimilarity must have a zero diagonal")
    if not np.allclose(d, d.T, rtol=1e-10, atol=1e-12):
        raise ValueError("dissimilarity must be symmetric")
    return 0.5 * (d + d.T)


def _optimal_order(children: dict[int, tuple[int, int]], root: int, d: Array) -> list[int]:
    """Tree-consistent leaf order minimizing the summed adjacent dissimilarity.

    ``best[v][u, w]`` is the cheapest ordering of the leaves under ``v`` that
    starts at leaf ``u`` and ends at leaf ``w`` (``inf`` where no such order
    exists). Children are combined with two min-plus products.
    """
    m = d.shape[0]
    leaves: dict[int, list[int]] = {k: [k] for k in range(m)}
    best: dict[int, Array] = {k: np.zeros((1, 1)) for k in range(m)}
    for v in sorted(children):
        a, b = children[v]
        la, lb = leaves[a], leaves[b]
        # step[u, l]: order a from u to some k, then jump from k to leaf l of b
        step = np.min(best[a][:, :, None] + d[np.ix_(la, lb)][None, :, :], axis=1)
        across = np.min(step[:, :, None] + best[b][None, :, :], axis=1)
        n_a = len(la)
        full = np.full((n_a + len(lb),) * 2, np.inf)
        full[:n_a, n_a:] = across
        full[n_a:, :n_a] = across.T
        leaves[v] = la + lb
        best[v] = full

    def unfold(v: int, u: int, w: int) -> list[int]:
        """Leaf positions ``u``, ``w`` are local indices into ``leaves[v]``."""
        if v < m:
            return [v]
        a, b = children[v]
        n_a = len(leaves[a])
        if u >= n_a:
            return unfold(v, w, u)[::-1]
        w -= n_a
        total = best[a][u, :, None] + d[np.ix_(leaves[a], leaves[b])] + best[b][None, :, w]
        k, l = np.unravel_index(np.argmin(total), total.shape)
        return unfold(a, u, int(k)) + unfold(b, int(l), w)

    u, w = np.unravel_index(np.argmin(best[root]), best[root].shape)
    return unfold(root, int(u), int(w))


def agglomerate(dissimilarity, linkage: str = "average") -> Dendrogram:
    """Agglomerative clustering with optimally ordered leaves."""
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r} (choose from {', '.join(LINKAGES)})")
    d = _check_dissimilarity(dissimilarity)
    m = d.shape[0]
    if m == 0:
        raise ValueError("nothing to cluster")
    if m == 1:
        return Dendrogram(merges=(), leaf_order=(0,))
    Z = hierarchy.linkage(squareform(d, checks=False), method=linkage)
    children = {m + k: (int(a), int(b)) for k, (a, b, _, _) in enumerate(Z)}
    order = _optimal_order(children, 2 * m - 2, d)
    # orient every merge so its left child comes first in the leaf order
    pos = np.empty(2 * m - 1, dtype=np.int64)
    pos[order] = np.arange(m)
    for k in range(m - 1):
        a, b = children[m + k]
        pos[m + k] = min(pos[a], pos[b])
    merges = []
    for k, (a, b, h, size) in enumerate(Z):
        a, b = int(a), int(b)
        if pos[a] > pos[b]:
            a, b = b, a
        merges.append((a, b, float(h), int(size)))
    return Dendrogram(merges=tuple(merges), leaf_order=tuple(order))


def cut(dendrogram: Dendrogram, k: int) -> list[int]:
    """Cluster labels after undoing the last ``k - 1`` merges.

    Labels are numbered by first appearance along the leaf order.
    """
    m = dendrogram.m
    if not 1 <= k <= m:
        raise ValueError(f"k must lie in [1, {m}], got {k}")
    parent = list(range(2 * m - 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for step, (a, b, _, _) in enumerate(dendrogram.merges[: m - k]):
        node = m + step
        parent[find(a)] = node
        parent[find(b)] = node

    labels = [-1] * m
    seen: dict[int, int] = {}
    for leaf in dendrogram.leaf_order:
        root = find(leaf)
        labels[leaf] = seen.setdefault(root, len(seen))
    return labels


@dataclass(frozen=True)
class Embedding:
    coordinates: Array
    eigenvalues: Array
    padded: bool


def _fix_signs(vectors: Array) -> Array:
    """Flip each column so its largest-magnitude entry is positive."""
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _spectral_embedding(B: Array, dims: int, keep_zero: bool) -> Embedding:
    if dims < 1:
        raise ValueError("dims must be at least 1")
    m = B.shape[0]
    vals, vecs = np.linalg.eigh(0.5 * (B + B.T))
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    tol = 1e-10 * max(1.0, float(np.max(np.abs(vals)))) if m else 0.0
    usable = vals >= -tol if keep_zero else vals > tol
    # a zero eigenvalue contributes a zero column either way
    count = min(dims, int(np.count_nonzero(usable)), m)
    lam = np.clip(vals[:count], 0.0, None)
    coords = _fix_signs(vecs[:, :count]) * np.sqrt(lam)
    padded = count < dims
    if padded:
        coords = np.hstack([coords, np.zeros((m, dims - count))])
        lam = np.concatenate([lam, np.zeros(dims - count)])
    coords[coords == 0] = 0.0  # drop negative zeros for stable output
    return Embedding(coordinates=coords, eigenvalues=lam, padded=padded)


def classical_mds(dissimilarity, dims: int = 2) -> Embedding:
    """Classical (Torgerson) scaling of a dissimilarity matrix."""
    d = _check_dissimilarity(dissimilarity)
    sq = d * d
    c = sq - sq.mean(axis=0, keepdims=True)
    B = -0.5 * (c - c.mean(axis=1, keepdims=True))
    return _spectral_embedding(B, dims, keep_zero=True)


def gaussian_kernel(z, gamma: float) -> Array:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    z = np.asarray(z, dtype=np.float64)
    return np.exp(-gamma * z * z)


def kernel_pca(z, gamma: float = 1e-4, dims: int = 2) -> Embedding:
    """Kernel PCA with the kernel ``exp(-gamma z_ij^2)``."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] != z.shape[1]:
        raise ValueError("z must be a square matrix")
    K = gaussian_kernel(z, gamma)
    K = 0.5 * (K + K.T)
    c = K - K.mean(axis=0, keepdims=True)
    Kc = c - c.mean(axis=1, keepdims=True)
    return _spectral_embedding(Kc, dims, keep_zero=False)
