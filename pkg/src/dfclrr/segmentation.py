"""Clustering a low-rank representation: affinity, spectral embedding,
k-means and majority-vote accuracy."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Optional, Union

import numpy as np

from .dfc import FactoredMatrix
from .errors import ContractViolation, ParameterError, ZeroMatrixError
from .linalg import as_matrix, numerical_rank


@dataclass
class Labeling:
    labels: np.ndarray
    k: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.k):
            raise ParameterError("cluster ids must lie in [0, k)")


@dataclass
class AccuracyReport:
    accuracy: float
    overall_accuracy: float
    cluster_to_class: Dict[int, int]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "overall_accuracy": self.overall_accuracy,
            "cluster_to_class": {str(c): int(v) for c, v in sorted(self.cluster_to_class.items())},
        }


def left_singular_vectors(z: Union[np.ndarray, FactoredMatrix], rank: Optional[int] = None) -> np.ndarray:
    if isinstance(z, FactoredMatrix):
        u, s, _ = np.linalg.svd(z.coeff, full_matrices=False)
        u = z.basis @ u
    else:
        z = as_matrix(z, "z")
        u, s, _ = np.linalg.svd(z, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise ZeroMatrixError("affinity of a zero representation is undefined")
    if rank is None:
        rank = numerical_rank(s)
    if not 1 <= rank <= s.size:
        raise ParameterError(f"rank {rank} outside [1, {s.size}]")
    return u[:, :rank]


def affinity_from_z(z: Union[np.ndarray, FactoredMatrix], rank: Optional[int] = None) -> np.ndarray:
    """Projector ``U U^T`` onto the top-``rank`` left singular vectors of ``z``.

    ``rank`` defaults to the numerical rank of ``z``.
    """
    u = left_singular_vectors(z, rank)
    a = u @ u.T
    return (a + a.T) / 2


def spectral_embed(a, k: int, normalized: bool = False) -> np.ndarray:
    """Top-``k`` eigenvectors of a symmetric affinity, one row per node.

    With ``normalized`` the eigenvectors come from ``D^-1/2 |A| D^-1/2``
    and rows are rescaled to unit length.
    """
    a = as_matrix(a, "affinity")
    n = a.shape[0]
    if a.shape[1] != n or np.max(np.abs(a - a.T)) > 1e-8:
        raise ContractViolation("affinity must be square and symmetric")
    if not 1 <= k <= n:
        raise ParameterError(f"k={k} outside [1, {n}]")
    if normalized:
        w = np.abs(a)
        np.fill_diagonal(w, 0.0)
        deg = w.sum(axis=1)
        inv = np.zeros_like(deg)
        inv[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
        a = inv[:, None] * w * inv[None, :]
    _, vecs = np.linalg.eigh((a + a.T) / 2)
    emb = vecs[:, ::-1][:, :k]
    if normalized:
        norms = np.linalg.norm(emb, axis=1)
        norms[norms == 0] = 1.0
        emb = emb / norms[:, None]
    return emb


def _wcss(points, centers, labels) -> float:
    return float(np.sum((points - centers[labels]) ** 2))


def _assign(points, centers):
    d = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    # argmin returns the first minimum: ties go to the lowest centroid index
    return np.argmin(d, axis=1), d


def _lloyd(points, k, rng, max_iters, history=None):
    n = points.shape[0]
    # k-means++ seeding
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total == 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[c] = points[idx]
        closest = np.minimum(closest, ((points - centers[c]) ** 2).sum(axis=1))

    labels, dist = _assign(points, centers)
    prev = _wcss(points, centers, labels)
    for _ in range(max_iters):
        new_centers = centers.copy()
        for c in range(k):
            members = labels == c
            if members.any():
                new_centers[c] = points[members].mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its centroid
                far = int(np.argmax(dist[np.arange(n), labels]))
                new_centers[c] = points[far]
        new_labels, dist = _assign(points, new_centers)
        cur = _wcss(points, new_centers, new_labels)
        assert cur <= prev * (1 + 1e-12) + 1e-12, "k-means objective increased"
        if history is not None:
            history.append(cur)
        converged = np.array_equal(new_labels, labels)
        centers, labels, prev = new_centers, new_labels, cur
        if converged:
            break
    return labels, prev


def kmeans(points, k: int, seed=0, restarts: int = 10, max_iters: int = 300, threads: int = 1):
    """Lloyd's algorithm with k-means++ starts; best restart by WCSS.

    Restart ``i`` draws from ``SeedSequence(seed).spawn`` child ``i``, so the
    result depends only on ``seed`` and ``restarts``; ties between restarts go
    to the lower index.

    Returns
    -------
    (Labeling, float)
        The labeling and its within-cluster sum of squares.
    """
    points = as_matrix(points, "points")
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ParameterError(f"k={k} outside [1, {n}]")
    if np.unique(points, axis=0).shape[0] < k:
        raise ParameterError("fewer distinct points than clusters")
    children = np.random.SeedSequence(seed).spawn(restarts)

    def run(ss):
        return _lloyd(points, k, np.random.default_rng(ss), max_iters)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, children))
    else:
        results = [run(ss) for ss in children]
    best = min(range(restarts), key=lambda i: (results[i][1], i))
    labels, wcss = results[best]
    return Labeling(_canonical(labels), k), wcss


def _canonical(labels: np.ndarray) -> np.ndarray:
    # renumber clusters by first appearance so equal partitions compare equal
    mapping = {}
    out = np.empty_like(labels)
    for i, lab in enumerate(labels):
        out[i] = mapping.setdefault(int(lab), len(mapping))
    return out


def segmentation_accuracy(pred: Labeling, truth) -> AccuracyReport:
    """Majority-vote accuracy.

    Each predicted cluster is mapped to its most frequent true class (ties to
    the lowest class id).  ``accuracy`` averages the per-class fraction of
    correctly labelled points; ``overall_accuracy`` is the plain fraction.
    """
    p = np.asarray(pred.labels if isinstance(pred, Labeling) else pred, dtype=int)
    t = np.asarray(truth, dtype=int)
    if p.size == 0:
        raise ParameterError("empty labeling")
    if p.shape != t.shape:
        raise ParameterError("prediction and truth lengths differ")
    classes = np.unique(t)
    mapping = {}
    for c in np.unique(p):
        votes = t[p == c]
        vals, counts = np.unique(votes, return_counts=True)
        mapping[int(c)] = int(vals[np.argmax(counts)])
    assigned = np.array([mapping[int(c)] for c in p])
    correct = assigned == t
    per_class = [correct[t == c].mean() for c in classes]
    return AccuracyReport(
        accuracy=float(np.mean(per_class)),
        overall_accuracy=float(correct.mean()),
        cluster_to_class=mapping,
    )


def segment(
    z: Union[np.ndarray, FactoredMatrix],
    k: int,
    rank: Optional[int] = None,
    seed=0,
    restarts: int = 10,
    normalized: bool = True,
    threads: int = 1,
) -> Labeling:
    """Affinity -> spectral embedding -> k-means on the columns of ``z``.

    The projector affinity of an ideal representation has a repeated
    eigenvalue 1, so its raw top-k eigenvectors are not unique; the default
    therefore embeds the normalized ``|A|`` instead.
    """
    a = affinity_from_z(z, rank)
    emb = spectral_embed(a, k, normalized=normalized)
    labeling, _ = kmeans(emb, k, seed=seed, restarts=restarts, threads=threads)
    return labeling

