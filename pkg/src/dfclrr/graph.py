"""Affinity graphs for semi-supervised learning: kNN, sparse non-negative
coding (SPG), the two-step sparse low-rank graph, and harmonic propagation."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve
from scipy.spatial.distance import cdist

from .dfc import FactoredMatrix
from .errors import ContractViolation, ParameterError
from .linalg import as_matrix
from .segmentation import affinity_from_z

log = logging.getLogger(__name__)


@dataclass
class SparseGraph:
    """Weighted graph as parallel arrays of directed edges ``(i, j, w)``.

    A symmetric graph stores both orientations of every undirected edge.
    """

    n: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=int)
        self.cols = np.asarray(self.cols, dtype=int)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.rows.size and (min(self.rows.min(), self.cols.min()) < 0
                               or max(self.rows.max(), self.cols.max()) >= self.n):
            raise ContractViolation(f"edge endpoints must lie in [0, {self.n})")
        if np.any(self.rows == self.cols):
            raise ContractViolation("self-loops are not allowed")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise ContractViolation("edge weights must be finite and non-negative")

    @classmethod
    def from_matrix(cls, w, symmetric: bool) -> "SparseGraph":
        w = sp.coo_matrix(w)
        keep = (w.row != w.col) & (w.data != 0)
        order = np.lexsort((w.col[keep], w.row[keep]))
        return cls(
            n=w.shape[0],
            rows=w.row[keep][order],
            cols=w.col[keep][order],
            weights=w.data[keep][order],
            symmetric=symmetric,
        )

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.weights, (self.rows, self.cols)), shape=(self.n, self.n))

    def dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    @property
    def n_edges(self) -> int:
        return int(self.weights.size)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["i", "j", "weight"])
            for i, j, w in zip(self.rows, self.cols, self.weights):
                out.writerow([int(i), int(j), repr(float(w))])

    def to_json(self) -> dict:
        adj = {}
        for i, j, w in zip(self.rows, self.cols, self.weights):
            adj.setdefault(str(int(i)), {})[str(int(j))] = float(w)
        return {"n": self.n, "symmetric": self.symmetric, "adjacency": adj}

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def read_csv(cls, path, n: Optional[int] = None, symmetric: Optional[bool] = None) -> "SparseGraph":
        rows, cols, weights = [], [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise ParameterError(f"{path}: empty edge list")
            for rec in reader:
                if not rec:
                    continue
                rows.append(int(rec[0]))
                cols.append(int(rec[1]))
                weights.append(float(rec[2]))
        if n is None:
            n = max(rows + cols) + 1 if rows else 0
        g = cls(n=n, rows=rows, cols=cols, weights=weights)
        if symmetric is None:
            w = g.to_scipy()
            symmetric = (abs(w - w.T) > 0).nnz == 0
        g.symmetric = bool(symmetric)
        return g


def _symmetrize(w: sp.spmatrix, mode: str) -> sp.csr_matrix:
    w = sp.csr_matrix(w)
    if mode == "max":
        return w.maximum(w.T).tocsr()
    if mode == "mean":
        return ((w + w.T) / 2).tocsr()
    raise ParameterError(f"unknown symmetrization {mode!r}")


def knn_graph(x, k: int, sigma: Optional[float] = None) -> SparseGraph:
    """Undirected kNN graph over the columns of ``x`` with Gaussian weights.

    ``sigma`` defaults to the median length of the kNN edges (1.0 if that
    median is zero).  Distance ties are broken by lower column index.
    """
    x = as_matrix(x, "x")
    n = x.shape[1]
    if not 1 <= k < n:
        raise ParameterError(f"need 1 <= k < n, got k={k}, n={n}")
    if sigma is not None and not sigma > 0:
        raise ParameterError("sigma must be positive")
    d = cdist(x.T, x.T)
    np.fill_diagonal(d, np.inf)
    nbrs = np.argsort(d, axis=1, kind="stable")[:, :k]
    rows = np.repeat(np.arange(n), k)
    cols = nbrs.ravel()
    dist = d[rows, cols]
    if sigma is None:
        sigma = float(np.median(dist)) or 1.0
    adj = sp.coo_matrix((np.ones_like(dist), (rows, cols)), shape=(n, n)).tocsr()
    adj = adj.maximum(adj.T).tocoo()
    w = np.exp(-d[adj.row, adj.col] ** 2 / sigma**2)
    order = np.lexsort((adj.col, adj.row))
    return SparseGraph(n=n, rows=adj.row[order], cols=adj.col[order], weights=w[order], symmetric=True)


@dataclass(frozen=True)
class SpgOptions:
    alpha: float = 0.05
    n_k: int = 500
    max_iters: int = 10000
    tol: float = 1e-8

    def __post_init__(self):
        if not self.alpha > 0:
            raise ParameterError("alpha must be positive")
        if self.n_k < 1:
            raise ParameterError("n_k must be at least 1")


@dataclass
class SpgResult:
    w: np.ndarray
    converged: bool
    iterations: int
    kkt_residual: float


def spg_kkt_residual(x, d, w, alpha: float) -> float:
    """Largest violation of the optimality conditions of the non-negative lasso."""
    g = 2.0 * d.T @ (d @ w - x) + alpha
    return _kkt(g, w > 0)


def _kkt(g: np.ndarray, active: np.ndarray) -> float:
    if not g.size:
        return 0.0
    return float(np.max(np.where(active, np.abs(g), np.maximum(-g, 0.0))))


def _active_set_solve(gram, b, alpha, active):
    idx = np.flatnonzero(active)
    try:
        sol = np.linalg.solve(gram[np.ix_(idx, idx)], b[idx] - alpha / 2.0)
    except np.linalg.LinAlgError:
        return None
    if np.any(sol <= 0):
        return None
    w = np.zeros_like(b)
    w[idx] = sol
    return w


def spg_solve(x, d, opts: SpgOptions = SpgOptions()) -> SpgResult:
    """Minimize ``||x - D w||^2 + alpha ||w||_1`` over ``w >= 0``.

    Cyclic coordinate descent on the Gram form; stops once the KKT residual
    drops to ``opts.tol``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    d = as_matrix(d, "basis")
    if d.shape[0] != x.size:
        raise ParameterError("basis rows must match the sample dimension")
    p = d.shape[1]
    gram = d.T @ d
    b = d.T @ x
    diag = np.diag(gram).copy()
    w = np.zeros(p)
    gw = np.zeros(p)  # gram @ w, kept current
    alpha = opts.alpha
    resid = np.inf
    prev_active = np.zeros(p, dtype=bool)
    it = 0
    for it in range(1, opts.max_iters + 1):
        for j in range(p):
            if diag[j] == 0:
                continue
            grad = 2.0 * (gw[j] - b[j]) + alpha
            new = max(0.0, w[j] - grad / (2.0 * diag[j]))
            delta = new - w[j]
            if delta != 0.0:
                w[j] = new
                gw += delta * gram[:, j]
        g = 2.0 * (gw - b) + alpha
        active = w > 0
        resid = _kkt(g, active)
        if resid <= opts.tol:
            break
        if np.array_equal(active, prev_active) and active.any():
            # support settled: try the exact solve restricted to it
            polished = _active_set_solve(gram, b, alpha, active)
            if polished is not None:
                pg = 2.0 * (gram @ polished - b) + alpha
                pres = _kkt(pg, polished > 0)
                if pres < resid:
                    w, gw, resid = polished, gram @ polished, pres
                    if resid <= opts.tol:
                        break
        prev_active = active
    w = np.maximum(w, 0.0)
    return SpgResult(w=w, converged=resid <= opts.tol, iterations=it, kkt_residual=resid)


@dataclass
class SlrGraphResult:
    graph: SparseGraph
    non_converged: list


def slr_graph(
    m,
    z_hat: Union[np.ndarray, FactoredMatrix],
    opts: SpgOptions = SpgOptions(),
    rank: Optional[int] = None,
    symmetrize: str = "max",
    threads: int = 1,
) -> SlrGraphResult:
    """Two-step sparse low-rank graph.

    Neighbors of sample ``i`` are the ``n_k`` other samples with the largest
    projector affinity magnitude ``|A_ij|``; the non-negative lasso of ``x_i``
    over those columns gives the edge weights.
    """
    m = as_matrix(m, "m")
    n = m.shape[1]
    a = affinity_from_z(z_hat, rank)
    if a.shape[0] != n:
        raise ParameterError("representation is not column-aligned with the data")
    n_k = min(opts.n_k, n - 1)
    score = np.abs(a)
    np.fill_diagonal(score, -np.inf)

    def one(i):
        # stable sort on the negated score: equal affinities keep index order
        nbrs = np.argsort(-score[i], kind="stable")[:n_k]
        res = spg_solve(m[:, i], m[:, nbrs], opts)
        return nbrs, res

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(n)))
    else:
        results = [one(i) for i in range(n)]

    rows, cols, vals, bad = [], [], [], []
    for i, (nbrs, res) in enumerate(results):
        if not res.converged:
            bad.append(i)
        nz = res.w > 0
        rows.append(np.full(int(nz.sum()), i))
        cols.append(nbrs[nz])
        vals.append(res.w[nz])
    if bad:
        log.warning("%d SPG solves did not converge", len(bad))
    directed = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    if symmetrize == "none":
        g = SparseGraph.from_matrix(directed, symmetric=False)
    else:
        g = SparseGraph.from_matrix(_symmetrize(directed, symmetrize), symmetric=True)
    return SlrGraphResult(graph=g, non_converged=bad)


def spg_graph(m, opts: SpgOptions = SpgOptions(), symmetrize: str = "max") -> SlrGraphResult:
    """Plain SPG graph: each sample coded over its ``n_k`` nearest neighbors."""
    m = as_matrix(m, "m")
    n = m.shape[1]
    n_k = min(opts.n_k, n - 1)
    d = cdist(m.T, m.T)
    np.fill_diagonal(d, np.inf)
    rows, cols, vals, bad = [], [], [], []
    for i in range(n):
        nbrs = np.argsort(d[i], kind="stable")[:n_k]
        res = spg_solve(m[:, i], m[:, nbrs], opts)
        if not res.converged:
            bad.append(i)
        nz = res.w > 0
        rows.append(np.full(int(nz.sum()), i))
        cols.append(nbrs[nz])
        vals.append(res.w[nz])
    directed = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    if symmetrize == "none":
        return SlrGraphResult(SparseGraph.from_matrix(directed, symmetric=False), bad)
    return SlrGraphResult(SparseGraph.from_matrix(_symmetrize(directed, symmetrize), symmetric=True), bad)


@dataclass
class PropagationResult:
    scores: np.ndarray
    flagged: np.ndarray

    def predictions(self) -> np.ndarray:
        return np.argmax(self.scores, axis=1)


def label_propagate(g: SparseGraph, seeds, n_classes: Optional[int] = None, clamp: bool = True) -> PropagationResult:
    """Harmonic label propagation.

    ``seeds`` holds a class id per node, -1 for unlabeled.  Unlabeled scores
    solve ``L_uu F_u = W_ul Y_l``.  Unlabeled nodes in components without any
    seed receive uniform scores and are flagged.  With ``clamp=False`` seed
    rows are replaced by the weighted average of their neighbors' scores.
    """
    if not g.symmetric:
        raise ContractViolation("label propagation needs a symmetric graph")
    seeds = np.asarray(seeds, dtype=int)
    if seeds.shape != (g.n,):
        raise ParameterError("one seed entry per node is required")
    labeled = seeds >= 0
    if n_classes is None:
        n_classes = int(seeds.max()) + 1 if labeled.any() else 0
    if n_classes < 1:
        raise ParameterError("at least one seeded class is required")
    present = np.unique(seeds[labeled])
    if present.size != n_classes or np.any(present != np.arange(n_classes)):
        raise ParameterError("every class needs at least one seed")

    w = g.to_scipy()
    y = np.zeros((g.n, n_classes))
    y[np.flatnonzero(labeled), seeds[labeled]] = 1.0
    scores = y.copy()
    flagged = np.zeros(g.n, dtype=bool)

    _, comp = connected_components(w, directed=False)
    seeded_comps = set(comp[labeled].tolist())
    orphan = ~labeled & ~np.isin(comp, list(seeded_comps))
    scores[orphan] = 1.0 / n_classes
    flagged[orphan] = True

    solve = np.flatnonzero(~labeled & ~orphan)
    if solve.size:
        deg = np.asarray(w.sum(axis=1)).ravel()
        lap = sp.diags(deg) - w
        luu = lap[solve][:, solve].tocsc()
        rhs = w[solve][:, np.flatnonzero(labeled)] @ y[labeled]
        sol = spsolve(luu, rhs)
        scores[solve] = np.asarray(sol).reshape(solve.size, n_classes)

    if not clamp:
        deg = np.asarray(w.sum(axis=1)).ravel()
        idx = np.flatnonzero(labeled & (deg > 0))
        scores[idx] = (w[idx] @ scores) / deg[idx, None]
    return PropagationResult(scores=scores, flagged=flagged)
