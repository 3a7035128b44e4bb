"""Inexact augmented Lagrangian solver for low-rank representation.

Solves

    min ||Z||_* + lam * ||S||_{2,1}   s.t.   C = M @ Z + S

for a dictionary ``M`` (m x n) and observation ``C`` (m x l).  ``C = M`` gives
plain LRR; a column block of ``M`` gives one divide-and-conquer subproblem.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import NumericalDivergence, ParameterError
from .linalg import as_matrix, l21_norm, nuclear_norm

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LrrProblem:
    dictionary: np.ndarray
    observation: np.ndarray
    lam: float

    def __post_init__(self):
        d = as_matrix(self.dictionary, "dictionary")
        c = as_matrix(self.observation, "observation")
        if d.shape[0] != c.shape[0]:
            raise ParameterError(
                f"dictionary has {d.shape[0]} rows but observation has {c.shape[0]}"
            )
        if not self.lam > 0:
            raise ParameterError("lambda must be positive")
        object.__setattr__(self, "dictionary", d)
        object.__setattr__(self, "observation", c)


@dataclass(frozen=True)
class SolverOptions:
    mu0: float = 1e-6
    rho: float = 1.1
    mu_max: float = 1e10
    tol_primal: float = 1e-8
    max_iters: int = 1000

    def __post_init__(self):
        if not 0 < self.mu0 < self.mu_max:
            raise ParameterError("need 0 < mu0 < mu_max")
        if not self.rho > 1:
            raise ParameterError("rho must exceed 1")
        if not self.tol_primal > 0:
            raise ParameterError("tol_primal must be positive")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be at least 1")


@dataclass
class LrrSolution:
    z: np.ndarray
    s: np.ndarray
    objective: float
    primal_residual: float
    iterations: int
    converged: bool

    def diagnostics(self) -> dict:
        return {
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "objective": self.objective,
            "converged": self.converged,
        }


def svt(a, tau: float) -> np.ndarray:
    """Singular value thresholding, the prox of ``tau * ||.||_*``."""
    if not tau > 0:
        raise ParameterError("tau must be positive")
    a = np.asarray(a, dtype=np.float64)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    keep = int(np.count_nonzero(s > tau))
    if keep == 0:
        return np.zeros_like(a)
    return (u[:, :keep] * (s[:keep] - tau)) @ vt[:keep]


def col_shrink(a, tau: float) -> np.ndarray:
    """Column-wise shrinkage, the prox of ``tau * ||.||_{2,1}``."""
    if not tau > 0:
        raise ParameterError("tau must be positive")
    a = np.asarray(a, dtype=np.float64)
    norms = np.linalg.norm(a, axis=0)
    scale = np.zeros_like(norms)
    big = norms > tau
    scale[big] = 1.0 - tau / norms[big]
    return a * scale


def default_lambda_theory(m_norm: float, gamma_star: float, l: int) -> float:
    """Regularizer ``3 / (7 ||M|| sqrt(gamma* l))`` from the recovery guarantee."""
    if not 0 < gamma_star <= 1:
        raise ParameterError("gamma_star must lie in (0, 1]")
    if not m_norm > 0:
        raise ParameterError("m_norm must be positive")
    if l < 1:
        raise ParameterError("l must be at least 1")
    return 3.0 / (7.0 * m_norm * math.sqrt(gamma_star * l))


def default_lambda_practical(m: int, n: int) -> float:
    if m < 1 or n < 1:
        raise ParameterError("dimensions must be positive")
    return 1.0 / math.sqrt(max(m, n))


class Dictionary:
    """Row-space reduction of a dictionary, shared read-only across solves.

    Any minimizer has its columns in the row space of ``M`` (projecting Z
    onto that space keeps ``M @ Z`` and cannot raise the nuclear norm), so we
    solve in the coordinates ``Z = Q @ W`` where ``M = U diag(s) Q.T``.  With
    ``A = M @ Q = U diag(s)`` the Gram system ``I + A.T A`` is diagonal.
    """

    def __init__(self, m, rank_tol: float = 1e-12):
        m = as_matrix(m, "dictionary")
        self.matrix = m
        u, s, vt = np.linalg.svd(m, full_matrices=False)
        r = int(np.count_nonzero(s > rank_tol * s[0])) if s[0] > 0 else 0
        self.q = vt[:r].T.copy()
        self.a = u[:, :r] * s[:r]
        self.sv = s[:r].copy()
        self.gram_inv = 1.0 / (1.0 + self.sv**2)

    @property
    def shape(self):
        return self.matrix.shape


def _solve_reduced(dic: Dictionary, c: np.ndarray, lam: float, opts: SolverOptions) -> LrrSolution:
    m, n = dic.shape
    l = c.shape[1]
    r = dic.q.shape[1]
    c_norm = max(1.0, float(np.linalg.norm(c)))

    w = np.zeros((r, l))
    j = np.zeros((r, l))
    s = np.zeros((m, l))
    y1 = np.zeros((m, l))
    y2 = np.zeros((r, l))
    mu = opts.mu0
    a = dic.a
    at_c = a.T @ c

    it = 0
    stopped = False
    for it in range(1, opts.max_iters + 1):
        j = svt(w + y2 / mu, 1.0 / mu) if r else j
        w = dic.gram_inv[:, None] * (at_c - a.T @ s + j + (a.T @ y1 - y2) / mu)
        aw = a @ w
        s = col_shrink(c - aw + y1 / mu, lam / mu)

        r1 = c - aw - s
        r2 = w - j
        e1 = np.linalg.norm(r1) / c_norm
        e2 = np.linalg.norm(r2) / c_norm
        if not (math.isfinite(e1) and math.isfinite(e2)):
            raise NumericalDivergence(f"non-finite residual at iteration {it}")
        if e1 <= opts.tol_primal and e2 <= opts.tol_primal:
            stopped = True
            break
        y1 += mu * r1
        y2 += mu * r2
        mu = min(opts.rho * mu, opts.mu_max)

    z = dic.q @ w
    resid = float(np.linalg.norm(c - dic.matrix @ z - s) / c_norm)
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(s))):
        raise NumericalDivergence("non-finite solution")
    objective = nuclear_norm(z) + lam * l21_norm(s)
    converged = stopped and resid <= opts.tol_primal
    log.debug("lrr: %d iterations, residual %.3e, converged=%s", it, resid, converged)
    return LrrSolution(
        z=z, s=s, objective=objective, primal_residual=resid, iterations=it, converged=converged
    )


def solve_lrr(problem: LrrProblem, opts: SolverOptions = SolverOptions(), dictionary: Dictionary | None = None) -> LrrSolution:
    """Solve one LRR program.

    Parameters
    ----------
    problem
        Dictionary, observation and regularizer.
    opts
        Augmented Lagrangian schedule and stopping rule.
    dictionary
        Optional precomputed reduction of ``problem.dictionary``; lets several
        solves against the same dictionary share one SVD.

    Returns
    -------
    LrrSolution
        ``converged`` is False when ``max_iters`` ran out first.
    """
    if dictionary is None:
        dictionary = Dictionary(problem.dictionary)
    elif dictionary.matrix is not problem.dictionary and not np.array_equal(
        dictionary.matrix, problem.dictionary
    ):
        raise ParameterError("precomputed dictionary does not match the problem")
    c = problem.observation
    if not np.any(c):
        n, l = problem.dictionary.shape[1], c.shape[1]
        return LrrSolution(
            z=np.zeros((n, l)), s=np.zeros_like(c), objective=0.0,
            primal_residual=0.0, iterations=0, converged=True,
        )
    return _solve_reduced(dictionary, c, problem.lam, opts)


def options_dict(opts: SolverOptions) -> dict:
    return asdict(opts)
