"""Divide-factor-combine LRR: random column blocks, independent solves, column projection."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import NumericalDivergence, ParameterError, ZeroMatrixError
from .linalg import SvdOptions, as_matrix, compact_svd, numerical_rank
from .solver import Dictionary, LrrProblem, LrrSolution, SolverOptions, solve_lrr

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PartitionPlan:
    n: int
    blocks: List[np.ndarray]
    seed: Optional[int]

    @property
    def t(self) -> int:
        return len(self.blocks)

    def sizes(self) -> List[int]:
        return [len(b) for b in self.blocks]


@dataclass
class FactoredMatrix:
    """Low-rank matrix stored as ``basis @ coeff`` with orthonormal basis columns."""

    basis: np.ndarray
    coeff: np.ndarray

    @property
    def shape(self):
        return (self.basis.shape[0], self.coeff.shape[1])

    def dense(self) -> np.ndarray:
        return self.basis @ self.coeff


@dataclass
class DfcResult:
    z_hat: FactoredMatrix
    s: np.ndarray
    block_solutions: List[LrrSolution]
    plan: PartitionPlan
    anchor: int
    block_ranks: List[int]
    block_lambdas: List[float]
    wall_times: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return all(sol.converged for sol in self.block_solutions)

    def reported_time(self) -> float:
        """Parallel wall time: setup plus slowest block plus combine."""
        w = self.wall_times
        return w["setup"] + max(w["blocks"]) + w["combine"]

    def diagnostics(self) -> dict:
        return {
            "t": self.plan.t,
            "seed": self.plan.seed,
            "anchor": self.anchor,
            "block_sizes": self.plan.sizes(),
            "block_ranks": self.block_ranks,
            "block_lambdas": self.block_lambdas,
            "median_block_rank": float(np.median(self.block_ranks)),
            "rank": int(self.z_hat.basis.shape[1]),
            "blocks": [sol.diagnostics() for sol in self.block_solutions],
            "converged": self.converged,
        }


def partition_columns(n: int, t: int, seed=None) -> PartitionPlan:
    """Shuffle ``range(n)`` and cut it into ``t`` nearly equal blocks.

    The first ``n % t`` blocks receive one extra column.
    """
    if n < 1:
        raise ParameterError("n must be positive")
    if not 1 <= t <= n:
        raise ParameterError(f"need 1 <= t <= n, got t={t}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    base, extra = divmod(n, t)
    blocks = []
    start = 0
    for i in range(t):
        size = base + (1 if i < extra else 0)
        blocks.append(perm[start:start + size].copy())
        start += size
    return PartitionPlan(n=n, blocks=blocks, seed=seed)


def column_project(
    blocks: Sequence[np.ndarray],
    anchor_index: int = 0,
    order: Optional[Sequence[np.ndarray]] = None,
    rank_tol: float = 1e-8,
):
    """Project the concatenated blocks onto the anchor block's column space.

    If ``order`` is given, block ``i`` supplies the columns ``order[i]`` of the
    output, so the coefficient matrix comes back in original column order.

    Returns
    -------
    (basis, coeff)
        ``basis @ coeff == U U.T [blocks...]`` with ``U`` the anchor's left
        singular vectors.
    """
    if not blocks:
        raise ParameterError("no blocks to combine")
    if not 0 <= anchor_index < len(blocks):
        raise ParameterError(f"anchor index {anchor_index} out of range")
    rows = {np.shape(b)[0] for b in blocks}
    if len(rows) != 1:
        raise ParameterError("blocks must share a row count")
    try:
        basis = compact_svd(blocks[anchor_index], SvdOptions(rank_tol=rank_tol)).u
    except ZeroMatrixError:
        raise ZeroMatrixError("degenerate anchor: anchor block is zero") from None
    if order is None:
        full = np.hstack(blocks)
    else:
        n = sum(len(o) for o in order)
        full = np.empty((rows.pop(), n))
        for b, idx in zip(blocks, order):
            full[:, idx] = b
    return basis, basis.T @ full


def dfc_lrr(
    m,
    t: int,
    lam: float,
    opts: SolverOptions = SolverOptions(),
    seed=None,
    parallelism: int = 1,
    anchor: int = 0,
    scale_lambda: bool = True,
) -> DfcResult:
    """Run divide-factor-combine LRR on the columns of ``m``.

    Every block is solved against the full ``m`` as dictionary.  The
    partition is fixed before any work is dispatched and results land in
    pre-assigned slots, so the output does not depend on ``parallelism``.

    ``lam`` is the regularizer of the equivalent full problem.  With
    ``scale_lambda`` (the default) block ``i`` uses ``lam * sqrt(n / l_i)``,
    matching the ``1/sqrt(columns)`` dependence of the recovery guarantee;
    otherwise every block uses ``lam`` unchanged.
    """
    m = as_matrix(m, "m")
    n = m.shape[1]
    if not lam > 0:
        raise ParameterError("lambda must be positive")
    plan = partition_columns(n, t, seed)
    if not 0 <= anchor < plan.t:
        raise ParameterError(f"anchor {anchor} out of range for t={plan.t}")

    t0 = time.perf_counter()
    dic = Dictionary(m)
    setup = time.perf_counter() - t0

    def sol_lam(i):
        return lam * math.sqrt(n / len(plan.blocks[i])) if scale_lambda else lam

    def work(i):
        start = time.perf_counter()
        problem = LrrProblem(m, m[:, plan.blocks[i]], sol_lam(i))
        try:
            sol = solve_lrr(problem, opts, dictionary=dic)
        except NumericalDivergence as exc:
            raise NumericalDivergence(f"block {i}: {exc}", block=i) from exc
        return sol, time.perf_counter() - start

    if parallelism <= 1 or plan.t == 1:
        outcomes = [work(i) for i in range(plan.t)]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(work, range(plan.t)))
    sols = [o[0] for o in outcomes]
    block_times = [o[1] for o in outcomes]
    for i, sol in enumerate(sols):
        if not sol.converged:
            log.warning("dfc block %d did not converge (residual %.3e)", i, sol.primal_residual)

    t1 = time.perf_counter()
    basis, coeff = column_project([s.z for s in sols], anchor, order=plan.blocks)
    combine = time.perf_counter() - t1

    s_full = np.empty((m.shape[0], n))
    for sol, idx in zip(sols, plan.blocks):
        s_full[:, idx] = sol.s
    ranks = [numerical_rank(np.linalg.svd(s.z, compute_uv=False)) for s in sols]
    return DfcResult(
        z_hat=FactoredMatrix(basis, coeff),
        s=s_full,
        block_solutions=sols,
        plan=plan,
        anchor=anchor,
        block_ranks=ranks,
        block_lambdas=[sol_lam(i) for i in range(plan.t)],
        wall_times={"setup": setup, "blocks": block_times, "combine": combine},
    )


def sample_size_bound(
    r: int, mu: float, n: int, delta: float, gamma: float, gamma_star: float, c: float
) -> int:
    """Columns per block needed for high-probability recovery:
    ``ceil(c r mu log(4n/delta) / (gamma* - gamma)^2)``."""
    if not gamma < gamma_star:
        raise ParameterError("bound undefined unless gamma < gamma_star")
    if not c > 1:
        raise ParameterError("c must exceed 1")
    if not delta > 0:
        raise ParameterError("delta must be positive")
    if r < 1 or n < 1 or mu <= 0:
        raise ParameterError("r, n and mu must be positive")
    value = c * r * mu * math.log(4 * n / delta) / (gamma_star - gamma) ** 2
    # guard against ceil(1.0000000000000002) style float noise
    return int(math.ceil(value - 1e-9 * max(1.0, value)))
