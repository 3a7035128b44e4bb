"""Recovery-theory diagnostics: coherence, RWD constant, critical outlier
fraction, and the oracle-constraint success check."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Tuple, Union

import numpy as np

from .dfc import FactoredMatrix
from .errors import ParameterError, ZeroMatrixError
from .linalg import SvdOptions, as_matrix, compact_svd

DEFAULT_EPSILON = 1e-4


@dataclass(frozen=True)
class TheoryParams:
    rank_r: int
    mu: float
    beta: float
    gamma_star: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RecoveryReport:
    rowspace_residual: float
    support_residual: float
    success: bool
    tolerance: float

    def to_dict(self) -> dict:
        return asdict(self)


def coherence(l, rank_tol: float = 1e-8) -> Tuple[float, int]:
    """Return ``(mu, r)`` with ``mu = (n / r) * max_j ||V[j, :]||^2``."""
    l = as_matrix(l)
    try:
        svd = compact_svd(l, SvdOptions(rank_tol=rank_tol))
    except ZeroMatrixError:
        raise ZeroMatrixError("coherence of the zero matrix is undefined") from None
    n = l.shape[1]
    r = svd.rank
    mu = n / r * float(np.max(np.sum(svd.v**2, axis=1)))
    return mu, r


def rwd_beta(m, l0, rank_tol: float = 1e-8) -> float:
    """Largest ``beta`` with ``||S_M^-1 V_M^T V_L0|| <= 1 / (beta ||M||)``."""
    m = as_matrix(m, "m")
    l0 = as_matrix(l0, "l0")
    if m.shape[1] != l0.shape[1]:
        raise ParameterError("m and l0 must have the same column count")
    try:
        sm = compact_svd(m, SvdOptions(rank_tol=rank_tol))
        sl = compact_svd(l0, SvdOptions(rank_tol=rank_tol))
    except ZeroMatrixError:
        raise ZeroMatrixError("degenerate SVD: m or l0 is zero") from None
    inner = (sm.v.T @ sl.v) / sm.sigma[:, None]
    norm = float(np.linalg.norm(inner, 2))
    if norm == 0:
        raise ZeroMatrixError("degenerate SVD: row spaces of m and l0 are orthogonal")
    return 1.0 / (float(sm.sigma[0]) * norm)


def gamma_star(beta: float, mu: float, r: int) -> float:
    if not beta > 0:
        raise ParameterError("beta must be positive")
    if not mu >= 1:
        raise ParameterError("mu must be at least 1")
    if r < 1:
        raise ParameterError("r must be at least 1")
    num = 324.0 * beta**2
    return num / (num + 49.0 * (11.0 + 4.0 * beta) ** 2 * mu * r)


def theory_params(m, l0, rank_tol: float = 1e-8) -> TheoryParams:
    """Coherence of the clean matrix, its RWD constant, and the implied gamma*."""
    mu, r = coherence(l0, rank_tol)
    beta = rwd_beta(m, l0, rank_tol)
    return TheoryParams(rank_r=r, mu=mu, beta=beta, gamma_star=gamma_star(beta, mu, r))


def check_recovery(
    z: Union[np.ndarray, FactoredMatrix],
    l0,
    outlier_support: Iterable[int],
    s,
    epsilon: float = DEFAULT_EPSILON,
    rank_tol: float = 1e-8,
) -> RecoveryReport:
    """Test the oracle constraints ``P_rowspace(L0) Z = Z`` and ``P_I(S) = S``.

    Residuals are relative, ``||violation||_F / max(1, ||.||_F)``; success
    needs both at or below ``epsilon``.
    """
    l0 = as_matrix(l0, "l0")
    v = compact_svd(l0, SvdOptions(rank_tol=rank_tol)).v
    if isinstance(z, FactoredMatrix):
        # residual of basis @ coeff computed without forming the n x n product
        pb = z.basis - v @ (v.T @ z.basis)
        resid = pb @ z.coeff
        z_norm = float(np.linalg.norm(z.coeff))
    else:
        z = as_matrix(z, "z")
        resid = z - v @ (v.T @ z)
        z_norm = float(np.linalg.norm(z))
    if resid.shape[0] != l0.shape[1]:
        raise ParameterError("z rows must match the column count of l0")
    row_res = float(np.linalg.norm(resid)) / max(1.0, z_norm)

    s = as_matrix(s, "s")
    mask = np.ones(s.shape[1], dtype=bool)
    support = np.fromiter(outlier_support, dtype=int)
    mask[support] = False
    sup_res = float(np.linalg.norm(s[:, mask])) / max(1.0, float(np.linalg.norm(s)))
    ok = row_res <= epsilon and sup_res <= epsilon
    return RecoveryReport(
        rowspace_residual=row_res, support_residual=sup_res, success=bool(ok), tolerance=epsilon
    )
