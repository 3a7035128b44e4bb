"""Dense matrix helpers and the decompositions the rest of the package uses.

Matrices are plain ``numpy.ndarray`` objects of dtype float64.  ``as_matrix``
is the single validating entry point; everything downstream assumes its
output is two-dimensional and finite.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import ContractViolation, ParameterError, ZeroMatrixError

DFCM_MAGIC = b"DFCM"

PathLike = Union[str, Path]


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array, raising on anything else."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ParameterError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ParameterError(f"{name} must have positive dimensions, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class SvdOptions:
    rank_tol: float = 1e-8
    max_rank: Optional[int] = None
    power_iters: int = 100

    def __post_init__(self):
        if not self.rank_tol > 0:
            raise ParameterError("rank_tol must be positive")
        if self.power_iters < 1:
            raise ParameterError("power_iters must be at least 1")
        if self.max_rank is not None and self.max_rank < 1:
            raise ParameterError("max_rank must be at least 1")


@dataclass(frozen=True)
class CompactSVD:
    """Factored ``u @ diag(sigma) @ v.T`` with orthonormal factors."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.sigma.size)

    def dense(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T


def _fix_signs(u: np.ndarray, vt: np.ndarray):
    # largest-magnitude entry of each left vector made positive
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, vt * signs[:, None]


def _full_svd(a: np.ndarray):
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return u, s, vt


def numerical_rank(sigma: np.ndarray, rank_tol: float = 1e-8) -> int:
    if sigma.size == 0 or sigma[0] == 0:
        return 0
    return int(np.count_nonzero(sigma > rank_tol * sigma[0]))


def compact_svd(a, opts: SvdOptions = SvdOptions()) -> CompactSVD:
    """Compact SVD keeping singular values above ``rank_tol * sigma_1``.

    Raises
    ------
    ZeroMatrixError
        If ``a`` has no nonzero singular value.
    """
    a = as_matrix(a)
    u, s, vt = _full_svd(a)
    r = numerical_rank(s, opts.rank_tol)
    if r == 0:
        raise ZeroMatrixError("zero matrix has no compact SVD")
    if opts.max_rank is not None:
        r = min(r, opts.max_rank)
    u, vt = _fix_signs(u[:, :r], vt[:r])
    return CompactSVD(u=u, sigma=s[:r].copy(), v=vt.T.copy())


def truncated_svd(a, k: int) -> CompactSVD:
    """Best rank-``k`` approximation factors (Eckart-Young)."""
    a = as_matrix(a)
    if not 1 <= k <= min(a.shape):
        raise ParameterError(f"k={k} outside [1, {min(a.shape)}]")
    u, s, vt = _full_svd(a)
    if s[0] == 0:
        raise ZeroMatrixError("zero matrix has no truncated SVD")
    u, vt = _fix_signs(u[:, :k], vt[:k])
    return CompactSVD(u=u, sigma=s[:k].copy(), v=vt.T.copy())


def spectral_norm(a, power_iters: int = 100, rtol: float = 1e-14) -> float:
    """Largest singular value by power iteration on ``a.T @ a``.

    The start vector is drawn from a fixed-seed generator so repeated calls
    agree bit for bit.
    """
    a = as_matrix(a)
    if power_iters < 1:
        raise ParameterError("power_iters must be at least 1")
    if not np.any(a):
        raise ZeroMatrixError("spectral norm of the zero matrix is undefined here")
    x = np.random.default_rng(0).standard_normal(a.shape[1])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(power_iters):
        y = a.T @ (a @ x)
        ny = np.linalg.norm(y)
        if ny == 0:
            # start vector landed in the null space
            x = np.ones(a.shape[1]) / np.sqrt(a.shape[1])
            continue
        new = np.sqrt(x @ y)
        x = y / ny
        if abs(new - est) <= rtol * new:
            est = new
            break
        est = new
    return float(np.linalg.norm(a @ x))


def col_l2_norms(a) -> np.ndarray:
    return np.linalg.norm(as_matrix(a), axis=0)


def nuclear_norm(a) -> float:
    return float(np.linalg.svd(as_matrix(a), compute_uv=False).sum())


def l21_norm(a) -> float:
    return float(col_l2_norms(a).sum())


def check_orthonormal(basis: np.ndarray, tol: float = 1e-8) -> None:
    gram = basis.T @ basis
    err = np.max(np.abs(gram - np.eye(gram.shape[0]))) if gram.size else 0.0
    if err > tol:
        raise ContractViolation(f"basis columns are not orthonormal (max deviation {err:.3g})")


def project_onto_colspace(basis, a) -> np.ndarray:
    """Orthogonal projection ``basis @ (basis.T @ a)``; basis must be orthonormal."""
    basis = as_matrix(basis, "basis")
    a = as_matrix(a)
    if basis.shape[0] != a.shape[0]:
        raise ParameterError("basis and matrix row counts differ")
    check_orthonormal(basis)
    return basis @ (basis.T @ a)


def principal_angles(a, b, rank_tol: float = 1e-8) -> np.ndarray:
    """Principal angles (radians, ascending) between the column spaces of a and b."""
    qa = compact_svd(a, SvdOptions(rank_tol=rank_tol)).u
    qb = compact_svd(b, SvdOptions(rank_tol=rank_tol)).u
    if qa.shape[1] != qb.shape[1]:
        # differing dimensions: the extra directions are at a right angle
        k = min(qa.shape[1], qb.shape[1])
        cos = np.linalg.svd(qa.T @ qb, compute_uv=False)[:k]
        angles = np.arccos(np.clip(cos, -1.0, 1.0))
        return np.concatenate([angles, np.full(abs(qa.shape[1] - qb.shape[1]), np.pi / 2)])
    # sine form is accurate for tiny angles where arccos is not
    resid = qb - qa @ (qa.T @ qb)
    sines = np.linalg.svd(resid, compute_uv=False)
    return np.sort(np.arcsin(np.clip(sines, 0.0, 1.0)))


# ---------------------------------------------------------------------------
# file formats


def write_csv(path: PathLike, a) -> None:
    a = as_matrix(a)
    with open(path, "w") as fh:
        for row in a:
            fh.write(",".join(repr(float(x)) for x in row))
            fh.write("\n")


def read_csv(path: PathLike) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise ParameterError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ParameterError(f"{path}: empty matrix file")
    if len({len(r) for r in rows}) != 1:
        raise ParameterError(f"{path}: ragged rows")
    return as_matrix(rows, str(path))


def write_dfcm(path: PathLike, a) -> None:
    a = as_matrix(a)
    rows, cols = a.shape
    with open(path, "wb") as fh:
        fh.write(DFCM_MAGIC)
        fh.write(struct.pack("<QQ", rows, cols))
        fh.write(np.asarray(a, dtype="<f8").tobytes(order="F"))


def read_dfcm(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != DFCM_MAGIC:
        raise ParameterError(f"{path}: bad magic bytes")
    if len(data) < 20:
        raise ParameterError(f"{path}: truncated header")
    rows, cols = struct.unpack("<QQ", data[4:20])
    body = data[20:]
    if len(body) != 8 * rows * cols:
        raise ParameterError(f"{path}: expected {rows * cols} values, found {len(body) // 8}")
    arr = np.frombuffer(body, dtype="<f8").reshape((rows, cols), order="F")
    return as_matrix(arr.astype(np.float64), str(path))


def read_matrix(path: PathLike) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == DFCM_MAGIC:
        return read_dfcm(path)
    return read_csv(path)


def write_matrix(path: PathLike, a, fmt: str = "csv") -> None:
    if fmt == "dfcm":
        write_dfcm(path, a)
    elif fmt in ("csv", "json"):
        write_csv(path, a)
    else:
        raise ParameterError(f"unknown matrix format {fmt!r}")
