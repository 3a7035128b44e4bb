"""Synthetic robust subspace segmentation data with ground truth.

Randomness comes from numpy's PCG64 generator (``numpy.random.default_rng``)
seeded with the config seed, so a config reproduces its dataset exactly on
any platform with the same numpy stream guarantees.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .linalg import numerical_rank, write_matrix


@dataclass(frozen=True)
class SynthConfig:
    k: int = 3
    m: int = 300
    r: int = 5
    n_s: int = 100
    gamma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.k, self.m, self.r, self.n_s) < 1:
            raise ParameterError("k, m, r and n_s must be positive")
        if self.r > self.m:
            raise ParameterError("subspace rank r cannot exceed ambient dimension m")
        if not 0 <= self.gamma < 1:
            raise ParameterError("gamma must lie in [0, 1)")

    @property
    def n_outliers(self) -> int:
        return outlier_count(self.gamma, self.k, self.n_s)


def outlier_count(gamma: float, k: int, n_s: int) -> int:
    # round half up; the slack absorbs float noise in exact ties
    x = gamma / (1.0 - gamma) * k * n_s
    return int(math.floor(x + 0.5 + 1e-9))


@dataclass
class SynthDataset:
    m_matrix: np.ndarray
    clean_columns: np.ndarray
    outlier_support: np.ndarray
    labels: np.ndarray
    sigma: float
    config: SynthConfig
    # m_matrix[:, j] == [X0 S][:, perm[j]]
    perm: np.ndarray = field(default=None)

    @property
    def n(self) -> int:
        return self.m_matrix.shape[1]

    def l0(self) -> np.ndarray:
        """Clean matrix in the column frame of ``m_matrix`` (outlier columns zero)."""
        out = self.m_matrix.copy()
        out[:, self.outlier_support] = 0.0
        return out

    def column_labels(self) -> np.ndarray:
        """Subspace id per column of ``m_matrix``; outliers get -1."""
        lab = np.full(self.n, -1, dtype=int)
        lab[self.clean_columns] = self.labels
        return lab

    def sidecar(self) -> dict:
        return {
            "clean_columns": self.clean_columns.tolist(),
            "outlier_support": self.outlier_support.tolist(),
            "labels": self.labels.tolist(),
            "sigma": self.sigma,
            "perm": self.perm.tolist() if self.perm is not None else None,
            "config": asdict(self.config),
        }

    def save(self, directory, fmt: str = "csv") -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        ext = "dfcm" if fmt == "dfcm" else "csv"
        write_matrix(directory / f"M.{ext}", self.m_matrix, ext)
        (directory / "dataset.json").write_text(json.dumps(self.sidecar(), indent=2) + "\n")
        return directory

    @classmethod
    def from_sidecar(cls, m_matrix: np.ndarray, meta: dict) -> "SynthDataset":
        perm = meta.get("perm")
        return cls(
            m_matrix=m_matrix,
            clean_columns=np.asarray(meta["clean_columns"], dtype=int),
            outlier_support=np.asarray(meta["outlier_support"], dtype=int),
            labels=np.asarray(meta["labels"], dtype=int),
            sigma=float(meta["sigma"]),
            config=SynthConfig(**meta["config"]),
            perm=None if perm is None else np.asarray(perm, dtype=int),
        )


def random_orthonormal(rng: np.random.Generator, m: int, r: int) -> np.ndarray:
    """Haar-distributed m x r matrix with orthonormal columns."""
    q, rr = np.linalg.qr(rng.standard_normal((m, r)))
    signs = np.sign(np.diag(rr))
    signs[signs == 0] = 1.0
    return q * signs


def gen_dataset(cfg: SynthConfig) -> SynthDataset:
    rng = np.random.default_rng(cfg.seed)
    blocks = []
    for _ in range(cfg.k):
        u = random_orthonormal(rng, cfg.m, cfg.r)
        t = rng.uniform(0.0, 1.0, size=(cfg.r, cfg.n_s))
        blocks.append(u @ t)
    x0 = np.hstack(blocks)
    sigma = float(np.mean(np.abs(x0)))
    n_o = cfg.n_outliers
    s = rng.normal(0.0, sigma, size=(cfg.m, n_o))
    full = np.hstack([x0, s])
    n_clean = cfg.k * cfg.n_s
    perm = rng.permutation(n_clean + n_o)
    m_matrix = full[:, perm]

    is_clean = perm < n_clean
    clean_columns = np.flatnonzero(is_clean)
    outlier_support = np.flatnonzero(~is_clean)
    labels = perm[clean_columns] // cfg.n_s
    return SynthDataset(
        m_matrix=m_matrix,
        clean_columns=clean_columns,
        outlier_support=outlier_support,
        labels=labels,
        sigma=sigma,
        config=cfg,
        perm=perm,
    )


def subspace_independence_check(dataset: SynthDataset, rank_tol: float = 1e-8) -> bool:
    """True iff the per-subspace column spans form a direct sum."""
    k = int(dataset.labels.max()) + 1 if dataset.labels.size else 0
    if k <= 1:
        return True
    bases = []
    total = 0
    for i in range(k):
        cols = dataset.m_matrix[:, dataset.clean_columns[dataset.labels == i]]
        u, s, _ = np.linalg.svd(cols, full_matrices=False)
        r = numerical_rank(s, rank_tol)
        bases.append(u[:, :r])
        total += r
    joint = np.linalg.svd(np.hstack(bases), compute_uv=False)
    return numerical_rank(joint, rank_tol) == total
