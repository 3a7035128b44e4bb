"""Phase-transition and timing sweeps over synthetic datasets."""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import List, Sequence, Union

import numpy as np

from .dfc import dfc_lrr
from .errors import DfcError, ParameterError
from .linalg import numerical_rank
from .solver import LrrProblem, SolverOptions, default_lambda_practical, solve_lrr
from .synth import SynthConfig, gen_dataset
from .theory import DEFAULT_EPSILON, check_recovery

SCHEMA_VERSION = 1


def derive_seed(master: int, *key: int) -> int:
    """Stable per-cell seed: first 64-bit word of ``SeedSequence(master, spawn_key=key)``."""
    ss = np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class SweepSpec:
    base: SynthConfig = field(default_factory=SynthConfig)
    gammas: Sequence[float] = (0.0,)
    ts: Sequence[int] = (1,)
    trials: int = 1
    lam: Union[float, str] = "auto"
    epsilon: float = DEFAULT_EPSILON
    seed: int = 0
    opts: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not self.gammas or not self.ts:
            raise ParameterError("gamma and t grids must be non-empty")
        if self.trials < 1:
            raise ParameterError("trials must be at least 1")
        if any(t < 1 for t in self.ts):
            raise ParameterError("t values must be positive")
        if self.lam != "auto" and not float(self.lam) > 0:
            raise ParameterError("lambda must be positive or 'auto'")

    def to_dict(self) -> dict:
        return {
            "base": asdict(self.base),
            "gammas": [float(g) for g in self.gammas],
            "ts": [int(t) for t in self.ts],
            "trials": self.trials,
            "lambda": self.lam if self.lam == "auto" else float(self.lam),
            "epsilon": self.epsilon,
            "seed": self.seed,
            "opts": asdict(self.opts),
        }


@dataclass
class CellResult:
    gamma: float
    t: int
    trial: int
    n: int
    lam: float
    success: bool
    rowspace_residual: float
    support_residual: float
    iterations: int
    rank: int
    converged: bool
    error: str = ""
    wall_time: float = 0.0

    def body(self) -> dict:
        d = asdict(self)
        d.pop("wall_time")
        return d


@dataclass
class SweepReport:
    spec: SweepSpec
    cells: List[CellResult]

    def aggregates(self) -> List[dict]:
        out = []
        for g in self.spec.gammas:
            for t in self.spec.ts:
                cell = [c for c in self.cells if c.gamma == g and c.t == t]
                out.append({
                    "gamma": float(g),
                    "t": int(t),
                    "success_rate": float(np.mean([c.success for c in cell])),
                    "mean_time": float(np.mean([c.wall_time for c in cell])),
                })
        return out

    def success_rate(self, gamma: float, t: int) -> float:
        return next(a["success_rate"] for a in self.aggregates() if a["gamma"] == gamma and a["t"] == t)

    def body(self) -> dict:
        aggs = [{k: v for k, v in a.items() if k != "mean_time"} for a in self.aggregates()]
        return {
            "spec": self.spec.to_dict(),
            "cells": [c.body() for c in self.cells],
            "aggregates": aggs,
        }

    def timing(self) -> dict:
        return {
            "cells": [
                {"gamma": c.gamma, "t": c.t, "trial": c.trial, "wall_time": c.wall_time}
                for c in self.cells
            ],
            "aggregates": [
                {"gamma": a["gamma"], "t": a["t"], "mean_time": a["mean_time"]}
                for a in self.aggregates()
            ],
        }

    def to_json(self) -> str:
        doc = {"schema_version": SCHEMA_VERSION, "body": self.body(), "timing": self.timing()}
        return json.dumps(doc, indent=1) + "\n"

    def body_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        fields = list(self.cells[0].body().keys()) if self.cells else []
        out.writerow(fields)
        for c in self.cells:
            out.writerow([_fmt(v) for v in c.body().values()])
        out.writerow([])
        out.writerow(["gamma", "t", "success_rate"])
        for a in self.aggregates():
            out.writerow([_fmt(a["gamma"]), a["t"], _fmt(a["success_rate"])])
        return buf.getvalue()

    def timing_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["gamma", "t", "trial", "wall_time"])
        for c in self.cells:
            out.writerow([_fmt(c.gamma), c.t, c.trial, _fmt(c.wall_time)])
        out.writerow([])
        out.writerow(["gamma", "t", "mean_time"])
        for a in self.aggregates():
            out.writerow([_fmt(a["gamma"]), a["t"], _fmt(a["mean_time"])])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, float):
        return repr(v)
    return v


def run_cell(spec: SweepSpec, gi: int, ti: int, trial: int) -> CellResult:
    gamma = float(spec.gammas[gi])
    t = int(spec.ts[ti])
    cfg = replace(spec.base, gamma=gamma, seed=derive_seed(spec.seed, gi, trial))
    ds = gen_dataset(cfg)
    m = ds.m_matrix
    n = m.shape[1]
    lam = default_lambda_practical(*m.shape) if spec.lam == "auto" else float(spec.lam)
    try:
        if t == 1:
            start = time.perf_counter()
            sol = solve_lrr(LrrProblem(m, m, lam), spec.opts)
            wall = time.perf_counter() - start
            z, s = sol.z, sol.s
            iters, conv = sol.iterations, sol.converged
            rank = numerical_rank(np.linalg.svd(z, compute_uv=False))
        else:
            res = dfc_lrr(m, t, lam, spec.opts, seed=derive_seed(spec.seed, gi, trial, ti))
            wall = res.reported_time()
            z, s = res.z_hat, res.s
            iters = max(b.iterations for b in res.block_solutions)
            conv = res.converged
            rank = int(res.z_hat.basis.shape[1])
        rep = check_recovery(z, ds.l0(), ds.outlier_support, s, spec.epsilon)
    except DfcError as exc:
        return CellResult(gamma, t, trial, n, lam, False, float("nan"), float("nan"),
                          0, 0, False, error=str(exc))
    return CellResult(
        gamma=gamma, t=t, trial=trial, n=n, lam=lam, success=rep.success,
        rowspace_residual=rep.rowspace_residual, support_residual=rep.support_residual,
        iterations=int(iters), rank=int(rank), converged=bool(conv), wall_time=wall,
    )


def run_sweep(spec: SweepSpec, threads: int = 1) -> SweepReport:
    """Run every (gamma, t, trial) cell; output order is fixed by cell index.

    The dataset of a cell depends on (seed, gamma index, trial) only, so all
    t values of a trial see the same matrix.
    """
    keys = [
        (gi, ti, trial)
        for gi in range(len(spec.gammas))
        for ti in range(len(spec.ts))
        for trial in range(spec.trials)
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cells = list(pool.map(lambda k: run_cell(spec, *k), keys))
    else:
        cells = [run_cell(spec, *k) for k in keys]
    return SweepReport(spec=spec, cells=cells)
