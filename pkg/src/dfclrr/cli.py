"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 numerical error.
Log verbosity follows the ``DFC_LOG`` environment variable (e.g. DEBUG, INFO).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dfc import FactoredMatrix, dfc_lrr, sample_size_bound
from .errors import ContractViolation, NumericalDivergence, ParameterError, ZeroMatrixError
from .graph import SparseGraph, SpgOptions, knn_graph, label_propagate, slr_graph, spg_graph
from .linalg import read_matrix, spectral_norm, write_matrix
from .segmentation import segment, segmentation_accuracy
from .solver import LrrProblem, SolverOptions, default_lambda_practical, default_lambda_theory, solve_lrr
from .sweep import SCHEMA_VERSION, SweepSpec, run_sweep
from .synth import SynthConfig, SynthDataset, gen_dataset
from .theory import check_recovery, theory_params

log = logging.getLogger("dfclrr")

EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _lambda(text: str):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--lambda takes a number or 'auto'")


# ---------------------------------------------------------------------------
# file helpers


def _find(directory: Path, stem: str):
    for ext in ("dfcm", "csv"):
        p = directory / f"{stem}.{ext}"
        if p.exists():
            return p
    return None


def load_data(path) -> tuple:
    """Return ``(matrix, dataset_or_None)`` from a matrix file or a synth directory."""
    path = Path(path)
    if path.is_dir():
        mpath = _find(path, "M")
        if mpath is None:
            raise FileNotFoundError(f"no M.csv or M.dfcm in {path}")
        m = read_matrix(mpath)
        side = path / "dataset.json"
        ds = SynthDataset.from_sidecar(m, json.loads(side.read_text())) if side.exists() else None
        return m, ds
    return read_matrix(path), None


def load_representation(path):
    path = Path(path)
    if path.is_dir():
        z = _find(path, "z")
        if z is not None:
            return read_matrix(z)
        basis, coeff = _find(path, "basis"), _find(path, "coeff")
        if basis is None or coeff is None:
            raise FileNotFoundError(f"no z or basis/coeff matrices in {path}")
        return FactoredMatrix(read_matrix(basis), read_matrix(coeff))
    return read_matrix(path)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _ext(args) -> str:
    return "dfcm" if args.format == "dfcm" else "csv"


def write_report(path: Path, body: dict, timing: dict | None = None) -> None:
    doc = {"schema_version": SCHEMA_VERSION, "body": body, "timing": timing or {}}
    path.write_text(json.dumps(doc, indent=1) + "\n")


def _solver_opts(args) -> SolverOptions:
    return SolverOptions(tol_primal=args.tol, max_iters=args.max_iter)


def _resolve_lambda(args, m) -> float:
    return default_lambda_practical(*m.shape) if args.lam == "auto" else float(args.lam)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args):
    cfg = SynthConfig(k=args.k, m=args.m, r=args.r, n_s=args.ns, gamma=args.gamma, seed=args.seed)
    ds = gen_dataset(cfg)
    ds.save(_out_dir(args), _ext(args))
    log.info("wrote %d x %d dataset to %s", *ds.m_matrix.shape, args.out)


def cmd_lrr(args):
    m, ds = load_data(args.input)
    lam = _resolve_lambda(args, m)
    start = time.perf_counter()
    sol = solve_lrr(LrrProblem(m, m, lam), _solver_opts(args))
    wall = time.perf_counter() - start
    out = _out_dir(args)
    write_matrix(out / f"z.{_ext(args)}", sol.z, _ext(args))
    write_matrix(out / f"s.{_ext(args)}", sol.s, _ext(args))
    body = {"command": "lrr", "lambda": lam, "shape": list(m.shape), **sol.diagnostics()}
    if ds is not None:
        body["recovery"] = check_recovery(sol.z, ds.l0(), ds.outlier_support, sol.s, args.epsilon).to_dict()
    write_report(out / "report.json", body, {"wall_time": wall})


def cmd_dfc(args):
    m, ds = load_data(args.input)
    lam = _resolve_lambda(args, m)
    res = dfc_lrr(m, args.t, lam, _solver_opts(args), seed=args.seed, parallelism=args.threads)
    out = _out_dir(args)
    write_matrix(out / f"basis.{_ext(args)}", res.z_hat.basis, _ext(args))
    write_matrix(out / f"coeff.{_ext(args)}", res.z_hat.coeff, _ext(args))
    write_matrix(out / f"s.{_ext(args)}", res.s, _ext(args))
    body = {"command": "dfc", "lambda": lam, "shape": list(m.shape), **res.diagnostics()}
    if ds is not None:
        body["recovery"] = check_recovery(res.z_hat, ds.l0(), ds.outlier_support, res.s, args.epsilon).to_dict()
    timing = {
        "reported_time": res.reported_time(),
        "setup": res.wall_times["setup"],
        "blocks": res.wall_times["blocks"],
        "combine": res.wall_times["combine"],
    }
    write_report(out / "report.json", body, timing)


def cmd_sweep(args):
    base = SynthConfig(k=args.k, m=args.m, r=args.r, n_s=args.ns)
    spec = SweepSpec(
        base=base, gammas=args.gammas, ts=args.t_list, trials=args.trials, lam=args.lam,
        epsilon=args.epsilon, seed=args.seed, opts=_solver_opts(args),
    )
    report = run_sweep(spec, threads=args.threads)
    out = _out_dir(args)
    (out / "sweep.csv").write_text(report.body_csv())
    (out / "timing.csv").write_text(report.timing_csv())
    (out / "sweep.json").write_text(report.to_json())
    for a in report.aggregates():
        log.info("gamma=%g t=%d success=%.2f time=%.3fs", a["gamma"], a["t"], a["success_rate"], a["mean_time"])


def _truth_labels(path, n):
    path = Path(path)
    if path.is_dir():
        meta = json.loads((path / "dataset.json").read_text())
        lab = np.full(n, -1, dtype=int)
        lab[meta["clean_columns"]] = meta["labels"]
        return lab
    return _read_label_csv(path, n)


def _read_label_csv(path, n=None):
    ids, cls = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line or (lineno == 0 and not line.split(",")[0].lstrip("-").isdigit()):
                continue
            a, b = line.split(",")[:2]
            ids.append(int(a))
            cls.append(int(b))
    size = max(ids, default=-1) + 1 if n is None else n
    if ids and (min(ids) < 0 or max(ids) >= size):
        raise ParameterError(f"{path}: node ids must lie in [0, {size})")
    lab = np.full(size, -1, dtype=int)
    lab[ids] = cls
    return lab


def _write_label_csv(path, labels, header=("node_id", "class_id")):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i, c in enumerate(labels):
            fh.write(f"{i},{int(c)}\n")


def cmd_cluster(args):
    z = load_representation(args.input)
    labeling = segment(z, args.k, rank=args.rank, seed=args.seed, restarts=args.restarts,
                       normalized=not args.raw_embedding, threads=args.threads)
    out = _out_dir(args)
    _write_label_csv(out / "labels.csv", labeling.labels, ("node_id", "cluster_id"))
    body = {"command": "cluster", "k": args.k, "labels": labeling.labels.tolist()}
    if args.truth:
        truth = _truth_labels(args.truth, labeling.labels.size)
        keep = truth >= 0
        body["accuracy"] = segmentation_accuracy(labeling.labels[keep], truth[keep]).to_dict()
    write_report(out / "report.json", body)


def cmd_graph(args):
    m, _ = load_data(args.input)
    out = _out_dir(args)
    body = {"command": f"graph {args.kind}"}
    if args.kind == "knn":
        g = knn_graph(m, args.k, args.sigma)
    else:
        opts = SpgOptions(alpha=args.alpha, n_k=args.nk, tol=args.tol, max_iters=args.max_iter)
        if args.kind == "spg":
            res = spg_graph(m, opts, symmetrize=args.symmetrize)
        else:
            if not args.z:
                raise UsageError("graph slr requires --z")
            res = slr_graph(m, load_representation(args.z), opts, symmetrize=args.symmetrize,
                            threads=args.threads)
        g = res.graph
        body["non_converged"] = res.non_converged
    g.write_csv(out / "edges.csv")
    g.write_json(out / "graph.json")
    body.update({"n": g.n, "edges": g.n_edges, "symmetric": g.symmetric})
    write_report(out / "report.json", body)


def cmd_propagate(args):
    # node count: --n if given, else large enough for both the edges and the labels
    g = SparseGraph.read_csv(args.graph, n=args.n)
    seeds = _read_label_csv(args.labels, args.n)
    if seeds.size > g.n:
        g = SparseGraph.read_csv(args.graph, n=seeds.size)
    elif seeds.size < g.n:
        seeds = np.concatenate([seeds, np.full(g.n - seeds.size, -1, dtype=int)])
    res = label_propagate(g, seeds, clamp=not args.no_clamp)
    out = _out_dir(args)
    with open(out / "scores.csv", "w") as fh:
        fh.write("node_id," + ",".join(f"class_{c}" for c in range(res.scores.shape[1])) + ",flagged\n")
        for i, row in enumerate(res.scores):
            fh.write(f"{i}," + ",".join(repr(float(v)) for v in row) + f",{int(res.flagged[i])}\n")
    write_report(out / "report.json", {
        "command": "propagate",
        "predictions": res.predictions().tolist(),
        "flagged": np.flatnonzero(res.flagged).tolist(),
    })


def cmd_theory(args):
    m, ds = load_data(args.input)
    if ds is None:
        raise UsageError("theory needs a synth directory with dataset.json (ground truth)")
    params = theory_params(m, ds.l0())
    n = m.shape[1]
    gamma = len(ds.outlier_support) / n
    body = {"command": "theory", "gamma": gamma, **params.to_dict()}
    try:
        body["l_bound"] = sample_size_bound(params.rank_r, params.mu, n, args.delta, gamma,
                                            params.gamma_star, args.c)
    except ParameterError as exc:
        body["l_bound"] = None
        body["l_bound_note"] = str(exc)
    norm = spectral_norm(m)
    body["spectral_norm"] = norm
    body["lambda_theory_full"] = default_lambda_theory(norm, params.gamma_star, n)
    body["lambda_practical"] = default_lambda_practical(*m.shape)
    write_report(_out_dir(args) / "theory.json", body)
    print(json.dumps(body, indent=1))


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dfclrr", description="Low-rank representation and divide-factor-combine LRR.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out=True):
        if out:
            sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--format", choices=["csv", "json", "dfcm"], default="csv")

    def solver(sp):
        sp.add_argument("--lambda", dest="lam", type=_lambda, default="auto")
        sp.add_argument("--tol", type=float, default=1e-8)
        sp.add_argument("--max-iter", type=int, default=1000)
        sp.add_argument("--epsilon", type=float, default=1e-4)

    def synth_dims(sp):
        sp.add_argument("--k", type=int, default=3)
        sp.add_argument("--m", type=int, default=300)
        sp.add_argument("--r", type=int, default=5)
        sp.add_argument("--ns", type=int, default=100)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    synth_dims(s)
    s.add_argument("--gamma", type=float, default=0.0)
    common(s)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("lrr", help="solve full LRR")
    s.add_argument("--input", required=True)
    solver(s)
    common(s)
    s.set_defaults(func=cmd_lrr)

    s = sub.add_parser("dfc", help="solve DFC-LRR")
    s.add_argument("--input", required=True)
    s.add_argument("--t", type=int, required=True)
    solver(s)
    common(s)
    s.set_defaults(func=cmd_dfc)

    s = sub.add_parser("sweep", help="phase-transition sweep")
    synth_dims(s)
    s.add_argument("--gammas", type=_floats, default=[0.0])
    s.add_argument("--t", dest="t_list", type=_ints, default=[1])
    s.add_argument("--trials", type=int, default=1)
    solver(s)
    common(s)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("cluster", help="spectral clustering of a representation")
    s.add_argument("--input", required=True, help="z matrix file or lrr/dfc output directory")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--rank", type=int, default=None)
    s.add_argument("--restarts", type=int, default=10)
    s.add_argument("--truth", help="synth directory or labels CSV")
    s.add_argument("--raw-embedding", action="store_true",
                   help="embed the projector affinity directly instead of its normalized magnitude")
    common(s)
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("graph", help="build an affinity graph")
    s.add_argument("kind", choices=["knn", "spg", "slr"])
    s.add_argument("--input", required=True)
    s.add_argument("--k", type=int, default=40)
    s.add_argument("--sigma", type=float, default=None)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--nk", type=int, default=500)
    s.add_argument("--z", help="representation for slr (z file or lrr/dfc output directory)")
    s.add_argument("--symmetrize", choices=["max", "mean", "none"], default="max")
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--max-iter", type=int, default=10000)
    common(s)
    s.set_defaults(func=cmd_graph)

    s = sub.add_parser("propagate", help="harmonic label propagation")
    s.add_argument("--graph", required=True, help="edge list CSV (i,j,weight)")
    s.add_argument("--labels", required=True, help="CSV node_id,class_id with -1 for unlabeled")
    s.add_argument("--n", type=int, default=None, help="node count if isolated trailing nodes exist")
    s.add_argument("--no-clamp", action="store_true")
    common(s)
    s.set_defaults(func=cmd_propagate)

    s = sub.add_parser("theory", help="coherence, RWD and gamma* for a synthetic dataset")
    s.add_argument("--input", required=True, help="synth output directory")
    s.add_argument("--c", type=float, default=2.0)
    s.add_argument("--delta", type=float, default=0.05)
    common(s)
    s.set_defaults(func=cmd_theory)
    return p


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("DFC_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (UsageError, ParameterError, ContractViolation) as exc:
        print(f"dfclrr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"dfclrr: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalDivergence, ZeroMatrixError, np.linalg.LinAlgError) as exc:
        print(f"dfclrr: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
