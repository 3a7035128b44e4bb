"""Low-rank representation, divide-factor-combine LRR, and the surrounding
diagnostics, segmentation and graph-construction tools."""

__version__ = "0.1.0"

from .dfc import DfcResult, FactoredMatrix, PartitionPlan, column_project, dfc_lrr, partition_columns, sample_size_bound
from .errors import ContractViolation, DfcError, NumericalDivergence, ParameterError, ZeroMatrixError
from .linalg import (
    CompactSVD,
    SvdOptions,
    as_matrix,
    col_l2_norms,
    compact_svd,
    l21_norm,
    nuclear_norm,
    project_onto_colspace,
    spectral_norm,
    truncated_svd,
)
from .solver import (
    LrrProblem,
    LrrSolution,
    SolverOptions,
    col_shrink,
    default_lambda_practical,
    default_lambda_theory,
    solve_lrr,
    svt,
)
from .synth import SynthConfig, SynthDataset, gen_dataset, subspace_independence_check
from .theory import RecoveryReport, TheoryParams, check_recovery, coherence, gamma_star, rwd_beta

__all__ = [name for name in dir() if not name.startswith("_")]
