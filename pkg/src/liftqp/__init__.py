"""Equitable-partition symmetry detection and compression for convex QPs.

The pipeline: `refine_qp` finds the coarsest stable partition pair of a
QP's data, `certify` checks it against the lifting conditions,
`build_quotient` compresses the program, `solve` handles both the
ground and quotient instances, and `unlift` expands a quotient solution
back to ground variables.
"""

from .approxep import ApproxConfig, approx_orbits, exact_orbits, whiten
from .geometry import GramFactor, compute_r, gram_factor, verify_bchar
from .kernels import KernelSpec, check_counting_transfer, gram_matrix, kernel_matrix
from .lift import (
    LiftingPair,
    QuotientQp,
    averaging_certificate,
    build_quotient,
    certify,
    certify_refinement,
    unlift,
)
from .qpcore import (
    Partition,
    PartitionMatrixView,
    QpInstance,
    SparseMatrix,
    average_over_partition,
    check_psd,
    left_multiply_partition_matrix,
    load_qp,
    right_multiply_partition_matrix,
    save_qp,
)
from .refine import (
    RefinementResult,
    brute_force_coarsest_ep,
    is_counting,
    is_equitable,
    refine_qp,
)
from .solver import SolveReport, SolverConfig, kkt_check, solve
from .svm import (
    SvmBuildSpec,
    SvmDataset,
    build_svm_qp,
    make_two_moons,
    mask_labels,
    predict,
)

__version__ = "0.1.0"
