"""Polynomial and RBF kernel matrices and counting-partition transfer.

Both kernels depend on the data only through Gram entries:

    poly: K_ij = (Q_ij + 1)^g
    rbf:  K_ij = exp(-2 gamma^2 ||x_i - x_j||^2)
              = exp(-2 gamma^2 (Q_ii + Q_jj - 2 Q_ij))

so any counting partition of Q (which fixes diagonals per class and
per-class value multisets) is a counting partition of K.  That holds
for every kernel of the form K_ij = f(Q_ii, Q_jj, Q_ij), and is what
`check_counting_transfer` asserts; sum-equitable partitions do not
transfer in general (the test suite carries a counterexample).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qpcore import SparseMatrix
from .refine import DEFAULT_COLOR_TOL, is_counting

DENSE_LIMIT = 5000


class CountingTransferError(RuntimeError):
    """A counting partition of Q failed to transfer to the kernel matrix."""


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    degree: int | None = None
    gamma: float | None = None

    def __post_init__(self):
        if self.kind == "poly":
            if self.degree is None or self.degree < 1:
                raise ValueError("poly kernel needs integer degree >= 1")
        elif self.kind == "rbf":
            if self.gamma is None or self.gamma == 0.0:
                raise ValueError("rbf kernel needs nonzero gamma")
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")


def _check_data(data):
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("data must be a 2-d array (rows are instances)")
    if data.shape[0] > DENSE_LIMIT:
        raise ValueError(f"kernel module capped at n <= {DENSE_LIMIT}")
    if not np.all(np.isfinite(data)):
        raise ValueError("data must be finite")
    return data


def gram_matrix(data):
    """Gram matrix of the rows, Q_ij = <x_i, x_j>, stored densely."""
    data = _check_data(data)
    return SparseMatrix.from_dense(data @ data.T).symmetrized()


def kernel_matrix(data, spec):
    """Kernel matrix of the rows under `spec`, computed from Gram entries."""
    data = _check_data(data)
    q = data @ data.T
    if spec.kind == "poly":
        k = (q + 1.0) ** spec.degree
    else:
        diag = np.diag(q)
        sq_dist = diag[:, None] + diag[None, :] - 2.0 * q
        np.fill_diagonal(sq_dist, 0.0)
        k = np.exp(-2.0 * spec.gamma**2 * sq_dist)
    return SparseMatrix.from_dense(k).symmetrized()


@dataclass(frozen=True)
class TransferReport:
    q_counting: bool
    k_counting: bool


def check_counting_transfer(data, spec, p, tol=DEFAULT_COLOR_TOL):
    """Whether p is a counting partition of the Gram and kernel matrices.

    Raises CountingTransferError if q_counting holds but k_counting
    fails: the transfer holds identically for kernels of this form, so
    that combination indicates a tolerance problem or a bug, never a
    valid outcome.
    """
    q_counting = is_counting(gram_matrix(data), p, tol)
    k_counting = is_counting(kernel_matrix(data, spec), p, tol)
    if q_counting and not k_counting:
        raise CountingTransferError(
            f"counting partition of the Gram matrix did not transfer to {spec.kind}"
        )
    return TransferReport(q_counting=q_counting, k_counting=k_counting)
