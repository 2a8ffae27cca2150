"""Bundled example instances used by the documentation and the test suite."""

from __future__ import annotations

import numpy as np

from .qpcore import QpInstance, SparseMatrix


def example4():
    """The 4-variable demo QP:  min x'Qx  s.t.  x >= 1.

    Q is the Gram matrix of the rows (1,0), (0,1), (-1,0), (0,-1), i.e.

        Q = [[ 1,  0, -1,  0],
             [ 0,  1,  0, -1],
             [-1,  0,  1,  0],
             [ 0, -1,  0,  1]]

    Every row of Q sums to zero, so the all-ones direction is in its
    kernel: any feasible point that is constant per class of the
    one-class partition attains objective 0, the optimum.  Rotating the
    four Gram vectors by 90 degrees renames variables cyclically, so
    {x0, x2} and {x1, x3} form orbit pairs, while color refinement
    merges all four variables into a single class.
    """
    q = SparseMatrix.from_dense(
        [
            [1.0, 0.0, -1.0, 0.0],
            [0.0, 1.0, 0.0, -1.0],
            [-1.0, 0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0, 1.0],
        ]
    )
    a = SparseMatrix.from_dense(-np.eye(4))
    return QpInstance(
        q,
        np.zeros(4),
        a,
        -np.ones(4),
        variable_names=["x0", "x1", "x2", "x3"],
        constraint_names=["lb0", "lb1", "lb2", "lb3"],
    )


def example4_gram_rows(scale_y=1.0):
    """Rows whose Gram matrix is example4's Q (optionally y-scaled)."""
    return np.array(
        [[1.0, 0.0], [0.0, scale_y], [-1.0, 0.0], [0.0, -scale_y]]
    )


def two_block_example():
    """Two independent, identical 2-variable blocks with x >= 0.

    Pairing corresponding variables across the blocks ({0,2}, {1,3})
    is a certified lifting partition; the quotient halves the problem
    while preserving the optimal value -16/3.
    """
    block = np.array([[2.0, 1.0], [1.0, 2.0]])
    q = SparseMatrix.from_dense(
        np.block([[block, np.zeros((2, 2))], [np.zeros((2, 2)), block]])
    )
    a = SparseMatrix.from_dense(-np.eye(4))
    return QpInstance(q, -4.0 * np.ones(4), a, np.zeros(4))
