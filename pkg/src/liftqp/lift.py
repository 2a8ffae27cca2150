"""Certification of lifting partition pairs and quotient-QP construction.

A (variable, constraint) partition pair is certified by checking the
four residuals

    ||X_var Q - Q X_var||_max     ||c' X_var - c'||_max
    ||X_con b - b||_max           ||X_con A - A X_var||_max

which are exactly the hypotheses under which class-averaging any
feasible point keeps it feasible and never increases the objective.
The quotient substitutes x = S y for the 0/1 class-indicator S, which
preserves the objective identically: J_ground(S y) = J_quotient(y).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qpcore import (
    Partition,
    QpInstance,
    SparseMatrix,
    average_over_partition,
    left_multiply_partition_matrix,
    right_multiply_partition_matrix,
)

DEFAULT_LIFT_TOL = 1e-8


class UncertifiedPartitionError(ValueError):
    """Quotient construction refused for a pair that failed certification."""


class InfeasiblePointError(ValueError):
    pass


class CertificateViolationError(RuntimeError):
    """Averaging broke feasibility or increased the objective.

    Cannot happen for a pair certified at an adequate tolerance; seeing
    this means the certification tolerance was too loose for the data.
    """


@dataclass(frozen=True)
class LiftingPair:
    var_partition: Partition
    con_partition: Partition
    certified: bool
    residuals: dict

    @property
    def max_residual(self):
        return max(self.residuals.values())


@dataclass(frozen=True)
class QuotientQp:
    qp: QpInstance
    class_of: np.ndarray
    class_sizes: np.ndarray

    @property
    def n_ground(self):
        return int(self.class_of.size)


def _max_abs_diff(a, b):
    diff = (a.to_csr() - b.to_csr()).tocoo()
    return float(np.max(np.abs(diff.data), initial=0.0))


def certify(qp, var_partition, con_partition, tol=DEFAULT_LIFT_TOL):
    """Measure the four lifting residuals of a partition pair."""
    if var_partition.n != qp.n:
        raise ValueError(f"variable partition covers {var_partition.n}, QP has {qp.n}")
    if con_partition.n != qp.m:
        raise ValueError(f"constraint partition covers {con_partition.n}, QP has {qp.m}")
    residuals = {
        "q_commute": _max_abs_diff(
            left_multiply_partition_matrix(qp.q, var_partition),
            right_multiply_partition_matrix(qp.q, var_partition),
        ),
        "c_fixed": float(
            np.max(np.abs(average_over_partition(qp.c, var_partition) - qp.c), initial=0.0)
        ),
        "b_fixed": float(
            np.max(np.abs(average_over_partition(qp.b, con_partition) - qp.b), initial=0.0)
        ),
        "a_coupling": _max_abs_diff(
            left_multiply_partition_matrix(qp.a, con_partition),
            right_multiply_partition_matrix(qp.a, var_partition),
        )
        if qp.m > 0
        else 0.0,
    }
    certified = all(r <= tol for r in residuals.values())
    return LiftingPair(var_partition, con_partition, certified, residuals)


def certify_refinement(qp, mode="sum", color_tol=None, tol=DEFAULT_LIFT_TOL):
    """Run color refinement and certify its output in one step."""
    from .refine import DEFAULT_COLOR_TOL, refine_qp

    result = refine_qp(qp, mode=mode, color_tol=color_tol or DEFAULT_COLOR_TOL)
    return certify(qp, result.var_partition, result.con_partition, tol=tol)


def build_quotient(qp, pair):
    """Compress a QP along a certified pair.

    Quotient data: Qhat = S'QS, chat = S'c; each constraint class
    contributes one row, taken from its smallest-index ground row with
    columns summed within variable classes, and keeps that row's bound.
    Representative rows rather than class averages keep integer data
    integral; the certified coupling makes all choices agree on the
    image of S.
    """
    if not pair.certified:
        raise UncertifiedPartitionError(
            f"partition pair failed certification (residuals {pair.residuals})"
        )
    var_p, con_p = pair.var_partition, pair.con_partition
    p = var_p.size
    r = con_p.size

    q_hat = {}
    for i, j, v in zip(qp.q.rows, qp.q.cols, qp.q.vals):
        key = (int(var_p.class_of[i]), int(var_p.class_of[j]))
        q_hat[key] = q_hat.get(key, 0.0) + v
    q_quot = SparseMatrix(p, p, ((i, j, v) for (i, j), v in q_hat.items())).symmetrized()

    c_quot = np.bincount(var_p.class_of, weights=qp.c, minlength=p)

    reps = np.array([members[0] for members in con_p.classes], dtype=np.int64)
    rep_pos = {int(rep): l for l, rep in enumerate(reps)}
    a_hat = {}
    for i, j, v in zip(qp.a.rows, qp.a.cols, qp.a.vals):
        l = rep_pos.get(int(i))
        if l is None:
            continue
        key = (l, int(var_p.class_of[j]))
        a_hat[key] = a_hat.get(key, 0.0) + v
    a_quot = SparseMatrix(r, p, ((l, k, v) for (l, k), v in a_hat.items()))
    b_quot = qp.b[reps]

    var_names = None
    if qp.variable_names:
        var_names = ["|".join(qp.variable_names[i] for i in cls) for cls in var_p.classes]
    con_names = None
    if qp.constraint_names:
        con_names = [qp.constraint_names[rep] for rep in reps]

    quotient = QpInstance(q_quot, c_quot, a_quot, b_quot, var_names, con_names)
    return QuotientQp(qp=quotient, class_of=var_p.class_of.copy(), class_sizes=var_p.sizes)


def unlift(y, quotient):
    """Expand a quotient point to ground variables: x_i = y_class(i)."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (quotient.qp.n,):
        raise ValueError(f"expected vector of length {quotient.qp.n}, got {y.shape}")
    return y[quotient.class_of]


@dataclass(frozen=True)
class AveragingReport:
    objective_original: float
    objective_averaged: float
    feasibility_margin: float


def averaging_certificate(qp, pair, x, tol=DEFAULT_LIFT_TOL):
    """Check the averaging argument on a concrete feasible point.

    Computes x' = X x and verifies A x' <= b + tol and J(x') <= J(x) + tol;
    both must hold for any certified pair, so a violation means the pair
    was certified at too loose a tolerance.
    """
    x = np.asarray(x, dtype=np.float64)
    slack_before = qp.b - qp.a.matvec(x)
    if qp.m and slack_before.min() < -tol:
        raise InfeasiblePointError(
            f"point violates constraints by {-slack_before.min():.3e} (> tol {tol:.1e})"
        )
    averaged = average_over_partition(x, pair.var_partition)
    slack_after = qp.b - qp.a.matvec(averaged)
    margin = float(slack_after.min()) if qp.m else np.inf
    j_before = qp.objective(x)
    j_after = qp.objective(averaged)
    if qp.m and margin < -tol:
        raise CertificateViolationError(
            f"averaged point infeasible by {-margin:.3e}"
        )
    if j_after > j_before + tol:
        raise CertificateViolationError(
            f"averaging increased the objective by {j_after - j_before:.3e}"
        )
    return AveragingReport(j_before, j_after, margin)
