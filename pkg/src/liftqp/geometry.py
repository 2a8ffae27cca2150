"""Gram factorization of the quadratic form and its symmetry transport.

A PSD matrix Q factors as B B' with B of full column rank; the
partition matrix X of an equitable partition then commutes with Q
exactly when some symmetric R satisfies X B = B R, and that R is
recovered constructively as R = B' X B (B'B)^{-1}.  This module is
analytic/diagnostic: everything runs dense, capped at moderate sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qpcore import MatrixTooLargeError

DENSE_LIMIT = 2000
DEFAULT_BCHAR_TOL = 1e-8


class NotPsdError(ValueError):
    pass


class RankDeficientFactorError(ValueError):
    pass


@dataclass(frozen=True)
class GramFactor:
    """Factor B with B B' = Q, columns ordered by decreasing eigenvalue."""

    b: np.ndarray
    k: int
    rank_tol: float
    eigenvalues: np.ndarray
    reconstruction_error: float


def _average_rows(mat, p):
    sums = np.zeros((p.size, mat.shape[1]))
    np.add.at(sums, p.class_of, mat)
    return (sums / p.sizes[:, None])[p.class_of]


def gram_factor(q, rank_tol=None, factor_tol=1e-8):
    """Eigendecomposition-based B = U_+ diag(sqrt(lambda_+)).

    Keeps eigenpairs with lambda > rank_tol (default: the usual
    numerical-rank cutoff n * eps * lambda_max), so B always has full
    column rank.  A significantly negative eigenvalue rejects Q.
    """
    if q.n_rows != q.n_cols:
        raise ValueError("gram_factor expects a square matrix")
    n = q.n_rows
    if n > DENSE_LIMIT:
        raise MatrixTooLargeError(f"gram_factor limited to n <= {DENSE_LIMIT}")
    dense = q.to_dense()
    dense = 0.5 * (dense + dense.T)
    eigvals, eigvecs = np.linalg.eigh(dense)
    lam_max = float(eigvals[-1]) if n else 0.0
    if rank_tol is None:
        rank_tol = n * np.finfo(float).eps * max(lam_max, 0.0)
    neg_floor = -max(rank_tol, 1e-8 * max(1.0, lam_max))
    if n and float(eigvals[0]) < neg_floor:
        raise NotPsdError(
            f"matrix has eigenvalue {eigvals[0]:.3e} below {neg_floor:.1e}"
        )
    keep = eigvals > max(rank_tol, 0.0)
    order = np.argsort(eigvals[keep])[::-1]
    selected = eigvals[keep][order]
    b = eigvecs[:, keep][:, order] * np.sqrt(selected)
    recon = float(np.max(np.abs(b @ b.T - dense), initial=0.0))
    if recon > factor_tol * max(1.0, lam_max):
        raise NotPsdError(
            f"reconstruction error {recon:.3e} exceeds tolerance; "
            "matrix is too far from PSD"
        )
    return GramFactor(
        b=b,
        k=int(selected.size),
        rank_tol=float(rank_tol),
        eigenvalues=selected,
        reconstruction_error=recon,
    )


def compute_r(factor, p):
    """R = B' X B (B'B)^{-1} for the partition matrix X of p."""
    b = factor.b
    if p.n != b.shape[0]:
        raise ValueError(f"partition covers {p.n} indices, factor has {b.shape[0]} rows")
    gram = b.T @ b
    if factor.k and np.linalg.cond(gram) > 1e12:
        raise RankDeficientFactorError("B'B is numerically singular")
    xb = _average_rows(b, p)
    t = b.T @ xb
    return np.linalg.solve(gram, t.T).T if factor.k else np.zeros((0, 0))


@dataclass(frozen=True)
class BCharReport:
    commutes: bool
    r_symmetric: bool
    xb_equals_br: bool
    residuals: dict

    @property
    def consistent(self):
        """The biconditional: X commutes with Q iff R is a symmetric transport."""
        return self.commutes == (self.r_symmetric and self.xb_equals_br)


def verify_bchar(q, factor, p, tol=DEFAULT_BCHAR_TOL):
    """Check both directions of the factor characterization on one instance."""
    if q.n_rows != q.n_cols or q.n_rows != factor.b.shape[0]:
        raise ValueError("matrix / factor dimensions disagree")
    dense = q.to_dense()
    dense = 0.5 * (dense + dense.T)
    xq = _average_rows(dense, p)
    commute_res = float(np.max(np.abs(xq - xq.T), initial=0.0))
    r = compute_r(factor, p)
    sym_res = float(np.max(np.abs(r - r.T), initial=0.0))
    xb = _average_rows(factor.b, p)
    transport_res = float(np.max(np.abs(xb - factor.b @ r), initial=0.0))
    return BCharReport(
        commutes=commute_res <= tol,
        r_symmetric=sym_res <= tol,
        xb_equals_br=transport_res <= tol,
        residuals={
            "commute": commute_res,
            "r_asymmetry": sym_res,
            "transport": transport_res,
        },
    )
