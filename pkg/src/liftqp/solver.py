"""Operator-splitting convex QP solver.

Solves  min x'Qx + c'x  s.t.  Ax <= b  via ADMM on the equivalent
problem  min 1/2 x'Px + q'x  with P = 2Q (the public objective keeps
the no-half convention).  Problem data are first equilibrated with
modified Ruiz scaling; each iteration then solves one quasi-definite
KKT system

    [ P + sigma*I   A' ] [x~]   [ sigma*x - q ]
    [ A       -(1/rho)I ] [nu] = [ z - y/rho   ]

whose sparse LU factorization is cached and refreshed only when the
penalty rho is re-tuned (on a primal/dual residual imbalance beyond
10x).  Termination always measures unscaled residuals.  After
convergence an active-set polish solves the reduced equality-
constrained KKT system to push residuals toward machine precision; the
same polish is attempted once at the iteration cap and may upgrade the
run to `optimal` if the polished point meets the tolerances on its
own.  Infeasibility is reported only on an explicit Farkas-type
certificate; an ambiguous run ends as `max_iters` with the best
iterate.

Equality constraints are not a distinct type: encode a'x = b as the
pair a'x <= b, -a'x <= -b.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

_RHO_MIN = 1e-6
_RHO_MAX = 1e6
_RHO_REFRESH_FACTOR = 5.0
_IMBALANCE_RATIO = 10.0


@dataclass
class SolverConfig:
    max_iters: int = 20000
    eps_abs: float = 1e-8
    eps_rel: float = 1e-8
    rho: float = 1.0
    adaptive_rho: bool = True
    polish: bool = True
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_infeas: float = 1e-8
    check_interval: int = 25
    scaling_iters: int = 10  # Ruiz equilibration rounds; 0 disables

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        for name in ("eps_abs", "eps_rel", "rho", "sigma", "eps_infeas"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.alpha < 2.0:
            raise ValueError("alpha must lie in (0, 2)")
        if self.scaling_iters < 0:
            raise ValueError("scaling_iters must be >= 0")


@dataclass
class SolveReport:
    status: str
    x: np.ndarray
    y: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    iters: int
    polished: bool = False
    objective_history: list = field(default_factory=list)

    @property
    def optimal(self):
        return self.status == "optimal"


def _inf_norm(v):
    return float(np.max(np.abs(v), initial=0.0))


def _solve_unconstrained(qp, p_mat, cfg):
    qvec = qp.c
    n = qp.n
    if n == 0:
        return SolveReport("optimal", np.zeros(0), np.zeros(0), 0.0, 0.0, 0.0, 0)
    x, *_ = np.linalg.lstsq(p_mat.toarray(), -qvec, rcond=None)
    grad = p_mat @ x + qvec
    r_dual = _inf_norm(grad)
    eps = cfg.eps_abs + cfg.eps_rel * max(_inf_norm(p_mat @ x), _inf_norm(qvec))
    status = "optimal" if r_dual <= eps else "dual_infeasible"
    obj = qp.objective(x) if status == "optimal" else -np.inf
    return SolveReport(status, x, np.zeros(0), obj, 0.0, r_dual, 0)


def _sparse_col_max(mat, size):
    if mat.nnz == 0:
        return np.zeros(size)
    return np.abs(mat).max(axis=0).toarray().ravel()


def _sparse_row_max(mat, size):
    if mat.nnz == 0:
        return np.zeros(size)
    return np.abs(mat).max(axis=1).toarray().ravel()


def _ruiz_equilibrate(p_mat, a_mat, qvec, iters):
    """Modified Ruiz scaling of the stacked KKT data plus cost scaling.

    Returns scaled (P, q, A) and diagonal factors (d, e, gamma) with
    P_s = gamma * D P D,  A_s = E A D,  q_s = gamma * D q.
    """
    n = p_mat.shape[0]
    m = a_mat.shape[0]
    d = np.ones(n)
    e = np.ones(m)
    gamma = 1.0
    p_s = p_mat.tocsc(copy=True)
    a_s = a_mat.tocsc(copy=True)
    q_s = qvec.copy()
    for _ in range(iters):
        col_x = np.maximum(_sparse_col_max(p_s, n), _sparse_col_max(a_s, n))
        row_y = _sparse_row_max(a_s, m)
        dx = 1.0 / np.sqrt(np.where(col_x > 0.0, col_x, 1.0))
        dy = 1.0 / np.sqrt(np.where(row_y > 0.0, row_y, 1.0))
        diag_x = sp.diags(dx)
        p_s = diag_x @ p_s @ diag_x
        a_s = sp.diags(dy) @ a_s @ diag_x
        q_s = dx * q_s
        d *= dx
        e *= dy
        cost_norm = max(
            float(_sparse_col_max(p_s, n).mean()) if n else 0.0, _inf_norm(q_s)
        )
        if cost_norm > 0.0:
            step = 1.0 / cost_norm
            p_s = p_s * step
            q_s = q_s * step
            gamma *= step
    return p_s.tocsr(), q_s, a_s.tocsr(), d, e, gamma


def _factor_kkt(p_mat, a_mat, sigma, rho, n, m):
    kkt = sp.bmat(
        [
            [p_mat + sigma * sp.eye(n), a_mat.T],
            [a_mat, -(1.0 / rho) * sp.eye(m)],
        ],
        format="csc",
    )
    return spla.splu(kkt)


def _primal_infeasibility_certificate(a_mat, b, delta_y, eps):
    v = np.maximum(delta_y, 0.0)
    norm_v = _inf_norm(v)
    if norm_v <= eps:
        return False
    v = v / norm_v
    if b @ v >= -eps:
        return False
    return _inf_norm(a_mat.T @ v) <= eps


def _dual_infeasibility_certificate(p_mat, a_mat, qvec, delta_x, eps):
    norm_dx = _inf_norm(delta_x)
    if norm_dx <= eps:
        return False
    dx = delta_x / norm_dx
    if qvec @ dx >= -eps:
        return False
    if _inf_norm(p_mat @ dx) > eps:
        return False
    return np.max(a_mat @ dx, initial=0.0) <= eps


def _polish(qp, p_mat, a_mat, x, y, z, cfg):
    """Equality-constrained solve on the guessed active set.

    Returns (x, y, pri, dua, ok); `ok` is False when the guess was bad
    (singular system or negative multipliers) and the caller keeps the
    ADMM iterate.  All quantities are unscaled.
    """
    n, m = qp.n, qp.m
    qvec = qp.c
    active = (qp.b - z) < y
    idx = np.nonzero(active)[0]
    a_red = a_mat[idx]
    k = idx.size
    delta = 1e-8
    kkt_reg = sp.bmat(
        [
            [p_mat + delta * sp.eye(n), a_red.T if k else sp.csr_matrix((n, 0))],
            [a_red if k else sp.csr_matrix((0, n)), -delta * sp.eye(k)],
        ],
        format="csc",
    )
    rhs = np.concatenate([-qvec, qp.b[idx]])
    try:
        lu = spla.splu(kkt_reg)
    except RuntimeError:
        return x, y, None, None, False
    sol = lu.solve(rhs)
    kkt_exact = sp.bmat(
        [
            [p_mat, a_red.T if k else sp.csr_matrix((n, 0))],
            [a_red if k else sp.csr_matrix((0, n)), sp.csr_matrix((k, k))],
        ],
        format="csr",
    )
    for _ in range(3):
        sol = sol + lu.solve(rhs - kkt_exact @ sol)
    x_pol = sol[:n]
    y_pol = np.zeros(m)
    y_pol[idx] = sol[n:]
    if k and sol[n:].min() < -cfg.eps_abs:
        return x, y, None, None, False
    pri = float(np.max(np.maximum(a_mat @ x_pol - qp.b, 0.0), initial=0.0))
    dua = _inf_norm(p_mat @ x_pol + qvec + a_mat.T @ y_pol)
    return x_pol, y_pol, pri, dua, True


def _meets_tolerances(qp, p_mat, a_mat, x, y, cfg):
    """Unscaled optimality test used to accept a rescue polish."""
    ax = a_mat @ x
    z = np.minimum(ax, qp.b)
    px = p_mat @ x
    aty = a_mat.T @ y
    r_prim = _inf_norm(ax - z)
    r_dual = _inf_norm(px + qp.c + aty)
    eps_pri = cfg.eps_abs + cfg.eps_rel * max(_inf_norm(ax), _inf_norm(z))
    eps_dua = cfg.eps_abs + cfg.eps_rel * max(
        _inf_norm(px), _inf_norm(aty), _inf_norm(qp.c)
    )
    return r_prim <= eps_pri and r_dual <= eps_dua, r_prim, r_dual


def solve(qp, cfg=None):
    """Solve a convex QP; Q is trusted to be PSD (check on the caller side).

    Reported objective uses x'Qx + c'x.  status == "optimal" implies the
    (unscaled) primal and dual residuals meet eps_abs/eps_rel.
    """
    cfg = cfg or SolverConfig()
    n, m = qp.n, qp.m
    p_mat = 2.0 * qp.q.to_csr()
    if m == 0:
        return _solve_unconstrained(qp, p_mat, cfg)
    a_mat = qp.a.to_csr()
    qvec = qp.c
    b = qp.b

    if cfg.scaling_iters:
        p_s, q_s, a_s, d, e, gamma = _ruiz_equilibrate(
            p_mat, a_mat, qvec, cfg.scaling_iters
        )
    else:
        p_s, q_s, a_s = p_mat, qvec, a_mat
        d, e, gamma = np.ones(n), np.ones(m), 1.0
    b_s = e * b

    rho = cfg.rho
    lu = _factor_kkt(p_s, a_s, cfg.sigma, rho, n, m)
    x_hat = np.zeros(n)
    z_hat = np.zeros(m)
    y_hat = np.zeros(m)

    status = "max_iters"
    x = np.zeros(n)
    y = np.zeros(m)
    z_u = np.zeros(m)
    r_prim = np.inf
    r_dual = np.inf
    best_feasible = np.inf
    history = []
    feas_tol = cfg.eps_abs * (1.0 + _inf_norm(b))
    iters = 0

    for iters in range(1, cfg.max_iters + 1):
        rhs = np.concatenate([cfg.sigma * x_hat - q_s, z_hat - y_hat / rho])
        sol = lu.solve(rhs)
        x_tilde = sol[:n]
        nu = sol[n:]
        z_tilde = z_hat + (nu - y_hat) / rho
        x_prev, y_prev = x_hat, y_hat
        x_hat = cfg.alpha * x_tilde + (1.0 - cfg.alpha) * x_prev
        v = cfg.alpha * z_tilde + (1.0 - cfg.alpha) * z_hat + y_prev / rho
        z_hat = np.minimum(v, b_s)
        y_hat = rho * (v - z_hat)

        if iters % cfg.check_interval and iters != cfg.max_iters:
            continue

        # unscale: x = D x^, y = E y^ / gamma, and the residual pieces
        x = d * x_hat
        y = e * y_hat / gamma
        ax_u = (a_s @ x_hat) / e
        z_u = z_hat / e
        px_u = (p_s @ x_hat) / (gamma * d)
        aty_u = (a_s.T @ y_hat) / (gamma * d)
        r_prim = _inf_norm(ax_u - z_u)
        r_dual = _inf_norm(px_u + qvec + aty_u)
        norm_prim = max(_inf_norm(ax_u), _inf_norm(z_u))
        norm_dual = max(_inf_norm(px_u), _inf_norm(aty_u), _inf_norm(qvec))
        if np.max(ax_u - b, initial=0.0) <= feas_tol:
            best_feasible = min(best_feasible, qp.objective(x))
        if np.isfinite(best_feasible):
            history.append(best_feasible)

        if r_prim <= cfg.eps_abs + cfg.eps_rel * norm_prim and (
            r_dual <= cfg.eps_abs + cfg.eps_rel * norm_dual
        ):
            status = "optimal"
            break
        delta_y_u = e * (y_hat - y_prev) / gamma
        if _primal_infeasibility_certificate(a_mat, b, delta_y_u, cfg.eps_infeas):
            status = "primal_infeasible"
            break
        delta_x_u = d * (x_hat - x_prev)
        if _dual_infeasibility_certificate(p_mat, a_mat, qvec, delta_x_u, cfg.eps_infeas):
            status = "dual_infeasible"
            break

        if cfg.adaptive_rho and r_prim > 0 and r_dual > 0:
            rp_rel = r_prim / max(norm_prim, 1e-30)
            rd_rel = r_dual / max(norm_dual, 1e-30)
            if rp_rel > _IMBALANCE_RATIO * rd_rel or rd_rel > _IMBALANCE_RATIO * rp_rel:
                candidate = float(
                    np.clip(rho * np.sqrt(rp_rel / rd_rel), _RHO_MIN, _RHO_MAX)
                )
                change = candidate / rho
                if change > _RHO_REFRESH_FACTOR or change < 1.0 / _RHO_REFRESH_FACTOR:
                    rho = candidate
                    lu = _factor_kkt(p_s, a_s, cfg.sigma, rho, n, m)

    polished = False
    if status == "optimal" and cfg.polish:
        x_pol, y_pol, pri_pol, dua_pol, ok = _polish(qp, p_mat, a_mat, x, y, z_u, cfg)
        if ok:
            # both polished residuals must be at least as good as what ADMM
            # achieved (up to eps_abs); a bad active-set guess is discarded
            accept = pri_pol <= max(r_prim, cfg.eps_abs) and dua_pol <= max(
                r_dual, cfg.eps_abs
            )
            if accept:
                x, y = x_pol, y_pol
                r_prim, r_dual = pri_pol, dua_pol
                polished = True
    elif status == "max_iters" and cfg.polish:
        # rescue attempt: a near-converged iterate often pins the right
        # active set; accept only if the polished point meets the
        # termination tolerances in its own right
        x_pol, y_pol, _, _, ok = _polish(qp, p_mat, a_mat, x, y, z_u, cfg)
        if ok:
            meets, pri_pol, dua_pol = _meets_tolerances(qp, p_mat, a_mat, x_pol, y_pol, cfg)
            if meets:
                status = "optimal"
                x, y = x_pol, y_pol
                r_prim, r_dual = pri_pol, dua_pol
                polished = True

    if status == "primal_infeasible":
        objective = np.inf
    elif status == "dual_infeasible":
        objective = -np.inf
    else:
        objective = qp.objective(x)
    return SolveReport(
        status=status,
        x=x,
        y=y,
        objective=objective,
        primal_residual=r_prim,
        dual_residual=r_dual,
        iters=iters,
        polished=polished,
        objective_history=history,
    )


def kkt_check(qp, x, duals, tol=1e-6):
    """Independent first-order optimality test.

    Verifies primal feasibility, dual nonnegativity, complementary
    slackness and stationarity 2Qx + c + A'duals = 0, all within tol.
    """
    x = np.asarray(x, dtype=np.float64)
    duals = np.asarray(duals, dtype=np.float64)
    if x.shape != (qp.n,) or duals.shape != (qp.m,):
        raise ValueError("dimension mismatch in kkt_check")
    slack = qp.b - qp.a.matvec(x)
    if qp.m:
        if slack.min() < -tol:
            return False
        if duals.min() < -tol:
            return False
        if _inf_norm(duals * slack) > tol:
            return False
    stationarity = 2.0 * qp.q.matvec(x) + qp.c + (
        qp.a.transpose().matvec(duals) if qp.m else 0.0
    )
    return bool(_inf_norm(stationarity) <= tol)
