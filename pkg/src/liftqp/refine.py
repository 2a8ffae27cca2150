"""Color refinement on the colored-graph encoding of a QP.

Variables and constraints are nodes; off-diagonal Q entries are
variable-variable edge weights and A entries are variable-constraint
edge weights.  Initial node colors come from (c_i, Q_ii) on the
variable side and b_i on the constraint side.  Refinement runs both
sides in the same round-robin loop until neither partition changes;
the result is stable, hence an equitable pair, and it is the coarsest
stable pair refining the initial coloring.

Two signature modes:
  sum       per current class, the sum of incident edge weights
            (the classical weighted equitable-partition condition);
  counting  per current class, the multiset of incident edge weights
            (the stronger condition preserved by the kernels module).

Floating-point weights are bucketed on a `color_tol` grid before
hashing.  Bucketing is not transitive; callers feeding near-tie
weights should use exactly representable values (the default grid is
fine for integer-like data).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qpcore import Partition

DEFAULT_COLOR_TOL = 1e-9


def _bucket(value, tol):
    return round(value / tol)


@dataclass(frozen=True)
class ColoredQpGraph:
    """Adjacency view of a QP used by the refinement loop.

    var_var[i] holds (neighbor, weight) pairs from off-diagonal Q rows,
    var_con / con_var mirror A by columns resp. rows.
    """

    n: int
    m: int
    var_init: tuple
    con_init: tuple
    var_var: tuple
    var_con: tuple
    con_var: tuple

    @classmethod
    def from_qp(cls, qp, color_tol=DEFAULT_COLOR_TOL):
        n, m = qp.n, qp.m
        diag = np.zeros(n)
        var_var = [[] for _ in range(n)]
        for i, j, v in zip(qp.q.rows, qp.q.cols, qp.q.vals):
            if i == j:
                diag[i] = v
            else:
                var_var[i].append((int(j), float(v)))
        var_con = [[] for _ in range(n)]
        con_var = [[] for _ in range(m)]
        for i, j, v in zip(qp.a.rows, qp.a.cols, qp.a.vals):
            con_var[i].append((int(j), float(v)))
            var_con[j].append((int(i), float(v)))
        var_init = tuple(
            (_bucket(qp.c[i], color_tol), _bucket(diag[i], color_tol)) for i in range(n)
        )
        con_init = tuple(_bucket(qp.b[i], color_tol) for i in range(m))
        return cls(
            n=n,
            m=m,
            var_init=var_init,
            con_init=con_init,
            var_var=tuple(tuple(adj) for adj in var_var),
            var_con=tuple(tuple(adj) for adj in var_con),
            con_var=tuple(tuple(adj) for adj in con_var),
        )


@dataclass(frozen=True)
class RefinementResult:
    var_partition: Partition
    con_partition: Partition
    rounds: int
    mode: str


def _colors_from_keys(keys):
    """Assign color ids by order of first appearance (determinism contract)."""
    seen = {}
    out = np.empty(len(keys), dtype=np.int64)
    for i, key in enumerate(keys):
        if key not in seen:
            seen[key] = len(seen)
        out[i] = seen[key]
    return out


def _edge_signature(adj, colors, mode, tol):
    """Canonical per-node view of incident edges grouped by endpoint color.

    Sum mode collapses each color group to its bucketed sum; groups that
    cancel to zero are dropped so they compare equal to absent groups.
    Counting mode keeps the bucketed value multiset per group.
    """
    if mode == "sum":
        acc = {}
        for j, v in adj:
            acc[colors[j]] = acc.get(colors[j], 0.0) + v
        items = []
        for color, total in acc.items():
            b = _bucket(total, tol)
            if b != 0:
                items.append((int(color), b))
        return tuple(sorted(items))
    items = []
    for j, v in adj:
        b = _bucket(v, tol)
        if b != 0:
            items.append((int(colors[j]), b))
    return tuple(sorted(items))


def refine_qp(qp, mode="sum", color_tol=DEFAULT_COLOR_TOL):
    """Coarsest stable (variable, constraint) partition pair of a QP.

    The returned pair is stable under one more refinement round; in sum
    mode it satisfies the equitable conditions X Q = Q X and
    X_con A = A X_var up to the bucketing tolerance.
    """
    if mode not in ("sum", "counting"):
        raise ValueError(f"mode must be 'sum' or 'counting', got {mode!r}")
    graph = ColoredQpGraph.from_qp(qp, color_tol)
    var_colors = _colors_from_keys(graph.var_init)
    con_colors = _colors_from_keys(graph.con_init)
    rounds = 0
    while True:
        rounds += 1
        var_keys = [
            (
                int(var_colors[i]),
                _edge_signature(graph.var_var[i], var_colors, mode, color_tol),
                _edge_signature(graph.var_con[i], con_colors, mode, color_tol),
            )
            for i in range(graph.n)
        ]
        con_keys = [
            (
                int(con_colors[r]),
                _edge_signature(graph.con_var[r], var_colors, mode, color_tol),
            )
            for r in range(graph.m)
        ]
        new_var = _colors_from_keys(var_keys)
        new_con = _colors_from_keys(con_keys)
        if np.array_equal(new_var, var_colors) and np.array_equal(new_con, con_colors):
            break
        var_colors, con_colors = new_var, new_con
    return RefinementResult(
        var_partition=Partition(graph.n, var_colors),
        con_partition=Partition(graph.m, con_colors),
        rounds=rounds,
        mode=mode,
    )


def _class_rows(m, p):
    """Per-row dict class -> list of values restricted to that class."""
    csr = m.to_csr()
    rows = []
    for i in range(m.n_rows):
        lo, hi = csr.indptr[i], csr.indptr[i + 1]
        groups = {}
        for j, v in zip(csr.indices[lo:hi], csr.data[lo:hi]):
            groups.setdefault(int(p.class_of[j]), []).append(float(v))
        rows.append(groups)
    return rows


def is_equitable(m, p, tol=DEFAULT_COLOR_TOL):
    """Class-to-class row sums agree for all members of each class.

    Equivalent (for symmetric m) to commuting with the partition matrix:
    ||X M - M X||_max <= tol, which the tests cross-check via the
    qpcore multiplies.
    """
    if m.n_rows != m.n_cols:
        raise ValueError("is_equitable expects a square matrix")
    if p.n != m.n_rows:
        raise ValueError("partition size does not match matrix")
    rows = _class_rows(m, p)
    for members in p.classes:
        ref = {cls: sum(vals) for cls, vals in rows[members[0]].items()}
        for i in members[1:]:
            cur = {cls: sum(vals) for cls, vals in rows[i].items()}
            for cls in ref.keys() | cur.keys():
                if abs(ref.get(cls, 0.0) - cur.get(cls, 0.0)) > tol:
                    return False
    return True


def _tolerant_multiset_equal(a, b, tol):
    if len(a) != len(b):
        return False
    return all(abs(x - y) <= tol for x, y in zip(sorted(a), sorted(b)))


def is_counting(m, p, tol=DEFAULT_COLOR_TOL):
    """Per-class value multisets agree row-wise, and diagonals agree in-class.

    Values are compared within `tol` after sorting; entries of modulus
    <= tol count as zeros so that stored tiny values and absent entries
    do not split classes.
    """
    if m.n_rows != m.n_cols:
        raise ValueError("is_counting expects a square matrix")
    if p.n != m.n_rows:
        raise ValueError("partition size does not match matrix")
    dense_diag = np.zeros(p.n)
    for i, j, v in zip(m.rows, m.cols, m.vals):
        if i == j:
            dense_diag[i] = v
    rows = _class_rows(m, p)
    for members in p.classes:
        i0 = members[0]
        ref = {
            cls: [v for v in vals if abs(v) > tol] for cls, vals in rows[i0].items()
        }
        ref = {cls: vals for cls, vals in ref.items() if vals}
        for i in members[1:]:
            if abs(dense_diag[i] - dense_diag[i0]) > tol:
                return False
            cur = {
                cls: [v for v in vals if abs(v) > tol] for cls, vals in rows[i].items()
            }
            cur = {cls: vals for cls, vals in cur.items() if vals}
            if ref.keys() != cur.keys():
                return False
            for cls in ref:
                if not _tolerant_multiset_equal(ref[cls], cur[cls], tol):
                    return False
    return True


def _set_partitions(n):
    """All partitions of range(n) as lists of lists (restricted growth)."""
    if n == 0:
        yield []
        return

    def grow(i, labels, k):
        if i == n:
            classes = [[] for _ in range(k)]
            for idx, lab in enumerate(labels):
                classes[lab].append(idx)
            yield classes
            return
        for lab in range(k):
            labels.append(lab)
            yield from grow(i + 1, labels, k)
            labels.pop()
        labels.append(k)
        yield from grow(i + 1, labels, k + 1)
        labels.pop()

    yield from grow(1, [0], 1)


BRUTE_FORCE_LIMIT = 8


class MatrixTooLargeForBruteForce(ValueError):
    pass


def brute_force_coarsest_ep(m, mode="sum", tol=DEFAULT_COLOR_TOL):
    """Exhaustive-search oracle for the coarsest equitable/counting partition.

    Enumerates every set partition (n <= 8), keeps the admissible ones,
    and returns the unique one with the fewest classes.  Raises if the
    minimum is not unique, which cannot happen when the admissible set
    is closed under joins (true for sum mode; verified per-instance for
    counting mode by this very check).
    """
    if m.n_rows != m.n_cols:
        raise ValueError("expected a square matrix")
    n = m.n_rows
    if n > BRUTE_FORCE_LIMIT:
        raise MatrixTooLargeForBruteForce(
            f"brute force limited to n <= {BRUTE_FORCE_LIMIT}, got {n}"
        )
    if mode not in ("sum", "counting"):
        raise ValueError(f"mode must be 'sum' or 'counting', got {mode!r}")
    predicate = is_equitable if mode == "sum" else is_counting
    best = None
    best_count = None
    tied = False
    for classes in _set_partitions(n):
        p = Partition.from_classes(n, classes)
        if not predicate(m, p, tol):
            continue
        if best_count is None or p.size < best_count:
            best, best_count, tied = p, p.size, False
        elif p.size == best_count and p != best:
            tied = True
    if best is None:
        raise RuntimeError("no admissible partition found (discrete should qualify)")
    if tied:
        raise RuntimeError("coarsest partition is not unique for this instance")
    return best
