"""Core data types: sparse matrices, QP instances, partitions, and the
averaging algebra of partition matrices.

A partition of ``{0..n-1}`` induces the doubly stochastic, symmetric,
idempotent matrix X whose entry (i, j) is ``1/|class(i)|`` when i and j
share a class and 0 otherwise.  X is never materialized here: all
products with X are class-sum reductions, which keeps everything
O(nnz) and preserves sparsity.
"""

from __future__ import annotations

import json

import numpy as np
import scipy.sparse as sp

PSD_TOL = 1e-8
PSD_CHECK_LIMIT = 2000


class QpFormatError(ValueError):
    """Malformed QP/partition file; carries enough context to name the culprit."""

    def __init__(self, message, source=None, field=None):
        self.source = source
        self.field = field
        prefix = ""
        if source is not None:
            prefix += f"{source}: "
        if field is not None:
            prefix += f"field '{field}': "
        super().__init__(prefix + message)


class MatrixTooLargeError(ValueError):
    """Raised when a dense check is requested beyond its size limit."""


class SparseMatrix:
    """Immutable COO-style sparse matrix.

    Triplets are canonicalized at construction: duplicates summed,
    explicit zeros dropped, entries sorted row-major.  Values must be
    finite and indices in range.
    """

    __slots__ = ("n_rows", "n_cols", "rows", "cols", "vals")

    def __init__(self, n_rows, n_cols, triplets=()):
        if n_rows < 0 or n_cols < 0:
            raise ValueError("matrix dimensions must be nonnegative")
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        triplets = list(triplets)
        if triplets:
            rows = np.asarray([t[0] for t in triplets], dtype=np.int64)
            cols = np.asarray([t[1] for t in triplets], dtype=np.int64)
            vals = np.asarray([t[2] for t in triplets], dtype=np.float64)
        else:
            rows = np.zeros(0, dtype=np.int64)
            cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0, dtype=np.float64)
        if rows.size:
            if rows.min() < 0 or rows.max() >= self.n_rows:
                raise ValueError("row index out of range")
            if cols.min() < 0 or cols.max() >= self.n_cols:
                raise ValueError("column index out of range")
            if not np.all(np.isfinite(vals)):
                raise ValueError("matrix values must be finite")
            # sum duplicates, then drop entries that ended up exactly zero
            key = rows * self.n_cols + cols
            order = np.argsort(key, kind="stable")
            key, rows, cols, vals = key[order], rows[order], cols[order], vals[order]
            uniq, start = np.unique(key, return_index=True)
            summed = np.add.reduceat(vals, start) if key.size else vals
            rows = rows[start]
            cols = cols[start]
            keep = summed != 0.0
            rows, cols, vals = rows[keep], cols[keep], summed[keep]
        self.rows = rows
        self.cols = cols
        self.vals = vals

    # -- constructors -------------------------------------------------

    @classmethod
    def from_dense(cls, array):
        array = np.asarray(array, dtype=np.float64)
        if array.ndim != 2:
            raise ValueError("expected a 2-d array")
        r, c = np.nonzero(array)
        return cls(array.shape[0], array.shape[1], zip(r, c, array[r, c]))

    @classmethod
    def from_csr(cls, mat):
        mat = mat.tocoo()
        return cls(mat.shape[0], mat.shape[1], zip(mat.row, mat.col, mat.data))

    @classmethod
    def identity(cls, n):
        return cls(n, n, ((i, i, 1.0) for i in range(n)))

    # -- views ---------------------------------------------------------

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.vals.size)

    def triplets(self):
        """Canonical (row, col, value) triplets, row-major order."""
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.vals.tolist()))

    def to_csr(self):
        return sp.csr_matrix(
            (self.vals, (self.rows, self.cols)), shape=(self.n_rows, self.n_cols)
        )

    def to_dense(self):
        out = np.zeros((self.n_rows, self.n_cols))
        out[self.rows, self.cols] = self.vals
        return out

    def transpose(self):
        return SparseMatrix(self.n_cols, self.n_rows, zip(self.cols, self.rows, self.vals))

    def matvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_cols,):
            raise ValueError(f"expected vector of length {self.n_cols}, got {x.shape}")
        out = np.zeros(self.n_rows)
        np.add.at(out, self.rows, self.vals * x[self.cols])
        return out

    def symmetrized(self):
        """(M + M^T)/2 with bitwise-symmetric storage."""
        if self.n_rows != self.n_cols:
            raise ValueError("cannot symmetrize a non-square matrix")
        trip = {}
        for i, j, v in zip(self.rows, self.cols, self.vals):
            key = (min(i, j), max(i, j))
            trip[key] = trip.get(key, 0.0) + (v if i == j else 0.5 * v)
        out = []
        for (i, j), v in trip.items():
            out.append((i, j, v))
            if i != j:
                out.append((j, i, v))
        return SparseMatrix(self.n_rows, self.n_cols, out)

    def is_symmetric(self):
        """Exact symmetry of the stored triplets."""
        if self.n_rows != self.n_cols:
            return False
        t = self.transpose()
        return (
            np.array_equal(self.rows, t.rows)
            and np.array_equal(self.cols, t.cols)
            and np.array_equal(self.vals, t.vals)
        )

    def max_abs(self):
        return float(np.max(np.abs(self.vals))) if self.vals.size else 0.0

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.vals, other.vals)
        )

    def __repr__(self):
        return f"SparseMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz})"


class Partition:
    """Disjoint classes covering ``{0..n-1}``.

    Canonical form: class ids are assigned by order of each class's
    smallest member, members are sorted.  Two partitions compare equal
    iff they have identical classes.
    """

    __slots__ = ("n", "class_of", "classes")

    def __init__(self, n, class_of):
        class_of = np.asarray(class_of, dtype=np.int64)
        if class_of.shape != (n,):
            raise ValueError(f"class_of must have length {n}")
        # relabel by order of first occurrence
        relabel = {}
        canonical = np.empty(n, dtype=np.int64)
        for i, cid in enumerate(class_of.tolist()):
            if cid not in relabel:
                relabel[cid] = len(relabel)
            canonical[i] = relabel[cid]
        self.n = int(n)
        self.class_of = canonical
        classes = [[] for _ in range(len(relabel))]
        for i, cid in enumerate(canonical.tolist()):
            classes[cid].append(i)
        self.classes = tuple(tuple(c) for c in classes)

    @classmethod
    def from_classes(cls, n, classes):
        class_of = np.full(n, -1, dtype=np.int64)
        for cid, members in enumerate(classes):
            for i in members:
                if not 0 <= i < n:
                    raise ValueError(f"member {i} out of range for n={n}")
                if class_of[i] != -1:
                    raise ValueError(f"member {i} appears in two classes")
                class_of[i] = cid
        if np.any(class_of < 0):
            missing = int(np.nonzero(class_of < 0)[0][0])
            raise ValueError(f"classes do not cover index {missing}")
        return cls(n, class_of)

    @classmethod
    def discrete(cls, n):
        return cls(n, np.arange(n))

    @classmethod
    def single(cls, n):
        return cls(n, np.zeros(n, dtype=np.int64))

    @property
    def size(self):
        """Number of classes."""
        return len(self.classes)

    @property
    def sizes(self):
        return np.asarray([len(c) for c in self.classes], dtype=np.int64)

    def indicator(self):
        """0/1 class-indicator matrix S of shape (n, size) as CSR."""
        return sp.csr_matrix(
            (np.ones(self.n), (np.arange(self.n), self.class_of)),
            shape=(self.n, self.size),
        )

    def refines(self, coarser):
        """True iff every class of self lies inside a class of `coarser`."""
        if coarser.n != self.n:
            raise ValueError("partition sizes differ")
        return all(
            len({int(coarser.class_of[i]) for i in members}) == 1
            for members in self.classes
        )

    def to_lists(self):
        return [list(c) for c in self.classes]

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return self.n == other.n and self.classes == other.classes

    def __hash__(self):
        return hash((self.n, self.classes))

    def __repr__(self):
        return f"Partition(n={self.n}, classes={self.to_lists()})"


class PartitionMatrixView:
    """The averaging matrix X of a partition, applied implicitly.

    X is doubly stochastic, symmetric and idempotent; those properties
    are exercised by the test suite through `dot` / `left_apply`.
    """

    __slots__ = ("partition",)

    def __init__(self, partition):
        self.partition = partition

    def dot(self, x):
        return average_over_partition(x, self.partition)

    def left_apply(self, m):
        return left_multiply_partition_matrix(m, self.partition)

    def right_apply(self, m):
        return right_multiply_partition_matrix(m, self.partition)

    def to_dense(self):
        p = self.partition
        same = p.class_of[:, None] == p.class_of[None, :]
        return same / p.sizes[p.class_of][:, None]


def average_over_partition(x, p):
    """Replace each entry of x by the mean over its class (x -> X x)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.n,):
        raise ValueError(f"expected vector of length {p.n}, got {x.shape}")
    sums = np.bincount(p.class_of, weights=x, minlength=p.size)
    return (sums / p.sizes)[p.class_of]


def left_multiply_partition_matrix(m, p):
    """X M: every row becomes the mean of the rows in its class."""
    if p.n != m.n_rows:
        raise ValueError(f"partition over {p.n} indices but matrix has {m.n_rows} rows")
    s = p.indicator()
    class_means = sp.diags(1.0 / p.sizes) @ (s.T @ m.to_csr())
    out = s @ class_means
    out.eliminate_zeros()
    return SparseMatrix.from_csr(out)


def right_multiply_partition_matrix(m, p):
    """M X: every column becomes the mean of the columns in its class."""
    if p.n != m.n_cols:
        raise ValueError(f"partition over {p.n} indices but matrix has {m.n_cols} columns")
    s = p.indicator()
    class_means = (m.to_csr() @ s) @ sp.diags(1.0 / p.sizes)
    out = class_means @ s.T
    out.eliminate_zeros()
    return SparseMatrix.from_csr(out)


def check_psd(q, tol=PSD_TOL, limit=PSD_CHECK_LIMIT):
    """Dense eigenvalue PSD test: min eig of the symmetrized copy >= -tol.

    Raises MatrixTooLargeError above `limit` (the check is O(n^3)).
    """
    if q.n_rows != q.n_cols:
        raise ValueError("PSD check requires a square matrix")
    if q.n_rows > limit:
        raise MatrixTooLargeError(
            f"PSD check limited to n <= {limit}, got n = {q.n_rows}"
        )
    if q.n_rows == 0:
        return True
    dense = q.to_dense()
    dense = 0.5 * (dense + dense.T)
    return bool(np.linalg.eigvalsh(dense)[0] >= -tol)


class QpInstance:
    """A convex QP  min x'Qx + c'x  s.t.  Ax <= b  in sparse form.

    Q must be stored exactly symmetric (symmetrize at load time);
    positive semidefiniteness is only checked on demand via
    `check_psd` since it costs a dense eigendecomposition.
    """

    __slots__ = ("q", "c", "a", "b", "variable_names", "constraint_names")

    def __init__(self, q, c, a, b, variable_names=None, constraint_names=None):
        c = np.asarray(c, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if q.n_rows != q.n_cols:
            raise ValueError("Q must be square")
        n = q.n_rows
        if c.shape != (n,):
            raise ValueError(f"c must have length {n}, got {c.shape}")
        if a.n_cols != n:
            raise ValueError(f"A must have {n} columns, got {a.n_cols}")
        if b.shape != (a.n_rows,):
            raise ValueError(f"b must have length {a.n_rows}, got {b.shape}")
        if not np.all(np.isfinite(c)) or not np.all(np.isfinite(b)):
            raise ValueError("c and b must be finite")
        if not q.is_symmetric():
            raise ValueError("Q must be stored exactly symmetric; symmetrize first")
        if variable_names is not None and len(variable_names) != n:
            raise ValueError("variable_names length mismatch")
        if constraint_names is not None and len(constraint_names) != a.n_rows:
            raise ValueError("constraint_names length mismatch")
        self.q = q
        self.c = c
        self.a = a
        self.b = b
        self.variable_names = list(variable_names) if variable_names else None
        self.constraint_names = list(constraint_names) if constraint_names else None

    @property
    def n(self):
        return self.q.n_rows

    @property
    def m(self):
        return self.a.n_rows

    def objective(self, x):
        """x'Qx + c'x (no 1/2 factor)."""
        x = np.asarray(x, dtype=np.float64)
        return float(x @ self.q.matvec(x) + self.c @ x)

    def check_psd(self, tol=PSD_TOL, limit=PSD_CHECK_LIMIT):
        return check_psd(self.q, tol=tol, limit=limit)

    def __repr__(self):
        return f"QpInstance(n={self.n}, m={self.m}, nnz_q={self.q.nnz}, nnz_a={self.a.nnz})"


# -- QP JSON interchange ----------------------------------------------
#
# {"n": int, "m": int, "q": [[i, j, v], ...], "c": [...], "a": [[i, j, v], ...],
#  "b": [...], "var_names": [...]?, "con_names": [...]?}     (0-based indices)


def _require(d, key, source):
    if key not in d:
        raise QpFormatError("missing required key", source=source, field=key)
    return d[key]


def _parse_triplets(raw, n_rows, n_cols, source, field):
    triplets = []
    for k, entry in enumerate(raw):
        try:
            i, j, v = entry
            triplets.append((int(i), int(j), float(v)))
        except (TypeError, ValueError) as exc:
            raise QpFormatError(
                f"entry {k} is not an [i, j, value] triplet: {entry!r}",
                source=source,
                field=field,
            ) from exc
    try:
        return SparseMatrix(n_rows, n_cols, triplets)
    except ValueError as exc:
        raise QpFormatError(str(exc), source=source, field=field) from exc


def qp_from_dict(data, source="<dict>"):
    if not isinstance(data, dict):
        raise QpFormatError("top-level value must be an object", source=source)
    n = int(_require(data, "n", source))
    m = int(_require(data, "m", source))
    q = _parse_triplets(_require(data, "q", source), n, n, source, "q").symmetrized()
    a = _parse_triplets(_require(data, "a", source), m, n, source, "a")
    c = np.asarray(_require(data, "c", source), dtype=np.float64)
    b = np.asarray(_require(data, "b", source), dtype=np.float64)
    try:
        return QpInstance(
            q, c, a, b,
            variable_names=data.get("var_names"),
            constraint_names=data.get("con_names"),
        )
    except ValueError as exc:
        raise QpFormatError(str(exc), source=source) from exc


def qp_to_dict(qp):
    data = {
        "n": qp.n,
        "m": qp.m,
        "q": [[int(i), int(j), float(v)] for i, j, v in qp.q.triplets()],
        "c": qp.c.tolist(),
        "a": [[int(i), int(j), float(v)] for i, j, v in qp.a.triplets()],
        "b": qp.b.tolist(),
    }
    if qp.variable_names:
        data["var_names"] = qp.variable_names
    if qp.constraint_names:
        data["con_names"] = qp.constraint_names
    return data


def load_qp(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise QpFormatError(f"cannot read file: {exc}", source=str(path)) from exc
    except json.JSONDecodeError as exc:
        raise QpFormatError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}", source=str(path)
        ) from exc
    return qp_from_dict(data, source=str(path))


def save_qp(qp, path):
    data = qp_to_dict(qp)
    with open(path, "w") as fh:
        # one key per line, triplets inline: reads well at any size
        fh.write("{\n")
        keys = ["n", "m", "q", "c", "a", "b", "var_names", "con_names"]
        present = [k for k in keys if k in data]
        for pos, key in enumerate(present):
            comma = "," if pos + 1 < len(present) else ""
            fh.write(f'  "{key}": {json.dumps(data[key])}{comma}\n')
        fh.write("}\n")
