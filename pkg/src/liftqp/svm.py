"""Transductive-collective soft-margin SVM QPs from tabular data plus links.

The primal variables are the weight vector, the bias, one slack per
labeled instance, and one slack per active link (a link joining a
labeled to an unlabeled instance).  Only the weights enter the
quadratic part, so Q is a 0/1 diagonal; all of the symmetry worth
compressing lives in the constraint matrix, where interchangeable
unlabeled instances produce interchangeable slack columns and rows.
Link slacks deliberately stay separate per link so that contradicting
links (an instance tied to both classes) soften instead of making the
program infeasible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qpcore import QpInstance, SparseMatrix

UNLABELED = 0


class NoLabeledDataError(ValueError):
    pass


@dataclass(frozen=True)
class SvmDataset:
    features: np.ndarray
    labels: np.ndarray  # +1 / -1 / 0 (unlabeled)
    links: tuple = ()

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise ValueError("features must be 2-d")
        if labels.shape != (features.shape[0],):
            raise ValueError("labels length must match feature rows")
        if not np.all(np.isin(labels, (-1, 0, 1))):
            raise ValueError("labels must be -1, +1, or 0 (unlabeled)")
        links = tuple((int(i), int(j)) for i, j in self.links)
        for i, j in links:
            if not (0 <= i < len(labels) and 0 <= j < len(labels)):
                raise ValueError(f"link ({i}, {j}) out of range")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "links", links)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def labeled(self):
        return np.nonzero(self.labels != UNLABELED)[0]

    @property
    def unlabeled(self):
        return np.nonzero(self.labels == UNLABELED)[0]


@dataclass(frozen=True)
class SvmBuildSpec:
    c1: float
    c2: float = 1.0
    transductive: bool = False

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("penalties c1 and c2 must be positive")


@dataclass(frozen=True)
class VariableLegend:
    """Where each model quantity lives inside the flat QP variable vector."""

    dim: int
    bias_index: int
    labeled_instances: tuple
    label_slack_of: dict
    active_links: tuple
    link_slack_of: dict

    def split(self, x):
        """(w, bias) from a ground solution vector."""
        return np.asarray(x[: self.dim]), float(x[self.bias_index])


def active_links(ds):
    """Links joining a labeled to an unlabeled instance, as (labeled, unlabeled)."""
    out = []
    for i, j in ds.links:
        li, lj = ds.labels[i], ds.labels[j]
        if li != UNLABELED and lj == UNLABELED:
            out.append((i, j))
        elif lj != UNLABELED and li == UNLABELED:
            out.append((j, i))
    return tuple(out)


def build_svm_qp(ds, spec):
    """Ground the soft-margin (optionally transductive) SVM as a QP.

    Returns (QpInstance, VariableLegend).  Variable order: w block,
    bias, labeled slacks, link slacks; constraint order: labeled
    margins, labeled slack bounds, link margins, link slack bounds.
    """
    labeled = ds.labeled
    if labeled.size == 0:
        raise NoLabeledDataError("at least one labeled instance is required")
    links = active_links(ds) if spec.transductive else ()
    d = ds.dim
    n_vars = d + 1 + labeled.size + len(links)
    bias = d
    label_slack_of = {int(i): d + 1 + k for k, i in enumerate(labeled)}
    link_slack_of = {link: d + 1 + labeled.size + k for k, link in enumerate(links)}

    q = SparseMatrix(n_vars, n_vars, ((j, j, 1.0) for j in range(d)))
    c = np.zeros(n_vars)
    for var in label_slack_of.values():
        c[var] = spec.c1
    for var in link_slack_of.values():
        c[var] = spec.c2

    triplets = []
    b = []
    names = []
    row = 0

    def margin_row(y, x_row, slack_var, name):
        nonlocal row
        for j, value in enumerate(x_row):
            if value != 0.0:
                triplets.append((row, j, -float(y) * float(value)))
        triplets.append((row, bias, -float(y)))
        triplets.append((row, slack_var, -1.0))
        b.append(-1.0)
        names.append(name)
        row += 1

    def nonneg_row(slack_var, name):
        nonlocal row
        triplets.append((row, slack_var, -1.0))
        b.append(0.0)
        names.append(name)
        row += 1

    for i in labeled:
        margin_row(ds.labels[i], ds.features[i], label_slack_of[int(i)], f"margin[{i}]")
    for i in labeled:
        nonneg_row(label_slack_of[int(i)], f"slack_nonneg[{i}]")
    for i, j in links:
        margin_row(ds.labels[i], ds.features[j], link_slack_of[(i, j)], f"comargin[{i},{j}]")
    for i, j in links:
        nonneg_row(link_slack_of[(i, j)], f"coslack_nonneg[{i},{j}]")

    var_names = [f"w{j}" for j in range(d)] + ["bias"]
    var_names += [f"slack[{i}]" for i in labeled]
    var_names += [f"coslack[{i},{j}]" for i, j in links]

    qp = QpInstance(
        q,
        c,
        SparseMatrix(row, n_vars, triplets),
        np.asarray(b),
        variable_names=var_names,
        constraint_names=names,
    )
    legend = VariableLegend(
        dim=d,
        bias_index=bias,
        labeled_instances=tuple(int(i) for i in labeled),
        label_slack_of=label_slack_of,
        active_links=links,
        link_slack_of=link_slack_of,
    )
    return qp, legend


def predict(w, bias, features):
    """Linear prediction sign(w.x + bias); ties resolve to +1."""
    features = np.asarray(features, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != w.shape[0]:
        raise ValueError("feature dimension does not match weight vector")
    scores = features @ w + bias
    return np.where(scores >= 0.0, 1, -1)


def make_two_moons(n, noise_dim, k_nn, seed):
    """Two interleaved half-circles, optional Gaussian noise features,
    and a symmetric k-nearest-neighbour link graph in the full feature
    space.  Fully labeled; use `mask_labels` for transductive setups.
    """
    if n % 2:
        raise ValueError("n must be even")
    rng = np.random.default_rng(seed)
    half = n // 2
    t = np.linspace(0.0, np.pi, half)
    outer = np.column_stack([np.cos(t), np.sin(t)])
    inner = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    base = np.vstack([outer, inner])
    labels = np.concatenate([np.ones(half, dtype=np.int64), -np.ones(half, dtype=np.int64)])
    if noise_dim:
        base = np.hstack([base, rng.standard_normal((n, noise_dim))])
    links = knn_links(base, k_nn)
    return SvmDataset(base, labels, links)


def knn_links(features, k):
    """Symmetric k-NN pairs (i < j), deterministic under distance ties."""
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if k < 1 or k >= n:
        raise ValueError("k must satisfy 1 <= k < n")
    sq = (
        np.sum(features**2, axis=1)[:, None]
        + np.sum(features**2, axis=1)[None, :]
        - 2.0 * features @ features.T
    )
    np.fill_diagonal(sq, np.inf)
    pairs = set()
    for i in range(n):
        for j in np.argsort(sq[i], kind="stable")[:k]:
            pairs.add((min(i, int(j)), max(i, int(j))))
    return tuple(sorted(pairs))


def mask_labels(ds, unlabeled_fraction, seed):
    """Copy of the dataset with a seeded random subset marked unlabeled."""
    if not 0.0 <= unlabeled_fraction <= 1.0:
        raise ValueError("unlabeled_fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    n_mask = int(round(unlabeled_fraction * ds.n))
    masked = rng.choice(ds.n, size=n_mask, replace=False)
    labels = ds.labels.copy()
    labels[masked] = UNLABELED
    return SvmDataset(ds.features, labels, ds.links)
