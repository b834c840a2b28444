"""Finite truncated generators and the norms used by the stability bounds.

Three truncation schemes are supported for a window F:

* ``subnetwork``   -- keep internal links, repair the diagonal so every
  column sums to zero (the truncation stays a generator matrix);
* ``sharp_cutoff`` -- restrict the full generator entrywise, keeping the
  full exit rates on the diagonal (columns may sum to a negative number:
  probability flows out of the window);
* ``condense``     -- append one extra "remainder" state that absorbs the
  summed rates to/from a finite horizon outside F.

Column-compressed storage is used throughout because evolution multiplies
generator @ vector repeatedly.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .errors import GeneratorInvariantError
from .network import FiniteSubset, Network

COLUMN_SUM_RTOL = 1e-12


class Scheme(str, Enum):
    SUBNETWORK = "subnetwork"
    SHARP_CUTOFF = "sharp_cutoff"
    CONDENSE = "condense"


@dataclass(frozen=True)
class GeneratorNorms:
    op1: float            # max over columns of the absolute column sum
    op11: float           # sum of absolute values of all entries
    max_exit_rate: float  # sup_j |diagonal_j|


@dataclass(frozen=True)
class SparseGenerator:
    """Validated truncated generator over a window.

    ``matrix`` is n x n CSC with the diagonal stored explicitly.  For the
    condense scheme n == len(subset) + 1 and the last row/column is the
    remainder state.
    """

    subset: FiniteSubset
    matrix: sp.csc_matrix
    scheme: Scheme
    network_name: str

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def has_remainder(self) -> bool:
        return self.scheme is Scheme.CONDENSE

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def __post_init__(self):
        _validate(self.matrix, self.scheme)


def _validate(matrix: sp.csc_matrix, scheme: Scheme) -> None:
    m = matrix.tocoo()
    off = m.data[m.row != m.col]
    if off.size and off.min() < 0:
        raise GeneratorInvariantError(
            f"negative off-diagonal entry {off.min()} in {scheme.value} generator"
        )
    col_sums = np.asarray(matrix.sum(axis=0)).ravel()
    col_abs = np.asarray(abs(matrix).sum(axis=0)).ravel()
    tol = COLUMN_SUM_RTOL * np.maximum(col_abs, 1.0)
    if scheme in (Scheme.SUBNETWORK, Scheme.CONDENSE):
        bad = np.abs(col_sums) > tol
        if bad.any():
            j = int(np.argmax(np.abs(col_sums)))
            raise GeneratorInvariantError(
                f"column {j} sums to {col_sums[j]} in {scheme.value} generator"
            )
    else:
        bad = col_sums > tol
        if bad.any():
            j = int(np.argmax(col_sums))
            raise GeneratorInvariantError(
                f"column {j} sums to {col_sums[j]} > 0 in sharp-cutoff generator"
            )


def _build_csc(n, rows, cols, vals) -> sp.csc_matrix:
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()
    # keep explicit zeros on the diagonal so it is always stored
    mat.sort_indices()
    return mat


def truncate_subnetwork(net: Network, f: FiniteSubset) -> SparseGenerator:
    """Generator of the subnetwork on f: internal links, repaired diagonal."""
    from .network import subnetwork_edges

    n = len(f)
    rows, cols, vals = [], [], []
    exit_within = np.zeros(n)
    for src, dst, rate in subnetwork_edges(net, f):
        rows.append(dst)
        cols.append(src)
        vals.append(rate)
        exit_within[src] += rate
    for j in range(n):
        rows.append(j)
        cols.append(j)
        vals.append(-exit_within[j])
    return SparseGenerator(f, _build_csc(n, rows, cols, vals),
                           Scheme.SUBNETWORK, net.name)


def truncate_sharp(net: Network, f: FiniteSubset) -> SparseGenerator:
    """Entrywise restriction with the full diagonal -gamma_{j->} retained."""
    from .network import subnetwork_edges

    n = len(f)
    rows, cols, vals = [], [], []
    for src, dst, rate in subnetwork_edges(net, f):
        rows.append(dst)
        cols.append(src)
        vals.append(rate)
    for j, label in enumerate(f.members):
        rows.append(j)
        cols.append(j)
        vals.append(-net.exit_rate(label))
    return SparseGenerator(f, _build_csc(n, rows, cols, vals),
                           Scheme.SHARP_CUTOFF, net.name)


def truncate_condense(
    net: Network, f: FiniteSubset, horizon: FiniteSubset
) -> SparseGenerator:
    """Condense horizon \\ f into a single remainder state (local index n).

    The paper-level construction sums over the whole infinite complement;
    here the user supplies a finite horizon as a proxy, so the remainder
    rates are gamma_{a->rem} = sum over beta in horizon\\f of gamma_{a->beta}
    and symmetrically for the inflow.
    """
    if not f.issubset(horizon):
        raise ValueError("f must be a subset of horizon")
    rest = [s for s in horizon.members if s not in f]
    if not rest:
        raise ValueError("horizon \\ f must be nonempty")
    n = len(f)
    rows, cols, vals = [], [], []
    exit_total = np.zeros(n + 1)
    for src_local, src in enumerate(f.members):
        for target, rate in net.out_edges(src):
            if target in f:
                dst = f.index_of(target)
            elif any(target == r for r in rest):
                dst = n
            else:
                continue
            rows.append(dst)
            cols.append(src_local)
            vals.append(rate)
            exit_total[src_local] += rate
    rem_out = np.zeros(n)
    for beta in rest:
        for target, rate in net.out_edges(beta):
            if target in f:
                rem_out[f.index_of(target)] += rate
    for dst, rate in enumerate(rem_out):
        if rate > 0.0:
            rows.append(dst)
            cols.append(n)
            vals.append(rate)
            exit_total[n] += rate
    for j in range(n + 1):
        rows.append(j)
        cols.append(j)
        vals.append(-exit_total[j])
    return SparseGenerator(f, _build_csc(n + 1, rows, cols, vals),
                           Scheme.CONDENSE, net.name)


def norms(g: SparseGenerator) -> GeneratorNorms:
    """Operator 1-norm, entrywise 1-1-norm and the max exit rate.

    For subnetwork generators op1 == 2 * max_exit_rate and
    op11 == 2 * sum of all internal rates; op1 <= op11 always.
    """
    a = abs(g.matrix)
    col_abs = np.asarray(a.sum(axis=0)).ravel()
    op1 = float(col_abs.max()) if col_abs.size else 0.0
    op11 = float(col_abs.sum())
    diag = np.abs(g.matrix.diagonal())
    max_exit = float(diag.max()) if diag.size else 0.0
    return GeneratorNorms(op1=op1, op11=op11, max_exit_rate=max_exit)


def generator_distance(g1: SparseGenerator, g2: SparseGenerator) -> float:
    """|| G^[F1] - G^[F2] ||_{1,1} with both matrices aligned on F1 u F2."""
    if g1.network_name != g2.network_name:
        raise ValueError("generators come from different networks")
    if g1.scheme is not Scheme.SUBNETWORK or g2.scheme is not Scheme.SUBNETWORK:
        raise ValueError("generator_distance is defined for subnetwork truncations")
    union = g1.subset.union(g2.subset)
    n = len(union)

    def embed(g: SparseGenerator) -> sp.csc_matrix:
        idx = np.array([union.index_of(m) for m in g.subset.members])
        coo = g.matrix.tocoo()
        return sp.coo_matrix(
            (coo.data, (idx[coo.row], idx[coo.col])), shape=(n, n)
        ).tocsc()

    diff = embed(g1) - embed(g2)
    return float(np.abs(diff.tocoo().data).sum())


def dump_triplets(g: SparseGenerator) -> str:
    """Sparse-triplet text export: header plus `row col value` lines.

    Values print with 17 significant digits, enough to round-trip float64
    exactly.
    """
    coo = g.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = [f"# scheme={g.scheme.value} n={g.dim}"]
    for k in order:
        lines.append(f"{coo.row[k]} {coo.col[k]} {coo.data[k]:.17g}")
    return "\n".join(lines) + "\n"
