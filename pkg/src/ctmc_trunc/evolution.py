"""Probability vectors on finite windows and their time evolution.

The primary evolver is uniformization: with L = max exit rate and
Q = I + G/L (column-stochastic for subnetwork truncations),

    exp(t G) p = e^{-Lt} sum_k (Lt)^k / k!  Q^k p.

Every term is entrywise nonnegative, so positivity and (for subnetwork
truncations) total mass survive by construction; the Poisson series is cut
once its remaining tail drops below the requested tolerance.  A dense
scaling-and-squaring exponential is kept alongside as an independent
reference for tests.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import DimensionTooLarge, ZeroMassWindow
from .generator import Scheme, SparseGenerator, norms
from .network import FiniteSubset, StateLabel

NEG_CLIP = 1e-14          # tiny negative roundoff clipped to zero
CHUNK_TRIGGER = 1e4       # split the series when L*t exceeds this
CHUNK_TARGET = 1e3        # per-chunk L*t after splitting
RESCALE_AT = 1e250        # running-weight rescale threshold


class ProbVec:
    """Dense nonnegative vector over a FiniteSubset with tracked 1-norm."""

    __slots__ = ("subset", "values", "mass")

    def __init__(self, subset: FiniteSubset, values, clip_tol: float = NEG_CLIP):
        vals = np.asarray(values, dtype=float).copy()
        if vals.shape != (len(subset),):
            raise ValueError(
                f"expected {len(subset)} entries, got shape {vals.shape}"
            )
        worst = vals.min(initial=0.0)
        if worst < -clip_tol:
            raise ValueError(f"negative entry {worst} below clip tolerance")
        np.clip(vals, 0.0, None, out=vals)
        self.subset = subset
        self.values = vals
        self.mass = float(vals.sum())

    @classmethod
    def unit(cls, subset: FiniteSubset, label: StateLabel) -> "ProbVec":
        vals = np.zeros(len(subset))
        vals[subset.index_of(label)] = 1.0
        return cls(subset, vals)

    @classmethod
    def from_evaluator(
        cls,
        subset: FiniteSubset,
        fn: Callable[[StateLabel], float],
        normalize: bool = True,
    ) -> "ProbVec":
        vals = np.array([fn(m) for m in subset.members], dtype=float)
        if normalize:
            total = vals.sum()
            if total <= 0.0:
                raise ZeroMassWindow("evaluator puts no mass on the window")
            vals /= total
        return cls(subset, vals)

    def embed(self, target: FiniteSubset) -> "ProbVec":
        """Re-index into a larger window, filling absent states with zero."""
        vals = np.zeros(len(target))
        for i, m in enumerate(self.subset.members):
            vals[target.index_of(m)] = self.values[i]
        return ProbVec(target, vals)

    def diff_l1(self, other: "ProbVec") -> float:
        """1-norm distance after embedding both vectors in the union window."""
        union = self.subset.union(other.subset)
        a = self.embed(union).values
        b = other.embed(union).values
        return float(np.abs(a - b).sum())

    def __repr__(self) -> str:
        return f"ProbVec(n={len(self.subset)}, mass={self.mass:.12g})"


@dataclass(frozen=True)
class EvolveReport:
    result: ProbVec
    terms_used: int
    mass_drift: float
    wall_time: float


def restrict(p: ProbVec, f: FiniteSubset) -> ProbVec:
    """Renormalized restriction of p to the window f.

    Entries inside f are rescaled by the inverse of their total mass;
    everything else is dropped.  Raises ZeroMassWindow when f carries no
    mass (f is a null set of p).
    """
    vals = np.zeros(len(f))
    for i, m in enumerate(f.members):
        if m in p.subset:
            vals[i] = p.values[p.subset.index_of(m)]
    total = vals.sum()
    if total <= 0.0:
        raise ZeroMassWindow(f"window {f!r} has zero mass")
    return ProbVec(f, vals / total)


DENSE_SWITCH = 128  # below this, dense matvecs beat sparse-call overhead


def _series_apply(
    mat, lam: float, lam_t: float, p: np.ndarray, tol: float
) -> tuple[np.ndarray, int]:
    """One uniformization pass: returns (sum_k u_k Q^k p) / (sum_k u_k).

    u_k = (lam_t)^k / k! is accumulated with on-the-fly rescaling, so the
    pass is safe for lam_t well beyond the overflow point of exp.
    Normalizing by the partial weight sum makes subnetwork evolution
    conserve mass to roundoff regardless of where the series is cut.
    """
    v = p.copy()
    u = 1.0
    acc = v.copy()
    weight = u
    k = 0
    while True:
        if k + 1 > lam_t:
            u_next = u * lam_t / (k + 1)
            tail = u_next / (1.0 - lam_t / (k + 2))
            if tail <= tol * weight:
                break
        k += 1
        v = v + (mat @ v) / lam
        u = u * lam_t / k
        acc += u * v
        weight += u
        if weight > RESCALE_AT:
            acc /= RESCALE_AT
            u /= RESCALE_AT
            weight /= RESCALE_AT
    return acc / weight, k + 1


def _apply_exp(
    mat, lam: float, t: float, vals: np.ndarray, tol: float
) -> tuple[np.ndarray, int]:
    """exp(t G) @ vals via uniformization, chunking very stiff horizons."""
    lam_t = lam * t
    n_chunks = 1
    if lam_t > CHUNK_TRIGGER:
        n_chunks = int(np.ceil(lam_t / CHUNK_TARGET))
    chunk_tol = tol / n_chunks
    terms = 0
    for _ in range(n_chunks):
        vals, used = _series_apply(mat, lam, lam_t / n_chunks, vals, chunk_tol)
        terms += used
    return vals, terms


def evolve(
    g: SparseGenerator, p0: ProbVec, t: float, tol: float = 1e-12
) -> EvolveReport:
    """Approximate exp(t G^[F]) p0 by uniformization.

    For the sharp-cutoff scheme the result loses mass (reported via
    mass_drift, not an error); for subnetwork and condense schemes mass is
    conserved up to roundoff.
    """
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if not (0.0 < tol <= 1e-3):
        raise ValueError(f"tol must lie in (0, 1e-3], got {tol}")
    if p0.subset != g.subset and len(p0.values) != g.dim:
        raise ValueError("p0 is not indexed by the generator's window")
    start = time.perf_counter()
    lam = norms(g).max_exit_rate
    vals = p0.values
    if g.has_remainder and len(vals) == g.dim - 1:
        vals = np.concatenate([vals, [0.0]])
    if lam == 0.0 or t == 0.0:
        result = _wrap(g, vals)
        return EvolveReport(result, 1, abs(result.mass - p0.mass),
                            time.perf_counter() - start)
    mat = g.dense() if g.dim <= DENSE_SWITCH else g.matrix
    vals, terms = _apply_exp(mat, lam, t, vals, tol)
    result = _wrap(g, vals)
    return EvolveReport(result, terms, abs(result.mass - p0.mass),
                        time.perf_counter() - start)


def _wrap(g: SparseGenerator, vals: np.ndarray) -> ProbVec:
    if g.has_remainder:
        # remainder state lives outside the labeled window; report it by
        # appending a synthetic index via a raw array ProbVec over g.subset
        # is not possible, so keep the full vector on the padded window.
        return _RemainderVec(g.subset, vals)
    return ProbVec(g.subset, vals)


class _RemainderVec(ProbVec):
    """ProbVec for condense-scheme generators: last entry is the remainder."""

    def __init__(self, subset: FiniteSubset, values):
        vals = np.asarray(values, dtype=float).copy()
        if vals.shape != (len(subset) + 1,):
            raise ValueError("condense vector must carry the remainder entry")
        worst = vals.min(initial=0.0)
        if worst < -NEG_CLIP:
            raise ValueError(f"negative entry {worst} below clip tolerance")
        np.clip(vals, 0.0, None, out=vals)
        self.subset = subset
        self.values = vals
        self.mass = float(vals.sum())


def dense_expm_oracle(g: SparseGenerator, p0: ProbVec, t: float) -> ProbVec:
    """Reference evolution through scipy's dense scaling-and-squaring expm.

    Deliberately a different algorithm from `evolve`; used to cross-check
    it in tests.  Guarded to 400 states because of the dense cost.
    """
    if g.dim > 400:
        raise DimensionTooLarge(f"dense oracle refused for n={g.dim} > 400")
    if t < 0:
        raise ValueError("t must be nonnegative")
    vals = p0.values
    if g.has_remainder and len(vals) == g.dim - 1:
        vals = np.concatenate([vals, [0.0]])
    out = scipy.linalg.expm(g.dense() * t) @ vals
    # expm is not positivity-preserving in floating point; allow more dust
    out[np.abs(out) < 1e-300] = 0.0
    if g.has_remainder:
        return _RemainderVec(g.subset, np.clip(out, None, None))
    return ProbVec(g.subset, out, clip_tol=1e-11)


def embedded_chain(g: SparseGenerator) -> sp.csc_matrix:
    """Jump-chain transition matrix Q_{ij} = gamma_{j->i} / gamma_{j->}.

    Absorbing states (zero exit rate) get Q_jj = 1, the standard jump-chain
    convention, so columns always sum to one; the largest entry of each
    column is nudged so the sum is exact in floating point.
    """
    if g.scheme is not Scheme.SUBNETWORK:
        raise ValueError("embedded chain is defined for subnetwork truncations")
    n = g.dim
    coo = g.matrix.tocoo()
    cols: list[dict[int, float]] = [dict() for _ in range(n)]
    for r, c, v in zip(coo.row, coo.col, coo.data):
        if r != c and v != 0.0:
            cols[c][r] = v
    rows_out, cols_out, vals_out = [], [], []
    for j in range(n):
        entries = cols[j]
        total = sum(entries.values())
        if total <= 0.0:
            rows_out.append(j)
            cols_out.append(j)
            vals_out.append(1.0)
            continue
        probs = {i: v / total for i, v in entries.items()}
        # make the column sum exactly 1.0
        drift = 1.0 - sum(probs.values())
        imax = max(probs, key=probs.get)
        probs[imax] += drift
        for i, v in probs.items():
            rows_out.append(i)
            cols_out.append(j)
            vals_out.append(v)
    return sp.coo_matrix((vals_out, (rows_out, cols_out)), shape=(n, n)).tocsc()


def cesaro_mean(q: sp.spmatrix | np.ndarray, p0: ProbVec, m: int) -> ProbVec:
    """Finite Cesaro mean (1/m) sum_{k=0}^{m-1} Q^k p0 of the jump chain."""
    if m < 1:
        raise ValueError("m must be >= 1")
    cur = p0.values.copy()
    acc = cur.copy()
    for _ in range(m - 1):
        cur = q @ cur
        acc += cur
    return ProbVec(p0.subset, acc / m)


def long_time_limit(
    g: SparseGenerator,
    p0: ProbVec,
    t_step: float | None = None,
    tol: float = 1e-10,
    max_steps: int = 10_000,
) -> tuple[ProbVec, bool, float]:
    """Evolve stepwise until successive iterates stop moving in 1-norm.

    Successive-difference detection is used instead of spectral estimates
    because reducible truncations may carry nontrivial Jordan structure.
    With an explicit t_step the step stays fixed; the default schedule
    starts at 10/max_exit_rate and doubles, so metastable truncations
    (absorption through a drift barrier) still terminate -- a growing step
    only makes the stop criterion more conservative.  Non-convergence
    within max_steps is a reported outcome (converged=False), not an error.
    """
    if t_step is not None and t_step <= 0:
        raise ValueError("t_step must be positive")
    lam = norms(g).max_exit_rate
    if lam == 0.0:
        return _wrap(g, _pad(g, p0)), True, 0.0
    evolve_tol = max(min(tol * 1e-3, 1e-12), 5e-16)
    mat = g.dense() if g.dim <= DENSE_SWITCH else g.matrix
    cur = _pad(g, p0).copy()
    t = 0.0
    if t_step is not None:
        for _ in range(max_steps):
            nxt, _terms = _apply_exp(mat, lam, t_step, cur, evolve_tol)
            t += t_step
            if float(np.abs(nxt - cur).sum()) < tol:
                return _wrap(g, nxt), True, t
            cur = nxt
        return _wrap(g, cur), False, t
    # default schedule: step doubles each iteration, which keeps the stop
    # criterion conservative and lets metastable truncations (absorption
    # through a drift barrier) finish.  On small windows the doubled step
    # comes from squaring the uniformized propagator of the base step.
    step = 10.0 / lam
    if g.dim <= DENSE_SWITCH:
        prop, _ = _apply_exp(mat, lam, step, np.eye(g.dim), evolve_tol)
        stochastic = g.scheme is not Scheme.SHARP_CUTOFF
        for _ in range(min(max_steps, 400)):
            nxt = prop @ cur
            t += step
            if float(np.abs(nxt - cur).sum()) < tol:
                return _wrap(g, nxt), True, t
            cur = nxt
            prop = prop @ prop
            np.clip(prop, 0.0, None, out=prop)
            if stochastic:
                # squaring drifts column sums by roundoff; project back
                prop /= prop.sum(axis=0, keepdims=True)
            step *= 2.0
            if step > 1e30:
                break
        return _wrap(g, cur), False, t
    for _ in range(max_steps):
        nxt, _terms = _apply_exp(mat, lam, step, cur, evolve_tol)
        t += step
        if float(np.abs(nxt - cur).sum()) < tol:
            return _wrap(g, nxt), True, t
        cur = nxt
        step *= 2.0
    return _wrap(g, cur), False, t


def _pad(g: SparseGenerator, p0: ProbVec) -> np.ndarray:
    if g.has_remainder and len(p0.values) == g.dim - 1:
        return np.concatenate([p0.values, [0.0]])
    return p0.values
