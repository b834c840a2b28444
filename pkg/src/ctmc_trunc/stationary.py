"""Stationary solutions of finite truncations, three independent ways.

* kernel solve: replace one redundant row of G^[F] with the normalization
  row and LU-solve;
* detailed-balance path products: X*(w) proportional to the product of
  forward/backward rate ratios along a spanning-tree path from a root;
* brute-force in-tree enumeration (Markov-chain tree theorem) as an exact
  reference for small windows.

The Kolmogorov cycle criterion decides whether the path-product candidate
is actually valid; it is checked, never assumed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg

from .errors import (
    DimensionTooLarge,
    MissingReverseEdge,
    NotConnected,
    SingularBeyondKernel,
)
from .evolution import ProbVec
from .generator import Scheme, SparseGenerator, norms, truncate_subnetwork
from .network import (
    Bits,
    FiniteSubset,
    Network,
    StateLabel,
    canonical_index,
    format_label,
    subnetwork_edges,
)

RESIDUAL_RTOL = 1e-9
CYCLE_LOG_TOL = 1e-9

METHOD_KERNEL = "KernelSolve"
METHOD_DB = "DetailedBalanceProduct"
METHOD_TREE = "InTreeOracle"


@dataclass(frozen=True)
class StationaryResult:
    vector: ProbVec
    kernel_dim: int
    residual: float
    method: str

    def to_jsonable(self) -> dict:
        return {
            "method": self.method,
            "kernel_dim": self.kernel_dim,
            "residual": self.residual,
            "vector": [
                {"label": format_label(m), "value": float(v)}
                for m, v in zip(self.vector.subset.members, self.vector.values)
            ],
        }


@dataclass(frozen=True)
class DetailedBalanceCertificate:
    holds: bool
    witness_cycle: tuple[StateLabel, ...] | None
    max_cycle_ratio_error: float


def _off_diagonal_graph(g: SparseGenerator) -> sp.csr_matrix:
    coo = g.matrix.tocoo()
    keep = (coo.row != coo.col) & (coo.data > 0.0)
    # csgraph convention: entry (i, j) is an edge i -> j, so transpose the
    # column-oriented generator (gamma_{j->i} sits at (i, j)).
    return sp.coo_matrix(
        (coo.data[keep], (coo.col[keep], coo.row[keep])), shape=g.matrix.shape
    ).tocsr()


def _terminal_components(adj: sp.csr_matrix) -> tuple[np.ndarray, list[list[int]]]:
    """Strongly connected components with no outgoing edge (absorbing sets)."""
    n_comp, labels = csgraph.connected_components(adj, connection="strong")
    coo = adj.tocoo()
    leaves = set(range(n_comp))
    for s, d in zip(coo.row, coo.col):
        if labels[s] != labels[d]:
            leaves.discard(labels[s])
    members: dict[int, list[int]] = {c: [] for c in leaves}
    for i, c in enumerate(labels):
        if c in members:
            members[c].append(i)
    return labels, [members[c] for c in sorted(leaves)]


def _solve_normalized(dense: np.ndarray) -> np.ndarray:
    """Solve G x = 0, sum(x) = 1 by replacing the last row with ones."""
    n = dense.shape[0]
    a = dense.copy()
    a[n - 1, :] = 1.0
    b = np.zeros(n)
    b[n - 1] = 1.0
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularBeyondKernel(str(exc)) from exc
    return x


def _kernel_dim(g: SparseGenerator, n_terminal: int) -> int:
    if g.dim <= 400:
        s = np.linalg.svd(g.dense(), compute_uv=False)
        if s.size == 0 or s[0] == 0.0:
            return g.dim
        return int(np.sum(s <= 1e-10 * s[0]))
    # above the dense guard, the terminal-class count is the kernel
    # dimension of a generator matrix
    return n_terminal


def stationary_kernel(g: SparseGenerator) -> StationaryResult:
    """Kernel solve of the truncated generator, normalized to mass one.

    Irreducible windows get a direct row-replacement LU solve.  Reducible
    windows report kernel_dim > 1 where applicable and return the solution
    supported on the minimal absorbing set reachable from the reference
    state (local index 0).
    """
    if g.scheme is not Scheme.SUBNETWORK:
        raise ValueError("stationary_kernel expects a subnetwork truncation")
    n = g.dim
    if n == 1:
        vec = ProbVec(g.subset, np.array([1.0]))
        return StationaryResult(vec, 1, 0.0, METHOD_KERNEL)
    adj = _off_diagonal_graph(g)
    labels, terminals = _terminal_components(adj)
    kernel_dim = _kernel_dim(g, len(terminals))
    if len(terminals) == 1 and len(terminals[0]) == n:
        x = _solve_normalized(g.dense())
    else:
        # reachability from the reference state, then the absorbing set
        # containing the smallest reachable state
        reach = csgraph.breadth_first_order(
            adj, 0, directed=True, return_predecessors=False
        )
        reachable = set(int(i) for i in reach)
        candidates = [t for t in terminals if reachable.issuperset(t)]
        if not candidates:
            raise SingularBeyondKernel(
                "no absorbing set reachable from the reference state"
            )
        target = min(candidates, key=lambda t: min(t))
        idx = np.array(sorted(target))
        sub = g.matrix[np.ix_(idx, idx)].toarray()
        x_sub = _solve_normalized(sub)
        x = np.zeros(n)
        x[idx] = x_sub
    x[np.abs(x) < 1e-300] = 0.0
    vec = ProbVec(g.subset, x / x.sum(), clip_tol=1e-11) if not g.has_remainder \
        else _condense_vec(g, x)
    residual = float(np.abs(g.matrix @ vec.values).sum())
    op1 = norms(g).op1
    if op1 > 0.0 and residual > RESIDUAL_RTOL * op1:
        raise SingularBeyondKernel(
            f"kernel residual {residual} above {RESIDUAL_RTOL * op1}"
        )
    return StationaryResult(vec, kernel_dim, residual, METHOD_KERNEL)


def _condense_vec(g: SparseGenerator, x: np.ndarray) -> ProbVec:
    from .evolution import _RemainderVec

    return _RemainderVec(g.subset, x / x.sum())


def absorbing_limit(g: SparseGenerator, p0: ProbVec) -> ProbVec | None:
    """Long-time limit of a reducible window when it is p0-independent.

    A finite master equation relaxes onto the terminal (absorbing) classes
    reachable from the initial support.  If exactly one such class exists,
    the limit equals its stationary vector regardless of how p0 splits its
    mass, so it can be solved directly.  Returns None when several classes
    are reachable (the limit then genuinely depends on p0) so the caller
    falls back to time evolution.
    """
    if g.scheme is not Scheme.SUBNETWORK:
        raise ValueError("absorbing_limit expects a subnetwork truncation")
    adj = _off_diagonal_graph(g)
    labels, terminals = _terminal_components(adj)
    if len(terminals) == 1 and len(terminals[0]) == g.dim:
        return stationary_kernel(g).vector
    support = np.flatnonzero(p0.values > 0.0)
    reachable: set[int] = set()
    for s in support:
        order = csgraph.breadth_first_order(
            adj, int(s), directed=True, return_predecessors=False
        )
        reachable.update(int(i) for i in order)
    hit = [t for t in terminals if reachable.issuperset(t)]
    if len(hit) != 1:
        return None
    idx = np.array(sorted(hit[0]))
    sub = g.matrix[np.ix_(idx, idx)].toarray()
    x_sub = _solve_normalized(sub)
    x = np.zeros(g.dim)
    x[idx] = x_sub
    x[np.abs(x) < 1e-300] = 0.0
    return ProbVec(g.subset, x / x.sum(), clip_tol=1e-11)


def _reversible_adjacency(
    net: Network, f: FiniteSubset
) -> dict[tuple[int, int], float]:
    """Local-index rate map, raising unless every edge has its reverse."""
    rates: dict[tuple[int, int], float] = {}
    for s, d, r in subnetwork_edges(net, f):
        rates[(s, d)] = r
    for (s, d) in rates:
        if (d, s) not in rates:
            raise MissingReverseEdge(
                f"{format_label(f.members[s])} -> {format_label(f.members[d])} "
                "has no reverse edge"
            )
    return rates


def _spanning_tree(
    rates: dict[tuple[int, int], float], n: int, root: int
) -> tuple[list[int], list[float]]:
    """BFS tree: parent pointers and log X* relative to the root."""
    neighbors: list[list[int]] = [[] for _ in range(n)]
    for (s, d) in rates:
        neighbors[s].append(d)
    for lst in neighbors:
        lst.sort()
    parent = [-1] * n
    log_x = [math.nan] * n
    log_x[root] = 0.0
    queue = [root]
    seen = {root}
    while queue:
        u = queue.pop(0)
        for v in neighbors[u]:
            if v not in seen:
                seen.add(v)
                parent[v] = u
                log_x[v] = log_x[u] + math.log(rates[(u, v)]) - math.log(rates[(v, u)])
                queue.append(v)
    if len(seen) != n:
        raise NotConnected(f"window splits into components ({len(seen)} of {n} reached)")
    return parent, log_x


def detailed_balance_candidate(
    net: Network, f: FiniteSubset, root: StateLabel | None = None
) -> StationaryResult:
    """Path-product candidate X* built over a BFS spanning tree.

    X*(w) multiplies gamma(parent->child)/gamma(child->parent) along the
    tree path from the root (defaults to the window's lowest canonical
    state, the paper-style reference w0).  Products run in the log domain
    so super-geometric rate profiles cannot overflow.  Path-independence is
    NOT assumed; pair with kolmogorov_check before trusting the result.
    """
    n = len(f)
    root_local = 0 if root is None else f.index_of(root)
    rates = _reversible_adjacency(net, f)
    _, log_x = _spanning_tree(rates, n, root_local)
    log_x = np.array(log_x)
    log_z = _logsumexp(log_x)
    vec = ProbVec(f, np.exp(log_x - log_z))
    gen = truncate_subnetwork(net, f)
    residual = float(np.abs(gen.matrix @ vec.values).sum())
    return StationaryResult(vec, 1, residual, METHOD_DB)


def _logsumexp(v: np.ndarray) -> float:
    m = float(np.max(v))
    return m + math.log(float(np.exp(v - m).sum()))


def kolmogorov_check(net: Network, f: FiniteSubset) -> DetailedBalanceCertificate:
    """Closed-walk weight test for detailed balance on the window f.

    Builds a spanning forest and compares, for every non-tree edge, the
    forward and backward weight of the fundamental cycle as log-ratios.
    The potential form log X*(u) + log(gamma_{u->v}/gamma_{v->u}) - log X*(v)
    equals exactly the cycle log-ratio because the tree contributions cancel
    in pairs.
    """
    n = len(f)
    rates = _reversible_adjacency(net, f)
    neighbors: list[list[int]] = [[] for _ in range(n)]
    for (s, d) in rates:
        neighbors[s].append(d)
    for lst in neighbors:
        lst.sort()

    parent = [-1] * n
    depth = [0] * n
    log_x = [math.nan] * n
    tree_pairs: set[frozenset[int]] = set()
    worst = 0.0
    witness: tuple[StateLabel, ...] | None = None

    for start in range(n):
        if not math.isnan(log_x[start]):
            continue
        log_x[start] = 0.0
        queue = [start]
        while queue:
            u = queue.pop(0)
            for v in neighbors[u]:
                if math.isnan(log_x[v]):
                    parent[v] = u
                    depth[v] = depth[u] + 1
                    log_x[v] = (
                        log_x[u]
                        + math.log(rates[(u, v)])
                        - math.log(rates[(v, u)])
                    )
                    tree_pairs.add(frozenset((u, v)))
                    queue.append(v)

    for (u, v) in sorted(rates):
        if u > v or frozenset((u, v)) in tree_pairs:
            continue
        err = abs(
            log_x[u] + math.log(rates[(u, v)]) - math.log(rates[(v, u)]) - log_x[v]
        )
        if err > worst:
            worst = err
            if err > CYCLE_LOG_TOL and witness is None or (
                err > CYCLE_LOG_TOL and witness is not None and err >= worst
            ):
                witness = _fundamental_cycle(u, v, parent, depth, f)
    holds = worst <= CYCLE_LOG_TOL
    return DetailedBalanceCertificate(
        holds=holds,
        witness_cycle=None if holds else witness,
        max_cycle_ratio_error=worst,
    )


def _fundamental_cycle(
    u: int, v: int, parent: list[int], depth: list[int], f: FiniteSubset
) -> tuple[StateLabel, ...]:
    """Closed walk u -> v -> ... -> lca -> ... -> u through tree paths."""
    pu, pv = [u], [v]
    a, b = u, v
    while depth[a] > depth[b]:
        a = parent[a]
        pu.append(a)
    while depth[b] > depth[a]:
        b = parent[b]
        pv.append(b)
    while a != b:
        a = parent[a]
        b = parent[b]
        pu.append(a)
        pv.append(b)
    # walk: u, v, v's ancestors up to lca, then back down to u (reversed)
    cycle = [u] + pv + pu[1:-1][::-1]
    return tuple(f.members[i] for i in cycle)


def in_tree_oracle(g: SparseGenerator) -> StationaryResult:
    """Exact stationary vector by enumerating all spanning in-trees.

    P*(w) is proportional to the total weight of in-trees rooted at w
    (each tree weighs the product of its edge rates, taken in log space).
    Super-exponential, hence hard-guarded to 9 states.
    """
    if g.scheme is not Scheme.SUBNETWORK:
        raise ValueError("in_tree_oracle expects a subnetwork truncation")
    n = g.dim
    if n > 9:
        raise DimensionTooLarge(f"in-tree enumeration refused for n={n} > 9")
    coo = g.matrix.tocoo()
    out_edges: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    edge_pairs = []
    for r, c, v in zip(coo.row, coo.col, coo.data):
        if r != c and v > 0.0:
            out_edges[c].append((r, math.log(v)))
            edge_pairs.append((c, r, v))
    from .network import is_strongly_connected

    if not is_strongly_connected(
        [(s, d) for s, d, _ in edge_pairs], n
    ):
        raise ValueError("in_tree_oracle requires a strongly connected window")

    log_weights = np.full(n, -np.inf)
    for root in range(n):
        nodes = [v for v in range(n) if v != root]
        choice = [-1] * n  # chosen parent-edge target per node
        logs: list[float] = []

        def creates_cycle(v: int, w: int) -> bool:
            # follow assigned pointers from w; a walk that returns to v
            # before hitting the root or an unassigned node is a cycle
            cur = w
            while cur != root and choice[cur] != -1:
                cur = choice[cur]
                if cur == v:
                    return True
            return False

        def rec(i: int, acc: float) -> None:
            if i == len(nodes):
                logs.append(acc)
                return
            v = nodes[i]
            for (w, lw) in out_edges[v]:
                if creates_cycle(v, w):
                    continue
                choice[v] = w
                rec(i + 1, acc + lw)
                choice[v] = -1

        rec(0, 0.0)
        if logs:
            arr = np.array(logs)
            log_weights[root] = _logsumexp(arr)
    log_z = _logsumexp(log_weights)
    vec = ProbVec(g.subset, np.exp(log_weights - log_z))
    residual = float(np.abs(g.matrix @ vec.values).sum())
    return StationaryResult(vec, 1, residual, METHOD_TREE)


def infinite_kernel_residual(
    net: Network,
    evaluator,
    window: FiniteSubset,
    probe: FiniteSubset,
) -> float:
    """|| (G x)|_window ||_1 for the full lazy generator and a closed form x.

    `probe` must contain every in-neighbor of the window (plus the window
    itself); inflows are collected by scanning the probe states' out-edges.
    This checks a candidate against the *infinite* kernel identity on
    finitely many components, which a truncated generator cannot do at the
    window boundary.
    """
    inflow = {s: 0.0 for s in window.members}
    for src in probe.members:
        xv = evaluator(src)
        if xv == 0.0:
            continue
        for target, rate in net.out_edges(src):
            if target in window:
                inflow[target] += xv * rate
    residual = 0.0
    for s in window.members:
        residual += abs(inflow[s] - evaluator(s) * net.exit_rate(s))
    return residual


def candidate_norm_test(
    net: Network,
    root: StateLabel,
    window_indices: list[int],
    max_states: int = 1 << 20,
) -> list[tuple[int, float]]:
    """Partial sums of ||X*||_1 over the growing enumeration windows.

    Bounded partial sums diagnose positive recurrence (the candidate is
    normalizable); divergence rules it out.  For bit-vector state spaces
    whose windows are canonical prefixes of size 2^n, the per-dimension
    tensor factorization is used after verifying on sampled states that the
    new-bit rate ratio is state-independent; this keeps 2^25-state windows
    tractable.  Other networks are walked state by state.
    """
    window_indices = sorted(window_indices)
    if net.label_kind is Bits:
        fast = _bits_prefix_partial_sums(net, root, window_indices)
        if fast is not None:
            return fast
    return _generic_partial_sums(net, root, window_indices, max_states)


def _bits_prefix_partial_sums(
    net: Network, root: StateLabel, window_indices: list[int]
) -> list[tuple[int, float]] | None:
    cap = net.bits_prefix_dims
    if cap is None or root != Bits(()) or window_indices[-1] > cap:
        return None
    # spot-check the declared prefix structure where materializing is cheap
    for n in window_indices:
        if n > 12:
            break
        idx = [canonical_index(m) for m in net.window(n).members]
        if idx != list(range(1 << n)):
            return None
    rng = np.random.default_rng(0)
    total = 1.0
    results = []
    dim = 0
    for n in window_indices:
        while dim < n:
            dim += 1
            ratio = _bit_ratio(net, dim, 0)
            # ratio must not depend on the state for the factorization
            n_samples = min(8, 1 << (dim - 1))
            for w in rng.choice(1 << (dim - 1), size=n_samples, replace=False):
                r = _bit_ratio(net, dim, int(w))
                if not math.isclose(r, ratio, rel_tol=1e-9, abs_tol=0.0):
                    return None
            total *= 1.0 + ratio
        results.append((n, total))
    return results


def _bit_ratio(net: Network, dim: int, base_index: int) -> float:
    from .network import label_from_index

    lo = label_from_index(Bits, base_index)
    hi = label_from_index(Bits, base_index | (1 << (dim - 1)))
    up = dict(net.out_edges(lo)).get(hi)
    down = dict(net.out_edges(hi)).get(lo)
    if up is None or down is None:
        raise MissingReverseEdge(
            f"{format_label(lo)} <-> {format_label(hi)} incomplete"
        )
    return up / down


def _generic_partial_sums(
    net: Network,
    root: StateLabel,
    window_indices: list[int],
    max_states: int,
) -> list[tuple[int, float]]:
    log_x: dict[StateLabel, float] = {root: 0.0}
    total = 1.0
    covered: set[StateLabel] = set()
    results = []
    for n in window_indices:
        f = net.window(n)
        if len(f) > max_states:
            raise DimensionTooLarge(
                f"window {n} has {len(f)} states (cap {max_states})"
            )
        members = set(f.members)
        if root not in members:
            raise ValueError("root must lie in every window")
        new = members - covered
        # BFS from already-known states through the new part of the window
        frontier = [s for s in (covered | {root}) if s in log_x]
        pending = set(new) - set(log_x)
        while pending:
            progressed = False
            next_frontier = []
            for u in frontier:
                lu = log_x[u]
                for (v, rate_uv) in net.out_edges(u):
                    if v in pending:
                        rate_vu = dict(net.out_edges(v)).get(u)
                        if rate_vu is None:
                            raise MissingReverseEdge(
                                f"{format_label(u)} -> {format_label(v)} "
                                "has no reverse edge"
                            )
                        log_x[v] = lu + math.log(rate_uv) - math.log(rate_vu)
                        pending.discard(v)
                        next_frontier.append(v)
                        progressed = True
            if not progressed:
                raise NotConnected(
                    f"window {n} has states unreachable from the root"
                )
            frontier = next_frontier + [
                s for s in members if s in log_x and s not in pending
            ]
        for s in new:
            if s != root:
                lx = log_x[s]
                total += math.exp(lx) if lx < 709.0 else math.inf
        covered = members
        results.append((n, total))
    return results
