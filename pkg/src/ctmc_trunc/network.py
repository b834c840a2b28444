"""Lazy countable transition networks and finite truncation windows.

A network is a countable, directed, weighted graph given by an out-edge
oracle plus a nested sequence of finite windows.  States carry one of three
label kinds, each mapping bijectively onto the nonnegative integers:

    Nat(n)   -> n
    Int(z)   -> 2|z|-1 if z < 0 else 2z        (0, -1, 1, -2, 2, ...)
    Bits(w)  -> sum_i w_i 2^i                  (little-endian bit vector)

All window bookkeeping sorts states by this canonical index, so truncation
sequences are deterministic and reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .errors import InvalidNetworkError

# Rates below this are treated as absent edges (avoids subnormal noise in
# column sums).
RATE_FLOOR = 1e-300


@dataclass(frozen=True, order=False)
class Nat:
    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"Nat label must be nonnegative, got {self.n}")


@dataclass(frozen=True, order=False)
class Int:
    z: int


@dataclass(frozen=True, order=False)
class Bits:
    """Finite little-endian bit vector; canonical form has no trailing zeros."""

    w: tuple[int, ...]

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.w):
            raise ValueError(f"Bits entries must be 0/1, got {self.w}")
        if self.w and self.w[-1] == 0:
            raise ValueError(f"Bits must not end in a trailing zero: {self.w}")


StateLabel = Nat | Int | Bits


def canonical_index(label: StateLabel) -> int:
    if isinstance(label, Nat):
        return label.n
    if isinstance(label, Int):
        return 2 * abs(label.z) - 1 if label.z < 0 else 2 * label.z
    if isinstance(label, Bits):
        return sum(b << i for i, b in enumerate(label.w))
    raise TypeError(f"not a state label: {label!r}")


def label_from_index(kind: type, index: int) -> StateLabel:
    """Inverse of :func:`canonical_index` for a given label kind."""
    if index < 0:
        raise ValueError("canonical index must be nonnegative")
    if kind is Nat:
        return Nat(index)
    if kind is Int:
        if index % 2 == 0:
            return Int(index // 2)
        return Int(-(index + 1) // 2)
    if kind is Bits:
        w = []
        while index:
            w.append(index & 1)
            index >>= 1
        return Bits(tuple(w))
    raise TypeError(f"unknown label kind {kind!r}")


def parse_label(text: str) -> StateLabel:
    """Parse the edge-list label syntax: decimal (Nat), z:<int>, b:<bits>."""
    text = text.strip()
    if text.startswith("z:"):
        return Int(int(text[2:]))
    if text.startswith("b:"):
        bits = text[2:]
        if bits and not set(bits) <= {"0", "1"}:
            raise ValueError(f"bad bit string {bits!r}")
        w = tuple(int(c) for c in bits)
        while w and w[-1] == 0:
            w = w[:-1]
        return Bits(w)
    return Nat(int(text))


def format_label(label: StateLabel) -> str:
    if isinstance(label, Nat):
        return str(label.n)
    if isinstance(label, Int):
        return f"z:{label.z}"
    if isinstance(label, Bits):
        return "b:" + ("".join(str(b) for b in label.w) or "0")
    raise TypeError(f"not a state label: {label!r}")


class FiniteSubset:
    """Ordered finite set of states; the truncation window F.

    Members are stored in ascending canonical-index order and are unique.
    """

    __slots__ = ("members", "_index_of")

    def __init__(self, labels: Iterable[StateLabel]):
        uniq = {canonical_index(lbl): lbl for lbl in labels}
        self.members: tuple[StateLabel, ...] = tuple(
            uniq[k] for k in sorted(uniq)
        )
        self._index_of = {lbl: i for i, lbl in enumerate(self.members)}

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, label: StateLabel) -> bool:
        return label in self._index_of

    def index_of(self, label: StateLabel) -> int:
        return self._index_of[label]

    def __eq__(self, other) -> bool:
        return isinstance(other, FiniteSubset) and self.members == other.members

    def __hash__(self) -> int:
        return hash(self.members)

    def __repr__(self) -> str:
        inner = ",".join(format_label(m) for m in self.members)
        return f"FiniteSubset({{{inner}}})"

    def union(self, other: "FiniteSubset") -> "FiniteSubset":
        return FiniteSubset(self.members + other.members)

    def issubset(self, other: "FiniteSubset") -> bool:
        return all(m in other for m in self.members)


class Network:
    """Countable network defined lazily by an out-edge oracle.

    The oracle maps a state label to a finite list of ``(target, rate)``
    pairs.  Results are validated once and cached, so repeated calls are
    deterministic.  Self-loops are rejected outright; zero and sub-floor
    rates are dropped.
    """

    def __init__(
        self,
        name: str,
        out_edges: Callable[[StateLabel], Iterable[tuple[StateLabel, float]]],
        enumeration: Callable[[int], Iterable[StateLabel]],
        label_kind: type,
        bits_prefix_dims: int | None = None,
    ):
        self.name = name
        self.label_kind = label_kind
        self._oracle = out_edges
        self._enumeration = enumeration
        self._cache: dict[StateLabel, tuple[tuple[StateLabel, float], ...]] = {}
        # declares that window(n) is the canonical-index prefix of size
        # 2^min(n, bits_prefix_dims); lets norm scans avoid materializing
        # exponentially large windows
        self.bits_prefix_dims = bits_prefix_dims

    def out_edges(self, state: StateLabel) -> tuple[tuple[StateLabel, float], ...]:
        cached = self._cache.get(state)
        if cached is not None:
            return cached
        edges = []
        seen = set()
        for target, rate in self._oracle(state):
            if not isinstance(target, self.label_kind):
                raise InvalidNetworkError(
                    f"{self.name}: edge target {target!r} has wrong label kind"
                )
            if target == state:
                raise InvalidNetworkError(
                    f"{self.name}: self-loop at {format_label(state)}"
                )
            if rate < 0:
                raise InvalidNetworkError(
                    f"{self.name}: negative rate {rate} on "
                    f"{format_label(state)} -> {format_label(target)}"
                )
            if target in seen:
                raise InvalidNetworkError(
                    f"{self.name}: duplicate edge "
                    f"{format_label(state)} -> {format_label(target)}"
                )
            seen.add(target)
            if rate < RATE_FLOOR:
                continue
            edges.append((target, float(rate)))
        result = tuple(edges)
        self._cache[state] = result
        return result

    def exit_rate(self, state: StateLabel) -> float:
        return sum(rate for _, rate in self.out_edges(state))

    def window(self, n: int) -> FiniteSubset:
        """The n-th window F_n of the network's enumeration scheme."""
        if n < 1:
            raise ValueError("window index starts at 1")
        return FiniteSubset(self._enumeration(n))


def subnetwork_edges(
    net: Network, f: FiniteSubset
) -> list[tuple[int, int, float]]:
    """All edges of ``net`` with both endpoints in ``f``, in local indices.

    Keeps some of the states and all original links between them; output is
    sorted by (src, dst) so downstream constructions are deterministic.
    """
    if len(f) == 0:
        raise ValueError("window must be nonempty")
    edges = []
    for src_local, src in enumerate(f.members):
        for target, rate in net.out_edges(src):
            if target in f:
                edges.append((src_local, f.index_of(target), rate))
    edges.sort(key=lambda e: (e[0], e[1]))
    return edges


def is_strongly_connected(
    edges: Sequence[tuple[int, int] | tuple[int, int, float]], n_states: int
) -> bool:
    """True iff every state reaches every other along directed edges.

    Two-pass reachability from state 0 (forward and along reversed edges),
    which is equivalent to strong connectivity when both passes cover
    everything.
    """
    if n_states < 1:
        raise ValueError("n_states must be >= 1")
    if n_states == 1:
        return True
    fwd: list[list[int]] = [[] for _ in range(n_states)]
    bwd: list[list[int]] = [[] for _ in range(n_states)]
    for e in edges:
        s, d = e[0], e[1]
        fwd[s].append(d)
        bwd[d].append(s)

    def reaches_all(adj: list[list[int]]) -> bool:
        seen = [False] * n_states
        seen[0] = True
        stack = [0]
        count = 1
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    count += 1
                    stack.append(v)
        return count == n_states

    return reaches_all(fwd) and reaches_all(bwd)


def load_edge_list(text: str, name: str = "custom") -> Network:
    """Build a finite explicit network from the edge-list text format.

    One line per edge ``src dst rate``; ``#`` starts a comment.  All labels
    in a file must share one kind.  Window n of the result is the prefix of
    the first n states in canonical order.
    """
    adjacency: dict[StateLabel, list[tuple[StateLabel, float]]] = {}
    states: set[StateLabel] = set()
    kind: type | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise InvalidNetworkError(
                f"{name}:{lineno}: expected 'src dst rate', got {raw!r}"
            )
        src, dst = parse_label(parts[0]), parse_label(parts[1])
        rate = float(parts[2])
        for lbl in (src, dst):
            if kind is None:
                kind = type(lbl)
            elif not isinstance(lbl, kind):
                raise InvalidNetworkError(
                    f"{name}:{lineno}: mixed label kinds in one file"
                )
        states.update((src, dst))
        adjacency.setdefault(src, []).append((dst, rate))
    if kind is None:
        raise InvalidNetworkError(f"{name}: no edges found")

    ordered = sorted(states, key=canonical_index)

    def oracle(s: StateLabel):
        return adjacency.get(s, [])

    def enumeration(n: int):
        return ordered[: min(n, len(ordered))]

    return Network(name, oracle, enumeration, kind)
