"""Shared fixtures: random strongly connected finite networks."""
import numpy as np
import pytest

from ctmc_trunc import FiniteSubset, Nat, Network


def random_strongly_connected(rng: np.random.Generator, n_states: int,
                              extra_edges: int | None = None) -> Network:
    """Directed ring (guarantees strong connectivity) plus random chords.

    Out-degree stays small so the in-tree enumeration in the oracle tests
    remains cheap.
    """
    if extra_edges is None:
        extra_edges = n_states
    edges: dict[int, dict[int, float]] = {i: {} for i in range(n_states)}
    for i in range(n_states):
        edges[i][(i + 1) % n_states] = float(rng.uniform(0.1, 3.0))
    added = 0
    attempts = 0
    while added < extra_edges and attempts < 50 * extra_edges:
        attempts += 1
        s = int(rng.integers(n_states))
        d = int(rng.integers(n_states))
        if s == d or d in edges[s] or len(edges[s]) >= 3:
            continue
        edges[s][d] = float(rng.uniform(0.1, 3.0))
        added += 1
    adjacency = {
        Nat(s): [(Nat(d), r) for d, r in sorted(targets.items())]
        for s, targets in edges.items()
    }

    def oracle(lbl):
        return adjacency.get(lbl, [])

    return Network(
        f"random{n_states}",
        oracle,
        lambda n: [Nat(k) for k in range(min(n, n_states))],
        Nat,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240612)


def full_window(net: Network, n_states: int) -> FiniteSubset:
    return FiniteSubset([Nat(k) for k in range(n_states)])
