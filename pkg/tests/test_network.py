import numpy as np
import pytest
from hypothesis import given, strategies as st

from ctmc_trunc import (
    Bits,
    FiniteSubset,
    Int,
    InvalidNetworkError,
    Nat,
    Network,
    canonical_index,
    format_label,
    is_strongly_connected,
    label_from_index,
    load_edge_list,
    parse_label,
    subnetwork_edges,
    three_state_example,
)


class TestLabels:
    def test_canonical_index_examples(self):
        assert canonical_index(Nat(7)) == 7
        assert canonical_index(Int(0)) == 0
        assert canonical_index(Int(-1)) == 1
        assert canonical_index(Int(1)) == 2
        assert canonical_index(Int(-2)) == 3
        assert canonical_index(Bits(())) == 0
        assert canonical_index(Bits((1, 0, 1))) == 5

    @given(st.integers(min_value=0, max_value=10**12))
    def test_roundtrip_nat(self, idx):
        assert canonical_index(label_from_index(Nat, idx)) == idx

    @given(st.integers(min_value=0, max_value=10**12))
    def test_roundtrip_int(self, idx):
        assert canonical_index(label_from_index(Int, idx)) == idx

    @given(st.integers(min_value=0, max_value=10**12))
    def test_roundtrip_bits(self, idx):
        assert canonical_index(label_from_index(Bits, idx)) == idx

    def test_roundtrip_bulk(self):
        # the label codec must be bijective; exercise 1e5 indices per kind
        rng = np.random.default_rng(7)
        idxs = rng.integers(0, 2**40, size=100_000)
        for kind in (Nat, Int, Bits):
            for i in idxs:
                assert canonical_index(label_from_index(kind, int(i))) == int(i)

    def test_bits_no_trailing_zero(self):
        with pytest.raises(ValueError):
            Bits((1, 0))
        Bits((0, 1))  # fine: highest stored bit set

    def test_parse_format_roundtrip(self):
        for text, label in [
            ("42", Nat(42)),
            ("z:-5", Int(-5)),
            ("z:5", Int(5)),
            ("b:101", Bits((1, 0, 1))),
            ("b:0", Bits(())),
        ]:
            assert parse_label(text) == label
            assert parse_label(format_label(label)) == label


class TestFiniteSubset:
    def test_sorted_by_canonical_index(self):
        f = FiniteSubset([Int(2), Int(-1), Int(0), Int(1), Int(-2)])
        assert [m.z for m in f.members] == [0, -1, 1, -2, 2]

    def test_dedup_and_lookup(self):
        f = FiniteSubset([Nat(3), Nat(1), Nat(3)])
        assert len(f) == 2
        assert f.index_of(Nat(1)) == 0
        assert f.index_of(Nat(3)) == 1
        assert Nat(3) in f and Nat(2) not in f

    def test_union_and_subset(self):
        a = FiniteSubset([Nat(0), Nat(1)])
        b = FiniteSubset([Nat(1), Nat(2)])
        assert a.union(b).members == (Nat(0), Nat(1), Nat(2))
        assert a.issubset(a.union(b))
        assert not a.issubset(b)


class TestSubnetworkEdges:
    def setup_method(self):
        self.net = three_state_example(1.5, 0.5, 2.0, 0.25).network

    def test_window_12(self):
        f = FiniteSubset([Nat(1), Nat(2)])
        assert subnetwork_edges(self.net, f) == [(0, 1, 1.5), (1, 0, 0.5)]

    def test_window_23_keeps_only_internal_link(self):
        f = FiniteSubset([Nat(2), Nat(3)])
        assert subnetwork_edges(self.net, f) == [(1, 0, 0.25)]

    def test_single_state_has_no_edges(self):
        f = FiniteSubset([Nat(1)])
        assert subnetwork_edges(self.net, f) == []

    def test_monotone_restriction(self):
        # the window-F edge list must be the F-restriction of the window-F'
        # edge list for F inside F'
        small = FiniteSubset([Nat(1), Nat(2)])
        big = FiniteSubset([Nat(1), Nat(2), Nat(3)])
        big_edges = subnetwork_edges(self.net, big)
        restricted = sorted(
            (
                small.index_of(big.members[s]),
                small.index_of(big.members[d]),
                r,
            )
            for s, d, r in big_edges
            if big.members[s] in small and big.members[d] in small
        )
        assert restricted == subnetwork_edges(self.net, small)


class TestStrongConnectivity:
    def test_two_state_cycle(self):
        assert is_strongly_connected([(0, 1), (1, 0)], 2)

    def test_linear_chain_window(self):
        n = 6
        edges = [(i, i + 1) for i in range(n - 1)] + [(i + 1, i) for i in range(n - 1)]
        assert is_strongly_connected(edges, n)

    def test_trap_chain_window_is_not(self):
        # no edge leaves state 0
        n = 5
        edges = []
        for i in range(1, n):
            if i + 1 < n:
                edges.append((i, i + 1))
            edges.append((i, i - 1))
        assert not is_strongly_connected(edges, n)

    def test_single_state(self):
        assert is_strongly_connected([], 1)


class TestNetworkValidation:
    def test_self_loop_rejected(self):
        net = Network("bad", lambda s: [(s, 1.0)], lambda n: [Nat(0)], Nat)
        with pytest.raises(InvalidNetworkError):
            net.out_edges(Nat(0))

    def test_negative_rate_rejected(self):
        net = Network("bad", lambda s: [(Nat(1), -2.0)], lambda n: [Nat(0)], Nat)
        with pytest.raises(InvalidNetworkError):
            net.out_edges(Nat(0))

    def test_duplicate_target_rejected(self):
        net = Network(
            "bad", lambda s: [(Nat(1), 1.0), (Nat(1), 2.0)], lambda n: [Nat(0)], Nat
        )
        with pytest.raises(InvalidNetworkError):
            net.out_edges(Nat(0))

    def test_subfloor_rates_dropped(self):
        net = Network(
            "tiny", lambda s: [(Nat(1), 1e-305), (Nat(2), 1.0)], lambda n: [Nat(0)], Nat
        )
        assert net.out_edges(Nat(0)) == ((Nat(2), 1.0),)

    def test_oracle_cached_and_deterministic(self):
        calls = []

        def oracle(s):
            calls.append(s)
            return [(Nat(s.n + 1), 1.0)]

        net = Network("c", oracle, lambda n: [Nat(0)], Nat)
        first = net.out_edges(Nat(0))
        second = net.out_edges(Nat(0))
        assert first is second
        assert len(calls) == 1


class TestEdgeListFormat:
    TEXT = """
    # a two-state chain plus comments
    0 1 0.25   # forward
    1 0 1.5
    """

    def test_load_and_query(self):
        net = load_edge_list(self.TEXT, "two")
        assert net.out_edges(Nat(0)) == ((Nat(1), 0.25),)
        assert net.out_edges(Nat(1)) == ((Nat(0), 1.5),)
        assert net.window(2).members == (Nat(0), Nat(1))

    def test_int_labels(self):
        net = load_edge_list("z:-1 z:0 1.0\nz:0 z:-1 2.0\n")
        assert net.out_edges(Int(-1)) == ((Int(0), 1.0),)

    def test_bits_labels(self):
        net = load_edge_list("b:0 b:1 0.5\nb:1 b:0 1.0\n")
        assert net.out_edges(Bits(())) == ((Bits((1,)), 0.5),)

    def test_mixed_kinds_rejected(self):
        with pytest.raises(InvalidNetworkError):
            load_edge_list("0 z:1 1.0\n")

    def test_bad_line_rejected(self):
        with pytest.raises(InvalidNetworkError):
            load_edge_list("0 1\n")
