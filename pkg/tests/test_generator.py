import math

import numpy as np
import pytest

from ctmc_trunc import (
    FiniteSubset,
    GeneratorInvariantError,
    Int,
    Nat,
    Scheme,
    chain_n0,
    chain_z,
    dump_triplets,
    generator_distance,
    load_edge_list,
    norms,
    three_state_example,
    truncate_condense,
    truncate_sharp,
    truncate_subnetwork,
)

from conftest import full_window, random_strongly_connected


@pytest.fixture
def three(scope="module"):
    return three_state_example(1.5, 0.5, 2.0, 0.25)


class TestSubnetworkTruncation:
    def test_window_12_matrix(self, three):
        f = FiniteSubset([Nat(1), Nat(2)])
        g = truncate_subnetwork(three.network, f)
        expected = np.array([[-1.5, 0.5], [1.5, -0.5]])
        assert np.array_equal(g.dense(), expected)

    def test_single_state_is_zero_matrix(self, three):
        g = truncate_subnetwork(three.network, FiniteSubset([Nat(1)]))
        assert np.array_equal(g.dense(), np.zeros((1, 1)))

    def test_linear_chain_column_sums(self):
        net = load_edge_list("0 1 1\n1 0 2\n1 2 3\n2 1 4\n")
        g = truncate_subnetwork(net, net.window(3))
        sums = np.asarray(g.matrix.sum(axis=0)).ravel()
        assert np.allclose(sums, 0.0, atol=1e-15)


class TestSharpCutoff:
    def test_window_12_keeps_full_diagonal(self, three):
        f = FiniteSubset([Nat(1), Nat(2)])
        g = truncate_sharp(three.network, f)
        # state 1 keeps its exit rate to the dropped state 3
        expected = np.array([[-3.5, 0.5], [1.5, -0.5]])
        assert np.array_equal(g.dense(), expected)
        sums = np.asarray(g.matrix.sum(axis=0)).ravel()
        assert sums[0] == -2.0  # the leak -gamma_{1->3}
        assert sums[1] == 0.0

    def test_no_boundary_edges_matches_subnetwork(self, three):
        f = FiniteSubset([Nat(1), Nat(2), Nat(3)])
        sharp = truncate_sharp(three.network, f)
        sub = truncate_subnetwork(three.network, f)
        assert np.array_equal(sharp.dense(), sub.dense())

    def test_linear_chain_leaks_only_at_right_boundary(self):
        ps = chain_n0(x=0.3)
        f = ps.network.window(5)
        g = truncate_sharp(ps.network, f)
        sums = np.asarray(g.matrix.sum(axis=0)).ravel()
        assert np.allclose(sums[:-1], 0.0, atol=1e-15)
        # last column leaks exactly the outward rate gamma_{N->N+1}
        rate_out = dict(ps.network.out_edges(Nat(5)))[Nat(6)]
        assert sums[-1] == pytest.approx(-rate_out, rel=1e-15)

    def test_off_diagonal_agrees_with_subnetwork(self, three):
        f = FiniteSubset([Nat(1), Nat(2)])
        sharp = truncate_sharp(three.network, f).dense()
        sub = truncate_subnetwork(three.network, f).dense()
        off = ~np.eye(2, dtype=bool)
        assert np.array_equal(sharp[off], sub[off])


class TestCondense:
    def test_chain_n0_remainder_touches_only_boundary(self):
        ps = chain_n0(x=0.3)
        f = ps.network.window(4)           # {0..4}
        horizon = ps.network.window(5)     # {0..5}
        g = truncate_condense(ps.network, f, horizon)
        assert g.dim == len(f) + 1
        dense = g.dense()
        rem = g.dim - 1
        # remainder exchanges rates with state 4 only (chain topology kept)
        touching = [i for i in range(rem) if dense[rem, i] > 0 or dense[i, rem] > 0]
        assert touching == [f.index_of(Nat(4))]
        assert np.allclose(np.asarray(g.matrix.sum(axis=0)).ravel(), 0, atol=1e-15)

    def test_chain_z_remainder_creates_cycle(self):
        ps = chain_z()
        f = FiniteSubset([Int(z) for z in range(-3, 4)])
        horizon = FiniteSubset([Int(z) for z in range(-4, 5)])
        g = truncate_condense(ps.network, f, horizon)
        dense = g.dense()
        rem = g.dim - 1
        touching = sorted(
            f.members[i].z
            for i in range(rem)
            if dense[rem, i] > 0 or dense[i, rem] > 0
        )
        # remainder now bridges both chain ends: a different topology
        assert touching == [-3, 3]

    def test_absorbing_remainder(self):
        # no edges from the horizon shell back into f
        net = load_edge_list("0 1 1\n1 2 1\n2 3 0.5\n")
        f = FiniteSubset([Nat(0), Nat(1)])
        horizon = FiniteSubset([Nat(0), Nat(1), Nat(2)])
        g = truncate_condense(net, f, horizon)
        dense = g.dense()
        rem = g.dim - 1
        assert dense[rem, f.index_of(Nat(1))] == 1.0
        assert np.all(dense[:rem, rem] == 0.0)

    def test_empty_shell_rejected(self):
        ps = chain_n0()
        f = ps.network.window(3)
        with pytest.raises(ValueError):
            truncate_condense(ps.network, f, f)


class TestNorms:
    def test_two_state(self):
        a, b = 0.7, 2.5
        net = load_edge_list(f"0 1 {a}\n1 0 {b}\n")
        n = norms(truncate_subnetwork(net, net.window(2)))
        assert n.op1 == pytest.approx(2 * max(a, b))
        assert n.op11 == pytest.approx(2 * (a + b))
        assert n.max_exit_rate == pytest.approx(max(a, b))

    def test_zero_matrix(self, three):
        g = truncate_subnetwork(three.network, FiniteSubset([Nat(1)]))
        n = norms(g)
        assert (n.op1, n.op11, n.max_exit_rate) == (0.0, 0.0, 0.0)

    def test_three_state_op11_is_twice_total_rate(self, three):
        g = truncate_subnetwork(three.network, three.network.window(3))
        n = norms(g)
        assert n.op11 == pytest.approx(2 * (1.5 + 0.5 + 2.0 + 0.25))


class TestGeneratorDistance:
    def test_identical_windows(self):
        ps = chain_n0(x=0.3)
        g = truncate_subnetwork(ps.network, ps.network.window(4))
        assert generator_distance(g, g) == 0.0

    def test_one_step_window_growth(self):
        ps = chain_n0(x=0.3)
        g1 = truncate_subnetwork(ps.network, ps.network.window(4))
        g2 = truncate_subnetwork(ps.network, ps.network.window(5))
        fwd = dict(ps.network.out_edges(Nat(4)))[Nat(5)]
        bwd = dict(ps.network.out_edges(Nat(5)))[Nat(4)]
        assert generator_distance(g1, g2) == pytest.approx(2 * (fwd + bwd))

    def test_distance_shrinks_with_window(self):
        # boundary rates scale like q^N, so the window-(N, N+1) distance
        # must decay by exactly that factor
        ps = chain_n0(x=0.2, q=0.9)
        dists = []
        for n in (5, 25, 45):
            g1 = truncate_subnetwork(ps.network, ps.network.window(n))
            g2 = truncate_subnetwork(ps.network, ps.network.window(n + 1))
            dists.append(generator_distance(g1, g2))
        assert dists == sorted(dists, reverse=True)
        assert dists[1] == pytest.approx(dists[0] * 0.9**20, rel=1e-9)
        assert dists[2] == pytest.approx(dists[1] * 0.9**20, rel=1e-9)

    def test_mixed_networks_rejected(self):
        g1 = truncate_subnetwork(chain_n0().network, chain_n0().network.window(3))
        other = chain_z()
        g2 = truncate_subnetwork(other.network, other.network.window(2))
        with pytest.raises(ValueError):
            generator_distance(g1, g2)


class TestInvariantSweep:
    def test_random_networks_satisfy_scheme_invariants(self, rng):
        # constructing the generator re-validates its invariants; a large
        # randomized population would raise on any violation
        for _ in range(1000):
            n = int(rng.integers(2, 12))
            net = random_strongly_connected(rng, n)
            f = full_window(net, n)
            g = truncate_subnetwork(net, f)
            m = norms(g)
            assert m.op1 <= m.op11 + 1e-12
            assert m.op1 == pytest.approx(2 * m.max_exit_rate, rel=1e-12)
            sharp = truncate_sharp(net, f)
            off = ~np.eye(n, dtype=bool)
            assert np.array_equal(sharp.dense()[off], g.dense()[off])

    def test_tampered_matrix_rejected(self, three):
        g = truncate_subnetwork(three.network, three.network.window(3))
        bad = g.matrix.tolil()
        bad[0, 1] = -0.5
        from ctmc_trunc import SparseGenerator

        with pytest.raises(GeneratorInvariantError):
            SparseGenerator(g.subset, bad.tocsc(), Scheme.SUBNETWORK, "x")


class TestTripletExport:
    def test_header_and_roundtrip_values(self, three):
        g = truncate_subnetwork(three.network, three.network.window(3))
        text = dump_triplets(g)
        lines = text.strip().splitlines()
        assert lines[0] == "# scheme=subnetwork n=3"
        seen = {}
        for line in lines[1:]:
            r, c, v = line.split()
            seen[(int(r), int(c))] = float(v)
        dense = g.dense()
        for (r, c), v in seen.items():
            assert v == dense[r, c]  # 17 sig digits round-trip exactly
