import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hslab.combinatorics import (
    ConnectionRelation,
    LabeledTree,
    MomentFamily,
    combinatorial_identity_sums,
    connected_graphs,
    count_connected_graphs,
    count_trees_with_degrees,
    cumulants_to_moments,
    disconnection_family,
    enumerate_partitions,
    enumerate_trees,
    moments_to_cumulants,
    penrose_escape_edges,
    penrose_map,
    selftest,
    tree_inequality_bound,
    truncated_function,
)

BELL = {1: 1, 2: 2, 3: 5, 4: 15, 5: 52, 6: 203}


def random_family(n, rng):
    vals = {}
    for r in range(1, n + 1):
        for S in itertools.combinations(range(1, n + 1), r):
            vals[frozenset(S)] = Fraction(rng.randint(-20, 20), rng.randint(1, 9))
    return MomentFamily(n, vals)


def random_relation(n, rng, p=0.5):
    edges = [e for e in itertools.combinations(range(1, n + 1), 2) if rng.random() < p]
    return ConnectionRelation(n, frozenset(edges))


class TestPartitions:
    def test_single_element(self):
        parts = enumerate_partitions(1)
        assert len(parts) == 1
        assert parts[0].blocks == (frozenset({1}),)

    def test_counts_match_bell_numbers(self):
        for n, b in BELL.items():
            assert len(enumerate_partitions(n)) == b

    def test_n4_into_two_blocks(self):
        assert len(enumerate_partitions(4, s=2)) == 7

    def test_block_count_filter(self):
        for s in range(1, 6):
            for p in enumerate_partitions(5, s=s):
                assert len(p) == s

    def test_no_duplicates(self):
        parts = enumerate_partitions(6)
        keys = {tuple(sorted(tuple(sorted(b)) for b in p.blocks)) for p in parts}
        assert len(keys) == len(parts)

    def test_range_errors(self):
        with pytest.raises(ValueError):
            enumerate_partitions(0)
        with pytest.raises(ValueError):
            enumerate_partitions(13)
        with pytest.raises(ValueError):
            enumerate_partitions(4, s=5)


class TestCumulantTransforms:
    def test_product_family_has_no_higher_cumulants(self):
        G = MomentFamily.product([Fraction(3, 2), Fraction(-1, 3), Fraction(5)])
        g = moments_to_cumulants(G)
        for S in g.values:
            if len(S) == 1:
                assert g(S) == G(S)
            else:
                assert g(S) == 0

    def test_singletons_pass_through(self):
        rng = random.Random(7)
        G = random_family(4, rng)
        g = moments_to_cumulants(G)
        for i in range(1, 5):
            assert g({i}) == G({i})

    def test_pair_cumulant_hand_value(self):
        G = MomentFamily(2, {(1,): 1, (2,): 1, (1, 2): 3})
        g = moments_to_cumulants(G)
        assert g({1, 2}) == 2

    def test_inverse_on_independent_cumulants(self):
        g = MomentFamily.from_function(3, lambda S: Fraction(2) if len(S) == 1 else Fraction(0))
        G = cumulants_to_moments(g)
        for S in G.values:
            assert G(S) == Fraction(2) ** len(S)

    def test_three_point_hand_inversion(self):
        g = MomentFamily.from_function(3, lambda S: Fraction(1) if len(S) == 2 else Fraction(0))
        G = cumulants_to_moments(g)
        assert G({1, 2, 3}) == 0

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=1, max_value=6), st.randoms(use_true_random=False))
    def test_round_trip_exact(self, n, rnd):
        G = random_family(n, rnd)
        assert cumulants_to_moments(moments_to_cumulants(G)) == G
        assert moments_to_cumulants(cumulants_to_moments(G)) == G

    def test_round_trip_n8(self):
        rng = random.Random(123)
        G = random_family(8, rng)
        assert cumulants_to_moments(moments_to_cumulants(G)) == G


class TestIdentitySums:
    def test_vanish_for_all_supported_n(self):
        for n in range(2, 11):
            assert combinatorial_identity_sums(n) == (0, 0)

    def test_n3_term_by_term(self):
        # 1 partition into 1 block, 3 into 2 blocks, 1 into 3 blocks
        total = 1 * (-1) * 1 + 3 * (+1) * 1 + 1 * (-1) * 2
        assert total == 0
        assert combinatorial_identity_sums(3) == (0, 0)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            combinatorial_identity_sums(1)
        with pytest.raises(ValueError):
            combinatorial_identity_sums(11)


class TestTrees:
    def test_cayley_counts(self):
        for n in range(2, 8):
            assert len(enumerate_trees(n)) == n ** (n - 2)

    def test_trees_distinct_and_valid(self):
        trees = enumerate_trees(5)
        assert len({t.edges for t in trees}) == len(trees)

    def test_star_count_is_one(self):
        for n in range(3, 7):
            degs = [n - 1] + [1] * (n - 1)
            assert count_trees_with_degrees(degs) == 1

    def test_hand_counts(self):
        assert count_trees_with_degrees([1, 2, 2, 1]) == 2
        assert count_trees_with_degrees([1, 2, 1]) == 1

    def test_degree_counts_match_enumeration(self):
        for n in (4, 5):
            trees = enumerate_trees(n)
            for degs in itertools.product(range(1, n), repeat=n):
                if sum(degs) != 2 * (n - 1):
                    continue
                found = sum(1 for t in trees if t.degrees() == degs)
                assert found == count_trees_with_degrees(list(degs))

    def test_degree_sum_violation(self):
        with pytest.raises(ValueError):
            count_trees_with_degrees([2, 2, 2])
        with pytest.raises(ValueError):
            count_trees_with_degrees([0, 1, 1])


class TestTruncatedFunction:
    def test_connected_pair(self):
        rel = ConnectionRelation(2, frozenset({(1, 2)}))
        assert truncated_function(rel) == -1
        assert tree_inequality_bound(rel) == 1

    def test_complete_triangle(self):
        rel = ConnectionRelation.complete(3)
        assert truncated_function(rel) == 2
        assert tree_inequality_bound(rel) == 3

    def test_disconnected_relation_vanishes(self):
        for n in (2, 3, 4, 5):
            rel = ConnectionRelation(n, frozenset())
            assert truncated_function(rel) == 0
            assert tree_inequality_bound(rel) == 0

    def test_matches_cumulant_of_disconnection_indicator(self):
        rng = random.Random(42)
        full = frozenset(range(1, 6))
        for _ in range(40):
            rel = random_relation(5, rng)
            phi = moments_to_cumulants(disconnection_family(rel))
            assert truncated_function(rel) == phi(full)

    def test_tree_inequality(self):
        rng = random.Random(99)
        for n in (3, 4, 5, 6):
            for _ in range(25):
                rel = random_relation(n, rng)
                assert abs(truncated_function(rel)) <= tree_inequality_bound(rel)


class TestPenrose:
    def test_idempotent_on_trees(self):
        for tree in enumerate_trees(5):
            assert penrose_map(ConnectionRelation(5, frozenset(tree.edges))) == tree

    def test_triangle_maps_to_star(self):
        star = penrose_map(ConnectionRelation.complete(3))
        assert star.edges == ((1, 2), (1, 3))

    def test_single_edge_has_no_escape_edges(self):
        assert penrose_escape_edges(LabeledTree(2, ((1, 2),))) == frozenset()

    def test_path_rooted_at_end_has_no_escape_edges(self):
        assert penrose_escape_edges(LabeledTree(3, ((1, 2), (2, 3)))) == frozenset()

    def test_star_escape_edges_are_leaf_pairs(self):
        n = 5
        star = LabeledTree(n, tuple((1, k) for k in range(2, n + 1)))
        expected = frozenset(itertools.combinations(range(2, n + 1), 2))
        assert penrose_escape_edges(star) == expected

    def test_disconnected_input_rejected(self):
        with pytest.raises(ValueError):
            penrose_map(ConnectionRelation(3, frozenset({(1, 2)})))

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_fibers_are_exact_intervals(self, n):
        graphs = connected_graphs(n)
        assert len(graphs) == count_connected_graphs(n)
        fibers = {}
        for g in graphs:
            fibers.setdefault(penrose_map(g), []).append(g.edges)
        total = 0
        for tree, members in fibers.items():
            esc = penrose_escape_edges(tree)
            base = frozenset(tree.edges)
            interval = {base | frozenset(s) for r in range(len(esc) + 1) for s in itertools.combinations(esc, r)}
            assert set(members) == interval
            assert len(members) == 2 ** len(esc)
            total += len(members)
        assert total == len(graphs)


def test_selftest_all_pass():
    rows = selftest(max_n=5)
    assert rows
    assert all(row[4] for row in rows)
