import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from goerw.tree import (
    branching_ruin_estimate,
    build_from_edge_list,
    build_path,
    build_polynomial,
    build_regular,
    enumerate_cutsets,
    min_cutset_sum,
    min_level_cutset_sum,
    path_family,
    polynomial_family,
    polynomial_level_sizes,
    read_tree_file,
    regular_family,
    write_tree_file,
)

from conftest import random_tree


def full_binary(depth):
    """Root with two children, every internal vertex with two children."""
    edges = []
    next_id = 1
    frontier = [(0, 0)]
    while frontier:
        v, d = frontier.pop(0)
        if d == depth:
            continue
        for _ in range(2):
            edges.append((v, next_id))
            frontier.append((next_id, d + 1))
            next_id += 1
    return build_from_edge_list(edges)


class TestBuilders:
    def test_path(self):
        t = build_path(5)
        assert t.n_vertices == 6
        assert t.depth == [0, 1, 2, 3, 4, 5]
        assert all(len(t.children[v]) == 1 for v in range(5))
        assert t.children[5] == []
        assert t.root_path(5) == [0, 1, 2, 3, 4, 5]

    def test_regular_level_sizes(self):
        t = build_regular(3, 2)
        assert t.level_sizes() == [1, 3, 6]
        assert t.deg(0) == 3
        assert t.deg(1) == 3
        assert t.deg(4) == 1  # truncation leaf

    def test_regular_matches_family_sizes(self):
        fam = regular_family(3)
        t = build_regular(3, 4)
        assert t.level_sizes() == fam.level_sizes(4)

    @pytest.mark.parametrize("b,depth", [(0.5, 64), (1.0, 64), (1.2, 64),
                                         (1.5, 32), (2.0, 32), (3.0, 12)])
    def test_polynomial_level_invariant_exact(self, b, depth):
        t = build_polynomial(b, depth)
        expected = [2 ** math.floor(b * math.log2(n) + 1e-9) if n else 1
                    for n in range(depth + 1)]
        assert t.level_sizes() == expected
        assert polynomial_level_sizes(b, depth) == expected

    def test_polynomial_small_b_is_a_path_at_desk_depth(self):
        t = build_polynomial(0.05, 16)
        assert t.level_sizes() == [1] * 17

    def test_polynomial_vertex_cap(self):
        with pytest.raises(ValueError, match="cap"):
            build_polynomial(3.0, 128)

    def test_edge_list_two_parents(self):
        with pytest.raises(ValueError, match="two parents"):
            build_from_edge_list([(0, 1), (2, 1)])

    def test_edge_list_two_roots(self):
        with pytest.raises(ValueError, match="one root"):
            build_from_edge_list([(0, 1), (5, 6)])

    def test_edge_list_cycle(self):
        with pytest.raises(ValueError, match="one root"):
            build_from_edge_list([(1, 2), (2, 1)])

    def test_edge_list_detached_cycle(self):
        with pytest.raises(ValueError, match="disconnected"):
            build_from_edge_list([(0, 1), (2, 3), (3, 4), (4, 2)])

    def test_edge_list_relabels_to_bfs(self):
        t = build_from_edge_list([(10, 30), (10, 20), (30, 40)])
        assert t.parent == [-1, 0, 0, 2]
        assert t.depth == [0, 1, 1, 2]
        assert t.truncation_depth == 2


class TestCutsets:
    def test_enumerate_path3(self):
        assert len(enumerate_cutsets(build_path(3))) == 3

    def test_enumerate_two_leaves(self):
        t = build_from_edge_list([(0, 1), (0, 2)])
        cuts = enumerate_cutsets(t)
        assert cuts == [frozenset({1, 2})]

    def test_enumerate_two_paths_of_two(self):
        t = build_from_edge_list([(0, 1), (1, 2), (0, 3), (3, 4)])
        assert len(enumerate_cutsets(t)) == 4

    def test_enumerate_guard(self):
        with pytest.raises(ValueError, match="20 edges"):
            enumerate_cutsets(build_path(21))

    def test_path_harmonic_weights(self):
        t = build_path(5)
        value, cut = min_cutset_sum(t, lambda e: 1.0 / t.depth[e])
        assert value == pytest.approx(0.2, abs=1e-15)
        assert cut == frozenset({5})

    def test_binary_tie_goes_shallow(self):
        t = full_binary(4)
        value, cut = min_cutset_sum(t, lambda e: 1.0 / t.depth[e])
        assert value == pytest.approx(2.0, abs=1e-12)
        assert cut == frozenset(t.vertices_at_depth(1))

    def test_equal_weights_tie_on_path(self):
        t = build_path(4)
        value, cut = min_cutset_sum(t, lambda e: 1.0)
        assert value == 1.0
        assert cut == frozenset({1})

    def test_dead_end_needs_no_cut(self):
        # a stub at depth 1 that never reaches the boundary at depth 2
        t = build_from_edge_list([(0, 1), (1, 2), (0, 3)])
        value, cut = min_cutset_sum(t, lambda e: 1.0)
        assert value == 1.0
        assert cut == frozenset({1}) or cut == frozenset({3})
        assert 2 not in {t.depth[v] for v in cut} or len(cut) == 1

    def test_weights_accept_mapping(self):
        t = build_path(3)
        w = {v: 0.5 for v in range(1, 4)}
        value, _ = min_cutset_sum(t, w)
        assert value == 0.5

    @settings(max_examples=150, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_dp_matches_enumeration(self, seed):
        rng = random.Random(seed)
        t = random_tree(rng, max_edges=14, max_depth=5)
        weights = {v: rng.uniform(0.05, 3.0) for v in range(1, t.n_vertices)}
        value, cut = min_cutset_sum(t, weights)
        candidates = enumerate_cutsets(t)
        best = min(sum(weights[v] for v in c) for c in candidates)
        assert value == pytest.approx(best, rel=1e-12)
        assert cut in candidates
        assert sum(weights[v] for v in cut) == pytest.approx(value, rel=1e-12)


class TestLevelShortcut:
    @pytest.mark.parametrize("family,depth", [
        (path_family(), 6),
        (regular_family(3), 5),
        (polynomial_family(0.5), 6),
        (polynomial_family(1.2), 6),
        (polynomial_family(2.0), 5),
    ])
    @pytest.mark.parametrize("gamma", [0.3, 1.0, 2.0])
    def test_matches_explicit_dp(self, family, depth, gamma):
        tree = family.build(depth)
        explicit, _ = min_cutset_sum(tree, lambda e: tree.depth[e] ** -gamma)
        sizes = family.level_sizes(depth)
        shortcut, level = min_level_cutset_sum(sizes, lambda m: m ** -gamma)
        assert shortcut == pytest.approx(explicit, rel=1e-12)
        assert sizes[level] * level ** -gamma == pytest.approx(explicit, rel=1e-12)

    def test_tie_prefers_shallow_level(self):
        # sizes 2, 4 with weights 1, 1/2 tie at value 2
        value, level = min_level_cutset_sum([1, 2, 4], lambda m: 1.0 if m == 1 else 0.5)
        assert value == 2.0
        assert level == 1


class TestBranchingEstimate:
    def test_regular_tree_values_bounded_below(self):
        table = branching_ruin_estimate(regular_family(3), [0.5, 1.0, 1.5, 2.0],
                                        depths=[4, 8, 16, 32])
        for L in table.depths:
            assert table.values[(1.0, L)] >= 3.0
        assert table.estimate == 2.0  # exponential growth swamps any gamma

    def test_path_estimate_is_small(self):
        table = branching_ruin_estimate(path_family(), [0.25, 0.5, 1.0, 2.0],
                                        depths=[64, 256])
        assert table.values[(1.0, 256)] == pytest.approx(1 / 256)
        assert table.estimate == 0.25

    def test_polynomial_values_track_the_exponent(self):
        fam = polynomial_family(1.5)
        table = branching_ruin_estimate(fam, [1.2, 2.0], depths=[8, 32, 128])
        assert table.values[(1.2, 128)] >= 0.1
        assert table.values[(2.0, 128)] < table.values[(2.0, 8)]
        assert fam.br_index == 1.5

    def test_rows_cover_grid(self):
        table = branching_ruin_estimate(path_family(), [0.5, 1.0], depths=[4, 8])
        assert len(table.rows()) == 4


class TestTreeFile:
    def test_round_trip(self, tmp_path):
        t = build_regular(3, 3)
        p = str(tmp_path / "t.tree")
        write_tree_file(t, p)
        back = read_tree_file(p)
        assert back.parent == t.parent
        assert back.children == t.children
        assert back.depth == t.depth
        assert back.truncation_depth == t.truncation_depth

    def test_header_required(self, tmp_path):
        p = tmp_path / "bad.tree"
        p.write_text("0 1\n")
        with pytest.raises(ValueError, match="goerw-tree"):
            read_tree_file(str(p))

    def test_depth_mismatch_rejected(self, tmp_path):
        p = tmp_path / "bad.tree"
        p.write_text("# goerw-tree v1 depth=9\n0 1\n")
        with pytest.raises(ValueError, match="depth"):
            read_tree_file(str(p))

    def test_leftmost_at_depth(self):
        t = build_regular(3, 2)
        assert t.leftmost_at_depth(1) == 1
        assert t.leftmost_at_depth(2) == 4
        with pytest.raises(ValueError):
            build_path(2).leftmost_at_depth(9)
