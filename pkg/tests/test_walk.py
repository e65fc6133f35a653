import math
import random
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from goerw.environment import Psi, assign_deterministic, environment_from_alpha
from goerw.tree import build_path, build_regular
from goerw.walk import (
    ClockTable,
    StopRule,
    derive_seed,
    rates,
    restriction,
    simulate,
    simulate_extension,
    simulate_rubin,
    step_direct,
)

from conftest import random_tree


class TestClockTable:
    def test_deterministic(self):
        a = ClockTable(123)
        b = ClockTable(123)
        assert a.xi(3, 1, 7) == b.xi(3, 1, 7)
        assert a.xi(3, 1, 7) != a.xi(1, 3, 7)
        assert a.xi(3, 1, 7) != a.xi(3, 1, 8)

    def test_seed_changes_values(self):
        assert ClockTable(1).xi(0, 1, 0) != ClockTable(2).xi(0, 1, 0)

    def test_unit_exponential_moments(self):
        t = ClockTable(99)
        draws = [t.xi(5, 6, j) for j in range(20000)]
        assert min(draws) > 0
        assert np.mean(draws) == pytest.approx(1.0, abs=0.03)
        assert np.std(draws) == pytest.approx(1.0, abs=0.05)

    def test_derive_seed_spreads(self):
        seeds = {derive_seed(7, i) for i in range(1000)}
        assert len(seeds) == 1000
        assert derive_seed(7, 3) == derive_seed(7, 3)
        assert derive_seed(7, 3) != derive_seed(8, 3)


class TestRates:
    def test_doubling_bias_path(self):
        t = build_path(3)
        env = assign_deterministic(t, lam=2.0, mu=4.0)
        r_lam, r_mu = rates(env, 2, 1)  # depth-2 vertex toward its parent
        assert r_lam == pytest.approx(0.5)
        assert r_mu == pytest.approx(0.25)
        r_lam_root, _ = rates(env, 1, 0)
        assert r_lam_root == 1.0

    def test_parent_child_identity(self, rng):
        t = random_tree(rng, max_edges=15, max_depth=5)
        env = assign_deterministic(
            t,
            lam=lambda v, r=rng: r.uniform(0.2, 4.0),
            mu=lambda v, r=rng: r.uniform(0.2, 4.0),
        )
        for v in range(1, t.n_vertices):
            if not t.children[v]:
                continue
            c = t.children[v][0]
            down_lam, down_mu = rates(env, v, c)
            up_lam, up_mu = rates(env, v, t.parent[v])
            assert up_lam == pytest.approx(env.lam[v] * down_lam, rel=1e-12)
            assert up_mu == pytest.approx(env.mu[v] * down_mu, rel=1e-12)

    def test_non_neighbors_rejected(self):
        env = assign_deterministic(build_path(3))
        with pytest.raises(ValueError, match="not neighbors"):
            rates(env, 1, 3)


class TestDirectLaw:
    def test_step_probabilities_fresh(self):
        t = build_regular(3, 2)
        env = assign_deterministic(t, lam=3.0)
        rng = random.Random(7)
        hits = Counter(step_direct(env, 1, True, rng) for _ in range(40000))
        # deg 3, lam 3: parent 3/5, each child 1/5
        assert hits[0] / 40000 == pytest.approx(0.6, abs=0.012)
        kids = t.children[1]
        for c in kids:
            assert hits[c] / 40000 == pytest.approx(0.2, abs=0.012)

    def test_step_probabilities_later(self):
        t = build_regular(3, 2)
        env = assign_deterministic(t, lam=3.0, mu=0.5)
        rng = random.Random(8)
        hits = Counter(step_direct(env, 1, False, rng) for _ in range(40000))
        assert hits[0] / 40000 == pytest.approx(0.2, abs=0.012)  # 0.5/2.5

    def test_root_is_uniform(self):
        t = build_regular(3, 2)
        env = assign_deterministic(t, lam=9.0)
        rng = random.Random(9)
        hits = Counter(step_direct(env, 0, False, rng) for _ in range(30000))
        for c in t.children[0]:
            assert hits[c] / 30000 == pytest.approx(1 / 3, abs=0.012)


class TestSimulate:
    def test_max_steps_counts_moves(self):
        env = assign_deterministic(build_regular(3, 4))
        traj = simulate(env, StopRule(max_steps=25), seed=1)
        assert traj.steps == 25
        assert len(traj.positions) == 26
        assert traj.stop_reason == "max_steps"
        assert not traj.escaped

    def test_hit_depth_stops_and_flags(self):
        env = assign_deterministic(build_regular(3, 6))
        traj = simulate(env, StopRule(max_steps=10**6, hit_depth=4), seed=2)
        assert traj.escaped
        assert traj.stop_reason == "hit_depth"
        assert traj.max_depth == 4
        assert env.tree.depth[traj.positions[-1]] == 4

    def test_root_returns_stop(self):
        env = assign_deterministic(build_path(30))
        traj = simulate(env, StopRule(max_steps=10**6, root_returns=3), seed=3)
        assert traj.stop_reason == "root_returns"
        assert traj.root_returns == 3
        assert traj.positions.count(0) == 4  # start plus three returns

    def test_steps_are_nearest_neighbor(self):
        env = assign_deterministic(build_regular(3, 4))
        traj = simulate(env, StopRule(max_steps=500), seed=4)
        t = env.tree
        for a, b in zip(traj.positions, traj.positions[1:]):
            assert t.parent[b] == a or t.parent[a] == b

    def test_counts_recomputable(self):
        env = assign_deterministic(build_regular(3, 4), lam=2.0)
        traj = simulate(env, StopRule(max_steps=400), seed=5)
        z = traj.visit_counts()
        assert sum(z.values()) == len(traj.positions)
        c = traj.crossing_counts()
        assert sum(c.values()) == traj.steps
        # crossings out of a vertex against its visit count
        for v, count in z.items():
            out = sum(n for (a, _), n in c.items() if a == v)
            last = traj.positions[-1]
            assert out == count - (1 if v == last else 0)
        hits = traj.first_hits()
        assert hits[0] == 0
        for v, n in hits.items():
            assert traj.positions[n] == v and v not in traj.positions[:n]

    def test_unrecorded_run_keeps_summary(self):
        env = assign_deterministic(build_regular(3, 4))
        full = simulate(env, StopRule(max_steps=300), seed=6)
        slim = simulate(env, StopRule(max_steps=300), seed=6, record=False)
        assert slim.positions is None
        assert slim.steps == full.steps
        assert slim.max_depth == full.max_depth
        assert slim.root_returns == full.root_returns
        with pytest.raises(ValueError, match="recording"):
            slim.visit_counts()

    def test_same_seed_same_trajectory(self):
        env = assign_deterministic(build_regular(3, 4), lam=0.5)
        a = simulate(env, StopRule(max_steps=200), seed=11)
        b = simulate(env, StopRule(max_steps=200), seed=11)
        assert a.positions == b.positions


class TestRubin:
    def test_first_departure_matches_law(self):
        t = build_path(2)
        env = assign_deterministic(t, lam=2.0)
        up = 0
        trials = 30000
        for i in range(trials):
            traj = simulate_rubin(env, StopRule(max_steps=2), ClockTable(derive_seed(1, i)))
            # step 1 reaches the depth-1 vertex, step 2 is its excited departure
            if traj.positions[2] == 0:
                up += 1
        assert up / trials == pytest.approx(2 / 3, abs=0.011)

    def test_later_departure_matches_law(self):
        t = build_path(2)
        env = assign_deterministic(t, lam=1.0, mu=3.0)
        up = 0
        trials = 30000
        n_used = 0
        for i in range(trials):
            traj = simulate_rubin(env, StopRule(max_steps=4), ClockTable(derive_seed(2, i)))
            p = traj.positions
            # want: root, down, up, down, then the second departure from depth 1
            if p[:4] == [0, 1, 0, 1]:
                n_used += 1
                if p[4] == 0:
                    up += 1
        # mu 3, deg 2: parent probability 3/4
        se = math.sqrt(0.75 * 0.25 / n_used)
        assert up / n_used == pytest.approx(0.75, abs=4 * se)

    def test_same_table_same_trajectory(self):
        env = assign_deterministic(build_regular(3, 4), lam=2.0, mu=0.7)
        a = simulate_rubin(env, StopRule(max_steps=300), ClockTable(42))
        b = simulate_rubin(env, StopRule(max_steps=300), ClockTable(42))
        assert a.positions == b.positions

    def test_distribution_matches_direct(self):
        """The two constructions sample the same law: compare the depth
        profile after 8 steps and the root-return counts by chi-square."""
        t = build_regular(3, 4)
        env = environment_from_alpha(t, [1.0] * t.n_vertices)
        trials = 4000
        depth_direct = Counter()
        depth_rubin = Counter()
        ret_direct = Counter()
        ret_rubin = Counter()
        for i in range(trials):
            a = simulate(env, StopRule(max_steps=8), seed=derive_seed(100, i))
            b = simulate_rubin(env, StopRule(max_steps=8), ClockTable(derive_seed(200, i)))
            depth_direct[t.depth[a.positions[-1]]] += 1
            depth_rubin[t.depth[b.positions[-1]]] += 1
            ret_direct[min(a.root_returns, 3)] += 1
            ret_rubin[min(b.root_returns, 3)] += 1
        for da, db in ((depth_direct, depth_rubin), (ret_direct, ret_rubin)):
            cats = sorted(set(da) | set(db))
            table = np.array([[da.get(c, 0) for c in cats],
                              [db.get(c, 0) for c in cats]])
            table = table[:, table.sum(axis=0) > 0]
            _, p, _, _ = stats.chi2_contingency(table)
            assert p > 1e-4


class TestExtension:
    def test_depth_one_edge_always_open(self):
        t = build_regular(3, 3)
        env = assign_deterministic(t)
        traj = simulate_extension(env, ClockTable(5), 1,
                                  StopRule(hit_depth=1, root_returns=1))
        assert traj.escaped and traj.steps == 1

    def test_reflects_at_target(self):
        t = build_path(2)
        env = assign_deterministic(t)
        traj = simulate_extension(env, ClockTable(6), 2, StopRule(max_steps=20))
        for a, b in zip(traj.positions, traj.positions[1:]):
            assert abs(t.depth[a] - t.depth[b]) == 1
        assert max(t.depth[p] for p in traj.positions) == 2

    def test_open_frequency_matches_psi_product(self):
        t = build_regular(3, 3)
        env = environment_from_alpha(t, [1.0] * t.n_vertices)
        target = t.leftmost_at_depth(2)
        trials = 30000
        opens = 0
        for i in range(trials):
            traj = simulate_extension(env, ClockTable(derive_seed(3, i)), target,
                                      StopRule(hit_depth=2, root_returns=1))
            opens += traj.escaped
        expect = Psi(env, target)
        assert expect == pytest.approx(0.25, rel=1e-12)
        se = math.sqrt(expect * (1 - expect) / trials)
        assert opens / trials == pytest.approx(expect, abs=4 * se)

    def test_needs_non_root_target(self):
        env = assign_deterministic(build_path(2))
        with pytest.raises(ValueError, match="non-root"):
            simulate_extension(env, ClockTable(1), 0, StopRule(max_steps=5))


class TestRestriction:
    def test_collapses_consecutive_repeats(self):
        # path positions with off-set excursions marked by ids outside members
        positions = [0, 9, 0, 1, 8, 8, 1, 2, 9, 2, 1]
        assert restriction(positions, {0, 1, 2}) == [0, 1, 2, 1]

    def test_empty_start(self):
        assert restriction([5, 5, 6], {1, 2}) == []


class TestCoincidence:
    def test_extension_equals_restriction_on_shared_clocks(self, rng):
        """The core coupling identity, checked on random trees and biases."""
        mismatches = 0
        for trial in range(200):
            t = random_tree(rng, max_edges=18, max_depth=5)
            deep = [v for v in range(1, t.n_vertices) if t.depth[v] >= 2]
            if not deep:
                continue
            env = assign_deterministic(
                t,
                lam=lambda v, r=rng: r.choice([0.5, 1.0, 2.0, 3.0]),
                mu=lambda v, r=rng: r.choice([0.5, 1.0, 2.0]),
            )
            target = rng.choice(deep)
            table = ClockTable(derive_seed(4, trial))
            walk = simulate_rubin(env, StopRule(max_steps=300), table)
            want = restriction(walk.positions, t.root_path(target))
            ext = simulate_extension(env, table, target,
                                     StopRule(max_steps=len(want) - 1))
            if ext.positions != want:
                mismatches += 1
        assert mismatches == 0

    def test_nested_extensions_agree_until_split(self, rng):
        """Extensions toward an ancestor and a descendant coincide until the
        ancestor is first hit, which is what makes openness monotone."""
        t = build_regular(3, 4)
        env = environment_from_alpha(t, [1.0] * t.n_vertices)
        deep = t.leftmost_at_depth(4)
        mid = t.root_path(deep)[2]
        for trial in range(300):
            table = ClockTable(derive_seed(5, trial))
            long = simulate_extension(env, table, deep, StopRule(max_steps=60))
            short = simulate_extension(env, table, mid, StopRule(max_steps=60))
            lp, sp = long.positions, short.positions
            try:
                cut = lp.index(mid)
            except ValueError:
                cut = len(lp)
            assert lp[: cut + 1] == sp[: cut + 1]
