"""Ruin percolation: the bond process carried by the walk's path extensions.

Every sample owns one clock table. The edge above vertex v is open when the
extension along v's root path reaches v before returning to the root; since
extensions toward nested targets read the same clocks, a deeper edge can only
be open if every edge above it is, so the open edges containing the root form
a downward-grown cluster and membership of an edge in that cluster is the
single event {edge open}. Its probability is exactly the ruin product Psi of
the environment, which is what every Monte Carlo here is checked against.

The cluster is not an independent percolation: nearby edges share clocks
through their common ancestors. It is quasi-independent, with an explicit
constant M = (1+K)^2 exp(2K) built from the environment's resistance-to-
potential ratio, and the statistic that certifies this at desk scale is
computed by rejection conditioning on the common ancestor being reached.

The concentration experiment samples fresh random environments and asks how
often the exact Psi of a deep edge leaves its polynomial band; under the
annealed mean m the band exponent is m - 2, and the leave frequency should
die out with depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .environment import (
    AlphaDistribution,
    Environment,
    Psi,
    psi,
    rt_hypothesis_sup,
    sample_random_environment,
)
from .errors import RefusalError
from .tree import Tree
from .walk import ClockTable, StopRule, derive_seed, simulate_extension

__all__ = [
    "PercolationSample",
    "ConnectionEstimate",
    "QuasiIndependenceReport",
    "ConcentrationReport",
    "sample_ruin_percolation",
    "edge_connection_probability_mc",
    "adapted_conductance",
    "quasi_independence_constant",
    "quasi_independence_statistic",
    "concentration_experiment",
]

_EXTENSION_CAP = 10_000_000


def _edge_open(env: Environment, table: ClockTable, v: int) -> bool | None:
    """Did the extension toward v reach it before returning to the root?
    None flags a run that hit the step cap (never seen in practice)."""
    traj = simulate_extension(
        env, table, v,
        StopRule(max_steps=_EXTENSION_CAP, hit_depth=env.tree.depth[v], root_returns=1),
        record=False,
    )
    if traj.stop_reason == "max_steps":
        return None
    return traj.escaped


@dataclass
class PercolationSample:
    """One realization: open status per edge (indexed by child id, entry 0
    unused) and the root cluster as the set of edges whose whole ancestor
    line is open."""

    open_edges: list[bool]
    root_cluster: frozenset[int]
    valid: bool
    sample_index: int
    monotone_violations: int

    def is_open(self, e: int) -> bool:
        return self.open_edges[e]

    def in_root_cluster(self, e: int) -> bool:
        return e in self.root_cluster


def sample_ruin_percolation(env: Environment, master_seed: int,
                            sample_index: int = 0,
                            max_depth: int | None = None) -> PercolationSample:
    """Draw one percolation sample by running the extension of every edge
    (down to max_depth) on a single shared clock table."""
    tree = env.tree
    table = ClockTable(derive_seed(master_seed, sample_index))
    limit = tree.truncation_depth if max_depth is None else max_depth
    n = tree.n_vertices
    open_edges = [False] * n
    valid = True
    for v in range(1, n):
        if tree.depth[v] > limit:
            continue
        status = _edge_open(env, table, v)
        if status is None:
            valid = False
            status = False
        open_edges[v] = status
    cluster = set()
    stack = [c for c in tree.children[0] if open_edges[c]]
    while stack:
        v = stack.pop()
        cluster.add(v)
        stack.extend(c for c in tree.children[v]
                     if tree.depth[c] <= limit and open_edges[c])
    violations = sum(
        1
        for v in range(1, n)
        if tree.depth[v] >= 2 and tree.depth[v] <= limit
        and open_edges[v] and not open_edges[tree.parent[v]]
    )
    return PercolationSample(open_edges, frozenset(cluster), valid,
                             sample_index, violations)


@dataclass
class ConnectionEstimate:
    """Monte Carlo estimate of the probability that an edge sits in the root
    cluster, next to the exact ruin product it must match."""

    edge: int
    depth: int
    trials: int
    n_connected: int
    exact: float
    monotone_violations: int
    invalid_runs: int

    @property
    def p_hat(self) -> float:
        return self.n_connected / self.trials

    @property
    def stderr(self) -> float:
        p = self.p_hat
        return math.sqrt(max(p * (1 - p), 1e-12) / self.trials)

    @property
    def z_score(self) -> float:
        se = math.sqrt(max(self.exact * (1 - self.exact), 1e-12) / self.trials)
        return (self.p_hat - self.exact) / se


def edge_connection_probability_mc(env: Environment, edge: int, trials: int,
                                   master_seed: int) -> ConnectionEstimate:
    """Estimate P(edge is root-connected) by running only the extensions of
    the edge's own root path per sample, which the coupling makes sufficient.

    Also cross-checks, per sample, that the edge being open already implies
    the whole ancestor line is open (monotone coupling); any violation would
    mean the clock sharing is broken.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials for a meaningful estimate")
    tree = env.tree
    path_targets = tree.root_path(edge)[1:]
    n_connected = 0
    violations = 0
    invalid = 0
    for i in range(trials):
        table = ClockTable(derive_seed(master_seed, i))
        all_open = True
        edge_itself_open = False
        for v in path_targets:
            status = _edge_open(env, table, v)
            if status is None:
                invalid += 1
                all_open = False
                break
            if v == edge:
                edge_itself_open = status
            if not status:
                all_open = False
                # keep going only to evaluate the edge itself for the
                # monotonicity cross-check
                if v == edge:
                    break
        if edge_itself_open and not all_open:
            violations += 1
        if all_open:
            n_connected += 1
    return ConnectionEstimate(
        edge=edge,
        depth=tree.depth[edge],
        trials=trials,
        n_connected=n_connected,
        exact=Psi(env, edge),
        monotone_violations=violations,
        invalid_runs=invalid,
    )


def adapted_conductance(env: Environment, e: int) -> float:
    """Conductance the percolation literature attaches to each edge:
    1 at depth 1, else P(root connected to the edge) over P(edge closed given
    its parent end is connected), which here is Psi(e) / (1 - psi(e))."""
    if env.tree.depth[e] == 1:
        return 1.0
    return Psi(env, e) / (1.0 - psi(env, e))


def quasi_independence_constant(env: Environment) -> tuple[float, float]:
    """(K, M): K is 2 plus the environment's resistance-to-potential sup,
    and M = (1+K)^2 exp(2K) is the quasi-independence constant."""
    K = 2.0 + rt_hypothesis_sup(env)
    return K, (1.0 + K) ** 2 * math.exp(2.0 * K)


@dataclass
class QuasiIndependenceReport:
    edge_a: int
    edge_b: int
    ancestor: int            # nearest common ancestor vertex (0 for disjoint)
    trials: int
    kept: int                # samples where the ancestor was root-connected
    p_a: float
    p_b: float
    p_joint: float
    K: float
    M: float
    bound: float             # M * p_a * p_b
    sigma_joint: float
    holds: bool
    ratio: float | None      # p_joint / (p_a p_b) when defined
    independence_z: float | None  # only for disjoint pairs (ancestor 0)


def quasi_independence_statistic(env: Environment, edge_a: int, edge_b: int,
                                 trials: int, master_seed: int,
                                 min_conditioned: int = 50) -> QuasiIndependenceReport:
    """Empirical check of the quasi-independence inequality for one pair of
    edges: conditioned on their nearest common ancestor being root-connected,
    the joint connection frequency must stay below M times the product of the
    marginals (plus Monte Carlo noise).

    Conditioning is by rejection, so a pair whose ancestor is rarely reached
    can starve; fewer than min_conditioned kept samples is a refusal, not an
    answer. For pairs in disjoint root subtrees the conditioning is empty and
    the report also carries an exact-independence z score, since extensions
    that share no path vertices read disjoint clock sets.
    """
    tree = env.tree
    pa = tree.root_path(edge_a)
    pb = tree.root_path(edge_b)
    shared = 0
    for x, y in zip(pa, pb):
        if x != y:
            break
        shared = x
    if shared in (edge_a, edge_b):
        raise ValueError("edges on the same root path make a degenerate pair")
    cond_targets = tree.root_path(shared)[1:] if shared else []
    a_targets = [v for v in pa[1:] if v not in cond_targets]
    b_targets = [v for v in pb[1:] if v not in cond_targets and v not in a_targets]

    kept = 0
    hit_a = 0
    hit_b = 0
    hit_both = 0
    for i in range(trials):
        table = ClockTable(derive_seed(master_seed, i))
        if not all(_edge_open(env, table, v) for v in cond_targets):
            continue
        kept += 1
        ca = all(_edge_open(env, table, v) for v in a_targets)
        cb = all(_edge_open(env, table, v) for v in b_targets)
        hit_a += ca
        hit_b += cb
        hit_both += ca and cb
    if kept < min_conditioned:
        raise RefusalError(
            f"conditioning on vertex {shared} kept {kept} of {trials} samples, "
            f"fewer than the required {min_conditioned}; increase trials"
        )
    p_a = hit_a / kept
    p_b = hit_b / kept
    p_joint = hit_both / kept
    K, M = quasi_independence_constant(env)
    bound = M * p_a * p_b
    sigma = math.sqrt(max(p_joint * (1 - p_joint), 1e-12) / kept)
    holds = p_joint <= bound + 3 * sigma
    ratio = p_joint / (p_a * p_b) if p_a > 0 and p_b > 0 else None
    indep_z = None
    if shared == 0 and p_a > 0 and p_b > 0:
        d = p_joint - p_a * p_b
        var = max(p_a * p_b * (1 - p_a) * (1 - p_b), 1e-12) / kept
        indep_z = d / math.sqrt(var)
    return QuasiIndependenceReport(
        edge_a=edge_a, edge_b=edge_b, ancestor=shared, trials=trials,
        kept=kept, p_a=p_a, p_b=p_b, p_joint=p_joint, K=K, M=M, bound=bound,
        sigma_joint=sigma, holds=holds, ratio=ratio, independence_z=indep_z,
    )


@dataclass
class ConcentrationReport:
    """Per-depth frequency of the exact ruin product leaving its polynomial
    band across freshly sampled environments."""

    depths: list[int]
    n_environments: int
    epsilon: float
    m: float
    violations: list[int]
    frequencies: list[float] = field(init=False)

    def __post_init__(self):
        self.frequencies = [v / self.n_environments for v in self.violations]


def concentration_experiment(tree: Tree, dist: AlphaDistribution, epsilon: float,
                             depths: list[int], env_samples: int,
                             master_seed: int) -> ConcentrationReport:
    """For each sampled environment check, at each probe depth, whether the
    exact Psi of the leftmost edge stays inside

        kappa^{-1} * n^(m - 2 - eps)  <=  Psi  <=  n^(m - 2 + eps)

    where kappa = 1 + the largest alpha among the root's children. Returns
    violation counts per depth; the law of large numbers in the annealed mean
    makes these die out as the depth grows."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if max(depths) > tree.truncation_depth:
        raise ValueError("probe depth exceeds the tree's truncation depth")
    if len(dist.values) < 2:
        raise RefusalError(
            "concentration over a degenerate (single-point) alpha law says "
            "nothing; use a distribution with at least two atoms"
        )
    m = dist.m
    edges = [tree.leftmost_at_depth(d) for d in depths]
    violations = [0] * len(depths)
    for i in range(env_samples):
        env = sample_random_environment(tree, dist, derive_seed(master_seed, i))
        kappa = 1.0 + max(env.alpha[c] for c in tree.children[0])
        for k, (d, e) in enumerate(zip(depths, edges)):
            val = Psi(env, e)
            lo = d ** (m - 2.0 - epsilon) / kappa
            hi = d ** (m - 2.0 + epsilon)
            if not (lo <= val <= hi):
                violations[k] += 1
    return ConcentrationReport(list(depths), env_samples, epsilon, m, violations)
