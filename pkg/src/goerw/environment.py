"""Per-vertex bias environments and the potential theory built on them.

A walk environment assigns each vertex two positive numbers: lam (the bias
toward the parent on the first visit) and mu (the bias toward the parent on
every later visit). The root carries the fixed values 1, they are never used.

From mu alone come the chain quantities that control whether excursions
return:

- resistance R(e) of an edge at depth |e|: the product of mu over the
  vertices strictly between the root and the edge's child, so depth-1 edges
  have resistance 1 and mu==2 gives R = 4 at depth 3.
- potential phi(x): the running sum of resistances along the path from the
  root to x (phi of the root is 0, and mu==1 makes phi(x) = |x|).

From both biases comes the per-edge ruin factor psi, the probability that a
walk freshly dropped at the edge's parent makes it down across the edge
before ruining back to the root, and its running product Psi along the path.
Psi is the exact connection probability in the ruin percolation, so it is the
closed form the Monte Carlo layers are checked against. Products are
accumulated in log space so deep paths stay accurate.

The alpha family ties lam to the local geometry: lam = 1 + alpha * deg with
mu == 1, where alpha is drawn fresh for each vertex. Its annealed mean
m = E[1/(alpha+1)] sets the recurrence threshold for polynomially growing
trees, so the distribution object computes m analytically.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tree import Tree, TreeFamily, BranchingTable, min_cutset_sum, _atomic_write

__all__ = [
    "AlphaDistribution",
    "Environment",
    "assign_deterministic",
    "environment_from_alpha",
    "sample_random_environment",
    "resistance",
    "phi",
    "psi",
    "Psi",
    "log_Psi",
    "psi_simplified",
    "rt_hypothesis_sup",
    "rt_estimate",
    "write_env_file",
    "read_env_file",
]


@dataclass(frozen=True)
class AlphaDistribution:
    """A finitely supported law for the per-vertex excitement alpha >= 0.

    m is the annealed mean E[1/(alpha+1)], computed exactly from the support.
    """

    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("need matching nonempty values and probs")
        if any(a < 0 for a in self.values):
            raise ValueError("alpha values must be >= 0")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1")

    @property
    def m(self) -> float:
        return sum(p / (1.0 + a) for a, p in zip(self.values, self.probs))

    @classmethod
    def point(cls, a: float) -> "AlphaDistribution":
        return cls((float(a),), (1.0,))

    @classmethod
    def two_point(cls, a0: float, a1: float, p1: float) -> "AlphaDistribution":
        """Mass 1-p1 at a0 and p1 at a1."""
        return cls((float(a0), float(a1)), (1.0 - p1, p1))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw iid alphas. Uses inverse transform on the cumulative weights
        so the output depends only on the generator's uniforms."""
        cum = np.cumsum(self.probs)
        idx = np.searchsorted(cum, rng.random(size), side="right")
        idx = np.minimum(idx, len(self.values) - 1)
        return np.asarray(self.values, dtype=float)[idx]

    def spec_string(self) -> str:
        if len(self.values) == 1:
            return f"alpha:point={self.values[0]:g}"
        parts = ",".join(f"{v:g}" for v in self.values)
        pp = ",".join(f"{p:g}" for p in self.probs)
        return f"alpha:support={parts};probs={pp}"


@dataclass
class Environment:
    """Bias assignment bound to one tree, with cached potential theory.

    The caches fill lazily along root paths, so asking for Psi of one deep
    edge never touches the rest of the tree.
    """

    tree: Tree
    lam: list[float]
    mu: list[float]
    alpha: list[float] | None = None
    m: float | None = None
    seed: int | None = None
    dist_spec: str | None = None
    _R: dict[int, float] = field(default_factory=dict, repr=False, compare=False)
    _phi: dict[int, float] = field(default_factory=dict, repr=False, compare=False)
    _psi: dict[int, float] = field(default_factory=dict, repr=False, compare=False)
    _logPsi: dict[int, float] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        n = self.tree.n_vertices
        if len(self.lam) != n or len(self.mu) != n:
            raise ValueError("lam and mu must have one entry per vertex")
        self.lam[0] = 1.0
        self.mu[0] = 1.0
        for v in range(1, n):
            if self.lam[v] <= 0 or self.mu[v] <= 0:
                raise ValueError(f"biases must be positive, vertex {v}")


def assign_deterministic(tree: Tree, lam=1.0, mu=1.0) -> Environment:
    """Constant or rule-based biases. lam and mu may be numbers or callables
    taking the vertex id."""
    lam_list = [float(lam(v)) if callable(lam) else float(lam) for v in range(tree.n_vertices)]
    mu_list = [float(mu(v)) if callable(mu) else float(mu) for v in range(tree.n_vertices)]
    return Environment(tree, lam_list, mu_list)


def environment_from_alpha(tree: Tree, alpha: Sequence[float], m: float | None = None,
                           seed: int | None = None, dist_spec: str | None = None) -> Environment:
    """The alpha family: lam = 1 + alpha * deg, mu == 1."""
    alpha = [float(a) for a in alpha]
    if len(alpha) != tree.n_vertices:
        raise ValueError("need one alpha per vertex")
    alpha[0] = 0.0
    lam = [1.0 + alpha[v] * tree.deg(v) for v in range(tree.n_vertices)]
    mu = [1.0] * tree.n_vertices
    return Environment(tree, lam, mu, alpha=alpha, m=m, seed=seed, dist_spec=dist_spec)


def sample_random_environment(tree: Tree, dist: AlphaDistribution, seed: int) -> Environment:
    """Fresh iid alphas for every vertex, lam = 1 + alpha * deg, mu == 1."""
    rng = np.random.default_rng(seed)
    alpha = dist.sample(rng, tree.n_vertices)
    return environment_from_alpha(tree, alpha.tolist(), m=dist.m, seed=seed,
                                  dist_spec=dist.spec_string())


# ---------------------------------------------------------------------------
# potential theory


def _fill_path(env: Environment, v: int) -> None:
    """Populate R, phi and log Psi for every vertex on the root path of v."""
    path = env.tree.root_path(v)
    R_prev = None
    phi_prev = 0.0
    logpsi_prev = 0.0
    for u in path[1:]:
        if u in env._logPsi:
            R_prev = env._R[u]
            phi_prev = env._phi[u]
            logpsi_prev = env._logPsi[u]
            continue
        parent = env.tree.parent[u]
        if env.tree.depth[u] == 1:
            R_u = 1.0
        else:
            if R_prev is None:
                R_prev = env._R[parent]
            R_u = R_prev * env.mu[parent]
        phi_u = phi_prev + R_u
        if env.tree.depth[u] == 1:
            psi_u = 1.0
        else:
            grand = env.tree.parent[parent]
            phi_grand = 0.0 if grand == 0 else env._phi[grand]
            w = parent
            degw = env.tree.deg(w)
            lamw = env.lam[w]
            muw = env.mu[w]
            drop = 1.0 - phi_grand / phi_u
            factor = (lamw + (degw - 2) * muw / (muw + 1.0)) / (lamw + degw - 1.0)
            psi_u = 1.0 - drop * factor
        env._R[u] = R_u
        env._phi[u] = phi_u
        env._psi[u] = psi_u
        env._logPsi[u] = logpsi_prev + math.log(psi_u)
        R_prev = R_u
        phi_prev = phi_u
        logpsi_prev = env._logPsi[u]


def resistance(env: Environment, e: int) -> float:
    """R(e): the product of mu over the vertices strictly inside the root
    path of edge e. Depth-1 edges have resistance 1."""
    if e == 0:
        raise ValueError("the root names no edge")
    if e not in env._R:
        _fill_path(env, e)
    return env._R[e]


def phi(env: Environment, x: int) -> float:
    """Potential: sum of resistances along the root path (0 at the root)."""
    if x == 0:
        return 0.0
    if x not in env._phi:
        _fill_path(env, x)
    return env._phi[x]


def psi(env: Environment, u: int) -> float:
    """Single-edge ruin factor for the edge above u.

    Depth 1 is 1 by convention. Deeper, a fresh arrival at the parent w
    either drops toward the root (potential ratio term) or is held by the
    mix of its first-visit bias lam_w and later-visit bias mu_w; the bracket
    is that mix, exactly the weight the walk puts on going down across the
    edge before its excursion back to the root succeeds.
    """
    if u == 0:
        raise ValueError("the root names no edge")
    if env.tree.depth[u] == 1:
        return 1.0
    if u not in env._psi:
        _fill_path(env, u)
    return env._psi[u]


def log_Psi(env: Environment, u: int) -> float:
    if u == 0:
        raise ValueError("the root names no edge")
    if u not in env._logPsi:
        _fill_path(env, u)
    return env._logPsi[u]


def Psi(env: Environment, u: int) -> float:
    """Product of psi along the root path, the exact probability that the
    edge above u is connected to the root in the ruin percolation."""
    return math.exp(log_Psi(env, u))


def psi_simplified(alpha_parent: float, edge_depth: int) -> float:
    """Closed form of psi when mu == 1 and lam = 1 + alpha * deg: the vertex
    degree cancels and only the parent's alpha and the depth remain."""
    if edge_depth < 1:
        raise ValueError("edges start at depth 1")
    if edge_depth == 1:
        return 1.0
    return 1.0 - (2.0 * alpha_parent + 1.0) / ((alpha_parent + 1.0) * edge_depth)


def rt_hypothesis_sup(env: Environment) -> float:
    """sup over edges at depth >= 2 of R(e) / phi(e's parent).

    The recurrence criterion is stated under the standing assumption that
    this is finite along the tree; at desk scale we report the exact max over
    the truncation. Trees of depth < 2 have no such edges, which is reported
    as 0 with a warning since the hypothesis is then vacuous.
    """
    tree = env.tree
    if tree.truncation_depth < 2:
        warnings.warn("tree has no edges at depth >= 2; hypothesis is vacuous",
                      stacklevel=2)
        return 0.0
    best = 0.0
    for v in range(1, tree.n_vertices):
        if tree.depth[v] < 2:
            continue
        val = resistance(env, v) / phi(env, tree.parent[v])
        if val > best:
            best = val
    return best


def rt_estimate(pair_family: Callable[[int], tuple[Tree, Environment]],
                gamma_grid: Sequence[float], depths: Sequence[int],
                threshold: float = 0.1) -> BranchingTable:
    """Branching-ruin style table with ruin weights: min cutset sums under
    w(e) = Psi(e)**gamma across depths, read the same way as the plain
    growth-index table.

    pair_family(L) must return the truncated tree together with its
    environment, extending consistently as L grows (same seed and rule) so
    the depths are comparable.
    """
    gammas = sorted(gamma_grid)
    depths = sorted(depths)
    if not gammas or not depths:
        raise ValueError("gamma grid and depth list must be nonempty")
    values: dict[tuple[float, int], float] = {}
    for L in depths:
        tree, env = pair_family(L)
        logs = [0.0] * tree.n_vertices
        for v in range(1, tree.n_vertices):
            logs[v] = log_Psi(env, v)
        for g in gammas:
            values[(g, L)], _ = min_cutset_sum(
                tree, lambda e, g=g: math.exp(g * logs[e]))
    deepest = depths[-1]
    estimate = None
    for g in gammas:
        if values[(g, deepest)] >= threshold:
            estimate = g
    return BranchingTable(gammas, depths, values, threshold, estimate)


# ---------------------------------------------------------------------------
# file format


def write_env_file(env: Environment, path: str) -> None:
    """'# goerw-env v1 seed=<s> dist=<spec> m=<m>' then one line per vertex:
    id, lam, mu and alpha when the environment carries one."""
    seed = "none" if env.seed is None else str(env.seed)
    dist = env.dist_spec or "none"
    m = "none" if env.m is None else repr(env.m)
    lines = [f"# goerw-env v1 seed={seed} dist={dist} m={m}"]
    for v in range(env.tree.n_vertices):
        row = f"{v} {env.lam[v]!r} {env.mu[v]!r}"
        if env.alpha is not None:
            row += f" {env.alpha[v]!r}"
        lines.append(row)
    _atomic_write(path, "\n".join(lines) + "\n")


def read_env_file(path: str, tree: Tree) -> Environment:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("# goerw-env v1 "):
            raise ValueError(f"{path}: not a goerw-env v1 file")
        fields = dict(part.split("=", 1) for part in header[len("# goerw-env v1 "):].split())
        rows = []
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append(line.split())
    if len(rows) != tree.n_vertices:
        raise ValueError(
            f"{path}: {len(rows)} vertex rows for a tree of {tree.n_vertices}")
    lam = [0.0] * tree.n_vertices
    mu = [0.0] * tree.n_vertices
    alpha: list[float] | None = [0.0] * tree.n_vertices if len(rows[0]) == 4 else None
    for row in rows:
        v = int(row[0])
        if not 0 <= v < tree.n_vertices:
            raise ValueError(f"{path}: vertex id {v} out of range")
        lam[v] = float(row[1])
        mu[v] = float(row[2])
        if alpha is not None:
            alpha[v] = float(row[3])
    lam[0], mu[0] = 1.0, 1.0
    seed = None if fields.get("seed") in (None, "none") else int(fields["seed"])
    m = None if fields.get("m") in (None, "none") else float(fields["m"])
    dist_spec = None if fields.get("dist") in (None, "none") else fields["dist"]
    return Environment(tree, lam, mu, alpha=alpha, m=m, seed=seed, dist_spec=dist_spec)
