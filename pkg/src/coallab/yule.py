"""Binary pure-birth trees, their boundary measure, and the mass fragmentation.

Trees are grown event by event (each individual splits at rate 1) up to a
structural horizon; the number of alive descendants each tip leaves at the
full horizon T is then drawn from the exact single-lineage population law
P(Y_s = k) = e^{-s}(1 - e^{-s})^{k-1}.  This keeps normalizing-limit
estimators exact in law while avoiding trees of size e^T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kingman import CoalescentTrajectory, MassVector, jump_states, simulate_kingman
from .lattice import LatticeExcursion
from .levels import ExcursionSummary, summarize


@dataclass
class YuleNode:
    id: int
    parent: int            # -1 for the root
    birth: float
    split: float | None    # None while alive at the structural horizon


@dataclass
class YuleTree:
    """Binary branching tree to horizon T with exact tail population draws."""

    horizon: float
    grow_horizon: float
    nodes: list[YuleNode]
    tip_alive_at_T: dict[int, int]  # node id -> alive descendants at the horizon

    def children(self, node: int) -> list[int]:
        return self._child_map().get(node, [])

    def _child_map(self) -> dict[int, list[int]]:
        if not hasattr(self, "_children"):
            cm: dict[int, list[int]] = {}
            for nd in self.nodes:
                if nd.parent >= 0:
                    cm.setdefault(nd.parent, []).append(nd.id)
            self._children = cm
        return self._children

    def alive_at(self, t: float) -> list[int]:
        if t > self.grow_horizon and t != self.horizon:
            raise ValueError(f"t={t} beyond the structural horizon {self.grow_horizon}")
        return [nd.id for nd in self.nodes
                if nd.birth <= t and (nd.split is None or nd.split > t)]

    def population_at(self, t: float) -> int:
        if t == self.horizon:
            return sum(self.tip_alive_at_T.values())
        return len(self.alive_at(t))

    def descendants_at_horizon(self, node: int) -> int:
        nd = self.nodes[node]
        if nd.split is None:
            return self.tip_alive_at_T[node]
        return sum(self.descendants_at_horizon(c) for c in self.children(node))


def simulate_yule(T: float, rng=None, grow_horizon: float | None = None) -> YuleTree:
    """Grow a rate-1 binary branching tree to horizon T.

    grow_horizon bounds the explicitly simulated structure (default: all of
    it, capped at a population-friendly depth of 12); deeper population
    counts come from the exact geometric tail law.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if rng is None:
        rng = np.random.default_rng()
    tau = min(T, 12.0) if grow_horizon is None else min(grow_horizon, T)
    nodes = [YuleNode(0, -1, 0.0, None)]
    alive = [0]
    t = 0.0
    while True:
        t += rng.exponential(1.0 / len(alive))
        if t >= tau:
            break
        slot = int(rng.random() * len(alive))
        parent = alive[slot]
        nodes[parent].split = t
        c1, c2 = len(nodes), len(nodes) + 1
        nodes.append(YuleNode(c1, parent, t, None))
        nodes.append(YuleNode(c2, parent, t, None))
        alive[slot] = c1
        alive.append(c2)
    rest = T - tau
    if rest > 0:
        tails = rng.geometric(math.exp(-rest), size=len(alive))
    else:
        tails = np.ones(len(alive), np.int64)
    tip_counts = {node: int(k) for node, k in zip(alive, tails)}
    return YuleTree(T, tau, nodes, tip_counts)


def kesten_stigum_W(tree: YuleTree, node: int) -> float:
    """Finite-horizon normalized-population estimator of the limit mass of a node.

    Returns e^{-(T - birth)} * (alive descendants of the node at T); exactly
    additive across a split after discounting by the branch length.
    """
    if not 0 <= node < len(tree.nodes):
        raise ValueError(f"node {node} not in tree")
    nd = tree.nodes[node]
    return math.exp(-(tree.horizon - nd.birth)) * tree.descendants_at_horizon(node)


@dataclass
class BoundaryBall:
    """Ball of boundary rays through a node, with its limit-measure mass."""

    node: int
    radius: float
    mass: float


def branching_ball_mass(tree: YuleTree, node: int, normalized: bool = False) -> BoundaryBall:
    """Mass e^{-t} W(node) of the radius-e^{-t} ball at the node's birth depth t.

    With normalized=True the mass is divided by W(root), giving the
    probability measure on the boundary.
    """
    w = kesten_stigum_W(tree, node)
    birth = tree.nodes[node].birth
    mass = math.exp(-birth) * w
    if normalized:
        mass /= kesten_stigum_W(tree, 0)
    return BoundaryBall(node, math.exp(-birth), mass)


def fragmentation_path(tree: YuleTree, times) -> list[MassVector]:
    """Fragment masses {e^{-t} W(z): z alive at t} at each requested time.

    Total mass is exactly W(root) at every time under the finite-horizon
    estimator; fragment count equals the population.
    """
    times = np.asarray(times, dtype=float)
    if times.size and times.max() > tree.grow_horizon:
        raise ValueError("fragmentation times exceed the structural horizon")
    total = kesten_stigum_W(tree, 0)
    out = []
    for t in times:
        masses = np.array([math.exp(-(tree.horizon - tree.nodes[z].birth))
                           * tree.descendants_at_horizon(z)
                           for z in tree.alive_at(float(t))])
        masses *= math.exp(-(float(t)))
        # e^{-t} W_t(z) measured from depth t equals e^{-T} D_z regardless of birth
        masses = np.array([math.exp(-tree.horizon) * tree.descendants_at_horizon(z)
                           for z in tree.alive_at(float(t))])
        out.append(MassVector(masses, total))
    return out


def poissonized_reversed_chain(w: float, times, n0: int, rng) -> list[MassVector]:
    """Rescaled jump-chain states w*X(N_{wt}) along an independent Poisson clock.

    X is the frequency chain of a direct n0-block coalescent; after k
    Poisson arrivals the state is the one with k+1 blocks (zero arrivals =
    the single mass w).
    """
    if w <= 0:
        raise ValueError("w must be positive")
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0) or times.size == 0 or times[0] < 0:
        raise ValueError("times must be nonnegative and increasing")
    gaps = np.diff(np.concatenate(([0.0], times)))
    arrivals = np.cumsum(rng.poisson(w * gaps))
    if arrivals[-1] + 1 > n0:
        raise ValueError(f"Poisson count {arrivals[-1]} needs more than n0={n0} chain states")
    traj = simulate_kingman(n0, rng=rng)
    states = jump_states(traj, [int(k) + 1 for k in arrivals])
    return [MassVector(w * states[int(k) + 1], float(w)) for k in arrivals]


# --- observables read off a lattice excursion ---------------------------------

def reduced_tree_counts(path: LatticeExcursion, t_grid,
                        summary: ExcursionSummary | None = None) -> list[int]:
    """Branch counts N(1 - e^{-t}) of the tree spanned by the level-1 vertices.

    Under this exponential time change the branch-count process is a rate-1
    binary pure-birth process.
    """
    s = summarize(path) if summary is None else summary
    if s.n_runs == 0:
        raise ValueError("path does not reach level 1")
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid < 0):
        raise ValueError("t_grid must be nonnegative")
    return [int(c) for c in np.atleast_1d(s.count_at(1.0 - np.exp(-t_grid)))]


def heavy_count(path: LatticeExcursion, u: float, x: float,
                summary: ExcursionSummary | None = None) -> int:
    """Number of excursions above level 1-u carrying local time > x at level 1."""
    if not 0.0 < u < 1.0:
        raise ValueError("u must lie in (0, 1)")
    if x < 0:
        raise ValueError("x must be nonnegative")
    s = summarize(path) if summary is None else summary
    if s.n_runs == 0:
        raise ValueError("path does not reach level 1")
    groups = s.blocks_at(1.0 - u)
    masses = np.bincount(groups, weights=s.run_mass.astype(float)) * path.h
    return int(np.count_nonzero(masses > x))


# --- boundary-measure spectrum parameters --------------------------------------

EMPTY = float("nan")


@dataclass
class SpectrumParameters:
    """Scaling constants of the boundary branching measure and its dimension curves."""

    a: float = 1.0          # log mean offspring per unit time
    m: float = math.e       # mean offspring of the unit-time skeleton
    r: float = 1.0          # exponential-moment threshold of the limit mass
    tau: float = 1.0        # -log P(no branching in unit time) / a

    def dim_thick(self, theta: float) -> float:
        """Dimension 1 - theta of boundary points with ball mass ~ theta * t log(1/t)."""
        if theta < 0:
            raise ValueError("theta must be nonnegative")
        if theta > self.a / self.r:
            return EMPTY
        return self.a - self.r * theta

    def dim_thin(self, gamma: float) -> float:
        """Dimension 2/gamma - 1 of boundary points with ball mass ~ t^gamma."""
        if gamma <= 1.0:
            raise ValueError("gamma must exceed 1")
        if gamma > self.a * (1.0 + 1.0 / self.tau):
            return EMPTY
        return self.a * (self.a / gamma * (1.0 + self.tau) - self.tau)


def spectrum_parameters() -> SpectrumParameters:
    """Exact constants: a = 1, m = e, r = 1, tau = 1."""
    return SpectrumParameters()
