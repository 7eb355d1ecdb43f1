"""Direct simulation of the n-block pairwise-merge coalescent.

While k blocks remain the next merge time is exponential with rate
k(k-1)/2 and the merging pair is uniform over the k(k-1)/2 pairs.  Block
identifiers are stable: every block keeps the smallest id among its
members, so trajectories replay deterministically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .rng import SeedRecord, substream


@dataclass
class LabeledPartition:
    """Partition of {1..n} into disjoint nonempty blocks."""

    n: int
    blocks: list[frozenset[int]]

    def validate(self) -> None:
        seen: set[int] = set()
        for b in self.blocks:
            if not b:
                raise ValueError("empty block")
            if seen & b:
                raise ValueError("blocks overlap")
            seen |= b
        if seen != set(range(1, self.n + 1)):
            raise ValueError("blocks must cover {1..n}")

    def as_sets(self) -> set[frozenset[int]]:
        return set(self.blocks)


@dataclass
class MassVector:
    """Nonnegative fragment masses with a conserved total."""

    masses: np.ndarray
    total: float

    def __post_init__(self) -> None:
        self.masses = np.asarray(self.masses, dtype=float)

    def validate(self) -> None:
        if np.any(self.masses < 0):
            raise ValueError("negative mass")
        s = float(self.masses.sum())
        if abs(s - self.total) > 1e-12 * max(1.0, abs(self.total)):
            raise ValueError(f"masses sum {s} != total {self.total}")


@dataclass
class CoalescentTrajectory:
    """Time-ordered merge events of a partition-valued process.

    keep[e] and gone[e] are the ids of the pair merged at times[e]; the
    merged block continues under keep[e] = min of the two.  init_masses,
    when present, gives the mass of each initial block (index = id).
    """

    n: int
    times: np.ndarray
    keep: np.ndarray
    gone: np.ndarray
    horizon: float = math.inf
    seed: SeedRecord | None = None
    init_masses: np.ndarray | None = None

    @property
    def n_events(self) -> int:
        return int(self.times.size)

    @property
    def complete(self) -> bool:
        return self.n_events == self.n - 1

    @property
    def events(self) -> list[tuple[float, tuple[int, int]]]:
        return [(float(t), (int(a), int(b)))
                for t, a, b in zip(self.times, self.keep, self.gone)]

    def validate(self) -> None:
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("event times must be strictly increasing")
        if self.n_events > self.n - 1:
            raise ValueError("too many events")


@dataclass
class CoalescenceMetric:
    """Pairwise coalescence times of m sampled labels (an ultrametric)."""

    m: int
    d: np.ndarray

    def validate(self, atol: float = 0.0) -> None:
        if not np.allclose(self.d, self.d.T):
            raise ValueError("metric not symmetric")
        if np.any(np.diag(self.d) != 0):
            raise ValueError("nonzero diagonal")
        for i in range(self.m):
            row = self.d[i]
            for j in range(self.m):
                if np.any(self.d[:, j] > np.maximum(row, self.d[i, j]) + atol):
                    raise ValueError("ultrametric inequality violated")


def simulate_kingman(n: int, horizon: float = math.inf, rng=None,
                     seed: SeedRecord | None = None) -> CoalescentTrajectory:
    """Sample a trajectory of the pairwise-merge coalescent from n blocks.

    Exponential gaps are drawn by inverse CDF; the merging pair by two
    uniform slot indices.  Events past the horizon are discarded.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    if rng is None:
        rng = np.random.default_rng()
    n_ev = n - 1
    if n_ev == 0:
        empty = np.empty(0)
        return CoalescentTrajectory(n, empty, empty.astype(np.int64),
                                    empty.astype(np.int64), horizon, seed)
    ks = np.arange(n, 1, -1, dtype=np.float64)
    rates = ks * (ks - 1.0) / 2.0
    gaps = -np.log1p(-rng.random(n_ev)) / rates
    times = np.cumsum(gaps)
    pos_a = np.minimum((rng.random(n_ev) * ks).astype(np.int64), (ks - 1).astype(np.int64))
    pos_b = np.minimum((rng.random(n_ev) * (ks - 1)).astype(np.int64), (ks - 2).astype(np.int64))
    keep = np.empty(n_ev, np.int64)
    gone = np.empty(n_ev, np.int64)
    _kernels.pairs_to_ids(n, pos_a, pos_b, keep, gone)
    if math.isfinite(horizon):
        cut = int(np.searchsorted(times, horizon, side="right"))
        times, keep, gone = times[:cut], keep[:cut], gone[:cut]
    return CoalescentTrajectory(n, times, keep, gone, horizon, seed)


def simulate_kingman_seeded(n: int, horizon: float = math.inf, *, master: int,
                            replicate: int = 0, label: str = "kingman") -> CoalescentTrajectory:
    rng = substream(master, replicate, label)
    return simulate_kingman(n, horizon, rng, SeedRecord(master, replicate, label))


# --- replay helpers ---------------------------------------------------------

def _check_query_time(traj: CoalescentTrajectory, t: float) -> None:
    if t < 0:
        raise ValueError("t must be nonnegative")
    if not traj.complete and t > traj.horizon:
        raise ValueError(f"t={t} beyond trajectory horizon {traj.horizon}")


def _events_until(traj: CoalescentTrajectory, t: float) -> int:
    return int(np.searchsorted(traj.times, t, side="right"))


def sizes_at(traj: CoalescentTrajectory, t: float) -> np.ndarray:
    """Sizes of the blocks present at time t (unordered)."""
    _check_query_time(traj, t)
    sizes = np.ones(traj.n + 1)
    sizes[0] = 0.0
    alive = np.ones(traj.n + 1, np.bool_)
    alive[0] = False
    _kernels.apply_merges(traj.keep, traj.gone, 0, _events_until(traj, t), sizes, alive)
    return sizes[alive]


def block_count(traj: CoalescentTrajectory, t: float) -> int:
    """Number of blocks at time t."""
    _check_query_time(traj, t)
    return traj.n - _events_until(traj, t)


def frequency_containing(traj: CoalescentTrajectory, i: int, t: float) -> float:
    """Size of the block containing label i at time t, divided by n."""
    if not 1 <= i <= traj.n:
        raise ValueError(f"label {i} outside 1..{traj.n}")
    _check_query_time(traj, t)
    e1 = _events_until(traj, t)
    parent = np.arange(traj.n + 1, dtype=np.int64)
    _kernels.union_merges(traj.keep, traj.gone, 0, e1, parent)
    sizes = np.ones(traj.n + 1)
    alive = np.ones(traj.n + 1, np.bool_)
    _kernels.apply_merges(traj.keep, traj.gone, 0, e1, sizes, alive)
    root = int(_kernels.find_root(parent, i))
    return float(sizes[root]) / traj.n


def blocks_larger_than(traj: CoalescentTrajectory, t: float, x: float) -> int:
    """Count of blocks at time t whose frequency exceeds x."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    return int(np.count_nonzero(sizes_at(traj, t) / traj.n > x))


def extremal_blocks(traj: CoalescentTrajectory, t: float) -> tuple[float, float]:
    """(smallest, largest) block frequency at time t."""
    sizes = sizes_at(traj, t)
    return float(sizes.min()) / traj.n, float(sizes.max()) / traj.n


def jump_chain(traj: CoalescentTrajectory) -> list[MassVector]:
    """Frequency vectors indexed by block count k = n..1.

    Element j corresponds to k = n - j.  O(n^2) memory; intended for
    moderate n.  Requires a fully coalesced trajectory.
    """
    if not traj.complete:
        raise ValueError("trajectory truncated before full coalescence")
    n = traj.n
    sizes = np.ones(n + 1)
    sizes[0] = 0.0
    alive = np.ones(n + 1, np.bool_)
    alive[0] = False
    out = [MassVector(sizes[alive] / n, 1.0)]
    for e in range(traj.n_events):
        _kernels.apply_merges(traj.keep, traj.gone, e, e + 1, sizes, alive)
        out.append(MassVector(sizes[alive] / n, 1.0))
    return out


def jump_states(traj: CoalescentTrajectory, counts: list[int]) -> dict[int, np.ndarray]:
    """Frequency vectors at the requested block counts only (cheap)."""
    if not traj.complete:
        raise ValueError("trajectory truncated before full coalescence")
    want = np.array(sorted(set(counts), reverse=True), dtype=np.int64)
    if want.size and (want[0] > traj.n or want[-1] < 1):
        raise ValueError(f"block counts must lie in 1..{traj.n}")
    out = np.zeros((want.size, traj.n + 1))
    _kernels.jump_sizes_at_counts(traj.n, traj.keep, traj.gone, want, out)
    return {int(k): row[row > 0] / traj.n for k, row in zip(want, out)}


def coalescence_metric(traj: CoalescentTrajectory, m: int) -> CoalescenceMetric:
    """Pairwise coalescence times of labels 1..m."""
    if m > traj.n:
        raise ValueError("m exceeds ground-set size")
    if not traj.complete:
        raise ValueError("trajectory truncated before full coalescence")
    d = np.zeros((m, m))
    members: dict[int, list[int]] = {i: [i - 1] for i in range(1, m + 1)}
    for t, a, b in zip(traj.times, traj.keep, traj.gone):
        la = members.pop(int(a), None)
        lb = members.pop(int(b), None)
        if la and lb:
            for x in la:
                for y in lb:
                    d[x, y] = d[y, x] = t
        merged = (la or []) + (lb or [])
        if merged:
            members[int(a)] = merged
    return CoalescenceMetric(m, d)


# --- trajectory utilities shared with the excursion-derived coalescent ------

def sojourn_interval(traj: CoalescentTrajectory, k: int) -> tuple[float, float | None] | None:
    """(entry, exit) times of the k-block state; exit None if censored.

    Returns None when the trajectory never reaches k blocks.
    """
    if not 2 <= k <= traj.n:
        raise ValueError("k must lie in 2..n")
    enter_ev = traj.n - k  # number of events that must have happened
    if enter_ev > traj.n_events:
        return None
    t_enter = 0.0 if enter_ev == 0 else float(traj.times[enter_ev - 1])
    t_exit = float(traj.times[enter_ev]) if enter_ev < traj.n_events else None
    return t_enter, t_exit


def merge_category(traj: CoalescentTrajectory, k: int, by: str = "id") -> tuple[int, int] | None:
    """Which pair (as 0-based sorted positions) merged while k blocks existed.

    Blocks are ordered by id or by mass descending (ties by id); the mass
    of a block is the sum of init_masses over its members (block sizes
    when init_masses is absent).  None when the merge is censored.
    """
    ev = traj.n - k
    if ev >= traj.n_events:
        return None
    masses = np.ones(traj.n + 1) if traj.init_masses is None else traj.init_masses.astype(float).copy()
    masses[0] = 0.0
    alive = np.ones(traj.n + 1, np.bool_)
    alive[0] = False
    _kernels.apply_merges(traj.keep, traj.gone, 0, ev, masses, alive)
    ids = np.nonzero(alive)[0]
    if by == "id":
        order = ids
    elif by == "mass":
        order = ids[np.lexsort((ids, -masses[ids]))]
    else:
        raise ValueError("by must be 'id' or 'mass'")
    slot = {int(bid): pos for pos, bid in enumerate(order)}
    i, j = slot[int(traj.keep[ev])], slot[int(traj.gone[ev])]
    return (i, j) if i < j else (j, i)


# --- independent oracles (kept separate from the replay path above) ---------

def block_count_sample(n: int, t: float, rng) -> int:
    """N_t via the pure-death block-counting chain (oracle helper)."""
    ks = np.arange(n, 1, -1, dtype=np.float64)
    gaps = rng.exponential(1.0, n - 1) / (ks * (ks - 1.0) / 2.0)
    return n - int(np.searchsorted(np.cumsum(gaps), t, side="right"))


def uniform_composition(n: int, k: int, rng) -> np.ndarray:
    """Uniform composition of n into k positive parts (oracle helper).

    The block sizes of the pairwise-merge coalescent at k blocks are
    uniform over compositions; used as an independent check of replays.
    """
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    cuts = np.sort(rng.choice(n - 1, size=k - 1, replace=False)) + 1
    return np.diff(np.concatenate(([0], cuts, [n]))).astype(np.int64)
