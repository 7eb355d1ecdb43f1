"""Level decompositions of lattice paths and the coalescents they encode.

A path that reaches the cap M = 1/h is reduced to: its runs of cap visits
(the excursions above any level that reach the top), the minimum of the
path between consecutive runs (bridge minima), and the excised peak
records.  Two runs belong to the same excursion above level u exactly when
every bridge between them stays above u, so the whole downward level sweep
is the sorted list of bridge minima; mapping levels through the local-time
integral 4/Z turns that sweep into a merge trajectory.
"""

from __future__ import annotations

import math
from bisect import insort
from dataclasses import dataclass, field

import numpy as np

from .kingman import CoalescentTrajectory, LabeledPartition
from .lattice import CONDITIONED, REFLECTED, LatticeExcursion

DEFAULT_M_TRACK = 64


@dataclass
class LocalTimeProfile:
    """Occupation density per lattice level: z[k] estimates the local time at kh."""

    h: float
    z: np.ndarray
    kind: str

    @property
    def top_site(self) -> int:
        return self.z.size - 1

    def at_level(self, level: float) -> float:
        return float(self.z[int(round(level / self.h))])


def local_time_profile(path: LatticeExcursion) -> LocalTimeProfile:
    """Interior estimator h * (visits); boundary 2h * (excursion starts) when reflected.

    A single conditioned excursion carries no local time at 0, so z[0] = 0
    for that kind.
    """
    visits = path.visit_counts()
    z = visits * path.h
    if path.kind == REFLECTED:
        z[0] = 2.0 * path.h * (visits[0] - 1)  # one boundary visit per completed excursion
    else:
        z[0] = 0.0
    return LocalTimeProfile(path.h, z, path.kind)


# --- run/bridge summary ------------------------------------------------------

@dataclass
class ExcursionSummary:
    """Runs at the reference site, bridge minima between them, peak ranks."""

    h: float
    ref_site: int
    run_start: np.ndarray    # first index of each run in the stored path
    run_end: np.ndarray      # one past the last index
    run_mass: np.ndarray     # visits at the reference site per run
    run_max: np.ndarray      # highest site per run, excised peaks included
    bridge_min: np.ndarray   # min site strictly between consecutive runs
    peak_idx: np.ndarray     # marker index of each peak (reference = cap only)
    peak_run: np.ndarray     # run containing each peak
    peak_order: np.ndarray   # peak indices sorted by height desc, position asc

    @property
    def n_runs(self) -> int:
        return int(self.run_start.size)

    def total_mass(self) -> float:
        return float(self.run_mass.sum()) * self.h

    def blocks_at(self, u: float) -> np.ndarray:
        """Cluster index of each run at threshold level u (runs joined iff bridge > u)."""
        if self.n_runs == 0:
            return np.zeros(0, np.int64)
        sep = (self.bridge_min * self.h <= u).astype(np.int64)
        return np.concatenate(([0], np.cumsum(sep)))

    def count_at(self, u) -> np.ndarray | int:
        """Number of excursions above level u reaching the reference site."""
        bh = np.sort(self.bridge_min) * self.h
        counts = 1 + np.searchsorted(bh, np.atleast_1d(np.asarray(u, dtype=float)), side="right")
        return counts if np.ndim(u) else int(counts[0])


def summarize(path: LatticeExcursion, ref_site: int | None = None) -> ExcursionSummary:
    v = path.values
    R = path.M if ref_site is None else int(ref_site)
    if R < 1:
        raise ValueError("reference site must be >= 1")
    hits = v >= R
    if not hits.any():
        z = np.zeros(0, np.int64)
        return ExcursionSummary(path.h, R, z, z, z, z, z, z, z, z)
    if hits[-1] or hits[0]:
        raise ValueError("path must start and end below the reference site")
    d = np.diff(hits.astype(np.int8))
    starts = np.nonzero(d == 1)[0] + 1
    ends = np.nonzero(d == -1)[0] + 1
    spans = np.empty(2 * starts.size, np.int64)
    spans[0::2], spans[1::2] = starts, ends
    seg_count = np.add.reduceat((v == R).astype(np.int64), spans)[0::2]
    seg_max = np.maximum.reduceat(v, spans)[0::2].astype(np.int64)
    if starts.size > 1:
        gaps = np.empty(2 * (starts.size - 1), np.int64)
        gaps[0::2], gaps[1::2] = ends[:-1], starts[1:]
        bridge = np.minimum.reduceat(v, gaps)[0::2].astype(np.int64)
    else:
        bridge = np.zeros(0, np.int64)
    peak_run = np.searchsorted(starts, path.peak_idx, side="right") - 1
    run_max = seg_max.copy()
    if path.n_peaks:
        tops = path.M + path.peak_height
        np.maximum.at(run_max, peak_run, tops)
        order = np.lexsort((path.peak_idx, -tops))
    else:
        order = np.zeros(0, np.int64)
    return ExcursionSummary(path.h, R, starts, ends, seg_count, run_max,
                            bridge, path.peak_idx.astype(np.int64), peak_run, order)


# --- time changes ------------------------------------------------------------

def _cell_widths(profile: LocalTimeProfile, top: int) -> np.ndarray:
    z = profile.z
    mid = 0.5 * (z[:top] + z[1:top + 1])
    return 4.0 * profile.h / mid


def downward_time_map(profile: LocalTimeProfile) -> np.ndarray:
    """T[k] = integral of 4/z over levels (kh, 1), by midpoint rule per cell."""
    M = int(round(1.0 / profile.h))
    if profile.top_site < M:
        raise ValueError("profile does not reach level 1")
    w = _cell_widths(profile, M)
    t = np.zeros(M + 1)
    t[:M] = np.cumsum(w[::-1])[::-1]
    return t


def upward_time_map(profile: LocalTimeProfile) -> np.ndarray:
    """C[k] = integral of 4/z over levels (0, kh)."""
    w = _cell_widths(profile, profile.top_site)
    return np.concatenate(([0.0], np.cumsum(w)))


def time_change_U(profile: LocalTimeProfile, t, tmap: np.ndarray | None = None):
    """Largest level s with integral_s^1 4/z du > t; continuous inverse, U(0) = 1.

    Monotone nonincreasing; 0 once t exhausts the integral down to level 0.
    """
    tm = downward_time_map(profile) if tmap is None else tmap
    h = profile.h
    M = tm.size - 1
    tv = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(tv < 0):
        raise ValueError("t must be nonnegative")
    rev = tm[::-1]  # increasing
    j = tm.size - 1 - np.searchsorted(rev, tv, side="right")  # largest site with T > t
    out = np.empty_like(tv)
    low = j < 0
    out[low] = 0.0
    ok = ~low
    jj = j[ok]
    frac = (tm[jj] - tv[ok]) / (tm[jj] - tm[jj + 1])
    out[ok] = (jj + frac) * h
    out[tv == 0.0] = M * h
    return out if np.ndim(t) else float(out[0])


def time_change_V(profile: LocalTimeProfile, t, cmap: np.ndarray | None = None):
    """Smallest level s with integral_0^s 4/z du > t; V(0) = 0, strictly increasing."""
    cm = upward_time_map(profile) if cmap is None else cmap
    tv = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(tv < 0):
        raise ValueError("t must be nonnegative")
    if np.any(tv >= cm[-1]):
        raise ValueError(f"t beyond the accumulated integral {cm[-1]:.6g}")
    j = np.searchsorted(cm, tv, side="right") - 1  # cell with C[j] <= t < C[j+1]
    frac = (tv - cm[j]) / (cm[j + 1] - cm[j])
    out = (j + frac) * profile.h
    return out if np.ndim(t) else float(out[0])


# --- level decomposition and partitions ---------------------------------------

@dataclass
class ExcursionRecord:
    start: int
    end: int
    height: float
    mass_at_1: float


@dataclass
class LevelDecomposition:
    """Excursions above a level that reach the top, ordered by height."""

    level: float
    excursions: list[ExcursionRecord]
    phi: dict[int, int] = field(default_factory=dict)


def _cluster_groups(summary: ExcursionSummary, u: float) -> list[tuple[int, int]]:
    """(first run, last run) of each cluster at threshold u, in path order."""
    cl = summary.blocks_at(u)
    bounds = np.nonzero(np.diff(cl))[0]
    firsts = np.concatenate(([0], bounds + 1))
    lasts = np.concatenate((bounds, [summary.n_runs - 1]))
    return list(zip(firsts.tolist(), lasts.tolist()))


def decompose_above(path: LatticeExcursion, u: float,
                    m_track: int = DEFAULT_M_TRACK,
                    summary: ExcursionSummary | None = None) -> LevelDecomposition:
    """Excursions above level u reaching level 1, highest first.

    Record indices bracket the stored path from the first to the last cap
    visit of each excursion; mass_at_1 is the local time it carries at the
    cap.  phi maps the rank of each tracked peak to the (1-based) index of
    its containing excursion.
    """
    if u >= 1.0:
        raise ValueError("u must be below 1")
    if u < 0.0:
        raise ValueError("u must be nonnegative")
    s = summarize(path) if summary is None else summary
    if s.n_runs == 0:
        raise ValueError("path does not reach level 1")
    groups = _cluster_groups(s, u)
    heights = [(float(s.run_max[f:l + 1].max()) - u / path.h) * path.h for f, l in groups]
    order = sorted(range(len(groups)), key=lambda g: (-heights[g], groups[g][0]))
    rank_of_group = {g: r for r, g in enumerate(order)}
    records = []
    for g in order:
        f, l = groups[g]
        records.append(ExcursionRecord(
            start=int(s.run_start[f]),
            end=int(s.run_end[l]),
            height=heights[g],
            mass_at_1=float(s.run_mass[f:l + 1].sum()) * path.h,
        ))
    group_of_run = s.blocks_at(u)
    phi = {}
    for rank, p in enumerate(s.peak_order[:m_track], start=1):
        g = int(group_of_run[s.peak_run[p]])
        phi[rank] = rank_of_group[g] + 1
    return LevelDecomposition(u, records, phi)


def partition_at_level(path: LatticeExcursion, u: float,
                       m_track: int = DEFAULT_M_TRACK,
                       summary: ExcursionSummary | None = None) -> LabeledPartition:
    """Partition of the m_track highest excursions above level 1 at level u.

    Label i is the i-th highest peak; i ~ j when both peaks fall inside
    the same excursion above u.  On the lattice, peaks whose cap visits are
    not separated by a dip below the cap only separate at u = 1 itself.
    """
    if not 0.0 <= u < 1.0:
        raise ValueError("u must lie in [0, 1)")
    s = summarize(path) if summary is None else summary
    if s.n_runs == 0:
        raise ValueError("path does not reach level 1")
    m = min(m_track, s.peak_order.size)
    group_of_run = s.blocks_at(u)
    blocks: dict[int, set[int]] = {}
    for rank, p in enumerate(s.peak_order[:m], start=1):
        g = int(group_of_run[s.peak_run[p]])
        blocks.setdefault(g, set()).add(rank)
    part = LabeledPartition(m, [frozenset(b) for _, b in sorted(blocks.items())])
    part.validate()
    return part


# --- the excursion-derived coalescent -----------------------------------------

class _Dsu:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        p = self.parent
        while p[i] != i:
            p[i] = p[p[i]]
            i = p[i]
        return i

    def union_left(self, a: int, b: int) -> None:
        self.parent[self.find(b)] = self.find(a)


def _merge_times(tmap: np.ndarray, bridge_min: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Strictly increasing merge times for bridges processed in level-descending order.

    Grid ties (several bridges at one site) get deterministic sub-cell
    offsets, a discretization artifact of measure zero in the continuum.
    """
    times = tmap[bridge_min[order]]
    rank_in_tie = np.zeros(order.size)
    for i in range(1, order.size):
        if bridge_min[order[i]] == bridge_min[order[i - 1]]:
            rank_in_tie[i] = rank_in_tie[i - 1] + 1.0
    cell_below = tmap[bridge_min[order] - 1] - tmap[bridge_min[order]]
    return times + rank_in_tie * cell_below * 1e-9


def excursion_coalescent(path: LatticeExcursion, t_grid=None,
                         m_track: int | None = None,
                         summary: ExcursionSummary | None = None,
                         profile: LocalTimeProfile | None = None) -> CoalescentTrajectory:
    """Merge trajectory of the excursions above the falling level, in coalescent time.

    Initial blocks are the cap-visit runs (ids 1..n in path order, masses =
    their local time at level 1); each bridge minimum produces one merge at
    the time the 4/Z integral assigns to its level.  m_track is accepted
    for interface parity but the trajectory never depends on it.
    """
    s = summarize(path) if summary is None else summary
    if s.n_runs == 0:
        raise ValueError("path does not reach level 1")
    prof = local_time_profile(path) if profile is None else profile
    tmap = downward_time_map(prof)
    n = s.n_runs
    horizon = math.inf
    if t_grid is not None:
        t_grid = np.asarray(t_grid, dtype=float)
        if t_grid.ndim != 1 or t_grid.size == 0 or np.any(np.diff(t_grid) <= 0):
            raise ValueError("t_grid must be increasing")
        horizon = float(t_grid[-1])
    order = np.lexsort((np.arange(s.bridge_min.size), -s.bridge_min))
    times = _merge_times(tmap, s.bridge_min, order)
    dsu = _Dsu(n)
    keep = np.empty(order.size, np.int64)
    gone = np.empty(order.size, np.int64)
    for e, g in enumerate(order.tolist()):
        left = dsu.find(g)
        right = dsu.find(g + 1)
        keep[e] = left + 1
        gone[e] = right + 1
        dsu.union_left(left, right)
    cut = int(np.searchsorted(times, horizon, side="right"))
    masses = np.zeros(n + 1)
    masses[1:] = s.run_mass * path.h
    return CoalescentTrajectory(n, times[:cut], keep[:cut], gone[:cut],
                                horizon, path.seed, masses)


def merge_rate_window(path: LatticeExcursion, u_lo: float, u_hi: float,
                      summary: ExcursionSummary | None = None,
                      profile: LocalTimeProfile | None = None) -> tuple[int, float]:
    """Observed merges in (u_lo, u_hi] and the pairwise-intensity integral.

    The integral accumulates C(N(u), 2) * 4/z(u) du cell by cell, which is
    the expected number of merges when every pair coalesces at rate 4/Z
    per unit of level-time.
    """
    s = summarize(path) if summary is None else summary
    prof = local_time_profile(path) if profile is None else profile
    h = path.h
    j_lo, j_hi = int(math.floor(u_lo / h)), int(math.floor(u_hi / h))
    bh = np.sort(s.bridge_min) * h
    observed = int(np.searchsorted(bh, u_hi, side="right") - np.searchsorted(bh, u_lo, side="right"))
    cells = np.arange(j_lo, j_hi)
    widths = _cell_widths(prof, int(round(1.0 / h)))[cells]
    n_at = 1 + np.searchsorted(bh, (cells + 0.5) * h, side="right")
    expected = float(np.sum(widths * n_at * (n_at - 1) / 2.0))
    return observed, expected


# --- reflected-path (random reference level) construction ----------------------

def hat_reference_site(path: LatticeExcursion, T: float,
                       profile: LocalTimeProfile | None = None) -> tuple[int, float, np.ndarray]:
    """Reference site for the horizon-T coalescent of a reflected path."""
    if path.kind != REFLECTED:
        raise ValueError("requires a reflected-forest path")
    prof = local_time_profile(path) if profile is None else profile
    cmap = upward_time_map(prof)
    v = time_change_V(prof, T, cmap)
    ref = max(1, int(math.ceil(v / path.h - 1e-9)))
    if ref >= path.max_site:
        raise ValueError("V(T) reaches the path maximum; increase the path or lower T")
    return ref, v, cmap


def hat_trajectory(path: LatticeExcursion, T: float) -> CoalescentTrajectory:
    """Kingman-run-for-time-T trajectory read off a reflected path.

    Blocks start as the excursions above level V(T); the pair separated by
    a bridge of height b merges at time T - C(bh).  Only events strictly
    inside [0, T) are emitted; the trajectory carries horizon T.
    """
    prof = local_time_profile(path)
    ref, v, cmap = hat_reference_site(path, T, prof)
    s = summarize(path, ref_site=ref)
    n = s.n_runs
    keep_mask = s.bridge_min >= 1  # bridges touching 0 never merge within [0, T)
    idx = np.nonzero(keep_mask)[0]
    sub = s.bridge_min[idx]
    order_local = np.lexsort((idx, -sub))
    hat_times = T - cmap[sub[order_local]]
    cell_above = cmap[sub[order_local] + 1] - cmap[sub[order_local]]
    rank_in_tie = np.zeros(order_local.size)
    for i in range(1, order_local.size):
        if sub[order_local[i]] == sub[order_local[i - 1]]:
            rank_in_tie[i] = rank_in_tie[i - 1] + 1.0
    hat_times = hat_times + rank_in_tie * cell_above * 1e-9
    dsu = _Dsu(n)
    keep = np.empty(order_local.size, np.int64)
    gone = np.empty(order_local.size, np.int64)
    for e, gpos in enumerate(idx[order_local].tolist()):
        left = dsu.find(gpos)
        right = dsu.find(gpos + 1)
        keep[e] = left + 1
        gone[e] = right + 1
        dsu.union_left(left, right)
    ok = hat_times < T
    masses = np.zeros(n + 1)
    masses[1:] = s.run_mass * path.h
    return CoalescentTrajectory(n, hat_times[ok], keep[ok], gone[ok], T, path.seed, masses)


def hat_partition(path: LatticeExcursion, T: float, t: float,
                  m_track: int = DEFAULT_M_TRACK) -> LabeledPartition:
    """Partition of the m_track highest excursions above V(T) at hat-time t.

    Blocks group those excursions by the excursion above V(T - t) that
    contains them; over t in [0, T] this runs the coalescent for time T.
    """
    if not 0.0 <= t <= T:
        raise ValueError("t must lie in [0, T]")
    prof = local_time_profile(path)
    ref, v, cmap = hat_reference_site(path, T, prof)
    s = summarize(path, ref_site=ref)
    u = 0.0 if t >= T else time_change_V(prof, T - t, cmap)
    order = np.lexsort((s.run_start, -s.run_max))
    m = min(m_track, s.n_runs)
    group_of_run = s.blocks_at(u)
    blocks: dict[int, set[int]] = {}
    for rank, run in enumerate(order[:m].tolist(), start=1):
        blocks.setdefault(int(group_of_run[run]), set()).add(rank)
    part = LabeledPartition(m, [frozenset(b) for _, b in sorted(blocks.items())])
    part.validate()
    return part


# --- lookdown split events -----------------------------------------------------

def lookdown_split_events(path: LatticeExcursion, u1: float, u2: float,
                          summary: ExcursionSummary | None = None) -> list[tuple[float, int, int]]:
    """Splits of cap-reaching excursions as the level rises from u1 to u2.

    Each event reports (level, surviving rank, new rank) with ranks by
    height among all cap-reaching excursions present just after the split;
    the taller part keeps its rank, ranks at or above the new one shift up.
    """
    if not 0.0 <= u1 < u2 < 1.0:
        raise ValueError("need 0 <= u1 < u2 < 1")
    s = summarize(path) if summary is None else summary
    if s.n_runs == 0:
        raise ValueError("path does not reach level 1")
    h = path.h
    groups = _cluster_groups(s, u1)
    key_of = lambda f, l: (-int(s.run_max[f:l + 1].max()), int(s.run_start[f]))
    keys = sorted(key_of(f, l) for f, l in groups)
    span_of = {key_of(f, l): (f, l) for f, l in groups}
    in_range = [(int(b), g) for g, b in enumerate(s.bridge_min.tolist())
                if u1 < b * h <= u2]
    events = []
    for b, g in sorted(in_range):
        # find the cluster currently containing the gap between runs g and g+1
        for key, (f, l) in list(span_of.items()):
            if f <= g < l:
                break
        else:
            raise AssertionError("bridge outside any cluster")
        del span_of[key]
        keys.remove(key)
        kl, kr = key_of(f, g), key_of(g + 1, l)
        span_of[kl], span_of[kr] = (f, g), (g + 1, l)
        high, low = (kl, kr) if kl < kr else (kr, kl)
        insort(keys, kl)
        insort(keys, kr)
        events.append((b * h, keys.index(high) + 1, keys.index(low) + 1))
    return events
