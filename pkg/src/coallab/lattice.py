"""Lattice random-walk excursions with space step h and time step h^2.

The walk is simulated stepwise inside the strip [0, M] (M = 1/h).  Every
excursion above the strip cap is replaced, exactly in law, by one draw of
its level-crossing chain: upcrossing counts above M form a critical
Galton-Watson chain with Geometric(1/2) offspring, which yields the
excursion's height, duration and per-site visit counts at O(height) cost.
This sidesteps the infinite-mean sojourn time above the cap while keeping
every observable used downstream exact.  In the stored path a completed
cap excursion appears as two consecutive entries equal to M (its two
endpoint visits); interior visits live in the per-peak records.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .rng import SeedRecord, substream

CONDITIONED = "conditioned-excursion"
REFLECTED = "reflected-forest"

_OUT_INIT = 1 << 19
_UNIFORM_CHUNK = 1 << 16
_WORD_CHUNK = 1 << 13  # 512k bits


@dataclass
class LatticeExcursion:
    """Discretized excursion/reflected path plus excised cap-excursion records."""

    h: float
    values: np.ndarray        # int32 strip path, sites 0..M
    kind: str
    peak_idx: np.ndarray      # index (into values) of each cap excursion's return visit
    peak_height: np.ndarray   # sites above M reached by each cap excursion (>= 1)
    peak_steps: np.ndarray    # elementary steps spent inside each cap excursion
    above_visits: np.ndarray  # aggregate visit counts at sites M+1, M+2, ...
    seed: SeedRecord | None = None

    @property
    def M(self) -> int:
        return int(round(1.0 / self.h))

    @property
    def n_peaks(self) -> int:
        return int(self.peak_idx.size)

    @property
    def max_site(self) -> int:
        top = int(self.values.max())
        if self.n_peaks:
            top = max(top, self.M + int(self.peak_height.max()))
        return top

    @property
    def duration_steps(self) -> int:
        """Number of elementary steps of the full (un-excised) path."""
        flat = self.n_peaks  # each peak contributes one flat marker transition
        return int(self.values.size - 1 - flat + self.peak_steps.sum())

    @property
    def duration(self) -> float:
        return self.duration_steps * self.h * self.h

    def visit_counts(self) -> np.ndarray:
        """Timepoint counts per site over 0..max_site, cap excursions included."""
        counts = np.bincount(self.values, minlength=self.max_site + 1).astype(np.int64)
        if self.n_peaks:
            counts[self.M + 1: self.M + 1 + self.above_visits.size] += self.above_visits
        return counts

    def validate(self) -> None:
        v = self.values
        if v[0] != 0:
            raise ValueError("path must start at 0")
        if self.kind == CONDITIONED:
            if v[-1] != 0 or np.any(v[1:-1] <= 0):
                raise ValueError("conditioned excursion must stay positive between its endpoints")
            if v.max() < self.M:
                raise ValueError("conditioned excursion must reach the cap")
        elif self.kind == REFLECTED:
            if v[-1] != 0 or np.any(v < 0):
                raise ValueError("reflected path must be nonnegative and end at 0")
        else:
            raise ValueError(f"unknown kind {self.kind!r}")
        steps = np.diff(v)
        bad = np.abs(steps) > 1
        if np.any(bad):
            raise ValueError("lattice steps must be -1, 0 or +1")
        flats = np.nonzero(steps == 0)[0] + 1
        if not np.array_equal(flats, np.sort(self.peak_idx)):
            raise ValueError("flat markers must match peak records")
        if np.any(v[self.peak_idx] != self.M):
            raise ValueError("peak markers must sit at the cap")


def _validate_h(h: float) -> int:
    M = round(1.0 / h)
    if M < 2 or abs(M * h - 1.0) > 1e-9:
        raise ValueError(f"h={h} is not 1/M for an integer M >= 2")
    return int(M)


def _grow(buf: np.ndarray, widx: int) -> np.ndarray:
    out = np.empty(buf.size * 2, np.int32)
    out[:widx] = buf[:widx]
    return out


def _run_climb(M, rng, out, widx, pos):
    u = rng.random(_UNIFORM_CHUNK)
    uidx = 0
    while True:
        pos, widx, uidx, st = _kernels.climb_steps(M, u, out, pos, widx, uidx)
        if st == _kernels.DONE:
            return out, widx, pos
        if st == _kernels.RAND_EMPTY:
            u = rng.random(_UNIFORM_CHUNK)
            uidx = 0
        else:
            out = _grow(out, widx)


def _draw_words(rng, n):
    return rng.integers(0, np.iinfo(np.uint64).max, size=n, dtype=np.uint64, endpoint=True)


def _run_strip(M, rng, out, widx, pos, zeros_left):
    words = _draw_words(rng, _WORD_CHUNK)
    bidx = 0
    while True:
        pos, widx, bidx, zeros_left, st = _kernels.strip_steps(
            M, words, out, pos, widx, bidx, zeros_left)
        if st == _kernels.DONE:
            return out, widx
        if st == _kernels.RAND_EMPTY:
            words = _draw_words(rng, _WORD_CHUNK)
            bidx = 0
        else:
            out = _grow(out, widx)


def _draw_peak_chains(values: np.ndarray, M: int, rng):
    """Sample the excised cap excursions given their marker slots.

    Level-synchronous across peaks: upcrossing counts evolve as
    U_{l+1} ~ NegativeBinomial(U_l, 1/2) from U_0 = 1, stopped at
    extinction.  Visits at site M+l are U_{l-1} + U_l; total steps 2*sum U;
    height = number of levels with U > 0.
    """
    vm = values == M
    peak_idx = (np.nonzero(vm[:-1] & vm[1:])[0] + 1).astype(np.int64)
    P = peak_idx.size
    if P == 0:
        z = np.zeros(0, np.int64)
        return peak_idx, z, z, z
    U = np.ones(P, np.int64)
    sum_u = np.ones(P, np.int64)
    height = np.ones(P, np.int64)
    above: list[int] = []
    while True:
        alive = U > 0
        if not alive.any():
            break
        nxt = np.zeros(P, np.int64)
        nxt[alive] = rng.negative_binomial(U[alive], 0.5)
        above.append(int(U.sum() + nxt.sum()))
        sum_u += nxt
        height += nxt > 0
        U = nxt
    return peak_idx, height, 2 * sum_u, np.asarray(above, np.int64)


def sample_conditioned_excursion(h: float, rng=None, seed: SeedRecord | None = None) -> LatticeExcursion:
    """Lattice excursion conditioned to reach level 1 (site M = 1/h).

    Stage 1 walks 0 -> M under the Doob transform of the simple walk with
    harmonic function x (up-probability (k+1)/(2k) from site k); stage 2
    continues as an unconditioned simple walk absorbed at 0, with cap
    excursions excised as peak records.
    """
    M = _validate_h(h)
    if rng is None:
        rng = np.random.default_rng()
    out = np.empty(_OUT_INIT, np.int32)
    out[0] = 0
    out, widx, pos = _run_climb(M, rng, out, 1, 0)
    out, widx = _run_strip(M, rng, out, widx, pos, 1)
    values = out[:widx].copy()
    peak_idx, height, steps, above = _draw_peak_chains(values, M, rng)
    return LatticeExcursion(h, values, CONDITIONED, peak_idx, height, steps, above, seed)


def sample_reflected_forest(h: float, rng=None, seed: SeedRecord | None = None) -> LatticeExcursion:
    """Reflected walk stopped once ceil(1/(2h)) excursions from 0 complete.

    Each excursion from 0 carries 2h of boundary local time, so the stopped
    path accumulates local time exactly 1 at level 0.  Excursions above the
    cap at site M = 1/h are excised exactly as in the conditioned sampler.
    """
    M = _validate_h(h)
    if rng is None:
        rng = np.random.default_rng()
    n_exc = math.ceil(1.0 / (2.0 * h))
    out = np.empty(_OUT_INIT, np.int32)
    out[0] = 0
    out[1] = 1  # forced first step of the first excursion
    out, widx = _run_strip(M, rng, out, 2, 1, n_exc)
    values = out[:widx].copy()
    peak_idx, height, steps, above = _draw_peak_chains(values, M, rng)
    return LatticeExcursion(h, values, REFLECTED, peak_idx, height, steps, above, seed)


def sample_path_seeded(h: float, kind: str, *, master: int, replicate: int = 0) -> LatticeExcursion:
    label = "excursion" if kind == CONDITIONED else "reflected"
    rng = substream(master, replicate, label)
    record = SeedRecord(master, replicate, label)
    if kind == CONDITIONED:
        return sample_conditioned_excursion(h, rng, record)
    if kind == REFLECTED:
        return sample_reflected_forest(h, rng, record)
    raise ValueError(f"unknown kind {kind!r}")


def from_raw_path(raw: np.ndarray, h: float, kind: str = CONDITIONED) -> LatticeExcursion:
    """Build a LatticeExcursion from an explicit full +/-1 lattice path.

    Segments above the cap are converted into peak records so fixtures
    built by hand go through the same downstream machinery as samples.
    """
    M = _validate_h(h)
    raw = np.asarray(raw, dtype=np.int32)
    if np.any(np.abs(np.diff(raw)) != 1):
        raise ValueError("raw path must move by +/-1 each step")
    above = raw > M
    keep = ~above
    values = raw[keep].copy()
    idx_map = np.cumsum(keep) - 1  # raw index -> strip index
    d = np.diff(above.astype(np.int8))
    starts = np.nonzero(d == 1)[0] + 1
    ends = np.nonzero(d == -1)[0] + 1
    if above[0] or above[-1] or starts.size != ends.size:
        raise ValueError("path may not start or end above the cap")
    peak_idx = idx_map[ends].astype(np.int64)
    heights = np.array([int(raw[s:e].max()) - M for s, e in zip(starts, ends)], np.int64)
    steps = (ends - starts + 1).astype(np.int64)
    max_h = int(heights.max()) if heights.size else 0
    above_counts = np.zeros(max_h, np.int64)
    if heights.size:
        hist = np.bincount(raw[above], minlength=M + 1 + max_h)
        above_counts = hist[M + 1:].astype(np.int64)
    path = LatticeExcursion(h, values, kind, peak_idx, heights, steps, above_counts)
    path.validate()
    return path


# --- binary dump format ------------------------------------------------------

def _zigzag(d: np.ndarray) -> np.ndarray:
    d = d.astype(np.int64)
    return ((d << 1) ^ (d >> 63)).astype(np.uint64)


def _varint_encode(zz: np.ndarray) -> bytes:
    if not zz.size or int(zz.max()) < 0x80:
        return zz.astype(np.uint8).tobytes()  # all single-byte (the usual case)
    out = bytearray()
    for v in zz.tolist():
        while True:
            b = v & 0x7F
            v >>= 7
            if v:
                out.append(b | 0x80)
            else:
                out.append(b)
                break
    return bytes(out)


def dump_path(path: LatticeExcursion, fname: str) -> None:
    """Write header (h float64 LE, entry count uint64 LE) + zig-zag varint deltas.

    Deltas are taken between consecutive stored entries, the first one
    relative to 0; cap-excursion markers appear as zero deltas.
    """
    deltas = np.diff(path.values.astype(np.int64), prepend=np.int64(0))
    with open(fname, "wb") as f:
        f.write(struct.pack("<d", path.h))
        f.write(struct.pack("<Q", path.values.size))
        f.write(_varint_encode(_zigzag(deltas)))


def load_path_values(fname: str) -> tuple[float, np.ndarray]:
    """Read a dumped path back as (h, values)."""
    with open(fname, "rb") as f:
        h = struct.unpack("<d", f.read(8))[0]
        count = struct.unpack("<Q", f.read(8))[0]
        payload = np.frombuffer(f.read(), dtype=np.uint8)
    if payload.size >= count and not (payload[:count] & 0x80).any() and payload.size == count:
        zz = payload.astype(np.uint64)
    else:
        zz = np.empty(count, np.uint64)
        acc = 0
        shift = 0
        k = 0
        for b in payload.tolist():
            acc |= (b & 0x7F) << shift
            if b & 0x80:
                shift += 7
            else:
                zz[k] = acc
                k += 1
                acc = 0
                shift = 0
        if k != count:
            raise ValueError("corrupt varint stream")
    signed = (zz >> np.uint64(1)).astype(np.int64) ^ -(zz & np.uint64(1)).astype(np.int64)
    return h, np.cumsum(signed).astype(np.int32)
