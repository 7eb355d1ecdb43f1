"""Deterministic random-number streams for replicated Monte Carlo runs.

Every simulation draws from a counter-based Philox generator keyed by
(master seed, replicate index, stream label).  Replicates therefore get
independent streams that do not depend on scheduling, so parallel and
serial execution produce identical results.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SeedRecord:
    """Provenance of one random stream."""

    master: int
    replicate: int = 0
    label: str = ""

    def spawn_key(self) -> tuple[int, int]:
        return (self.replicate, zlib.crc32(self.label.encode()))


def substream(master: int, replicate: int = 0, label: str = "") -> np.random.Generator:
    """Return the Philox generator for (master, replicate, label)."""
    record = SeedRecord(int(master), int(replicate), label)
    seq = np.random.SeedSequence(entropy=record.master, spawn_key=record.spawn_key())
    return np.random.Generator(np.random.Philox(seq))


def stream_pair(master: int, replicate: int = 0, label: str = "") -> tuple[np.random.Generator, SeedRecord]:
    """Generator plus its provenance record."""
    record = SeedRecord(int(master), int(replicate), label)
    seq = np.random.SeedSequence(entropy=record.master, spawn_key=record.spawn_key())
    return np.random.Generator(np.random.Philox(seq)), record
