"""Labelled, reproducible random streams.

A stream is identified by (master seed, replication index, label); distinct
triples give statistically independent generators and the same triple always
gives the same one, whatever process asks for it.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


def label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


@dataclass(frozen=True)
class SeededStream:
    seed: int
    replication: int = 0
    label: str = ""

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.replication < 0:
            raise ValueError("replication index must be non-negative")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=int(self.seed), spawn_key=(int(self.replication), label_key(self.label))
        )
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, label: str) -> "SeededStream":
        return SeededStream(self.seed, self.replication, f"{self.label}/{label}")


def stream(seed: int, replication: int = 0, label: str = "") -> np.random.Generator:
    return SeededStream(seed, replication, label).generator()
