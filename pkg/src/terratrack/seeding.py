"""Counter-based seed derivation.

One master seed fans out to named streams (net init, per-episode sampling,
update shuffling, per-worker collection) through SeedSequence spawn keys, so
adding workers or reordering phases never perturbs another stream.
"""

from __future__ import annotations

import zlib

import numpy as np

def _stream_key(stream: str) -> int:
    return zlib.crc32(stream.encode("utf-8"))


def child_seed_sequence(master: int, stream: str, index: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master),
                                  spawn_key=(_stream_key(stream), int(index)))


def child_rng(master: int, stream: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(child_seed_sequence(master, stream, index))


def child_seed(master: int, stream: str, index: int = 0) -> int:
    return int(child_seed_sequence(master, stream, index).generate_state(1)[0])
