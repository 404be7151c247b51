"""Deterministic random streams.

Every stochastic component draws from its own stream, identified by a master
seed plus a structured path, e.g. ``spawn(seed, "site", 3)``. Streams are
backed by the Philox counter-based bit generator, so sibling streams are
statistically independent and results never depend on evaluation order or on
how work is split across processes.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _encode(part: int | str | bytes) -> bytes:
    """Injective byte encoding of one path component (tag + length + body)."""
    if isinstance(part, (bool, np.bool_)):
        raise TypeError("booleans are ambiguous in stream paths; use 0/1")
    if isinstance(part, (int, np.integer)):
        tag, body = b"i", (int(part) & _MASK64).to_bytes(8, "little")
    elif isinstance(part, str):
        tag, body = b"s", part.encode("utf-8")
    elif isinstance(part, (bytes, bytearray)):
        tag, body = b"b", bytes(part)
    else:
        raise TypeError(f"unsupported stream path component: {type(part).__name__}")
    return tag + len(body).to_bytes(4, "little") + body


def derive(seed: int, *path: int | str | bytes) -> int:
    """64-bit child seed for the stream identified by ``(seed, *path)``."""
    h = hashlib.blake2b(digest_size=8)
    h.update((int(seed) & _MASK64).to_bytes(8, "little"))
    for part in path:
        h.update(_encode(part))
    return int.from_bytes(h.digest(), "little")


def spawn(seed: int, *path: int | str | bytes) -> np.random.Generator:
    """Generator over the Philox stream ``(seed, *path)``."""
    return np.random.Generator(np.random.Philox(derive(seed, *path)))


def key64(seed: int, *path: int | str | bytes) -> np.uint64:
    """Child seed as an unsigned 64-bit word, for compiled kernels."""
    return np.uint64(derive(seed, *path))
