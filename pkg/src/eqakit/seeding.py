"""Stable seed derivation: one config seed fans out to per-scene and
per-task RNG streams that never depend on process state or hash salting."""

from __future__ import annotations

import hashlib
import random


def derive_seed(*parts: str | int) -> int:
    """Deterministic 64-bit seed from any mix of strings and ints."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big")


def derive_rng(*parts: str | int) -> random.Random:
    return random.Random(derive_seed(*parts))
