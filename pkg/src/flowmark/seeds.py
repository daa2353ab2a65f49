"""Deterministic seed derivation.

All randomized components take a single 64-bit master seed.  Sub-seeds
(per trial, per flow, per pattern) are derived by hashing the master
seed together with a label and counters, so adding trials or reordering
unrelated work never changes the stream an existing trial sees.
"""

from __future__ import annotations

import hashlib
import struct

SEED_BITS = 64
_SEED_MASK = (1 << SEED_BITS) - 1


def check_seed(seed: int) -> int:
    """Validate an unsigned 64-bit seed and return it unchanged."""
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise TypeError(f"seed must be an int, got {type(seed).__name__}")
    if not 0 <= seed <= _SEED_MASK:
        raise ValueError(f"seed must fit in {SEED_BITS} unsigned bits, got {seed}")
    return seed


def derive_seed(master: int, *parts: int | float | str) -> int:
    """Mix a master seed with labels/counters into a new 64-bit seed.

    The mix is a keyed blake2b digest over a canonical encoding of the
    parts; each part is tagged by type so ("a", 1) and ("a1",) differ.
    """
    check_seed(master)
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<Q", master))
    for part in parts:
        if isinstance(part, bool):
            raise TypeError("bool is not a valid seed component")
        if isinstance(part, int):
            h.update(b"i" + str(part).encode("ascii"))
        elif isinstance(part, float):
            h.update(b"f" + struct.pack("<d", part))
        elif isinstance(part, str):
            encoded = part.encode("utf-8")
            h.update(b"s" + struct.pack("<I", len(encoded)) + encoded)
        else:
            raise TypeError(f"cannot mix {type(part).__name__} into a seed")
    return int.from_bytes(h.digest(), "little")
