"""Scheduling-independent seed derivation."""

import hashlib
import struct


def derive_seed(*parts) -> int:
    """64-bit seed from an ordered tuple of ints/strings.

    Parts are length-prefixed before hashing so ("ab", "c") and ("a", "bc")
    give different seeds.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        raw = str(part).encode("utf-8")
        h.update(struct.pack("<Q", len(raw)))
        h.update(raw)
    return int.from_bytes(h.digest(), "little")
