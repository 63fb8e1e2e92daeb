"""Deterministic seed derivation for repeated and parallel runs.

``derive_seed`` hashes the master seed together with any context parts
(cell indices, repetition numbers, trial labels) through SHA-256 and keeps
63 bits.  The mix is stable across processes, platforms and library
versions, so sweeps are resumable row by row and results never depend on
scheduling order.
"""

import hashlib

__all__ = ["derive_seed"]


def derive_seed(master: int, *parts) -> int:
    """Mix a master seed with context parts into a 63-bit seed."""
    text = "|".join(str(p) for p in (int(master), *parts))
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & ((1 << 63) - 1)
