"""Deterministic child-stream derivation from one root seed."""

from __future__ import annotations

import hashlib
import random


def child_seed(root_seed: int, *parts) -> int:
    """Map (root_seed, path parts) to a stable 64-bit child seed."""
    key = ":".join([str(root_seed)] + [str(p) for p in parts])
    digest = hashlib.sha256(key.encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big", signed=False)


def child_rng(root_seed: int, *parts) -> random.Random:
    """Independent RNG stream for a named subsystem / work item.

    Streams derived with distinct paths never share state, so work items
    may be evaluated in any order (or concurrently) without perturbing
    the campaign's results.
    """
    return random.Random(child_seed(root_seed, *parts))
