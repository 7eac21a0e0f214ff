"""Deterministic seeded RNG with named sub-streams.

Sub-streams are independent functions of (seed, purpose label), so e.g.
the feature noise stream never shifts when the volume synthesis order
changes.
"""
import hashlib

import numpy as np


def _purpose_key(purpose: str) -> int:
    digest = hashlib.sha256(purpose.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class RngStream:
    """64-bit seeded generator factory keyed by purpose labels."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def substream(self, purpose: str) -> np.random.Generator:
        ss = np.random.SeedSequence([self.seed, _purpose_key(purpose)])
        return np.random.default_rng(ss)
