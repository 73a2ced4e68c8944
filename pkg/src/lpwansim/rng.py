"""Named, counter-based random streams derived from one scenario seed.

Each stream is a Philox generator whose key is a hash of
``(seed, component, entity)``. Draws on one stream never shift another
stream, so adding a node or a drone leaves every existing entity's
random sequence untouched.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _stream_key(seed: int, component: str, entity) -> int:
    digest = hashlib.blake2b(
        f"{seed}/{component}/{entity}".encode(), digest_size=16
    ).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """One deterministic stream; ``draws`` counts values consumed so far."""

    __slots__ = ("key", "draws", "_gen")

    def __init__(self, seed: int, component: str, entity) -> None:
        self.key = (component, entity)
        self.draws = 0
        self._gen = np.random.Generator(np.random.Philox(key=_stream_key(seed, component, entity)))

    def random(self) -> float:
        self.draws += 1
        return float(self._gen.random())

    def normal(self, mean: float = 0.0, sd: float = 1.0) -> float:
        self.draws += 1
        return float(self._gen.normal(mean, sd))

    def exponential(self, mean: float) -> float:
        self.draws += 1
        return float(self._gen.exponential(mean))

    def poisson(self, lam: float) -> int:
        self.draws += 1
        return int(self._gen.poisson(lam))


class RngStreams:
    """Registry of streams keyed by ``(component, entity)``."""

    def __init__(self, seed: int) -> None:
        self.seed = seed
        self._streams: dict[tuple[str, object], RngStream] = {}

    def stream(self, component: str, entity=0) -> RngStream:
        key = (component, entity)
        s = self._streams.get(key)
        if s is None:
            s = self._streams[key] = RngStream(self.seed, component, entity)
        return s
