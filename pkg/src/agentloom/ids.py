"""Identifier generation.

Identifiers are unique within a run and lexicographically sortable in creation
order: a zero-padded counter followed by a token drawn from the run's seeded
generator.  Seeding the generator makes every identifier reproducible for a
given (seed, counter) pair, which the deterministic-replay machinery relies on.
"""

from __future__ import annotations

import hashlib
import random

from .canonical import canonical_json, utcnow


class IdSource:
    """Produces sortable unique ids; deterministic for a given seed."""

    def __init__(self, seed: int | None = None) -> None:
        self._counter = 0
        self._rng = random.Random(seed) if seed is not None else random.SystemRandom()

    def next(self, prefix: str) -> str:
        self._counter += 1
        token = f"{self._rng.getrandbits(32):08x}"
        return f"{prefix}-{self._counter:06d}-{token}"


def run_identifier(seed: int | None, spec_digest: str, params: dict) -> str:
    """Run id.

    With a seed the id is a pure function of (seed, spec, params) so repeated
    seeded invocations agree byte-for-byte; without one it embeds a UTC stamp
    plus random token and still sorts by start time.
    """
    if seed is not None:
        material = canonical_json([seed, spec_digest, params])
        token = hashlib.sha256(material.encode("utf-8")).hexdigest()[:12]
        return f"run-{token}"
    stamp = utcnow().strftime("%Y%m%d%H%M%S")
    token = f"{random.SystemRandom().getrandbits(24):06x}"
    return f"run-{stamp}-{token}"
