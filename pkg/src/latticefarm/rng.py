"""Counter-based random numbers (Philox4x32-10).

A draw is a pure function of ``(seed; site, mu, sweep, block)``: the seed is
the 64-bit Philox key, the other four fields the 128-bit counter. Each block
yields two doubles in (0, 1). Since nothing depends on call order, every rank
layout sees the same numbers for the same link.
"""

from dataclasses import dataclass, replace

from .kernels import active as _k

# sweep counter word reserved for hot-start initialisation
HOT_START_SWEEP = 0xFFFFFFFF


@dataclass(frozen=True)
class RngKey:
    seed: int
    site: int = 0
    mu: int = 0
    sweep: int = 0
    draw: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        for name in ("site", "mu", "sweep", "draw"):
            if not 0 <= getattr(self, name) < 2**32:
                raise ValueError(f"{name} must fit in 32 bits")

    @property
    def words(self):
        """Philox key words (low, high)."""
        return seed_words(self.seed)

    def advance(self, blocks):
        return replace(self, draw=self.draw + blocks)


def seed_words(seed):
    return seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF


def philox(counter, key):
    """Raw Philox4x32-10 block for a 4-word counter and 2-word key."""
    out = _k.philox4x32(*counter, *key)
    return tuple(int(x) for x in out)


def uniforms(key: RngKey, n):
    """First ``n`` uniforms of the stream starting at ``key``."""
    k0, k1 = key.words
    out = []
    block = key.draw
    while len(out) < n:
        out.extend(float(u) for u in _k.uniform_pair(key.site, key.mu, key.sweep, block, k0, k1))
        block += 1
    return out[:n]
