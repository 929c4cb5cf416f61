"""Seeded random streams.

Every stream is a Philox-4x64 counter-based generator keyed by
``SeedSequence([seed, *keys])``; e.g. ``stream(seed, ROW, i)`` for row ``i``.
Streams are independent of evaluation order and thread count, and bit-stable
across platforms.
"""

from __future__ import annotations

import numpy as np

# stream roles
ROW = 0
VALUES = 1
LAYOUT = 2
GROVER = 3
TRIAL = 4


def stream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])
    return np.random.Generator(np.random.Philox(ss))
