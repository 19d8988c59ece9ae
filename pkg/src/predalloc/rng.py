"""Seeded random streams.

Every stream is numpy's Philox-4x64 counter-based generator keyed through
``SeedSequence(seed, spawn_key=...)``. The spawn key carries the coordinates of
the consumer (repetition, error-rate index, ...), so each stream is a pure
function of ``(seed, coordinates)`` and independent of execution order.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
