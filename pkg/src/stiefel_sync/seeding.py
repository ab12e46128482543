"""Deterministic random-number plumbing.

All stochastic code paths take an explicit generator or integer seed.  Derived
streams (per trial, per multistart) hash the master seed together with the
stream index through ``numpy.random.SeedSequence`` so that parallel and serial
execution see identical draws.
"""

from __future__ import annotations

import numpy as np


def as_generator(rng) -> np.random.Generator:
    """Coerce an int seed, SeedSequence, or Generator into a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return np.random.default_rng(int(rng))
    if isinstance(rng, np.random.SeedSequence):
        return np.random.default_rng(rng)
    raise TypeError(f"expected int seed or numpy Generator, got {type(rng)!r}")


def derive_seed(master_seed: int, *indices: int) -> int:
    """Stable 64-bit seed for the sub-stream (master_seed, *indices)."""
    ss = np.random.SeedSequence([int(master_seed), *(int(i) for i in indices)])
    return int(ss.generate_state(1, np.uint64)[0])


def derive_rng(master_seed: int, *indices: int) -> np.random.Generator:
    """Generator for the sub-stream (master_seed, *indices)."""
    return np.random.default_rng(derive_seed(master_seed, *indices))
