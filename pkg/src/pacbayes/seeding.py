"""Deterministic derivation of random sub-streams.

Every stochastic routine in the package receives an integer master seed (or a
``numpy.random.SeedSequence``) and derives child streams from it by path, so
that reruns are bit-identical and independent roles never share a stream.
Generators are Philox (counter based), which produces identical streams across
platforms.
"""

from __future__ import annotations

import numpy as np

# Role codes used as the last path element when deriving sub-streams.
ROLE_DRAW = 0
ROLE_WEIGHTS = 1
ROLE_REPORT = 2
ROLE_SHUFFLE = 3
ROLE_TASK = 4
ROLE_EVAL = 5


def child_seed(seed, *path):
    """Return a SeedSequence for ``seed`` extended by integer path elements.

    ``seed`` may be an int or an existing SeedSequence; in the latter case the
    path is appended via spawn-stable hashing of its entropy.
    """
    if isinstance(seed, np.random.SeedSequence):
        base = list(np.atleast_1d(seed.entropy)) + list(seed.spawn_key)
    else:
        base = [int(seed)]
    return np.random.SeedSequence(tuple(base) + tuple(int(p) for p in path))


def child_int(seed, *path):
    """Derive a 64-bit integer seed, for APIs that want a plain int."""
    state = child_seed(seed, *path).generate_state(2)
    return int(state[0]) << 32 | int(state[1])


def make_rng(seed, *path):
    """Philox generator for the sub-stream addressed by ``path``."""
    return np.random.Generator(np.random.Philox(child_seed(seed, *path)))
