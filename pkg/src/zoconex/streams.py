"""Named random streams derived from a single master seed.

The solver consumes randomness from several logically distinct sources: the
noise draws of each oracle, the Gaussian directions of each gradient
estimate, the independent "bar" draws used by the constraint linearization,
and trial-level choices. Each source gets its own generator keyed by
``(master_seed, kind, index)`` so that any one stream can be re-created and
replayed in isolation, and so the bar draws are independent of the plain
draws by construction.
"""

from __future__ import annotations

import numpy as np

# Stable codes for the stream families; part of the determinism contract.
_KIND_CODES = {
    "xi": 0,        # oracle noise draws, one stream per function index
    "u": 1,         # Gaussian directions for gradient estimates
    "xi_bar": 2,    # independent noise draws for the linearization
    "u_bar": 3,     # independent directions for the linearization
    "trial": 4,     # trial-level randomness (e.g. random outer-step choice)
}


class StreamSet:
    """A family of independently seeded, lazily created generators.

    Generators are cached, so repeated access to the same ``(kind, index)``
    continues the same stream; a fresh :class:`StreamSet` with the same key
    replays all streams identically.
    """

    def __init__(self, master_seed, _path=()):
        self.master_seed = int(master_seed)
        self._path = tuple(int(p) for p in _path)
        self._cache: dict[tuple[int, int], np.random.Generator] = {}

    def stream(self, kind: str, index: int = 0) -> np.random.Generator:
        """Return the generator for ``kind``/``index``, creating it on first use."""
        key = (_KIND_CODES[kind], int(index))
        gen = self._cache.get(key)
        if gen is None:
            seq = np.random.SeedSequence(
                entropy=self.master_seed, spawn_key=self._path + key
            )
            gen = np.random.Generator(np.random.PCG64(seq))
            self._cache[key] = gen
        return gen

    def xi(self, i: int = 0) -> np.random.Generator:
        return self.stream("xi", i)

    def u(self, i: int = 0) -> np.random.Generator:
        return self.stream("u", i)

    def xi_bar(self, i: int = 0) -> np.random.Generator:
        return self.stream("xi_bar", i)

    def u_bar(self, i: int = 0) -> np.random.Generator:
        return self.stream("u_bar", i)

    def trial(self) -> np.random.Generator:
        return self.stream("trial", 0)

    def child(self, *salt: int) -> "StreamSet":
        """Derive a disjoint stream set (per trial, per outer step, ...)."""
        return StreamSet(self.master_seed, self._path + tuple(int(s) for s in salt))

    def __repr__(self) -> str:
        return f"StreamSet(master_seed={self.master_seed}, path={self._path})"
