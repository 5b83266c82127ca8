"""Per-replication random streams for simulation and tuning.

Replication r of a run seeded with ``seed`` owns the generator
``default_rng((seed, r))``; its first uniform draws the true hypothesis and
every later draw is an observation.  Two runs with the same seed therefore
see identical truths and identical observation prefixes regardless of how
many observations each policy consumes (common random numbers).
"""

from __future__ import annotations

import numpy as np

from . import expfam

CHUNK_SCHEDULE = (32, 64, 128, 256, 512)


def chunk_size(round_index: int) -> int:
    return CHUNK_SCHEDULE[min(round_index, len(CHUNK_SCHEDULE) - 1)]


class ReplicationStreams:
    """Truths plus lazily drawn observation chunks for `reps` replications."""

    def __init__(self, spec, naturals, prior, reps: int, seed: int):
        self.spec = spec
        self.naturals = list(naturals)
        self.reps = int(reps)
        self.seed = int(seed)
        self._gens = [np.random.default_rng((seed, r)) for r in range(reps)]
        cum = np.cumsum(np.asarray(prior, dtype=float))
        u = np.array([g.random() for g in self._gens])
        self.truths = np.searchsorted(cum, u).astype(np.int64)
        self.truths = np.minimum(self.truths, len(cum) - 1)

    def observations(self, rep_indices: np.ndarray, count: int) -> np.ndarray:
        """Next ``count`` observations for each listed replication, stacked (n, count)."""
        out = np.empty((len(rep_indices), count))
        for row, r in enumerate(rep_indices):
            out[row] = expfam.sample(self.spec, self.naturals[self.truths[r]],
                                     self._gens[r], count)
        return out

    def observe_mode(self, rep_index: int, naturals_by_mode, mode: int) -> float:
        """One observation for one replication under the given sampling mode."""
        th = naturals_by_mode[mode][self.truths[rep_index]]
        return float(expfam.sample(self.spec, th, self._gens[rep_index], 1)[0])
