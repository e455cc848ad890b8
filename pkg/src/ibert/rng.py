"""Deterministic random streams.

Every random draw in the package comes from a Philox4x64-10 counter-based
generator (numpy's ``np.random.Philox``), keyed by a 128-bit value derived
from ``(root seed, domain tag, index)``:

    key word 0 = root seed   (uint64)
    key word 1 = (domain << 48) | (index & 0xFFFF_FFFF_FFFF)

Distinct keys give independent streams, so per-sample generation is both
reproducible and embarrassingly parallel: sample ``i`` of a dataset always
sees the stream ``(seed, SAMPLE, i)`` regardless of worker layout.
"""

import numpy as np

# Domain tags. Never renumber: stream identity is part of the
# reproducibility contract.
INIT = 1       # parameter initialization
SHUFFLE = 2    # per-epoch batch order
DROPOUT = 3    # per-epoch dropout masks
SAMPLE = 4     # per-sample task generation
MASK = 5       # per-sentence mask choice (text LM)
CORPUS = 6     # synthetic corpus text

_INDEX_BITS = 48
_INDEX_MASK = (1 << _INDEX_BITS) - 1
_U64 = (1 << 64) - 1


def stream(seed, domain, index=0):
    """Return the Philox generator for ``(seed, domain, index)``."""
    if index < 0:
        raise ValueError(f"stream index must be nonnegative, got {index}")
    if index > _INDEX_MASK:
        raise ValueError(f"stream index {index} exceeds {_INDEX_BITS} bits")
    key = np.array(
        [seed & _U64, ((domain << _INDEX_BITS) | index) & _U64],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))
