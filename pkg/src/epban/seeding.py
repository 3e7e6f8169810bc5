"""Derive independent per-purpose seeds from one run seed.

``derive_seed(seed, "metric.init")`` hashes the purpose name with CRC-32 and
feeds ``(seed, crc)`` to numpy's SeedSequence, so each consumer gets its own
stream and any stage can be rerun in isolation.
"""
import zlib

import numpy as np


def derive_seed(seed, purpose):
    key = zlib.crc32(purpose.encode("utf-8"))
    return int(np.random.SeedSequence([int(seed), key]).generate_state(1)[0])


def rng_for(seed, purpose):
    return np.random.default_rng(derive_seed(seed, purpose))
