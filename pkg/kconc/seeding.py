"""Root-seed splitting.

Every sub-run (a teacher, a bench arm, a class of the synthetic generator) gets
``derive_seed(root, *keys)``: the first 32-bit word of
``numpy.random.SeedSequence([root, *keys])`` where string keys are replaced by
their CRC-32. A sub-run's seed depends only on its own keys, never on the order
in which sub-runs execute.
"""
import zlib
from typing import Union

import numpy as np

Key = Union[int, str]


def _key_word(key: Key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    if key < 0:
        raise ValueError(f"seed keys must be non-negative, got {key}")
    return int(key)


def derive_seed(root: int, *keys: Key) -> int:
    entropy = [_key_word(root)] + [_key_word(k) for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def derive_rng(root: int, *keys: Key) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *keys))
