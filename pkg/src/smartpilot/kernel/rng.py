"""Counter-based parameter initialization.

Every weight tensor is drawn from its own Philox stream keyed by
(model seed, layer index), so initialization is bit-reproducible and
independent of how many layers precede it or how the arrays are filled.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def layer_rng(seed: int, layer_index: int) -> np.random.Generator:
    """Philox generator for one layer's parameters."""
    return np.random.Generator(np.random.Philox(key=[seed & _MASK64, layer_index & _MASK64]))


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)
