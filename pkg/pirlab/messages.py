"""
Message generation and GF(2) evaluation.

Every random choice in pirlab flows from an explicit integer seed through
numpy's ``default_rng``; nothing reads ambient entropy.
"""

import logging

import numpy as np

from pirlab.exceptions import BitRefRangeError, InvalidArgumentError
from pirlab.models import Equation, MessageStore, SchemeParams

logger = logging.getLogger(__name__)


def derive_seed(*parts: int) -> int:
    """Deterministically mix integers into a fresh 63-bit seed."""
    state = np.random.SeedSequence([int(p) for p in parts]).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


def generate_messages(params: SchemeParams, length: int, seed: int) -> MessageStore:
    """K independent messages of ``length`` uniform bits each."""
    if length < 1:
        raise InvalidArgumentError(f"message length must be at least 1, got {length}")
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(params.K, length), dtype=np.uint8)
    logger.debug(f"Generated {params.K} messages of {length} bits (seed={seed})")
    return MessageStore(bits=bits)


def evaluate_equation(eq: Equation, store: MessageStore) -> int:
    """XOR of the bits referenced by ``eq``."""
    value = 0
    for ref in eq.terms:
        if ref.message > store.K or ref.bit >= store.L:
            raise BitRefRangeError(
                f"W{ref.message}[{ref.bit}] outside store of {store.K} x {store.L} bits"
            )
        value ^= int(store.bits[ref.message - 1, ref.bit])
    return value
