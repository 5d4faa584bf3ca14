"""
Shared fixtures for the pirlab test suite.
"""

from pathlib import Path

import numpy as np
import pytest

from pirlab.config import settings
from pirlab.messages import generate_messages
from pirlab.models import MessageStore, SchemeParams

GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture
def params22() -> SchemeParams:
    return SchemeParams(K=2, N=2)


@pytest.fixture
def store22(params22) -> MessageStore:
    """Two 4-bit messages, enough for one K=2, N=2 capacity run."""
    return generate_messages(params22, 4, seed=11)


@pytest.fixture
def fixed_store() -> MessageStore:
    """W1 = 1000..., W2 = 1100..., W3 = alternating; 16 bits each."""
    bits = np.zeros((3, 16), dtype=np.uint8)
    bits[0, 0] = 1
    bits[1, :2] = 1
    bits[2, ::2] = 1
    return MessageStore(bits=bits)


@pytest.fixture
def golden_table():
    def load(K: int, N: int) -> str:
        return (GOLDEN_DIR / f"plan_K{K}_N{N}.txt").read_text()

    return load


@pytest.fixture
def restore_settings():
    """Snapshot the global settings and restore them after the test."""
    snapshot = settings.model_dump()
    yield settings
    for key, value in snapshot.items():
        setattr(settings, key, value)
