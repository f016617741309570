"""Shared fixtures; expensive per-value randomness is cached across modules."""

import pytest

from nebula import oprf
from nebula.harness import value_randomness

SHARED_KP_SEED = b"\x21" * 32


@pytest.fixture(scope="session")
def shared_kp():
    return oprf.keygen(SHARED_KP_SEED)


@pytest.fixture(scope="session")
def randomness_for(shared_kp):
    """Cached oblivious-randomness lookup under the shared server key."""

    def fn(value: bytes) -> bytes:
        return value_randomness(value, shared_kp)

    return fn
