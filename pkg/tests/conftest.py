"""Shared fixtures: test-scale keys and per-test deterministic RNGs.

512-bit keys are far below production size but exercise every code path;
key generation is seeded so failures reproduce.
"""

import pytest

from pinfer import keygen
from pinfer.numutil import insecure_rng


@pytest.fixture(scope="session")
def client_keys():
    return keygen(512, insecure_rng(0xC11E57))


@pytest.fixture(scope="session")
def server_keys():
    return keygen(512, insecure_rng(0x5E4E4))


@pytest.fixture
def rng(request):
    # Distinct, reproducible stream per test.
    return insecure_rng(hash(request.node.name) & 0xFFFFFFFF)
