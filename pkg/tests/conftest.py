import numpy as np
import pytest

from src.mpc.ahe import keygen
from src.mpc.randomness import CorrelatedRandomness
from src.network.transport import in_process_pair, run_pair


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: full experiments and large sweeps')


@pytest.fixture(scope='session')
def keypairs():
    """Two seeded 512-bit Paillier key pairs, generated once per test session."""
    return keygen(512, seed=101), keygen(512, seed=202)


@pytest.fixture
def two_party():
    """
    Run party 0 and party 1 bodies concurrently on a fresh in-process pair.

    Each body is called as ``body(endpoint, randomness)`` with a dealer seeded
    identically for both parties.
    """
    def runner(party0, party1, seed=0, recv_timeout=30.0):
        pair = in_process_pair(recv_timeout)
        rand = [CorrelatedRandomness(seed, 0), CorrelatedRandomness(seed, 1)]
        try:
            return run_pair(lambda ep: party0(ep, rand[0]), lambda ep: party1(ep, rand[1]), pair=pair)
        finally:
            for endpoint in pair:
                endpoint.close()
    return runner


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
