import pytest

from provchain.crypto import SeededRandomness
from provchain.ledger import Ledger, LogicalClock, NodeClass, Role
from provchain.lifecycle import Consortium


def make_consortium(*, ibf_m: int = 256, ibf_k: int = 7,
                    seed: bytes = b"conftest-seed-000") -> Consortium:
    """Deterministic consortium with a small filter for fast tests."""
    return Consortium(ledger=Ledger(clock=LogicalClock()),
                      ibf_m=ibf_m, ibf_k=ibf_k,
                      rng=SeededRandomness(seed))


@pytest.fixture
def consortium():
    return make_consortium()


@pytest.fixture
def parties(consortium):
    """(consortium, producer, provider, consumer, auditor)."""
    producer = consortium.register(Role.PRODUCER, NodeClass.LIGHT)
    provider = consortium.register(Role.PROVIDER, NodeClass.FULL)
    consumer = consortium.register(Role.CONSUMER, NodeClass.LIGHT)
    auditor = consortium.register(Role.AUDITOR, NodeClass.FULL)
    return consortium, producer, provider, consumer, auditor
