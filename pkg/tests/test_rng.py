import numpy as np
import pytest

from specklesim.rng import PURPOSE_MEDIUM, PURPOSE_RETRIEVAL, stream


def test_same_key_same_stream():
    a = stream(12345, PURPOSE_MEDIUM, 3, 7).integers(0, 2**63, size=16)
    b = stream(12345, PURPOSE_MEDIUM, 3, 7).integers(0, 2**63, size=16)
    assert np.array_equal(a, b)


def test_keys_separate_streams():
    base = stream(1, PURPOSE_MEDIUM, 0, 0).integers(0, 2**63, size=8)
    for other in [
        stream(2, PURPOSE_MEDIUM, 0, 0),
        stream(1, PURPOSE_RETRIEVAL, 0, 0),
        stream(1, PURPOSE_MEDIUM, 1, 0),
        stream(1, PURPOSE_MEDIUM, 0, 1),
        stream(1, PURPOSE_MEDIUM, 0),
    ]:
        assert not np.array_equal(base, other.integers(0, 2**63, size=8))


def test_streams_independent_of_creation_order():
    # drawing from one stream must not perturb another
    a1 = stream(9, PURPOSE_MEDIUM, 1)
    a2 = stream(9, PURPOSE_MEDIUM, 2)
    x2 = a2.standard_normal(32)
    x1 = a1.standard_normal(32)
    assert np.array_equal(x1, stream(9, PURPOSE_MEDIUM, 1).standard_normal(32))
    assert np.array_equal(x2, stream(9, PURPOSE_MEDIUM, 2).standard_normal(32))


def test_rejects_bad_master_seed():
    with pytest.raises(ValueError, match="64 bits"):
        stream(-1, PURPOSE_MEDIUM)
    with pytest.raises(ValueError, match="64 bits"):
        stream(1 << 64, PURPOSE_MEDIUM)


def test_rejects_negative_counters():
    with pytest.raises(ValueError, match="non-negative"):
        stream(1, PURPOSE_MEDIUM, -4)
