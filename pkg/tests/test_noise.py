import numpy as np
import pytest

from sdedilation.noise import THREE_POINT_PROBS, THREE_POINT_VALUES, presample, stream_blocks


def test_replay_from_seed():
    a = presample(50, 0.01, 2, "gaussian", 11, batch=(7,))
    b = presample(50, 0.01, 2, "gaussian", 11, batch=(7,))
    assert np.array_equal(a.xi1, b.xi1) and np.array_equal(a.xi2, b.xi2)
    c = presample(50, 0.01, 2, "gaussian", 12, batch=(7,))
    assert not np.array_equal(a.xi1, c.xi1)


def test_shapes_and_laws():
    p = presample(10, 0.1, 3, "rademacher", 0, batch=(4,))
    assert p.xi1.shape == (10, 3, 4)
    assert p.xi2 is None
    assert set(np.unique(p.xi1)) <= {-1.0, 1.0}
    q = presample(1000, 0.1, 1, "three_point", 0)
    assert set(np.unique(q.xi1)) <= set(THREE_POINT_VALUES)
    assert q.xi2 is not None


def test_unknown_law():
    with pytest.raises(ValueError):
        presample(3, 0.1, 1, "cauchy", 0)


def test_missing_second_variable():
    p = presample(3, 0.1, 1, "gaussian", 0, second=False)
    with pytest.raises(ValueError):
        p.dZ


def test_three_point_moments_by_enumeration():
    v, pr = THREE_POINT_VALUES, THREE_POINT_PROBS
    assert np.isclose(pr.sum(), 1.0)
    for k, m in ((1, 0.0), (2, 1.0), (3, 0.0), (4, 3.0), (5, 0.0)):
        assert abs(np.sum(pr * v**k) - m) < 1e-14


def test_iterated_integral_identities():
    p = presample(4, 0.25, 1, "gaussian", 3)
    assert np.allclose(p.I10 + p.dZ, p.dt * p.dW)
    assert np.allclose(p.I11, 0.5 * (p.dW**2 - p.dt))


def test_stream_blocks_equal_presample():
    full = presample(37, 0.1, 2, "rademacher", 5, second=False, batch=(3,))
    pieces = list(stream_blocks(37, 0.1, 2, "rademacher", 5, batch=(3,), block_steps=8))
    assert [n0 for n0, _ in pieces] == [0, 8, 16, 24, 32]
    joined = np.concatenate([p.xi1 for _, p in pieces])
    assert np.array_equal(joined, full.xi1)
