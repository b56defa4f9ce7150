import numpy as np

from canyonguard.numcore import Rng


def test_same_seed_same_sequence():
    a = Rng.from_seed(1234)
    b = Rng.from_seed(1234)
    va, a = a.uniform(100)
    vb, b = b.uniform(100)
    np.testing.assert_array_equal(va, vb)


def test_scalar_and_vector_paths_agree():
    rng = Rng.from_seed(42)
    vec, _ = rng.uniform(5)
    scalars = []
    r = Rng.from_seed(42)
    for _ in range(5):
        v, r = r.uniform()
        scalars.append(v)
    np.testing.assert_array_equal(vec, np.array(scalars))


def test_uniform_range_and_mean():
    rng = Rng.from_seed(7)
    u, _ = rng.uniform(20000)
    assert np.all(u >= 0.0) and np.all(u < 1.0)
    assert abs(u.mean() - 0.5) < 0.01


def test_normal_moments():
    rng = Rng.from_seed(99)
    z, _ = rng.normal(100_000)
    assert abs(z.mean()) < 0.02
    assert abs(z.std() - 1.0) < 0.02


def test_normal_is_box_muller_of_uniform_pairs():
    rng = Rng.from_seed(5)
    z, _ = rng.normal(2)
    raw, _ = rng._raw(2)
    u1 = ((int(raw[0]) >> 11) + 1) * 2.0**-53
    u2 = (int(raw[1]) >> 11) * 2.0**-53
    want0 = np.sqrt(-2 * np.log(u1)) * np.cos(2 * np.pi * u2)
    want1 = np.sqrt(-2 * np.log(u1)) * np.sin(2 * np.pi * u2)
    assert z[0] == want0 and z[1] == want1


def test_odd_normal_burns_the_pair():
    rng = Rng.from_seed(11)
    _, after_one = rng.normal(1)
    _, after_two = rng.normal(2)
    assert after_one.state == after_two.state


def test_fork_streams_differ():
    rng = Rng.from_seed(3)
    a, _ = rng.fork(0).uniform(8)
    b, _ = rng.fork(1).uniform(8)
    assert not np.array_equal(a, b)


def test_shuffle_is_permutation():
    rng = Rng.from_seed(21)
    idx, _ = rng.shuffled_indices(17)
    assert sorted(idx.tolist()) == list(range(17))


def test_immutability():
    rng = Rng.from_seed(1)
    state_before = rng.state
    rng.uniform(10)
    assert rng.state == state_before
