import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fibrelax.dofmap import build_dofmap


def test_all_fixed_is_identity():
    dm = build_dofmap(2, {0, 1})
    assert dm.n_free == 0
    assert np.array_equal(dm.perm, np.arange(6))


def test_already_partitioned_is_identity():
    dm = build_dofmap(3, {2})
    assert dm.n_free == 6
    assert np.array_equal(dm.perm, np.arange(9))


def test_leading_fixed_node_rotates():
    # hand-checked stable partition: node 0 fixed, DOFs 0..2 move to the tail
    dm = build_dofmap(3, {0})
    assert dm.n_free == 6
    assert list(dm.perm[:3]) == [6, 7, 8]
    assert list(dm.perm[3:]) == [0, 1, 2, 3, 4, 5]


def test_permute_identity_map():
    dm = build_dofmap(1, set())
    assert list(dm.permute([1, 2, 3])) == [1, 2, 3]


def test_permute_follows_perm():
    dm = build_dofmap(3, {0})
    v = np.arange(9.0)
    out = dm.permute(v)
    assert out[0] == 3.0  # first free DOF is old DOF 3
    # definition: out[perm[d]] = v[d]
    for d in range(9):
        assert out[dm.perm[d]] == v[d]


def test_out_of_range_boundary():
    with pytest.raises(ValueError):
        build_dofmap(2, {2})


def test_length_mismatch():
    dm = build_dofmap(2, {0})
    with pytest.raises(ValueError):
        dm.permute([1.0, 2.0])
    with pytest.raises(ValueError):
        dm.unpermute([1.0, 2.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.data())
def test_partition_and_round_trip(n_nodes, data):
    boundary = data.draw(st.sets(st.integers(0, n_nodes - 1)))
    dm = build_dofmap(n_nodes, boundary)
    assert dm.n_free == 3 * (n_nodes - len(boundary))
    assert dm.n_total == 3 * n_nodes

    fixed = np.zeros(dm.n_total, dtype=bool)
    for b in boundary:
        fixed[3 * b: 3 * b + 3] = True
    # sorting fixedness by perm yields all-free prefix then all-fixed suffix
    sorted_flags = np.empty_like(fixed)
    sorted_flags[dm.perm] = fixed
    assert not sorted_flags[: dm.n_free].any()
    assert sorted_flags[dm.n_free:].all()

    # stable: relative order preserved within each class
    old_free = [d for d in range(dm.n_total) if not fixed[d]]
    assert [dm.perm[d] for d in old_free] == sorted(dm.perm[d] for d in old_free)
    old_fixed = [d for d in range(dm.n_total) if fixed[d]]
    assert [dm.perm[d] for d in old_fixed] == sorted(dm.perm[d] for d in old_fixed)

    v = np.random.default_rng(0).normal(size=dm.n_total)
    assert np.array_equal(dm.unpermute(dm.permute(v)), v)
    assert np.array_equal(dm.permute(dm.unpermute(v)), v)
