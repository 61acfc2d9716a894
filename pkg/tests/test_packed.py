import numpy as np
import pytest

from fibrelax.packed import DivergentSpacesError, PackedStorage, pack


class TestPack:
    def test_basic_layout(self):
        ps = pack([[1, 2], [3, 4, 5]])
        assert list(ps.offsets) == [0, 2, 5]
        assert list(ps.values_a) == [1, 2, 3, 4, 5]
        assert list(ps.values_b) == [1, 2, 3, 4, 5]
        assert not ps.modified_a and not ps.modified_b

    def test_empty_row(self):
        ps = pack([[], [7]])
        assert list(ps.offsets) == [0, 0, 1]
        assert list(ps.values_a) == [7]
        assert len(ps.subview(0)) == 0

    def test_many_uniform_rows(self):
        ps = pack([[0.0] * 3] * 100)
        assert ps.offsets[100] == 300
        assert ps.n_problems == 100

    def test_no_rows(self):
        ps = pack([])
        assert ps.n_problems == 0
        assert len(ps.values_a) == 0


class TestSubview:
    def test_read(self):
        ps = pack([[1, 2], [3, 4, 5]])
        assert list(ps.subview(1, "a")) == [3, 4, 5]

    def test_write_is_space_isolated(self):
        ps = pack([[1, 2], [3, 4, 5]])
        ps.subview(0, "a")[0] = 9
        assert list(ps.values_a) == [9, 2, 3, 4, 5]
        assert list(ps.values_b) == [1, 2, 3, 4, 5]

    def test_index_out_of_range(self):
        ps = pack([[1], [2]])
        with pytest.raises(IndexError):
            ps.subview(2)
        with pytest.raises(IndexError):
            ps.subview(-1)

    def test_bad_space_name(self):
        ps = pack([[1]])
        with pytest.raises(ValueError):
            ps.subview(0, "c")

    def test_fencepost_with_canaries(self):
        ps = pack([[0.0] * 4, [0.0] * 3, [0.0] * 5])
        ps.values_a[:] = -1.0
        ps.subview(1, "a")[:] = 7.0
        lo, hi = ps.offsets[1], ps.offsets[2]
        assert np.all(ps.values_a[lo:hi] == 7.0)
        assert np.all(ps.values_a[:lo] == -1.0)
        assert np.all(ps.values_a[hi:] == -1.0)


class TestSpaces:
    def test_mark_and_sync_copies(self):
        ps = pack([[1, 2], [3, 4, 5]])
        ps.subview(0, "a")[:] = [8, 9]
        ps.mark_modified("a")
        ps.sync("b")
        assert np.array_equal(ps.values_b, ps.values_a)
        assert not ps.modified_a and not ps.modified_b

    def test_sync_without_flags_is_noop(self):
        ps = pack([[1, 2]])
        ps.subview(0, "a")[0] = 5  # modified but never marked
        ps.sync("b")
        assert list(ps.values_b) == [1, 2]

    def test_sync_toward_modified_space_keeps_flag(self):
        ps = pack([[1, 2]])
        ps.subview(0, "a")[0] = 5
        ps.mark_modified("a")
        ps.sync("a")  # target already current: no copy, flag retained
        assert ps.modified_a
        assert list(ps.values_b) == [1, 2]
        ps.sync("b")
        assert list(ps.values_b) == [5, 2]
        assert not ps.modified_a

    def test_sync_idempotent(self):
        ps = pack([[1.0, 2.0]])
        ps.subview(0, "b")[:] = [6, 7]
        ps.mark_modified("b")
        ps.sync("a")
        snapshot = (ps.values_a.copy(), ps.values_b.copy())
        ps.sync("a")
        assert np.array_equal(ps.values_a, snapshot[0])
        assert np.array_equal(ps.values_b, snapshot[1])

    def test_divergent_marks_rejected(self):
        ps = pack([[1]])
        ps.mark_modified("a")
        with pytest.raises(DivergentSpacesError):
            ps.mark_modified("b")

    def test_remark_same_space_ok(self):
        ps = pack([[1]])
        ps.mark_modified("a")
        ps.mark_modified("a")
        assert ps.modified_a


def run_random_program(seed: int) -> None:
    """One randomized pack/subview/mark/sync sequence with invariant checks."""
    rng = np.random.default_rng(seed)
    rows = [rng.normal(size=rng.integers(0, 8)) for _ in range(rng.integers(0, 6))]
    ps = pack(rows)
    flat = np.concatenate([np.asarray(r, dtype=float) for r in rows]) if rows else np.zeros(0)
    assert np.array_equal(ps.values_a, flat)

    mirrors = {"a": ps.values_a, "b": ps.values_b}
    model = {"a": flat.copy(), "b": flat.copy()}
    modified: str | None = None

    for _ in range(rng.integers(1, 12)):
        op = rng.choice(["write", "mark", "sync", "read"])
        if op == "write" and ps.n_problems:
            i = int(rng.integers(0, ps.n_problems))
            space = modified if modified else str(rng.choice(["a", "b"]))
            view = ps.subview(i, space)
            vals = rng.normal(size=len(view))
            view[:] = vals
            model[space][ps.offsets[i]: ps.offsets[i + 1]] = vals
            if modified is None:
                ps.mark_modified(space)
                modified = space
        elif op == "mark":
            space = modified if modified else str(rng.choice(["a", "b"]))
            ps.mark_modified(space)
            modified = space
        elif op == "sync":
            target = str(rng.choice(["a", "b"]))
            ps.sync(target)
            if modified is not None and modified != target:
                model[target][:] = model[modified]
                modified = None
        else:
            for i in range(ps.n_problems):
                lo, hi = ps.offsets[i], ps.offsets[i + 1]
                assert np.array_equal(ps.subview(i, "a"), model["a"][lo:hi])
                assert np.array_equal(ps.subview(i, "b"), model["b"][lo:hi])

        assert np.array_equal(mirrors["a"], model["a"])
        assert np.array_equal(mirrors["b"], model["b"])
        assert not (ps.modified_a and ps.modified_b)
        if not ps.modified_a and not ps.modified_b:
            assert np.array_equal(ps.values_a, ps.values_b)

    # round trip: concatenated subviews reproduce the pack input
    if not ps.modified_a and not ps.modified_b:
        parts = [ps.subview(i, "a") for i in range(ps.n_problems)]
        got = np.concatenate(parts) if parts else np.zeros(0)
        assert np.array_equal(got, model["a"])


def test_randomized_programs():
    for seed in range(200):
        run_random_program(seed)
