import numpy as np
import pytest

from src.exceptions import SelectionError
from src.mpc.select import (
    PartitionStats,
    SelectionTask,
    mul_row_partition,
    mul_row_quick_select,
    select_plain,
)
from src.mpc.sharing import Ring, SharedMatrix, reveal, split

RING32 = Ring(32)


def share_rows(rows, seed=0):
    signed = [np.asarray(r, dtype=np.int64) for r in rows]
    lengths = [r.size for r in signed]
    s0, s1 = split(RING32.from_signed(np.concatenate(signed)), [seed, 5], RING32)
    return SharedMatrix.from_flat(s0, lengths), SharedMatrix.from_flat(s1, lengths)


def quick_select(two_party, rows, targets, seed=0):
    shares = share_rows(rows, seed)
    stats = PartitionStats()

    def party(p):
        def body(endpoint, randomness):
            task = SelectionTask(shares[p], list(targets))
            return mul_row_quick_select(task, endpoint, randomness, stats=stats if p == 0 else None)
        return body

    r0, r1 = two_party(party(0), party(1), seed=seed)
    values = reveal(r0.as_share(range(len(rows))), r1.as_share(range(len(rows))))
    return RING32.to_signed(values).tolist(), stats


class TestSelectPlain:
    def test_duplicates_count_separately(self):
        assert select_plain([5, 5, 1], 2) == 5
        assert select_plain([5, 5, 1], 3) == 1

    def test_out_of_range(self):
        with pytest.raises(SelectionError):
            select_plain([1, 2], 3)


class TestPartition:
    def test_pivot_splits_row(self, two_party):
        rows = [[4, 9, 1, 7, 5], [3, 3, 3]]
        shares = share_rows(rows)

        def party(p):
            def body(endpoint, randomness):
                return mul_row_partition(shares[p], endpoint, randomness)
            return body

        (q0, m0), (q1, m1) = two_party(party(0), party(1))
        assert q0 == q1
        partitioned = [RING32.to_signed(reveal(a, b)).tolist() for a, b in zip(m0.rows, m1.rows)]
        first, second = partitioned
        assert first[q0[0]] == 5
        assert all(v < 5 for v in first[:q0[0]])
        assert all(v >= 5 for v in first[q0[0]:])
        assert sorted(first) == sorted(rows[0])
        assert q0[1] == 0
        assert second == [3, 3, 3]


class TestQuickSelect:
    def test_median_of_small_rows(self, two_party):
        values, _ = quick_select(two_party, [[3, 1, 2], [10, 40, 20, 30]], [2, 2])
        assert values == [2, 30]

    def test_single_element_row(self, two_party):
        values, _ = quick_select(two_party, [[7]], [1])
        assert values == [7]

    def test_negative_values(self, two_party):
        values, _ = quick_select(two_party, [[-5, -1, -9, 0]], [1])
        assert values == [0]

    def test_all_equal(self, two_party):
        values, _ = quick_select(two_party, [[4] * 6], [3])
        assert values == [4]

    def test_ragged_rows_and_targets(self, two_party, rng):
        rows = [rng.integers(-100, 100, size=n).tolist() for n in (1, 5, 9, 12)]
        targets = [1, 5, 4, 7]
        values, stats = quick_select(two_party, rows, targets)
        assert values == [select_plain(r, t) for r, t in zip(rows, targets)]
        assert stats.compare_calls > 0

    @pytest.mark.parametrize('duplicates', [False, True])
    def test_random_matrices(self, two_party, rng, duplicates):
        for trial in range(10):
            high = 4 if duplicates else 1 << 20
            rows = rng.integers(0, high, size=(20, 20)).tolist()
            values, _ = quick_select(two_party, rows, [10] * 20, seed=trial)
            assert values == [select_plain(r, 10) for r in rows]

    @pytest.mark.slow
    def test_hundred_matrices(self, two_party):
        rng = np.random.default_rng(7)
        for trial in range(100):
            high = 3 if trial % 2 else 1 << 24
            rows = rng.integers(0, high, size=(20, 20)).tolist()
            values, _ = quick_select(two_party, rows, [10] * 20, seed=trial)
            assert values == [select_plain(r, 10) for r in rows]

    def test_target_out_of_range(self):
        shares = share_rows([[1, 2]])
        with pytest.raises(SelectionError):
            SelectionTask(shares[0], [3])

    def test_empty_row(self):
        s0, _ = split(np.zeros(0, dtype=np.uint64), 1, RING32)
        with pytest.raises(SelectionError):
            SelectionTask(SharedMatrix([s0]), [1])
