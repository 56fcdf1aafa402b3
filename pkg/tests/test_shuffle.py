import numpy as np
import pytest

from src.exceptions import PermutationError, ShapeMismatchError
from src.mpc.sharing import Ring, SharedMatrix, reveal, split
from src.mpc.shuffle import PermutationSet, ShuffleKeys, matrix_shared_shuffle, matrix_shuffle_plain

RING32 = Ring(32)


def shuffle_shared(two_party, keypairs, matrix, perms, seed=0):
    """Share a plaintext matrix (2-D array or ragged list), shuffle it, return revealed rows and counters."""
    rows = [np.asarray(row, dtype=np.uint64) for row in matrix]
    lengths = [row.size for row in rows]
    flat = np.concatenate(rows)
    s0, s1 = split(flat, [seed, 3], RING32)
    shares = (SharedMatrix.from_flat(s0, lengths), SharedMatrix.from_flat(s1, lengths))

    def party(p):
        def body(endpoint, randomness):
            keys = ShuffleKeys.establish(endpoint, 512, keypair=keypairs[p])
            out = matrix_shared_shuffle(shares[p], perms[p], keys, endpoint, randomness)
            return out, endpoint.protocol_totals['shuffle']
        return body

    (out0, c0), (out1, c1) = two_party(party(0), party(1), seed=seed)
    revealed = [reveal(a, b) for a, b in zip(out0.rows, out1.rows)]
    return revealed, c0, c1


class TestPermutationSet:
    def test_rejects_non_permutation(self):
        with pytest.raises(PermutationError):
            PermutationSet([np.array([0, 0, 1])])

    def test_inverse(self, rng):
        perms = PermutationSet.random([5, 3], rng)
        matrix = [np.arange(5), np.arange(3)]
        back = matrix_shuffle_plain(matrix_shuffle_plain(matrix, perms), perms.inverse())
        assert all(np.array_equal(a, b) for a, b in zip(back, matrix))

    def test_plain_definition(self):
        perms = PermutationSet([np.array([2, 0, 1])])
        assert matrix_shuffle_plain(np.array([[10, 20, 30]]), perms).tolist() == [[30, 10, 20]]

    def test_plain_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            matrix_shuffle_plain(np.zeros((2, 3)), PermutationSet.identity([3]))


class TestMatrixSharedShuffle:
    def test_identity_permutations(self, two_party, keypairs):
        matrix = np.array([[1, 2], [3, 4]])
        perms = (PermutationSet.identity([2, 2], 0), PermutationSet.identity([2, 2], 1))
        revealed, _, _ = shuffle_shared(two_party, keypairs, matrix, perms)
        assert [r.tolist() for r in revealed] == [[1, 2], [3, 4]]

    def test_single_swap(self, two_party, keypairs):
        matrix = np.array([[5, 9]])
        perms = (PermutationSet([np.array([1, 0])], 0), PermutationSet.identity([2], 1))
        revealed, _, _ = shuffle_shared(two_party, keypairs, matrix, perms)
        assert revealed[0].tolist() == [9, 5]

    def test_permuted_by_both_sets_in_order(self, two_party, keypairs, rng):
        matrix = RING32.random(rng, (8, 8))
        perms = (PermutationSet.random([8] * 8, rng, 0), PermutationSet.random([8] * 8, rng, 1))
        revealed, _, _ = shuffle_shared(two_party, keypairs, matrix, perms)
        expected = matrix_shuffle_plain(matrix_shuffle_plain(matrix, perms[0]), perms[1])
        assert np.array_equal(np.vstack(revealed), expected)

    def test_wrapping_values(self, two_party, keypairs):
        matrix = np.array([[RING32.modulus - 1, 0, 1, RING32.modulus - 2]], dtype=np.uint64)
        perms = (PermutationSet([np.array([3, 2, 1, 0])], 0), PermutationSet.identity([4], 1))
        revealed, _, _ = shuffle_shared(two_party, keypairs, matrix, perms)
        assert revealed[0].tolist() == [RING32.modulus - 2, 1, 0, RING32.modulus - 1]

    @pytest.mark.parametrize('m', [4, 8, 16])
    def test_ciphertext_count_and_legs(self, two_party, keypairs, rng, m):
        matrix = RING32.random(rng, (m, m))
        perms = (PermutationSet.random([m] * m, rng, 0), PermutationSet.random([m] * m, rng, 1))
        _, c0, c1 = shuffle_shared(two_party, keypairs, matrix, perms)
        assert c0.accounted['ciphertexts'] == c1.accounted['ciphertexts'] == 4 * m * m
        assert c0.rounds == c1.rounds == 3
        assert c0.messages_sent + c0.messages_received == 4

    def test_ragged_rows(self, two_party, keypairs, rng):
        matrix = [np.array([7, 1, 4]), np.array([2]), np.array([9, 8, 6, 5, 3])]
        perms = (PermutationSet.random([3, 1, 5], rng, 0), PermutationSet.random([3, 1, 5], rng, 1))
        revealed, _, _ = shuffle_shared(two_party, keypairs, matrix, perms)
        expected = matrix_shuffle_plain(matrix_shuffle_plain(matrix, perms[0]), perms[1])
        assert all(np.array_equal(a, b) for a, b in zip(revealed, expected))

    @pytest.mark.slow
    def test_hundred_trials(self, two_party, keypairs):
        rng = np.random.default_rng(99)
        for trial in range(100):
            matrix = RING32.random(rng, (8, 8))
            perms = (PermutationSet.random([8] * 8, rng, 0), PermutationSet.random([8] * 8, rng, 1))
            revealed, _, _ = shuffle_shared(two_party, keypairs, matrix, perms, seed=trial)
            expected = matrix_shuffle_plain(matrix_shuffle_plain(matrix, perms[0]), perms[1])
            assert np.array_equal(np.vstack(revealed), expected)

    def test_same_key_rejected(self, two_party, keypairs):
        def body(endpoint, randomness):
            ShuffleKeys.establish(endpoint, 512, keypair=keypairs[0])

        with pytest.raises(ShapeMismatchError):
            two_party(body, body)

    def test_shares_keep_scale(self, two_party, keypairs):
        s0, s1 = split([[1, 2]], 4, RING32, scale=8)
        shares = (SharedMatrix.from_square(s0), SharedMatrix.from_square(s1))

        def party(p):
            def body(endpoint, randomness):
                keys = ShuffleKeys.establish(endpoint, 512, keypair=keypairs[p])
                return matrix_shared_shuffle(shares[p], PermutationSet.identity([2], p), keys, endpoint, randomness)
            return body

        out0, out1 = two_party(party(0), party(1))
        assert out0.rows[0].scale == 8
        assert reveal(out0.rows[0], out1.rows[0]).tolist() == [1, 2]
