"""
Row-wise shuffle of a secret-shared matrix under two secret permutation sets.

Party 0 holds permutations pi_0, party 1 holds pi_1; the output reveals to
the input with every row permuted by pi_0 and then by pi_1. Three message
legs move 4 * (number of entries) Paillier ciphertexts:

1. party 1 -> 0: Enc_1(D_1)
2. party 0 -> 1: Enc_1(D + 2^k - L) permuted by pi_0, and Enc_0(L) permuted by pi_0
3. party 1 -> 0: Enc_0(L' + R) where L' is L permuted by both sets

Masks L and R are uniform in [0, 2^k) with k two bits below the smaller
modulus, so no value ever wraps modulo N and unmasking is exact in the ring.
"""

import logging
import random
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from ..exceptions import PermutationError, ShapeMismatchError
from . import ahe
from .ahe import AheKeypair, AhePublicKey
from .randomness import CorrelatedRandomness
from .sharing import ArithmeticShare, SharedMatrix

logger = logging.getLogger(__name__)


@dataclass
class PermutationSet:
    """One permutation per row; ``perms[i][j]`` is the source column of output column j."""
    perms: List[np.ndarray]
    owner: Optional[int] = None

    def __post_init__(self):
        checked = []
        for i, perm in enumerate(self.perms):
            perm = np.asarray(perm, dtype=np.int64)
            if perm.ndim != 1 or not np.array_equal(np.sort(perm), np.arange(perm.size)):
                raise PermutationError(f"row {i}: {perm.tolist()} is not a permutation")
            checked.append(perm)
        self.perms = checked

    def __len__(self) -> int:
        return len(self.perms)

    @property
    def row_lengths(self) -> List[int]:
        return [p.size for p in self.perms]

    def inverse(self) -> 'PermutationSet':
        return PermutationSet([np.argsort(p) for p in self.perms], self.owner)

    @classmethod
    def identity(cls, row_lengths: Sequence[int], owner: Optional[int] = None) -> 'PermutationSet':
        return cls([np.arange(n) for n in row_lengths], owner)

    @classmethod
    def random(cls, row_lengths: Sequence[int], rng: np.random.Generator,
               owner: Optional[int] = None) -> 'PermutationSet':
        return cls([rng.permutation(n) for n in row_lengths], owner)


def _check_fit(row_lengths: Sequence[int], perms: PermutationSet) -> None:
    if list(row_lengths) != perms.row_lengths:
        raise ShapeMismatchError(f"matrix rows {list(row_lengths)} do not match permutations {perms.row_lengths}")


def matrix_shuffle_plain(matrix, perms: PermutationSet):
    """
    Permute each row i of a plaintext (possibly ragged) matrix by ``perms[i]``.

    Args:
        matrix: 2-D array or sequence of 1-D rows
        perms: Permutation set with matching row lengths

    Returns:
        Same container kind as the input with out[i][j] = matrix[i][perms[i][j]]
    """
    rows = [np.asarray(row) for row in matrix]
    _check_fit([row.size for row in rows], perms)
    out = [row[perm] for row, perm in zip(rows, perms.perms)]
    if isinstance(matrix, np.ndarray) and matrix.ndim == 2:
        return np.vstack(out) if out else matrix.copy()
    return out


def _permute_flat(items: list, lengths: Sequence[int], perms: PermutationSet) -> list:
    out = []
    start = 0
    for length, perm in zip(lengths, perms.perms):
        row = items[start:start + length]
        out.extend(row[j] for j in perm)
        start += length
    return out


@dataclass(frozen=True)
class ShuffleKeys:
    """This server's Paillier key pair and the peer's public key."""
    own: AheKeypair
    peer: AhePublicKey

    @classmethod
    def establish(cls, endpoint, security_bits: int = 1024, seed: Optional[int] = None,
                  keypair: Optional[AheKeypair] = None) -> 'ShuffleKeys':
        """Generate (or reuse) a key pair and swap public keys with the peer in one exchange."""
        own = keypair or ahe.keygen(security_bits, seed)
        with endpoint.protocol('setup'):
            peer = ahe.decode_public_key(endpoint.exchange(ahe.encode_public_key(own.public_key), 'shuffle-keys'))
        if peer == own.public_key:
            raise ShapeMismatchError("both servers use the same Paillier key")
        logger.debug(f"Party {endpoint.party_id} shuffle keys: own {own.key_id}, peer {peer.key_id}")
        return cls(own, peer)

    def data_key(self, party_id: int) -> AhePublicKey:
        """Key of party 1, which carries the data path."""
        return self.own.public_key if party_id == 1 else self.peer

    def mask_key(self, party_id: int) -> AhePublicKey:
        """Key of party 0, which carries the mask-return path."""
        return self.own.public_key if party_id == 0 else self.peer


def matrix_shared_shuffle(
    matrix: SharedMatrix,
    perms: PermutationSet,
    keys: ShuffleKeys,
    endpoint,
    randomness: CorrelatedRandomness
) -> SharedMatrix:
    """
    Jointly shuffle every row of a shared matrix.

    Args:
        matrix: This party's shares, possibly ragged
        perms: This party's own permutation set
        keys: Established shuffle keys
        endpoint: This party's endpoint
        randomness: Session randomness (this party's private stream is used)

    Returns:
        Shares of the doubly permuted matrix
    """
    party = endpoint.party_id
    lengths = matrix.row_lengths
    _check_fit(lengths, perms)
    flat = matrix.flatten()
    ring = flat.ring
    total = len(flat)
    data_key = keys.data_key(party)
    mask_key = keys.mask_key(party)
    mask_bits = min(data_key.plaintext_bits, mask_key.plaintext_bits) - 2
    offset = 1 << mask_bits
    rng = random.Random(int(randomness.private.integers(0, 2**63 - 1)))
    values = [int(v) for v in flat.payload]

    with endpoint.protocol('shuffle'):
        if party == 1:
            endpoint.send(ahe.encode_ciphertexts(ahe.encrypt_many(values, data_key, rng)), 'shuffle-1')
            endpoint.charge(ciphertexts=total)

            masked_data = ahe.decode_ciphertexts(endpoint.receive('shuffle-2'), data_key)
            masked_l = ahe.decode_ciphertexts(endpoint.receive('shuffle-2-masks'), mask_key)
            endpoint.charge(ciphertexts=len(masked_data) + len(masked_l))
            if len(masked_data) != total or len(masked_l) != total:
                raise ShapeMismatchError(f"expected 2 x {total} ciphertexts, got {len(masked_data)} and {len(masked_l)}")
            plain = ahe.decrypt_many(masked_data, keys.own.private_key)
            plain = _permute_flat(plain, lengths, perms)
            masks_r = [rng.getrandbits(mask_bits) for _ in range(total)]
            share = [(x - r) % ring.modulus for x, r in zip(plain, masks_r)]
            masked_l = [
                ahe.pt_add(c, r)
                for c, r in zip(_permute_flat(masked_l, lengths, perms), masks_r)
            ]
            endpoint.send(ahe.encode_ciphertexts(masked_l), 'shuffle-3')
            endpoint.charge(ciphertexts=total)
        else:
            enc_d1 = ahe.decode_ciphertexts(endpoint.receive('shuffle-1'), data_key)
            endpoint.charge(ciphertexts=total)
            if len(enc_d1) != total:
                raise ShapeMismatchError(f"expected {total} ciphertexts, got {len(enc_d1)}")
            masks_l = [rng.getrandbits(mask_bits) for _ in range(total)]
            masked_data = [
                ahe.pt_add(c, d + offset - l)
                for c, d, l in zip(enc_d1, values, masks_l)
            ]
            enc_l = ahe.encrypt_many(masks_l, mask_key, rng)
            endpoint.send(ahe.encode_ciphertexts(_permute_flat(masked_data, lengths, perms)), 'shuffle-2')
            endpoint.send(ahe.encode_ciphertexts(_permute_flat(enc_l, lengths, perms)), 'shuffle-2-masks')
            endpoint.charge(ciphertexts=2 * total)

            returned = ahe.decode_ciphertexts(endpoint.receive('shuffle-3'), mask_key)
            endpoint.charge(ciphertexts=total)
            plain = ahe.decrypt_many(returned, keys.own.private_key)
            share = [(v - offset) % ring.modulus for v in plain]

    logger.debug(f"Party {party} shuffled {len(lengths)} rows ({total} entries)")
    out = ArithmeticShare(party, np.array(share, dtype=np.uint64), ring, flat.scale)
    return SharedMatrix.from_flat(out, lengths)
