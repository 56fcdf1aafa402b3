"""
Proximity-based Byzantine defense over secret-shared updates.

One aggregation round:

1. clients share a low-dimensional representation (LUR) of their update
   and the update itself with both servers
2. the servers compute the shared squared-distance (SED) matrix of LURs
3. each row is shuffled, and its median (the floor(m/2)-th largest) selected
4. client j is a neighbor of client i when M[i, j] < median_i
5. clients named as neighbor by more than floor(m/2) - 1 rows qualify
6. qualified updates are averaged, weighted by local dataset size

Only the qualification bits and the aggregate are ever opened.
:func:`plaintext_defense` runs the same steps on the same ring values and
is the reference the secure path must match exactly.
"""

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import NoQualifiedClientsError, RingOverflowError, ShapeMismatchError
from ..mpc.compare import packed_compare
from ..mpc.randomness import CorrelatedRandomness
from ..mpc.select import PartitionStats, SelectionTask, mul_row_quick_select, select_plain
from ..mpc.sharing import (
    ArithmeticShare,
    FixedPointCodec,
    Ring,
    SharedMatrix,
    b2a,
    mul,
    open_bits,
    open_share,
    split,
)
from ..mpc.shuffle import PermutationSet, ShuffleKeys, matrix_shared_shuffle
from .sampling import default_window, sample

logger = logging.getLogger(__name__)


@dataclass
class QualificationVector:
    """Opened qualification bits plus (shared or plain) neighbor counts and medians."""
    qualified: np.ndarray
    counts: object = None
    medians: object = None

    @property
    def indices(self) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.qualified)]


@dataclass
class DefenseOutcome:
    """Result of one aggregation round."""
    qualified: List[int]
    update: np.ndarray
    update_ring: np.ndarray
    sed: Optional[np.ndarray] = None
    medians: Optional[np.ndarray] = None
    counts: Optional[np.ndarray] = None
    counters: Dict[str, dict] = field(default_factory=dict)


@dataclass
class ClientShares:
    """What one client uploads to one server."""
    lur: ArithmeticShare
    update: ArithmeticShare
    weight: int


def sed_multiplication_count(clients: int, dimension: int) -> int:
    """Share multiplications for the upper triangle: C(m, 2) * d."""
    return clients * (clients - 1) // 2 * dimension


def client_upload_bytes(parameters: int, dimension: int, bits: int) -> int:
    """Bytes one client sends to one server: an update share and an LUR share."""
    return (parameters + dimension) * bits // 8


WIDE_RING_DIMENSION = 1 << 13


def ring_bits_for(dimension: int) -> int:
    """Ring width for LURs of the given length: 32 bits up to 2^13 entries, 64 above."""
    return 64 if dimension > WIDE_RING_DIMENSION else 32


def neighbor_threshold(clients: int) -> int:
    return clients // 2 - 1


def median_rank(clients: int) -> int:
    return clients // 2


# -- secure path ---------------------------------------------------------------

def shared_sed_matrix(
    lurs: Sequence[ArithmeticShare],
    endpoint,
    randomness: CorrelatedRandomness,
    check_overflow: bool = False
) -> SharedMatrix:
    """
    Shares of the squared Euclidean distances between all client LURs.

    Only the upper triangle is multiplied (in a single batched Beaver
    round); the lower triangle mirrors it and the diagonal is a literal
    zero share. The result carries scale 2f.

    Args:
        lurs: This server's LUR share per client, equal length and scale
        endpoint: This server's endpoint
        randomness: Session dealer
        check_overflow: Debug mode; opens the LURs and recomputes every
            distance exactly to verify no sum wrapped. Never use on real data.

    Returns:
        Square SharedMatrix of SED shares
    """
    m = len(lurs)
    first = lurs[0]
    for lur in lurs[1:]:
        first.check_compatible(lur)
    ring = first.ring
    pairs = list(combinations(range(m), 2))
    with endpoint.protocol('sed'):
        diffs = ArithmeticShare.concat([lurs[i] - lurs[j] for i, j in pairs]).reshape(len(pairs), len(first))
        triple = randomness.triples(diffs.shape, ring)
        squares = mul(diffs, diffs, triple, endpoint)
        sums = (squares.payload.sum(axis=1, dtype=np.uint64)) & ring.mask
    matrix = np.zeros((m, m), dtype=np.uint64)
    for (i, j), value in zip(pairs, sums):
        matrix[i, j] = matrix[j, i] = value
    result = SharedMatrix.from_square(ArithmeticShare(first.party_id, matrix, ring, 2 * first.scale))
    if check_overflow:
        logger.warning("SED overflow check opens every LUR; debug use only")
        plain = [ring.to_signed(open_share(lur, endpoint, 'sed-debug')) for lur in lurs]
        exact = _exact_sed([row.tolist() for row in plain])
        if max(max(row) for row in exact) >= 1 << (ring.bits - 1):
            raise RingOverflowError(f"SED matrix overflows the {ring.bits}-bit ring")
    return result


def neighbor_and_qualify(
    sed: SharedMatrix,
    endpoint,
    randomness: CorrelatedRandomness,
    keys: ShuffleKeys,
    chunk_bits: int = 4,
    stats: Optional[PartitionStats] = None
) -> QualificationVector:
    """
    Shuffle rows, select row medians, build the neighbor matrix and open
    the qualification bits. Medians, neighbor bits and counts stay shared.
    """
    m = len(sed)
    if any(length != m for length in sed.row_lengths):
        raise ShapeMismatchError(f"SED matrix must be square, got row lengths {sed.row_lengths}")
    party = endpoint.party_id
    ring = sed.rows[0].ring
    perms = PermutationSet.random([m] * m, randomness.private, owner=party)
    shuffled = matrix_shared_shuffle(sed, perms, keys, endpoint, randomness)
    task = SelectionTask(shuffled, [median_rank(m)] * m)
    medians = mul_row_quick_select(task, endpoint, randomness, chunk_bits, stats).as_share(range(m))

    with endpoint.protocol('neighbors'):
        flat = sed.flatten()
        repeated = medians.derive(np.repeat(medians.payload, m))
        below = packed_compare(flat, repeated, endpoint, randomness, chunk_bits)
        neighbors = b2a(below, endpoint, randomness, ring)
        counts = neighbors.derive(neighbors.payload.reshape(m, m).sum(axis=0, dtype=np.uint64))
        threshold = ArithmeticShare.public(party, np.full(m, neighbor_threshold(m), dtype=np.uint64), ring)
        qualified = packed_compare(threshold, counts, endpoint, randomness, chunk_bits)
        opened = open_bits(qualified, endpoint, 'qualified')
    logger.debug(f"Party {party} qualification bits: {opened.tolist()}")
    return QualificationVector(opened, counts, medians)


def aggregate(
    updates: Sequence[ArithmeticShare],
    qualified: Sequence[int],
    weights: Sequence[int],
    endpoint
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Open the dataset-size weighted mean of the qualified updates.

    Weighting by public integers is local; the opened numerator is divided
    publicly by the weight total and the fixed-point scale.

    Returns:
        Tuple of (global update as floats, opened numerator ring values)

    Raises:
        NoQualifiedClientsError: if no client qualified
    """
    if len(qualified) != len(updates):
        raise ShapeMismatchError(f"{len(qualified)} qualification bits for {len(updates)} updates")
    chosen = [int(i) for i in np.flatnonzero(np.asarray(qualified))]
    if not chosen:
        raise NoQualifiedClientsError("no client qualified this round")
    first = updates[chosen[0]]
    numerator = ArithmeticShare.zeros(first.party_id, first.shape, first.ring, first.scale)
    for i in chosen:
        numerator = numerator + updates[i].mul_public(np.uint64(int(weights[i])))
    with endpoint.protocol('aggregate'):
        opened = open_share(numerator, endpoint, 'aggregate')
    total = sum(int(weights[i]) for i in chosen)
    return _finish_mean(opened, first.ring, first.scale, total), opened


def _finish_mean(numerator: np.ndarray, ring: Ring, scale: int, total: int) -> np.ndarray:
    return ring.to_signed(numerator).astype(np.float64) / float(total) / float(2 ** scale)


# -- plaintext reference ---------------------------------------------------------

def _exact_sed(lurs: Sequence[Sequence[int]]) -> List[List[int]]:
    m = len(lurs)
    out = [[0] * m for _ in range(m)]
    for i, j in combinations(range(m), 2):
        value = sum((a - b) * (a - b) for a, b in zip(lurs[i], lurs[j]))
        out[i][j] = out[j][i] = value
    return out


def _ring_lt(x: np.ndarray, y: np.ndarray, ring: Ring) -> np.ndarray:
    """Sign bit of x - y in the ring, exactly what the secure comparison opens."""
    return ring.msb((x - y) & ring.mask)


def plaintext_qualification(sed: np.ndarray, ring: Ring) -> QualificationVector:
    """Medians, neighbor matrix, counts and qualification on ring values."""
    m = sed.shape[0]
    signed = ring.to_signed(sed)
    medians = np.array([select_plain(row.tolist(), median_rank(m)) for row in signed], dtype=np.int64)
    medians_ring = ring.from_signed(medians)
    neighbors = _ring_lt(sed, np.repeat(medians_ring, m).reshape(m, m), ring)
    counts = neighbors.sum(axis=0).astype(np.uint64)
    threshold = np.full(m, neighbor_threshold(m), dtype=np.uint64)
    qualified = _ring_lt(threshold, counts, ring)
    return QualificationVector(qualified, counts, medians_ring)


def plaintext_sed(lurs: np.ndarray, ring: Ring, strict: bool = False) -> np.ndarray:
    """
    SED matrix with ring wraparound, as the Beaver products produce it.

    Args:
        lurs: (m, d) ring-encoded LURs
        ring: Ring of the encoding
        strict: Raise RingOverflowError instead of warning on wraparound
    """
    m = lurs.shape[0]
    out = np.zeros((m, m), dtype=np.uint64)
    for i, j in combinations(range(m), 2):
        diff = (lurs[i] - lurs[j]) & ring.mask
        out[i, j] = out[j, i] = (diff * diff).sum(dtype=np.uint64) & ring.mask
    signed = ring.to_signed(lurs)
    largest = float(np.max(signed) - np.min(signed)) if signed.size else 0.0
    if largest * largest * lurs.shape[1] >= float(2 ** (ring.bits - 1)):
        exact = np.array(_exact_sed(signed.tolist()), dtype=object)
        if (exact >= (1 << (ring.bits - 1))).any():
            message = f"SED exceeds the signed range of the {ring.bits}-bit ring"
            if strict:
                raise RingOverflowError(message)
            logger.warning(message)
    return out


def plaintext_defense(
    updates_ring: np.ndarray,
    lurs_ring: np.ndarray,
    weights: Sequence[int],
    ring: Ring,
    update_scale: int,
    strict: bool = False
) -> DefenseOutcome:
    """
    Reference round on the same ring values the secure path shares.

    Args:
        updates_ring: (m, n) fixed-point encoded updates
        lurs_ring: (m, d) fixed-point encoded LURs
        weights: Local dataset sizes
        ring: Ring of both encodings
        update_scale: Fractional bits of the update encoding
        strict: Raise on SED overflow

    Returns:
        DefenseOutcome; raises NoQualifiedClientsError on an empty set
    """
    sed = plaintext_sed(lurs_ring, ring, strict)
    vector = plaintext_qualification(sed, ring)
    chosen = vector.indices
    if not chosen:
        raise NoQualifiedClientsError("no client qualified this round")
    numerator = np.zeros(updates_ring.shape[1], dtype=np.uint64)
    for i in chosen:
        numerator = (numerator + updates_ring[i] * np.uint64(int(weights[i]))) & ring.mask
    total = sum(int(weights[i]) for i in chosen)
    update = _finish_mean(numerator, ring, update_scale, total)
    return DefenseOutcome(chosen, update, numerator, sed, vector.medians, vector.counts)


# -- orchestration ---------------------------------------------------------------

class FlurpDefense:
    """
    Client-side encoding and server-side rounds with one parameter set.

    Args:
        parameters: Length of the flattened model
        window: LUR window (None picks :func:`default_window`)
        sampler: One of linf, row, align, maxpool
        bits: Ring width (None derives it from the LUR length via :func:`ring_bits_for`)
        lur_fixed_bits: Fractional bits of LUR entries
        update_fixed_bits: Fractional bits of update entries
        chunk_bits: Comparison chunk width
        layer_sizes: Layer boundaries for the align sampler
        strict_overflow: Raise on SED overflow in the reference path
    """

    def __init__(
        self,
        parameters: int,
        window: Optional[int] = None,
        sampler: str = 'linf',
        bits: Optional[int] = None,
        lur_fixed_bits: int = 8,
        update_fixed_bits: int = 16,
        chunk_bits: int = 4,
        layer_sizes: Optional[Sequence[int]] = None,
        strict_overflow: bool = False
    ):
        self.parameters = parameters
        self.window = window or default_window(parameters)
        self.sampler = sampler
        self.layer_sizes = layer_sizes
        self.dimension = len(self.lur(np.zeros(parameters)))
        self.ring = Ring(bits or ring_bits_for(self.dimension))
        self.lur_codec = FixedPointCodec(lur_fixed_bits, self.ring)
        self.update_codec = FixedPointCodec(update_fixed_bits, self.ring)
        self.chunk_bits = chunk_bits
        self.strict_overflow = strict_overflow

    def lur(self, update: np.ndarray) -> np.ndarray:
        return sample(update, self.sampler, self.window, self.layer_sizes)

    def encode(self, updates: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Ring-encode a stack of updates and their LURs."""
        updates = np.atleast_2d(np.asarray(updates, dtype=np.float64))
        lurs = np.vstack([self.lur(u) for u in updates])
        return self.update_codec.encode(updates), self.lur_codec.encode(lurs)

    def client_shares(self, update_ring: np.ndarray, lur_ring: np.ndarray, weight: int,
                      seed) -> Tuple[ClientShares, ClientShares]:
        """Split one client's encoded update and LUR into the two servers' uploads."""
        lur0, lur1 = split(lur_ring, [seed, 0], self.ring, self.lur_codec.fractional_bits)
        upd0, upd1 = split(update_ring, [seed, 1], self.ring, self.update_codec.fractional_bits)
        return ClientShares(lur0, upd0, weight), ClientShares(lur1, upd1, weight)

    def upload_bytes(self) -> int:
        return client_upload_bytes(self.parameters, self.dimension, self.ring.bits)

    def plaintext_round(self, updates: np.ndarray, weights: Sequence[int]) -> DefenseOutcome:
        updates_ring, lurs_ring = self.encode(updates)
        return plaintext_defense(updates_ring, lurs_ring, weights, self.ring,
                                 self.update_codec.fractional_bits, self.strict_overflow)

    def secure_round(
        self,
        shares: Sequence[ClientShares],
        endpoint,
        randomness: CorrelatedRandomness,
        keys: ShuffleKeys
    ) -> DefenseOutcome:
        """
        One server's half of a full round.

        Raises:
            NoQualifiedClientsError: if nobody qualified (both servers raise it)
        """
        before = endpoint.snapshot()
        totals_before = {tag: c.copy() for tag, c in endpoint.protocol_totals.items()}
        sed = shared_sed_matrix([s.lur for s in shares], endpoint, randomness)
        vector = neighbor_and_qualify(sed, endpoint, randomness, keys, self.chunk_bits)
        update, numerator = aggregate([s.update for s in shares], vector.qualified,
                                      [s.weight for s in shares], endpoint)
        counters = {'total': endpoint.counters.since(before).to_dict()}
        for tag, c in endpoint.protocol_totals.items():
            delta = c.since(totals_before[tag]) if tag in totals_before else c.copy()
            if delta.messages_sent or delta.messages_received or delta.accounted:
                counters[tag] = delta.to_dict()
        return DefenseOutcome(vector.indices, update, numerator, counters=counters)
