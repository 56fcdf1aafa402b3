"""
Batched secure comparison over one comparison tree.

For shares of x and y the servers compute d = x - y. Writing each share
of d as msb_b || w_b, the sign bit of d is msb_0 ^ msb_1 ^ 1{a < b} with
a = 2^(l-1) - 1 - w_0 held by party 0 and b = w_1 held by party 1. The
last term is computed by splitting a and b into m-bit chunks, resolving
every chunk with one 1-of-2^m OT and merging chunks pairwise with
correlated AND gates. All pairs share the same tree layers, so the number
of rounds does not depend on how many pairs are compared.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..exceptions import ShapeMismatchError
from .ot import CORRELATED_AND_BITS, correlated_and, ot_batch
from .randomness import CorrelatedRandomness
from .sharing import ArithmeticShare, BooleanShare

logger = logging.getLogger(__name__)

SUPPORTED_CHUNK_BITS = (2, 4, 8)
LEAF_PAYLOAD_BITS = 2


def _check_params(n: int, bits: int, chunk_bits: int) -> int:
    if n < 1:
        raise ValueError("packed_compare needs at least one pair")
    if bits not in (32, 64):
        raise ShapeMismatchError(f"ring width must be 32 or 64, got {bits}")
    if chunk_bits not in SUPPORTED_CHUNK_BITS:
        raise ValueError(f"chunk bits must be one of {SUPPORTED_CHUNK_BITS}, got {chunk_bits}")
    return bits // chunk_bits


def packed_compare_cost(n: int, bits: int = 32, chunk_bits: int = 4) -> int:
    """Accounted bits n * (q * (2^(m+1) + 6) - 6) with q = l / m."""
    q = _check_params(n, bits, chunk_bits)
    return n * (q * ((1 << (chunk_bits + 1)) + CORRELATED_AND_BITS) - CORRELATED_AND_BITS)


def packed_compare_rounds(bits: int = 32, chunk_bits: int = 4) -> int:
    """Interactive layers of the tree: one leaf OT plus log2(q) merges."""
    q = _check_params(1, bits, chunk_bits)
    return 1 + int(math.log2(q))


def millionaires_cost(n: int, bits: int = 32, chunk_bits: int = 4) -> Tuple[int, int]:
    """
    Cost of n independent, unbatched millionaires' comparisons.

    Returns:
        Tuple of (accounted bits, rounds); rounds grow as n * log2(l)
    """
    return packed_compare_cost(n, bits, chunk_bits), n * int(math.log2(bits))


@dataclass
class ComparisonTreeState:
    """
    One layer of the shared comparison tree.

    ``lt`` and ``eq`` hold one boolean share per node; nodes of value i
    occupy positions ``i * width .. (i + 1) * width - 1``, least
    significant chunk first.
    """
    chunk_bits: int
    chunks: int
    lt: BooleanShare
    eq: BooleanShare
    layer: int = 0

    @property
    def width(self) -> int:
        return self.chunks >> self.layer

    @property
    def done(self) -> bool:
        return self.width == 1

    def merge(self, endpoint, randomness: CorrelatedRandomness) -> 'ComparisonTreeState':
        """Combine adjacent (lower, upper) chunk pairs into their parent nodes."""
        lower = slice(0, None, 2)
        upper = slice(1, None, 2)
        e, f = correlated_and(self.lt[lower], self.eq[lower], self.eq[upper], endpoint, randomness)
        return ComparisonTreeState(
            self.chunk_bits, self.chunks, self.lt[upper] ^ e, f, self.layer + 1
        )


def _leaf_state(
    value: np.ndarray,
    party_id: int,
    endpoint,
    randomness: CorrelatedRandomness,
    bits: int,
    chunk_bits: int
) -> ComparisonTreeState:
    q = bits // chunk_bits
    choices = 1 << chunk_bits
    shifts = (np.arange(q, dtype=np.uint64) * np.uint64(chunk_bits))
    chunks = ((value[:, None] >> shifts) & np.uint64(choices - 1)).astype(np.int64).ravel()
    if party_id == 0:
        rng = randomness.private
        lt0 = rng.integers(0, 2, size=chunks.size, dtype=np.uint8)
        eq0 = rng.integers(0, 2, size=chunks.size, dtype=np.uint8)
        candidates = np.arange(choices, dtype=np.int64)
        lt_bit = (chunks[:, None] < candidates).astype(np.uint8) ^ lt0[:, None]
        eq_bit = (chunks[:, None] == candidates).astype(np.uint8) ^ eq0[:, None]
        ot_batch(endpoint, randomness, messages=(lt_bit << 1) | eq_bit,
                 choice_count=choices, payload_bits=LEAF_PAYLOAD_BITS, tag='compare-leaf')
        lt, eq = lt0, eq0
    else:
        out = ot_batch(endpoint, randomness, choices=chunks, choice_count=choices,
                       payload_bits=LEAF_PAYLOAD_BITS, tag='compare-leaf')
        lt, eq = out >> 1, out & 1
    return ComparisonTreeState(chunk_bits, q, BooleanShare(party_id, lt), BooleanShare(party_id, eq))


def packed_compare(
    x: ArithmeticShare,
    y: ArithmeticShare,
    endpoint,
    randomness: CorrelatedRandomness,
    chunk_bits: int = 4
) -> BooleanShare:
    """
    Shares of 1{x_i < y_i} (signed) for every pair at once.

    Args:
        x: This party's share of the left operands
        y: This party's share of the right operands
        endpoint: This party's endpoint
        randomness: Session dealer
        chunk_bits: Chunk width m

    Returns:
        Boolean share of the n comparison bits

    Raises:
        ShapeMismatchError: if the operands disagree in width or length
    """
    x.check_compatible(y)
    ring = x.ring
    n = len(x)
    _check_params(n, ring.bits, chunk_bits)
    with endpoint.protocol('compare'):
        d = (x - y).payload.ravel()
        low_mask = np.uint64((1 << (ring.bits - 1)) - 1)
        msb = ring.msb(d)
        w = d & low_mask
        value = (low_mask - w) if x.party_id == 0 else w
        state = _leaf_state(value, x.party_id, endpoint, randomness, ring.bits, chunk_bits)
        while not state.done:
            state = state.merge(endpoint, randomness)
        endpoint.charge(compare_pairs=n)
    logger.debug(f"packed_compare resolved {n} pairs with m={chunk_bits}")
    return BooleanShare(x.party_id, state.lt.payload ^ msb)
