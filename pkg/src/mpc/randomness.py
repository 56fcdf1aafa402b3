"""
Correlated randomness for one two-server session.

Both servers construct a :class:`CorrelatedRandomness` with the same session
seed. Every request draws from a fresh sub-stream keyed by a request counter,
so the two servers stay in step as long as they issue the same requests in
the same order. Each server only ever receives its own half.

The private stream (permutations, OT output masks) is separate and may be
seeded from a per-server secret the peer never learns.
"""

import logging
from typing import Optional, Tuple

import numpy as np

from .sharing import BeaverTriple, Ring, deal_triples

logger = logging.getLogger(__name__)

_DEALER = 0xD0
_PRIVATE = 0xF1


class CorrelatedRandomness:
    """
    Trusted-dealer source of triples, B2A masks and OT pads.

    Args:
        seed: Session seed shared by both servers
        party_id: Which half this server receives
        private_seed: Seed of the private stream; defaults to one derived
            from the session seed
    """

    def __init__(self, seed: int, party_id: int, private_seed: Optional[int] = None):
        if party_id not in (0, 1):
            raise ValueError(f"party_id must be 0 or 1, got {party_id}")
        self.seed = int(seed)
        self.party_id = party_id
        self.requests = 0
        self.triples_dealt = 0
        base = self.seed if private_seed is None else int(private_seed)
        self.private = np.random.default_rng([base, _PRIVATE, party_id])

    def _next_rng(self) -> np.random.Generator:
        rng = np.random.default_rng([self.seed, _DEALER, self.requests])
        self.requests += 1
        return rng

    def triples(self, shape, ring: Ring = Ring()) -> BeaverTriple:
        """This server's half of fresh triples of the given shape."""
        sub_seed = int(self._next_rng().integers(0, 2**63 - 1))
        halves = deal_triples(shape, sub_seed, ring)
        self.triples_dealt += int(np.prod(shape))
        return halves[self.party_id]

    def b2a_masks(self, shape, ring: Ring = Ring()) -> Tuple[np.ndarray, np.ndarray]:
        """
        Random bit r shared both as XOR share and as additive share.

        Returns:
            Tuple of (boolean share of r, arithmetic share of r)
        """
        rng = self._next_rng()
        r = rng.integers(0, 2, size=shape, dtype=np.uint8)
        bool0 = rng.integers(0, 2, size=shape, dtype=np.uint8)
        arith0 = ring.random(rng, shape)
        if self.party_id == 0:
            return bool0, arith0
        return r ^ bool0, (r.astype(np.uint64) - arith0) & ring.mask

    def _ot_pads(self, count: int, choices: int, payload_bits: int) -> np.ndarray:
        rng = self._next_rng()
        return rng.integers(0, 1 << payload_bits, size=(count, choices), dtype=np.uint8)

    def ot_sender_pads(self, count: int, choices: int, payload_bits: int) -> np.ndarray:
        """All M pads of each OT instance (sender side)."""
        return self._ot_pads(count, choices, payload_bits)

    def ot_receiver_pads(self, selected: np.ndarray, choices: int, payload_bits: int) -> np.ndarray:
        """Only the pads at the receiver's chosen indices."""
        pads = self._ot_pads(len(selected), choices, payload_bits)
        return pads[np.arange(len(selected)), selected]
