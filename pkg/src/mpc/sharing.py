"""
Two-party additive secret sharing over the ring of integers modulo 2^l.

Ring elements are held in ``np.uint64`` arrays; arithmetic wraps modulo
2^64 and is masked down to l bits. Constants mixed into ring arithmetic
are always ``np.uint64`` so numpy never promotes to float.
"""

import logging
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import RingOverflowError, ShapeMismatchError, TripleReuseError

logger = logging.getLogger(__name__)

RING_HEADER = struct.Struct('<HHQ')
BITS_HEADER = struct.Struct('<Q')

ArrayLike = Union[np.ndarray, Sequence[int], int]


@dataclass(frozen=True)
class Ring:
    """Integers modulo 2^bits, bits in {32, 64}."""
    bits: int = 32

    def __post_init__(self):
        if self.bits not in (32, 64):
            raise ValueError(f"ring width must be 32 or 64, got {self.bits}")

    @property
    def modulus(self) -> int:
        return 1 << self.bits

    @property
    def mask(self) -> np.uint64:
        return np.uint64(self.modulus - 1)

    @property
    def byte_width(self) -> int:
        return self.bits // 8

    def reduce(self, values: ArrayLike) -> np.ndarray:
        """Coerce to uint64 and reduce modulo 2^bits (values must be non-negative ints)."""
        if isinstance(values, np.ndarray) and values.dtype == np.uint64:
            return values & self.mask
        array = np.asarray(values)
        if array.dtype == object:
            array = np.array([int(v) % self.modulus for v in array.ravel()],
                             dtype=np.uint64).reshape(array.shape)
        return array.astype(np.uint64) & self.mask

    def random(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.integers(0, self.modulus - 1, size=size, dtype=np.uint64, endpoint=True)

    def neg(self, values: np.ndarray) -> np.ndarray:
        return (np.uint64(0) - values) & self.mask

    def to_signed(self, values: np.ndarray) -> np.ndarray:
        """Two's-complement interpretation as int64."""
        values = np.ascontiguousarray(values, dtype=np.uint64)
        if self.bits == 64:
            return values.view(np.int64).copy()
        signed = values.astype(np.int64)
        signed[signed >= (1 << 31)] -= (1 << 32)
        return signed

    def from_signed(self, values: ArrayLike) -> np.ndarray:
        return np.asarray(values, dtype=np.int64).astype(np.uint64) & self.mask

    def msb(self, values: np.ndarray) -> np.ndarray:
        return ((values >> np.uint64(self.bits - 1)) & np.uint64(1)).astype(np.uint8)


def _check_party(party_id: int) -> None:
    if party_id not in (0, 1):
        raise ValueError(f"party_id must be 0 or 1, got {party_id}")


@dataclass(frozen=True, eq=False)
class ArithmeticShare:
    """One party's additive share; ``scale`` counts fixed-point fractional bits."""
    party_id: int
    payload: np.ndarray
    ring: Ring = Ring()
    scale: int = 0

    def __post_init__(self):
        _check_party(self.party_id)
        object.__setattr__(self, 'payload', self.ring.reduce(self.payload))

    def __len__(self) -> int:
        return int(self.payload.size)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.payload.shape

    def check_compatible(self, other: 'ArithmeticShare', same_party: bool = True) -> None:
        if same_party and other.party_id != self.party_id:
            raise ShapeMismatchError(f"shares of parties {self.party_id} and {other.party_id} mixed")
        if other.ring != self.ring:
            raise ShapeMismatchError(f"ring widths {self.ring.bits} and {other.ring.bits} differ")
        if other.scale != self.scale:
            raise ShapeMismatchError(f"scales {self.scale} and {other.scale} differ")
        if other.shape != self.shape:
            raise ShapeMismatchError(f"shapes {self.shape} and {other.shape} differ")

    def derive(self, payload: np.ndarray, scale: Optional[int] = None) -> 'ArithmeticShare':
        return ArithmeticShare(self.party_id, payload, self.ring,
                               self.scale if scale is None else scale)

    def __add__(self, other: 'ArithmeticShare') -> 'ArithmeticShare':
        self.check_compatible(other)
        return self.derive(self.payload + other.payload)

    def __sub__(self, other: 'ArithmeticShare') -> 'ArithmeticShare':
        self.check_compatible(other)
        return self.derive(self.payload - other.payload)

    def __neg__(self) -> 'ArithmeticShare':
        return self.derive(self.ring.neg(self.payload))

    def __getitem__(self, index) -> 'ArithmeticShare':
        return self.derive(np.atleast_1d(self.payload[index]))

    def add_public(self, values: ArrayLike) -> 'ArithmeticShare':
        """Add a public ring value; only party 0 changes its payload."""
        if self.party_id == 1:
            return self
        return self.derive(self.payload + self.ring.reduce(values))

    def mul_public(self, factors: ArrayLike, scale_delta: int = 0) -> 'ArithmeticShare':
        """Multiply by public ring integers (local, no triples)."""
        return self.derive(self.payload * self.ring.reduce(factors), self.scale + scale_delta)

    def reshape(self, *shape: int) -> 'ArithmeticShare':
        return self.derive(self.payload.reshape(*shape))

    @classmethod
    def zeros(cls, party_id: int, shape, ring: Ring = Ring(), scale: int = 0) -> 'ArithmeticShare':
        return cls(party_id, np.zeros(shape, dtype=np.uint64), ring, scale)

    @classmethod
    def public(cls, party_id: int, values: ArrayLike, ring: Ring = Ring(), scale: int = 0) -> 'ArithmeticShare':
        """Trivial sharing of a public value: party 0 holds it, party 1 holds zero."""
        values = ring.reduce(values)
        if party_id == 1:
            values = np.zeros_like(values)
        return cls(party_id, values, ring, scale)

    @classmethod
    def concat(cls, shares: Sequence['ArithmeticShare']) -> 'ArithmeticShare':
        first = shares[0]
        for share in shares[1:]:
            if share.party_id != first.party_id or share.ring != first.ring or share.scale != first.scale:
                raise ShapeMismatchError("cannot concatenate incompatible shares")
        payload = np.concatenate([s.payload.ravel() for s in shares]) if shares else np.empty(0, np.uint64)
        return first.derive(payload)


@dataclass(frozen=True, eq=False)
class BooleanShare:
    """One party's XOR share of a bit vector."""
    party_id: int
    payload: np.ndarray

    def __post_init__(self):
        _check_party(self.party_id)
        bits = np.asarray(self.payload)
        if bits.size and (bits.min() < 0 or bits.max() > 1):
            raise ValueError("boolean share payload must contain only 0/1 entries")
        object.__setattr__(self, 'payload', bits.astype(np.uint8))

    def __len__(self) -> int:
        return int(self.payload.size)

    def __xor__(self, other: 'BooleanShare') -> 'BooleanShare':
        if other.party_id != self.party_id or other.payload.shape != self.payload.shape:
            raise ShapeMismatchError("incompatible boolean shares")
        return BooleanShare(self.party_id, self.payload ^ other.payload)

    def __getitem__(self, index) -> 'BooleanShare':
        return BooleanShare(self.party_id, np.atleast_1d(self.payload[index]))

    def xor_public(self, bits: ArrayLike) -> 'BooleanShare':
        if self.party_id == 1:
            return self
        return BooleanShare(0, self.payload ^ np.asarray(bits, dtype=np.uint8))


@dataclass(eq=False)
class BeaverTriple:
    """One party's half of elementwise triples with c = a*b."""
    a: ArithmeticShare
    b: ArithmeticShare
    c: ArithmeticShare
    consumed: bool = False

    @property
    def party_id(self) -> int:
        return self.a.party_id

    def __len__(self) -> int:
        return len(self.a)


@dataclass(eq=False)
class SharedMatrix:
    """Ragged matrix of shares, one ArithmeticShare per row."""
    rows: List[ArithmeticShare] = field(default_factory=list)

    @property
    def party_id(self) -> int:
        return self.rows[0].party_id

    @property
    def row_lengths(self) -> List[int]:
        return [len(row) for row in self.rows]

    def __len__(self) -> int:
        return len(self.rows)

    def __getitem__(self, index: int) -> ArithmeticShare:
        return self.rows[index]

    def flatten(self) -> ArithmeticShare:
        return ArithmeticShare.concat(self.rows)

    @classmethod
    def from_flat(cls, share: ArithmeticShare, lengths: Sequence[int]) -> 'SharedMatrix':
        bounds = np.cumsum([0] + list(lengths))
        return cls([share.derive(share.payload[bounds[i]:bounds[i + 1]]) for i in range(len(lengths))])

    @classmethod
    def from_square(cls, share: ArithmeticShare) -> 'SharedMatrix':
        return cls([share.derive(row) for row in share.payload])


class FixedPointCodec:
    """
    Two's-complement fixed-point embedding of reals into the ring.

    Args:
        fractional_bits: Number of fractional bits f
        ring: Target ring
    """

    def __init__(self, fractional_bits: int = 16, ring: Ring = Ring()):
        if not 0 <= fractional_bits < ring.bits - 1:
            raise ValueError(f"fractional bits must be in [0, {ring.bits - 1}), got {fractional_bits}")
        self.fractional_bits = fractional_bits
        self.ring = ring

    @property
    def bound(self) -> float:
        return float(2 ** (self.ring.bits - self.fractional_bits - 1))

    def encode(self, values: ArrayLike) -> np.ndarray:
        x = np.asarray(values, dtype=np.float64)
        if x.size and np.max(np.abs(x)) >= self.bound:
            raise RingOverflowError(
                f"|x| = {np.max(np.abs(x)):.6g} exceeds 2^{self.ring.bits - self.fractional_bits - 1} "
                f"for l={self.ring.bits}, f={self.fractional_bits}"
            )
        scaled = np.rint(x * float(1 << self.fractional_bits)).astype(np.int64)
        return self.ring.from_signed(scaled)

    def decode(self, values: np.ndarray, scale: Optional[int] = None) -> np.ndarray:
        bits = self.fractional_bits if scale is None else scale
        return self.ring.to_signed(values).astype(np.float64) / float(2 ** bits)

    def __repr__(self) -> str:
        return f"FixedPointCodec(f={self.fractional_bits}, l={self.ring.bits})"


def encode_fixed(values: ArrayLike, codec: FixedPointCodec) -> np.ndarray:
    return codec.encode(values)


def decode_fixed(values: np.ndarray, codec: FixedPointCodec) -> np.ndarray:
    return codec.decode(values)


# -- serialization ---------------------------------------------------------

def encode_ring(values: np.ndarray, ring: Ring, scale: int = 0) -> bytes:
    """Header (l, f, length) followed by little-endian fixed-width elements."""
    flat = np.ascontiguousarray(values, dtype=np.uint64).ravel()
    dtype = '<u4' if ring.bits == 32 else '<u8'
    return RING_HEADER.pack(ring.bits, scale, flat.size) + flat.astype(dtype).tobytes()


def decode_ring(data: bytes) -> Tuple[np.ndarray, Ring, int]:
    bits, scale, length = RING_HEADER.unpack_from(data, 0)
    dtype = '<u4' if bits == 32 else '<u8'
    values = np.frombuffer(data, dtype=dtype, count=length, offset=RING_HEADER.size)
    return values.astype(np.uint64), Ring(bits), scale


def encode_share(share: ArithmeticShare) -> bytes:
    return encode_ring(share.payload, share.ring, share.scale)


def decode_share(data: bytes, party_id: int) -> ArithmeticShare:
    values, ring, scale = decode_ring(data)
    return ArithmeticShare(party_id, values, ring, scale)


def encode_bits(bits: np.ndarray) -> bytes:
    flat = np.asarray(bits, dtype=np.uint8).ravel()
    return BITS_HEADER.pack(flat.size) + np.packbits(flat).tobytes()


def decode_bits(data: bytes) -> np.ndarray:
    (count,) = BITS_HEADER.unpack_from(data, 0)
    packed = np.frombuffer(data, dtype=np.uint8, offset=BITS_HEADER.size)
    return np.unpackbits(packed, count=count).astype(np.uint8)


# -- protocols -------------------------------------------------------------

def split(
    secret: ArrayLike,
    seed,
    ring: Ring = Ring(),
    scale: int = 0
) -> Tuple[ArithmeticShare, ArithmeticShare]:
    """
    Split ring elements into two additive shares.

    Args:
        secret: Ring elements to share
        seed: Pre-negotiated seed; share 0 is a pure function of it
        ring: Ring the secret lives in
        scale: Fixed-point fractional bits carried as metadata

    Returns:
        Tuple of (party 0 share, party 1 share)
    """
    values = ring.reduce(secret)
    share0 = ring.random(np.random.default_rng(seed), values.shape)
    share1 = (values - share0) & ring.mask
    return ArithmeticShare(0, share0, ring, scale), ArithmeticShare(1, share1, ring, scale)


def reveal(s0: ArithmeticShare, s1: ArithmeticShare) -> np.ndarray:
    """Reconstruct ``(s0 + s1) mod 2^l`` elementwise."""
    s0.check_compatible(s1, same_party=False)
    return (s0.payload + s1.payload) & s0.ring.mask


def add(x: ArithmeticShare, y: ArithmeticShare) -> ArithmeticShare:
    return x + y


def open_share(share: ArithmeticShare, endpoint, tag: str = 'open') -> np.ndarray:
    """Reveal a shared value to both servers in one exchange."""
    peer, _, _ = decode_ring(endpoint.exchange(encode_share(share), tag))
    if peer.size != share.payload.size:
        raise ShapeMismatchError(f"peer opened {peer.size} values, expected {share.payload.size}")
    return (share.payload + peer.reshape(share.shape)) & share.ring.mask


def open_bits(share: BooleanShare, endpoint, tag: str = 'open-bits') -> np.ndarray:
    peer = decode_bits(endpoint.exchange(encode_bits(share.payload), tag))
    if peer.size != share.payload.size:
        raise ShapeMismatchError(f"peer opened {peer.size} bits, expected {share.payload.size}")
    return share.payload ^ peer.reshape(share.payload.shape)


def deal_triples(count, seed, ring: Ring = Ring()) -> Tuple[BeaverTriple, BeaverTriple]:
    """
    Trusted-dealer Beaver triples.

    Args:
        count: Number of triples, or an array shape
        seed: Dealer seed; equal seeds give identical triples
        ring: Ring of the triples

    Returns:
        Tuple of (party 0 half, party 1 half)
    """
    rng = np.random.default_rng(seed)
    a = ring.random(rng, count)
    b = ring.random(rng, count)
    c = (a * b) & ring.mask
    halves = []
    for secret in (a, b, c):
        mask = ring.random(rng, np.shape(secret))
        halves.append((mask, (secret - mask) & ring.mask))
    return tuple(
        BeaverTriple(*(ArithmeticShare(party, halves[k][party], ring) for k in range(3)))
        for party in (0, 1)
    )


def mul(x: ArithmeticShare, y: ArithmeticShare, triple: BeaverTriple, endpoint) -> ArithmeticShare:
    """
    Beaver multiplication: one round exchanging e = x - a and f = y - b.

    The product carries scale ``x.scale + y.scale``; see :func:`truncate`.

    Raises:
        TripleReuseError: if the triple was already consumed
        ShapeMismatchError: if operands or triple disagree in shape or ring
    """
    if triple.consumed:
        raise TripleReuseError("Beaver triple already consumed")
    if x.party_id != y.party_id or x.ring != y.ring or x.shape != y.shape:
        raise ShapeMismatchError("multiplication operands are incompatible")
    if triple.party_id != x.party_id or triple.a.ring != x.ring or triple.a.shape != x.shape:
        raise ShapeMismatchError(f"triple of shape {triple.a.shape} does not fit operands of shape {x.shape}")
    triple.consumed = True
    ring = x.ring
    with endpoint.protocol('mul'):
        e = (x.payload - triple.a.payload) & ring.mask
        f = (y.payload - triple.b.payload) & ring.mask
        peer, _, _ = decode_ring(endpoint.exchange(encode_ring(np.concatenate([e.ravel(), f.ravel()]), ring), 'mul'))
        n = e.size
        e = (e + peer[:n].reshape(x.shape)) & ring.mask
        f = (f + peer[n:].reshape(x.shape)) & ring.mask
        z = triple.c.payload + e * triple.b.payload + f * triple.a.payload
        if x.party_id == 0:
            z = z + e * f
        endpoint.charge(multiplications=n)
    return ArithmeticShare(x.party_id, z, ring, x.scale + y.scale)


def truncate(share: ArithmeticShare, bits: int) -> ArithmeticShare:
    """
    Local probabilistic truncation by ``bits`` fractional bits.

    Exact up to one unit in the last place unless a share wraps, which
    happens with probability about |x| / 2^l.
    """
    shift = np.uint64(bits)
    if share.party_id == 0:
        payload = share.payload >> shift
    else:
        payload = share.ring.neg(share.ring.neg(share.payload) >> shift)
    return share.derive(payload, share.scale - bits)


def b2a(x: BooleanShare, endpoint, randomness, ring: Ring = Ring()) -> ArithmeticShare:
    """
    Convert XOR-shared bits to additive shares of the same 0/1 integers.

    Uses a dealer bit r shared both ways: c = x xor r is opened and
    x = c + r - 2cr is evaluated on the arithmetic shares of r.
    """
    n = len(x)
    r_bool, r_arith = randomness.b2a_masks(x.payload.shape, ring)
    with endpoint.protocol('b2a'):
        c = open_bits(BooleanShare(x.party_id, x.payload ^ r_bool), endpoint, 'b2a')
    c_ring = c.astype(np.uint64)
    payload = r_arith - np.uint64(2) * c_ring * r_arith
    if x.party_id == 0:
        payload = payload + c_ring
    logger.debug(f"b2a converted {n} bits")
    return ArithmeticShare(x.party_id, payload, ring, 0)
