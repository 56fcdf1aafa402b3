"""
Paillier additive homomorphic encryption (generator g = N + 1).
"""

import hashlib
import logging
import math
import random
import secrets
import struct
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import sympy

from ..exceptions import KeyMismatchError, PlaintextRangeError

logger = logging.getLogger(__name__)

SUPPORTED_KEY_BITS = (512, 1024)
_LENGTH = struct.Struct('>I')


@dataclass(frozen=True)
class AhePublicKey:
    n: int

    @property
    def g(self) -> int:
        return self.n + 1

    @property
    def nsquare(self) -> int:
        return self.n * self.n

    @property
    def key_id(self) -> str:
        return hashlib.sha1(str(self.n).encode()).hexdigest()[:12]

    @property
    def plaintext_bits(self) -> int:
        return self.n.bit_length()

    @property
    def ciphertext_bits(self) -> int:
        return 2 * self.plaintext_bits


@dataclass(frozen=True)
class AhePrivateKey:
    public_key: AhePublicKey
    p: int
    q: int
    _hp: int = field(init=False, repr=False)
    _hq: int = field(init=False, repr=False)
    _q_inv: int = field(init=False, repr=False)

    def __post_init__(self):
        n = self.public_key.n
        object.__setattr__(self, '_hp', self._h(self.p, n))
        object.__setattr__(self, '_hq', self._h(self.q, n))
        object.__setattr__(self, '_q_inv', pow(self.q, -1, self.p))

    @staticmethod
    def _h(prime: int, n: int) -> int:
        psq = prime * prime
        return pow((pow(n + 1, prime - 1, psq) - 1) // prime, -1, prime)

    def decrypt_raw(self, value: int) -> int:
        """CRT decryption."""
        mp = (pow(value, self.p - 1, self.p * self.p) - 1) // self.p * self._hp % self.p
        mq = (pow(value, self.q - 1, self.q * self.q) - 1) // self.q * self._hq % self.q
        return mq + ((mp - mq) * self._q_inv % self.p) * self.q


@dataclass(frozen=True)
class AheKeypair:
    public_key: AhePublicKey
    private_key: AhePrivateKey
    security_bits: int

    @property
    def key_id(self) -> str:
        return self.public_key.key_id

    @property
    def plaintext_bits(self) -> int:
        return self.security_bits

    @property
    def ciphertext_bits(self) -> int:
        return 2 * self.security_bits


@dataclass(frozen=True)
class AheCiphertext:
    value: int
    public_key: AhePublicKey

    @property
    def owner_key(self) -> str:
        return self.public_key.key_id


def _random_prime(rng: random.Random, bits: int) -> int:
    while True:
        candidate = rng.getrandbits(bits) | (3 << (bits - 2)) | 1
        prime = sympy.nextprime(candidate)
        if prime.bit_length() == bits:
            return int(prime)


def keygen(security_bits: int = 1024, seed: Optional[int] = None) -> AheKeypair:
    """
    Generate a Paillier key pair.

    Args:
        security_bits: Bit length of N, 1024 (default) or 512 (fast test mode)
        seed: Fixes the primes for reproducible runs; OS randomness when None

    Returns:
        Key pair whose modulus has exactly ``security_bits`` bits
    """
    if security_bits not in SUPPORTED_KEY_BITS:
        raise ValueError(f"security_bits must be one of {SUPPORTED_KEY_BITS}, got {security_bits}")
    rng = random.Random(seed) if seed is not None else random.SystemRandom()
    half = security_bits // 2
    while True:
        p = _random_prime(rng, half)
        q = _random_prime(rng, half)
        if p != q and (p * q).bit_length() == security_bits:
            break
    public = AhePublicKey(p * q)
    logger.debug(f"Generated {security_bits}-bit Paillier key {public.key_id}")
    return AheKeypair(public, AhePrivateKey(public, p, q), security_bits)


def _random_unit(n: int, rng: Optional[random.Random]) -> int:
    while True:
        r = (rng.randrange(1, n) if rng is not None else secrets.randbelow(n - 1) + 1)
        if math.gcd(r, n) == 1:
            return r


def enc(m: int, pk: AhePublicKey, rng: Optional[random.Random] = None) -> AheCiphertext:
    """
    Encrypt ``m`` in [0, N).

    Raises:
        PlaintextRangeError: if m is outside the plaintext space
    """
    m = int(m)
    if not 0 <= m < pk.n:
        raise PlaintextRangeError(f"plaintext must lie in [0, N), got bit length {m.bit_length()}")
    nsq = pk.nsquare
    r = _random_unit(pk.n, rng)
    return AheCiphertext((1 + m * pk.n) * pow(r, pk.n, nsq) % nsq, pk)


def dec(c: AheCiphertext, sk: AhePrivateKey) -> int:
    if c.public_key != sk.public_key:
        raise KeyMismatchError(f"ciphertext under key {c.owner_key} decrypted with key {sk.public_key.key_id}")
    return sk.decrypt_raw(c.value)


def ct_add(c1: AheCiphertext, c2: AheCiphertext) -> AheCiphertext:
    """Ciphertext of m1 + m2 mod N."""
    if c1.public_key != c2.public_key:
        raise KeyMismatchError(f"cannot add ciphertexts under keys {c1.owner_key} and {c2.owner_key}")
    return AheCiphertext(c1.value * c2.value % c1.public_key.nsquare, c1.public_key)


def pt_add(c: AheCiphertext, m: int) -> AheCiphertext:
    """Ciphertext of m1 + m mod N; m is reduced modulo N first."""
    pk = c.public_key
    m = int(m) % pk.n
    return AheCiphertext(c.value * (1 + m * pk.n) % pk.nsquare, pk)


def encode_signed(x: int, pk: AhePublicKey) -> int:
    """Embed a signed integer as x mod N (negatives become N - |x|)."""
    return int(x) % pk.n


def encrypt_many(values: Iterable[int], pk: AhePublicKey, rng: Optional[random.Random] = None) -> List[AheCiphertext]:
    return [enc(v, pk, rng) for v in values]


def decrypt_many(ciphertexts: Iterable[AheCiphertext], sk: AhePrivateKey) -> List[int]:
    return [dec(c, sk) for c in ciphertexts]


def encode_ciphertexts(ciphertexts: Sequence[AheCiphertext]) -> bytes:
    """Count prefix, then each value as big-endian magnitude with a 4-byte length prefix."""
    parts = [_LENGTH.pack(len(ciphertexts))]
    for c in ciphertexts:
        raw = c.value.to_bytes((c.value.bit_length() + 7) // 8 or 1, 'big')
        parts.append(_LENGTH.pack(len(raw)))
        parts.append(raw)
    return b''.join(parts)


def decode_ciphertexts(data: bytes, pk: AhePublicKey) -> List[AheCiphertext]:
    (count,) = _LENGTH.unpack_from(data, 0)
    offset = _LENGTH.size
    out = []
    for _ in range(count):
        (size,) = _LENGTH.unpack_from(data, offset)
        offset += _LENGTH.size
        out.append(AheCiphertext(int.from_bytes(data[offset:offset + size], 'big'), pk))
        offset += size
    return out


def encode_public_key(pk: AhePublicKey) -> bytes:
    raw = pk.n.to_bytes((pk.n.bit_length() + 7) // 8, 'big')
    return _LENGTH.pack(len(raw)) + raw


def decode_public_key(data: bytes) -> AhePublicKey:
    (size,) = _LENGTH.unpack_from(data, 0)
    return AhePublicKey(int.from_bytes(data[_LENGTH.size:_LENGTH.size + size], 'big'))
