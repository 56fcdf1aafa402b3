"""
1-out-of-M oblivious transfer as an ideal functionality, and correlated AND.

The dealer hands the sender M random pads per instance and the receiver
only the pads at its chosen indices. The sender then sends every message
xor-ed with its pad in a single leg, so a batch of any size is one round.
"""

import logging
from typing import Optional, Tuple

import numpy as np

from ..exceptions import ShapeMismatchError
from .randomness import CorrelatedRandomness
from .sharing import BooleanShare, decode_bits, encode_bits

logger = logging.getLogger(__name__)

# formula-level bits per correlated AND instance
CORRELATED_AND_BITS = 6


def _pack(values: np.ndarray, width: int) -> bytes:
    shifts = np.arange(width, dtype=np.uint8)
    bits = (values[..., None] >> shifts) & 1
    return encode_bits(bits.ravel())


def _unpack(data: bytes, shape: Tuple[int, int], width: int) -> np.ndarray:
    bits = decode_bits(data).reshape(*shape, width)
    weights = (1 << np.arange(width)).astype(np.uint8)
    return (bits * weights).sum(axis=-1).astype(np.uint8)


def ot_batch(
    endpoint,
    randomness: CorrelatedRandomness,
    messages: Optional[np.ndarray] = None,
    choices: Optional[np.ndarray] = None,
    choice_count: int = 16,
    payload_bits: int = 2,
    charge: bool = True,
    tag: str = 'ot'
) -> Optional[np.ndarray]:
    """
    Run a batch of 1-out-of-M OT instances.

    Exactly one party passes ``messages`` (shape ``(count, M)``), the other
    passes ``choices`` (length ``count``).

    Args:
        endpoint: This party's endpoint
        randomness: Session dealer
        messages: Sender's messages, each below 2^payload_bits
        choices: Receiver's indices in [0, M)
        choice_count: M
        payload_bits: Width of each message
        charge: Charge M * payload_bits accounted bits per instance
        tag: Frame tag

    Returns:
        The chosen messages at the receiver, None at the sender
    """
    if (messages is None) == (choices is None):
        raise ValueError("exactly one of messages or choices must be given")
    if not 1 <= payload_bits <= 8:
        raise ValueError(f"payload_bits must be in [1, 8], got {payload_bits}")
    with endpoint.protocol('ot'):
        if messages is not None:
            messages = np.asarray(messages, dtype=np.uint8)
            if messages.ndim != 2 or messages.shape[1] != choice_count:
                raise ShapeMismatchError(f"expected messages of shape (n, {choice_count}), got {messages.shape}")
            if messages.size and messages.max() >= (1 << payload_bits):
                raise ShapeMismatchError(f"messages exceed {payload_bits} bits")
            count = messages.shape[0]
            pads = randomness.ot_sender_pads(count, choice_count, payload_bits)
            endpoint.send(_pack(messages ^ pads, payload_bits), tag)
            result = None
        else:
            choices = np.asarray(choices, dtype=np.int64)
            if choices.ndim != 1 or (choices.size and (choices.min() < 0 or choices.max() >= choice_count)):
                raise ShapeMismatchError(f"choices must be a vector of indices in [0, {choice_count})")
            count = choices.size
            pads = randomness.ot_receiver_pads(choices, choice_count, payload_bits)
            masked = _unpack(endpoint.receive(tag), (count, choice_count), payload_bits)
            result = masked[np.arange(count), choices] ^ pads
        if charge:
            endpoint.charge(accounted_bits=count * choice_count * payload_bits, ot_instances=count)
    logger.debug(f"OT batch of {count} x 1-of-{choice_count} ({payload_bits}-bit) done")
    return result


def correlated_and(
    lt: BooleanShare,
    eq_left: BooleanShare,
    eq_right: BooleanShare,
    endpoint,
    randomness: CorrelatedRandomness
) -> Tuple[BooleanShare, BooleanShare]:
    """
    Compute shares of ``lt & eq_right`` and ``eq_left & eq_right`` in one round.

    Party 0 acts as OT sender with fresh output masks; party 1 selects with
    its own share bits. Two 1-of-4 OTs per instance travel in one batch.

    Returns:
        Tuple of (e, f) boolean shares
    """
    n = len(lt)
    if len(eq_left) != n or len(eq_right) != n:
        raise ShapeMismatchError(f"correlated AND operands have lengths {n}, {len(eq_left)}, {len(eq_right)}")
    party = lt.party_id
    with endpoint.protocol('correlated_and'):
        if party == 0:
            r = randomness.private.integers(0, 2, size=(2, n), dtype=np.uint8)
            u = np.array([0, 0, 1, 1], dtype=np.uint8)
            v = np.array([0, 1, 0, 1], dtype=np.uint8)
            right = eq_right.payload[:, None] ^ v
            e_msgs = ((lt.payload[:, None] ^ u) & right) ^ r[0][:, None]
            f_msgs = ((eq_left.payload[:, None] ^ u) & right) ^ r[1][:, None]
            ot_batch(endpoint, randomness, messages=np.vstack([e_msgs, f_msgs]),
                     choice_count=4, payload_bits=1, charge=False, tag='correlated_and')
            e, f = r[0], r[1]
        else:
            choices = np.concatenate([
                2 * lt.payload.astype(np.int64) + eq_right.payload,
                2 * eq_left.payload.astype(np.int64) + eq_right.payload,
            ])
            out = ot_batch(endpoint, randomness, choices=choices, choice_count=4,
                           payload_bits=1, charge=False, tag='correlated_and')
            e, f = out[:n], out[n:]
        endpoint.charge(accounted_bits=CORRELATED_AND_BITS * n)
    return BooleanShare(party, e), BooleanShare(party, f)
