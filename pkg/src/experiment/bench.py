"""
Protocol microbenchmarks: batched comparison, shuffled median selection
and the shared SED matrix. Each returns one row (or a frame of rows) of
measured counters next to the closed-form cost where one exists.
"""

import logging
import time
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd

from ..defense.flurp import FlurpDefense, sed_multiplication_count, shared_sed_matrix
from ..mpc.ahe import AheKeypair, keygen
from ..mpc.compare import millionaires_cost, packed_compare, packed_compare_cost
from ..mpc.randomness import CorrelatedRandomness
from ..mpc.select import SelectionTask, mul_row_quick_select, select_plain
from ..mpc.sharing import Ring, SharedMatrix, open_bits, open_share, split
from ..mpc.shuffle import PermutationSet, ShuffleKeys, matrix_shared_shuffle
from ..network.transport import in_process_pair, run_pair

logger = logging.getLogger(__name__)

MEDIAN_SWEEP = (20, 40, 60, 80, 100)


def bench_compare(pairs: int, bits: int = 32, chunk_bits: int = 4, seed: int = 0) -> Dict:
    """
    Compare ``pairs`` random signed pairs and report measured vs formula cost.

    Returns:
        Row with measured rounds/bits/bytes, the formula bits, the unbatched
        millionaires' figures and the mismatch count against plaintext
    """
    ring = Ring(bits)
    rng = np.random.default_rng(seed)
    bound = 1 << (bits - 2)
    x = rng.integers(-bound, bound, size=pairs, dtype=np.int64)
    y = rng.integers(-bound, bound, size=pairs, dtype=np.int64)
    x0, x1 = split(ring.from_signed(x), [seed, 1], ring)
    y0, y1 = split(ring.from_signed(y), [seed, 2], ring)

    def party(x_share, y_share, party_id):
        def body(endpoint):
            randomness = CorrelatedRandomness(seed, party_id)
            bits_share = packed_compare(x_share, y_share, endpoint, randomness, chunk_bits)
            measured = endpoint.protocol_totals['compare'].copy()
            return measured, open_bits(bits_share, endpoint, 'bench-compare')
        return body

    started = time.time()
    (measured, opened), _ = run_pair(party(x0, y0, 0), party(x1, y1, 1))
    elapsed = time.time() - started
    mismatches = int(np.count_nonzero(opened != (x < y)))
    mill_bits, mill_rounds = millionaires_cost(pairs, bits, chunk_bits)
    row = {
        'pairs': pairs,
        'bits': bits,
        'chunk_bits': chunk_bits,
        'rounds': measured.rounds,
        'accounted_bits': measured.accounted.get('accounted_bits', 0),
        'formula_bits': packed_compare_cost(pairs, bits, chunk_bits),
        'bytes_sent': measured.bytes_sent,
        'millionaires_bits': mill_bits,
        'millionaires_rounds': mill_rounds,
        'wall_time': elapsed,
        'mismatches': mismatches,
    }
    logger.info(f"bench-compare n={pairs}: {row['rounds']} rounds, {row['accounted_bits']} bits, {elapsed:.3f}s")
    return row


def bench_median_one(
    clients: int,
    key_bits: int = 1024,
    seed: int = 0,
    chunk_bits: int = 4,
    bits: int = 32,
    keypairs: Optional[Sequence[AheKeypair]] = None
) -> Dict:
    """
    Shuffle and select row medians of one random m x m shared matrix.

    Key exchange is excluded from the measured counters.
    """
    ring = Ring(bits)
    rng = np.random.default_rng([seed, clients])
    matrix = rng.integers(0, 1 << 20, size=(clients, clients), dtype=np.int64).astype(np.uint64)
    share0, share1 = split(matrix, [seed, clients], ring)
    pairs = keypairs or [keygen(key_bits), keygen(key_bits)]
    target = clients // 2

    def party(share, party_id):
        def body(endpoint):
            keys = ShuffleKeys.establish(endpoint, key_bits, keypair=pairs[party_id])
            randomness = CorrelatedRandomness(seed, party_id)
            before = endpoint.snapshot()
            perms = PermutationSet.random([clients] * clients, randomness.private, owner=party_id)
            shuffled = matrix_shared_shuffle(SharedMatrix.from_square(share), perms, keys, endpoint, randomness)
            task = SelectionTask(shuffled, [target] * clients)
            medians = mul_row_quick_select(task, endpoint, randomness, chunk_bits).as_share(range(clients))
            measured = endpoint.counters.since(before)
            return measured, open_share(medians, endpoint, 'bench-median')
        return body

    started = time.time()
    (measured, opened), _ = run_pair(party(share0, 0), party(share1, 1), pair=in_process_pair())
    elapsed = time.time() - started
    expected = np.array([select_plain(row.tolist(), target) for row in matrix.astype(np.int64)], dtype=np.uint64)
    row = {
        'clients': clients,
        'bytes_sent': measured.bytes_sent,
        'bytes_received': measured.bytes_received,
        'rounds': measured.rounds,
        'ciphertexts': measured.accounted.get('ciphertexts', 0),
        'wall_time': elapsed,
        'mismatches': int(np.count_nonzero(opened != expected)),
    }
    logger.info(f"bench-median m={clients}: {row['bytes_sent']} bytes, {row['rounds']} rounds, {elapsed:.2f}s")
    return row


def bench_median(
    clients: Sequence[int] = MEDIAN_SWEEP,
    key_bits: int = 1024,
    seed: int = 0,
    chunk_bits: int = 4,
    keypairs: Optional[Sequence[AheKeypair]] = None
) -> pd.DataFrame:
    pairs = keypairs or [keygen(key_bits), keygen(key_bits)]
    rows = [bench_median_one(m, key_bits, seed, chunk_bits, keypairs=pairs) for m in clients]
    return pd.DataFrame(rows)


def bench_sed(
    clients: int = 10,
    parameters: int = 1 << 14,
    window: int = 1 << 6,
    samplers: Sequence[str] = ('linf', 'row'),
    bits: Optional[int] = None,
    seed: int = 0
) -> pd.DataFrame:
    """
    Shared SED matrix cost per sampler on random updates.

    Returns:
        Frame with sampler, vector length, ring width, share multiplications
        (measured and C(m, 2) * d), bytes and wall time
    """
    updates = np.random.default_rng(seed).normal(0.0, 0.01, size=(clients, parameters))
    rows = []
    for sampler in samplers:
        defense = FlurpDefense(parameters, window=window, sampler=sampler, bits=bits)
        _, lurs = defense.encode(updates)
        shares = [split(lur, [seed, i], defense.ring, defense.lur_codec.fractional_bits) for i, lur in enumerate(lurs)]

        def party(party_id):
            def body(endpoint):
                randomness = CorrelatedRandomness(seed, party_id)
                shared_sed_matrix([s[party_id] for s in shares], endpoint, randomness)
                return endpoint.protocol_totals['sed'].copy()
            return body

        started = time.time()
        measured, _ = run_pair(party(0), party(1))
        elapsed = time.time() - started
        dimension = lurs.shape[1]
        rows.append({
            'sampler': sampler,
            'clients': clients,
            'parameters': parameters,
            'dimension': dimension,
            'bits': defense.ring.bits,
            'multiplications': measured.accounted.get('multiplications', 0),
            'formula_multiplications': sed_multiplication_count(clients, dimension),
            'bytes_sent': measured.bytes_sent,
            'wall_time': elapsed,
        })
        logger.info(f"bench-sed {sampler}: d={dimension}, {rows[-1]['multiplications']} multiplications, {elapsed:.3f}s")
    return pd.DataFrame(rows)
