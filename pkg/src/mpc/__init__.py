"""
Two-server secure computation primitives
"""

from .ahe import AheCiphertext, AheKeypair, AhePublicKey, keygen
from .compare import (
    ComparisonTreeState,
    millionaires_cost,
    packed_compare,
    packed_compare_cost,
    packed_compare_rounds
)
from .ot import correlated_and, ot_batch
from .randomness import CorrelatedRandomness
from .select import SelectionResult, SelectionTask, mul_row_partition, mul_row_quick_select
from .sharing import (
    ArithmeticShare,
    BeaverTriple,
    BooleanShare,
    FixedPointCodec,
    Ring,
    SharedMatrix,
    add,
    b2a,
    deal_triples,
    decode_fixed,
    encode_fixed,
    mul,
    reveal,
    split,
    truncate
)
from .shuffle import PermutationSet, ShuffleKeys, matrix_shared_shuffle, matrix_shuffle_plain

__all__ = [
    'AheCiphertext',
    'AheKeypair',
    'AhePublicKey',
    'ArithmeticShare',
    'BeaverTriple',
    'BooleanShare',
    'ComparisonTreeState',
    'CorrelatedRandomness',
    'FixedPointCodec',
    'PermutationSet',
    'Ring',
    'SelectionResult',
    'SelectionTask',
    'SharedMatrix',
    'ShuffleKeys',
    'add',
    'b2a',
    'correlated_and',
    'deal_triples',
    'decode_fixed',
    'encode_fixed',
    'keygen',
    'matrix_shared_shuffle',
    'matrix_shuffle_plain',
    'millionaires_cost',
    'mul',
    'mul_row_partition',
    'mul_row_quick_select',
    'ot_batch',
    'packed_compare',
    'packed_compare_cost',
    'packed_compare_rounds',
    'reveal',
    'split',
    'truncate'
]
