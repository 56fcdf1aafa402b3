"""
Byzantine-robust aggregation over secret-shared updates
"""

from .flurp import (
    ClientShares,
    DefenseOutcome,
    FlurpDefense,
    QualificationVector,
    aggregate,
    client_upload_bytes,
    neighbor_and_qualify,
    plaintext_defense,
    ring_bits_for,
    sed_multiplication_count,
    shared_sed_matrix
)
from .sampling import (
    LUR,
    align_sample,
    default_window,
    linf_sample,
    maxpool_sample,
    row_sample,
    sample
)

__all__ = [
    'ClientShares',
    'DefenseOutcome',
    'FlurpDefense',
    'LUR',
    'QualificationVector',
    'aggregate',
    'align_sample',
    'client_upload_bytes',
    'default_window',
    'linf_sample',
    'maxpool_sample',
    'neighbor_and_qualify',
    'plaintext_defense',
    'ring_bits_for',
    'row_sample',
    'sample',
    'sed_multiplication_count',
    'shared_sed_matrix'
]
