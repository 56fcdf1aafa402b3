"""
Poisoning attacks and the adaptive attack against the defense
"""

from .adaptive import AdaptiveResult, adaptive_flurp, shift_ratio
from .poisoning import (
    AttackContext,
    alie,
    alie_alpha,
    apply_trigger,
    backdoor,
    backdoor_test_set,
    ipm,
    label_flipping,
    min_max,
    min_max_alpha,
    noise_attack,
    sign_flipping
)

__all__ = [
    'AdaptiveResult',
    'AttackContext',
    'adaptive_flurp',
    'alie',
    'alie_alpha',
    'apply_trigger',
    'backdoor',
    'backdoor_test_set',
    'ipm',
    'label_flipping',
    'min_max',
    'min_max_alpha',
    'noise_attack',
    'shift_ratio',
    'sign_flipping'
]
