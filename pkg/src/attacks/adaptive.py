"""
Adaptive attack tuned against the proximity defense.

The adversary colludes with a copy of the plaintext defense and picks the
shift gamma in mu + gamma * sigma that gets the most poisoned updates
accepted.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence

import numpy as np

from ..exceptions import NoQualifiedClientsError
from .poisoning import AttackContext

logger = logging.getLogger(__name__)

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0

DefenseOracle = Callable[[np.ndarray], Sequence[int]]


@dataclass
class AdaptiveResult:
    gamma: float
    updates: np.ndarray
    acceptance: int
    epsilon: float
    evaluated: Dict[float, int] = field(default_factory=dict)


def shift_ratio(gamma: float, ctx: AttackContext) -> float:
    """||gamma * sigma|| / ||mu||."""
    mean_norm = float(np.linalg.norm(ctx.mean))
    shift = float(np.linalg.norm(gamma * ctx.std))
    return shift / mean_norm if mean_norm > 0 else float('inf')


def adaptive_flurp(
    ctx: AttackContext,
    oracle: DefenseOracle,
    upper: float = 5.0,
    step: float = 0.25,
    refine_steps: int = 10
) -> AdaptiveResult:
    """
    Search gamma maximizing the number of accepted poisoned updates.

    A grid over [0, upper] is followed by golden-section refinement around
    the best grid point. Ties go to the larger gamma.

    Args:
        ctx: Attack context
        oracle: Maps all m updates to the qualified client indices
        upper: Grid upper bound
        step: Grid spacing
        refine_steps: Golden-section iterations

    Returns:
        AdaptiveResult with the best evaluated gamma
    """
    malicious = set(ctx.malicious)
    evaluated: Dict[float, int] = {}

    def acceptance(gamma: float) -> int:
        gamma = float(gamma)
        if gamma not in evaluated:
            poisoned = ctx.mean + gamma * ctx.std
            try:
                qualified = oracle(ctx.assemble(poisoned))
            except NoQualifiedClientsError:
                qualified = []
            evaluated[gamma] = len(malicious.intersection(int(i) for i in qualified))
        return evaluated[gamma]

    def best() -> float:
        return max(evaluated, key=lambda g: (evaluated[g], g))

    for gamma in np.arange(0.0, upper + step / 2, step):
        acceptance(round(float(gamma), 10))
    centre = best()
    low, high = max(0.0, centre - step), min(upper, centre + step)
    left = high - GOLDEN * (high - low)
    right = low + GOLDEN * (high - low)
    for _ in range(refine_steps):
        if acceptance(left) > acceptance(right):
            high = right
            right, left = left, high - GOLDEN * (high - low)
        else:
            low = left
            left, right = right, low + GOLDEN * (high - low)
    gamma = best()
    result = AdaptiveResult(
        gamma=gamma,
        updates=ctx.replicate(ctx.mean + gamma * ctx.std),
        acceptance=evaluated[gamma],
        epsilon=shift_ratio(gamma, ctx),
        evaluated=dict(evaluated),
    )
    logger.debug(f"Adaptive gamma={gamma:.4f} accepted {result.acceptance}/{len(malicious)}")
    return result
