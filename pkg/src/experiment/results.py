import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    'round', 'main_accuracy', 'attack_success_rate', 'skipped', 'qualified',
    'malicious_qualified', 'bytes_sent', 'rounds', 'upload_bytes',
    'gamma', 'acceptance', 'epsilon',
]


@dataclass
class RoundMetrics:
    """
    Metrics of one global round.

    Attributes:
        round: Zero-based round index
        main_accuracy: Accuracy on the clean test set after the round
        attack_success_rate: Fraction of triggered non-target test samples
            classified as the target label
        qualified: Clients whose updates were aggregated
        malicious_qualified: Malicious clients among them
        skipped: True when nobody qualified and the model was kept
        counters: Per-protocol transcript counters of server 0 (secure mode)
        upload_bytes: Bytes each client sends to each server
        gamma: Adaptive attack shift, when it runs
        acceptance: Poisoned updates the adaptive attack expected to pass
        epsilon: ||gamma * sigma|| / ||mu|| of the adaptive attack
    """
    round: int
    main_accuracy: float
    attack_success_rate: float
    qualified: List[int] = field(default_factory=list)
    malicious_qualified: List[int] = field(default_factory=list)
    skipped: bool = False
    counters: Dict[str, dict] = field(default_factory=dict)
    upload_bytes: int = 0
    gamma: Optional[float] = None
    acceptance: Optional[int] = None
    epsilon: Optional[float] = None

    def __post_init__(self):
        for name in ('main_accuracy', 'attack_success_rate'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    def to_record(self) -> Dict[str, Any]:
        return asdict(self)

    def summary_row(self) -> Dict[str, Any]:
        total = self.counters.get('total', {})
        return {
            'round': self.round,
            'main_accuracy': self.main_accuracy,
            'attack_success_rate': self.attack_success_rate,
            'skipped': self.skipped,
            'qualified': ' '.join(str(i) for i in self.qualified),
            'malicious_qualified': len(self.malicious_qualified),
            'bytes_sent': total.get('bytes_sent', 0),
            'rounds': total.get('rounds', 0),
            'upload_bytes': self.upload_bytes,
            'gamma': self.gamma,
            'acceptance': self.acceptance,
            'epsilon': self.epsilon,
        }


def summary_frame(metrics: Sequence[RoundMetrics]) -> pd.DataFrame:
    return pd.DataFrame([m.summary_row() for m in metrics], columns=SUMMARY_COLUMNS)


def write_results(metrics: Sequence[RoundMetrics], out_dir: str, prefix: str = 'run') -> Dict[str, str]:
    """
    Write per-round JSON lines and a CSV summary.

    Args:
        metrics: Rounds in order
        out_dir: Output directory (created if missing)
        prefix: File name prefix

    Returns:
        Dictionary with the 'rounds' and 'summary' file paths
    """
    os.makedirs(out_dir, exist_ok=True)
    rounds_path = os.path.join(out_dir, f'{prefix}_rounds.jsonl')
    summary_path = os.path.join(out_dir, f'{prefix}_summary.csv')
    with open(rounds_path, 'w') as fh:
        for m in metrics:
            fh.write(json.dumps(m.to_record(), sort_keys=True) + '\n')
    summary_frame(metrics).to_csv(summary_path, index=False)
    logger.info(f"Wrote {len(metrics)} rounds to {rounds_path} and {summary_path}")
    return {'rounds': rounds_path, 'summary': summary_path}


def read_rounds(path: str) -> pd.DataFrame:
    return pd.read_json(path, lines=True)
