"""
Configuration: process settings from the environment and experiment parameters.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, Optional

from dotenv import load_dotenv

from .exceptions import ConfigError

logger = logging.getLogger(__name__)

ATTACKS = (
    'none', 'label_flipping', 'sign_flipping', 'noise', 'alie',
    'minmax', 'ipm', 'backdoor', 'adaptive',
)
SAMPLERS = ('linf', 'row', 'align', 'maxpool')


@dataclass(frozen=True)
class Settings:
    """
    Process-level settings read from the environment (and an optional ``.env``).

    ``party_seed`` seeds this server's Paillier key pair and private
    randomness in tcp mode. It must differ between the two servers; when
    unset a fresh seed is drawn per session.
    """
    log_level: str = 'INFO'
    host: str = '127.0.0.1'
    port: int = 47000
    recv_timeout: float = 300.0
    connect_retries: int = 50
    party_seed: Optional[int] = None


def load_settings() -> Settings:
    """
    Load process settings.

    Returns:
        Settings populated from FLURP_* environment variables
    """
    load_dotenv()
    party_seed = os.getenv('FLURP_PARTY_SEED')
    return Settings(
        log_level=os.getenv('FLURP_LOG_LEVEL', 'INFO').upper(),
        host=os.getenv('FLURP_HOST', '127.0.0.1'),
        port=int(os.getenv('FLURP_PORT', '47000')),
        recv_timeout=float(os.getenv('FLURP_RECV_TIMEOUT', '300')),
        connect_retries=int(os.getenv('FLURP_CONNECT_RETRIES', '50')),
        party_seed=int(party_seed) if party_seed else None,
    )


@dataclass
class ExperimentConfig:
    """
    All parameters of one federated-learning run.

    Attributes mirror the ``run`` command flags; ``window=None`` selects the
    desk-scale default window for the model's parameter count and
    ``bits=None`` a ring width matched to the LUR length.
    """
    clients: int = 10
    malicious: float = 0.4
    attack: str = 'none'
    ipm_alpha: float = 100.0
    noise_mean: float = 0.0
    noise_std: float = 1.0
    alie_quantile: Optional[float] = None
    window: Optional[int] = None
    sampler: str = 'linf'
    bits: Optional[int] = None
    fixed_bits: int = 16
    lur_fixed_bits: int = 8
    chunk_bits: int = 4
    rounds: int = 20
    epochs: int = 1
    batch_size: int = 16
    learning_rate: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    mode: str = 'secure'
    defense: str = 'flurp'
    transport: str = 'inproc'
    listen: Optional[str] = None
    connect: Optional[str] = None
    key_bits: int = 1024
    classes: int = 4
    features: int = 64
    samples_per_class: int = 300
    separation: float = 4.0
    test_fraction: float = 0.2
    arch: str = 'mlp'
    hidden: int = 32
    partition: str = 'iid'
    dirichlet_alpha: float = 1.0
    trigger_features: int = 3
    trigger_value: float = 8.0
    poison_fraction: float = 0.5
    target_label: int = 0
    strict_overflow: bool = False
    extra: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.clients < 2:
            raise ConfigError("at least two clients are required")
        if not 0.0 <= self.malicious < 0.5:
            raise ConfigError(f"malicious fraction must be in [0, 0.5), got {self.malicious}")
        if self.window is not None and self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if self.bits is not None and self.bits not in (32, 64):
            raise ConfigError(f"ring width must be 32 or 64, got {self.bits}")
        width = self.bits or 32
        if self.fixed_bits >= width - 1 or self.lur_fixed_bits >= width - 1:
            raise ConfigError("fractional bits must leave room for the integer part")
        if self.chunk_bits not in (2, 4, 8):
            raise ConfigError(f"chunk bits must be 2, 4 or 8, got {self.chunk_bits}")
        if self.attack not in ATTACKS:
            raise ConfigError(f"unknown attack {self.attack!r}; choose from {ATTACKS}")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"unknown sampler {self.sampler!r}; choose from {SAMPLERS}")
        if self.mode not in ('secure', 'oracle'):
            raise ConfigError(f"mode must be 'secure' or 'oracle', got {self.mode!r}")
        if self.defense not in ('flurp', 'fedavg'):
            raise ConfigError(f"defense must be 'flurp' or 'fedavg', got {self.defense!r}")
        if self.transport not in ('inproc', 'tcp'):
            raise ConfigError(f"transport must be 'inproc' or 'tcp', got {self.transport!r}")
        if self.transport == 'tcp' and (self.listen is None) == (self.connect is None):
            raise ConfigError("tcp transport needs exactly one of --listen or --connect")
        if self.key_bits not in (512, 1024):
            raise ConfigError(f"key bits must be 512 or 1024, got {self.key_bits}")
        if self.partition not in ('iid', 'dirichlet'):
            raise ConfigError(f"partition must be 'iid' or 'dirichlet', got {self.partition!r}")
        if self.arch not in ('logreg', 'mlp'):
            raise ConfigError(f"arch must be 'logreg' or 'mlp', got {self.arch!r}")
        if self.rounds < 1 or self.epochs < 0:
            raise ConfigError("rounds must be >= 1 and epochs >= 0")

    @property
    def malicious_count(self) -> int:
        return int(self.malicious * self.clients)

    @property
    def party_id(self) -> Optional[int]:
        """Party run by this process in tcp mode (listener is server 0)."""
        if self.transport != 'tcp':
            return None
        return 0 if self.listen is not None else 1

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def with_overrides(self, **overrides: Any) -> 'ExperimentConfig':
        """Return a copy with the non-None overrides applied."""
        values = self.to_dict()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return ExperimentConfig(**values)

    @classmethod
    def from_json(cls, path: str) -> 'ExperimentConfig':
        """
        Load a configuration file.

        Args:
            path: JSON file whose keys are ExperimentConfig field names

        Returns:
            Validated configuration
        """
        with open(path) as fh:
            data = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        logger.debug(f"Loaded config from {path}: {data}")
        return cls(**data)
