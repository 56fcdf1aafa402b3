"""
Byzantine poisoning attacks on the toy federated harness.

Data attacks (label flipping, backdoor) rewrite a malicious client's local
dataset, SignFlipping changes its training loop, and the omniscient update
attacks (noise, ALIE, MinMax, IPM) replace its update outright.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import stats

from ..fl.data_loader import ToyDataset
from ..fl.models import ToyModel, local_train

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class AttackContext:
    """
    What an omniscient adversary knows in one round.

    Attributes:
        updates: Honestly computed updates of all m clients, one per row
        malicious: Indices of the clients the adversary controls
        seed: Seed for randomized attacks
    """
    updates: np.ndarray
    malicious: List[int]
    seed: int = 0
    benign: List[int] = field(init=False)

    def __post_init__(self):
        self.updates = np.atleast_2d(np.asarray(self.updates, dtype=np.float64))
        m = self.updates.shape[0]
        self.malicious = sorted(int(i) for i in self.malicious)
        if len(self.malicious) >= m:
            raise ValueError(f"{len(self.malicious)} malicious clients out of {m}")
        self.benign = [i for i in range(m) if i not in set(self.malicious)]

    @property
    def clients(self) -> int:
        return self.updates.shape[0]

    @property
    def benign_updates(self) -> np.ndarray:
        return self.updates[self.benign]

    @property
    def mean(self) -> np.ndarray:
        return self.benign_updates.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        return self.benign_updates.std(axis=0)

    def replicate(self, poisoned: np.ndarray) -> np.ndarray:
        """The same poisoned update for every malicious client."""
        return np.tile(poisoned, (len(self.malicious), 1))

    def assemble(self, poisoned: np.ndarray) -> np.ndarray:
        """All m updates with malicious rows replaced."""
        out = self.updates.copy()
        poisoned = np.atleast_2d(poisoned)
        if poisoned.shape[0] == 1:
            poisoned = self.replicate(poisoned[0])
        out[self.malicious] = poisoned
        return out


def label_flipping(dataset: ToyDataset, classes: Optional[int] = None) -> ToyDataset:
    """Replace every label y by c - 1 - y."""
    c = dataset.classes if classes is None else classes
    return ToyDataset(dataset.features.copy(), c - 1 - dataset.labels, dataset.classes)


def sign_flipping(model: ToyModel, dataset: ToyDataset, **train_kwargs) -> np.ndarray:
    """Local training that ascends the loss at every step."""
    return local_train(model, dataset, sign_flip=True, **train_kwargs)


def noise_attack(shape, mean: float = 0.0, std: float = 1.0, seed: int = 0) -> np.ndarray:
    """I.i.d. normal update entries."""
    return np.random.default_rng(seed).normal(mean, std, size=shape)


def alie_alpha(clients: int, malicious: int, quantile: Optional[float] = None) -> float:
    """
    Standard-normal quantile used by ALIE.

    Args:
        clients: m
        malicious: |C'|
        quantile: Override of the default (m - floor(m/2 + 1)) / (m - |C'|)
    """
    if malicious >= clients:
        raise ValueError(f"{malicious} malicious clients out of {clients}")
    if quantile is None:
        quantile = (clients - int(np.floor(clients / 2 + 1))) / (clients - malicious)
    return float(stats.norm.ppf(quantile))


def alie(ctx: AttackContext, quantile: Optional[float] = None) -> np.ndarray:
    """mu + sigma * alpha for every malicious client."""
    alpha = alie_alpha(ctx.clients, len(ctx.malicious), quantile)
    logger.debug(f"ALIE alpha = {alpha:.4f}")
    return ctx.replicate(ctx.mean + ctx.std * alpha)


def min_max_alpha(ctx: AttackContext, iterations: int = 20, upper: float = 50.0) -> float:
    """
    Largest alpha keeping mu - alpha * sigma within the benign diameter.

    Binary search on [0, upper]; the feasible set is an interval starting
    at 0 because the distance to the farthest benign update is convex in
    alpha and the mean itself is always feasible.
    """
    benign = ctx.benign_updates
    diffs = benign[:, None, :] - benign[None, :, :]
    diameter = float(np.sqrt((diffs ** 2).sum(axis=2)).max())
    if diameter == 0.0:
        return 0.0
    mean, std = ctx.mean, ctx.std

    def feasible(alpha: float) -> bool:
        return float(np.linalg.norm(benign - (mean - alpha * std), axis=1).max()) <= diameter

    low, high = 0.0, upper
    for _ in range(iterations):
        mid = (low + high) / 2.0
        if feasible(mid):
            low = mid
        else:
            high = mid
    return low


def min_max(ctx: AttackContext, iterations: int = 20, upper: float = 50.0) -> Tuple[np.ndarray, float]:
    """
    mu - alpha * sigma with alpha from :func:`min_max_alpha`.

    Returns:
        Tuple of (poisoned updates, alpha)
    """
    alpha = min_max_alpha(ctx, iterations, upper)
    logger.debug(f"MinMax alpha = {alpha:.4f}")
    return ctx.replicate(ctx.mean - alpha * ctx.std), alpha


def ipm(ctx: AttackContext, alpha: float = 100.0) -> np.ndarray:
    """Inner product manipulation: -alpha * mu."""
    return ctx.replicate(-alpha * ctx.mean)


def apply_trigger(features: np.ndarray, trigger_features: int = 3, trigger_value: float = 8.0) -> np.ndarray:
    stamped = np.array(features, dtype=np.float64, copy=True)
    stamped[:, :trigger_features] = trigger_value
    return stamped


def backdoor(
    dataset: ToyDataset,
    trigger_features: int = 3,
    trigger_value: float = 8.0,
    target: int = 0,
    poison_fraction: float = 0.5,
    seed: int = 0
) -> ToyDataset:
    """
    Stamp the trigger on a fraction of samples and relabel them as ``target``.

    Returns:
        New dataset; round(poison_fraction * N) samples are poisoned
    """
    n = len(dataset)
    count = int(round(poison_fraction * n))
    chosen = np.random.default_rng(seed).choice(n, size=count, replace=False)
    features = dataset.features.copy()
    labels = dataset.labels.copy()
    features[chosen] = apply_trigger(features[chosen], trigger_features, trigger_value)
    labels[chosen] = target
    return ToyDataset(features, labels, dataset.classes)


def backdoor_test_set(
    dataset: ToyDataset,
    trigger_features: int = 3,
    trigger_value: float = 8.0,
    target: int = 0
) -> ToyDataset:
    """Triggered copies of every test sample whose label is not the target."""
    keep = dataset.labels != target
    features = apply_trigger(dataset.features[keep], trigger_features, trigger_value)
    return ToyDataset(features, dataset.labels[keep], dataset.classes)
