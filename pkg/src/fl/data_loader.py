import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import pandas as pd
from sklearn.datasets import make_blobs as sklearn_make_blobs
from sklearn.model_selection import train_test_split as sklearn_split

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class ToyDataset:
    """Feature matrix with integer labels in [0, classes)."""
    features: np.ndarray
    labels: np.ndarray
    classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"features {self.features.shape} and labels {self.labels.shape} do not match"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise ValueError(f"labels must lie in [0, {self.classes})")

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def dims(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> 'ToyDataset':
        indices = np.asarray(indices, dtype=np.int64)
        return ToyDataset(self.features[indices], self.labels[indices], self.classes)

    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.classes)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.features, columns=[f"x{i}" for i in range(self.dims)])
        frame['label'] = self.labels
        return frame


def _class_centers(classes: int, dims: int, separation: float, rng: np.random.Generator) -> np.ndarray:
    """Centers at pairwise distance ``separation`` (orthonormal directions scaled by sep / sqrt 2)."""
    if dims >= classes:
        basis, _ = np.linalg.qr(rng.normal(size=(dims, classes)))
        directions = basis.T
    else:
        directions = rng.normal(size=(classes, dims))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return directions * (separation / np.sqrt(2.0))


def make_blobs(
    classes: int = 4,
    dims: int = 64,
    per_class: int = 300,
    separation: float = 4.0,
    seed: int = 0
) -> ToyDataset:
    """
    Gaussian class clusters with unit standard deviation.

    Args:
        classes: Number of classes c
        dims: Feature dimension
        per_class: Samples drawn for every class
        separation: Distance between class centers, in standard deviations
        seed: Random seed

    Returns:
        Shuffled ToyDataset with exactly ``per_class`` samples of each class
    """
    rng = np.random.default_rng(seed)
    centers = _class_centers(classes, dims, separation, rng)
    features, labels = sklearn_make_blobs(
        n_samples=[per_class] * classes,
        n_features=dims,
        centers=centers,
        cluster_std=1.0,
        random_state=seed
    )
    logger.debug(f"Generated {classes} blobs of {per_class} samples in {dims} dims")
    return ToyDataset(features, labels, classes)


def train_test_split(dataset: ToyDataset, test_fraction: float = 0.2, seed: int = 0) -> Tuple[ToyDataset, ToyDataset]:
    """Stratified split into (train, test)."""
    train_idx, test_idx = sklearn_split(
        np.arange(len(dataset)),
        test_size=test_fraction,
        random_state=seed,
        stratify=dataset.labels
    )
    return dataset.subset(np.sort(train_idx)), dataset.subset(np.sort(test_idx))


def partition(
    dataset: ToyDataset,
    clients: int,
    mode: str = 'iid',
    alpha: float = 1.0,
    seed: int = 0,
    max_attempts: int = 100
) -> List[ToyDataset]:
    """
    Split a dataset into disjoint client datasets.

    Args:
        dataset: Dataset to split
        clients: Number of clients m
        mode: 'iid' (even random split) or 'dirichlet'
        alpha: Dirichlet concentration; smaller is more skewed
        seed: Random seed
        max_attempts: Dirichlet redraws allowed until every client is non-empty

    Returns:
        List of m ToyDatasets covering the input exactly once
    """
    n = len(dataset)
    if clients < 1 or clients > n:
        raise ValueError(f"cannot split {n} samples among {clients} clients")
    rng = np.random.default_rng(seed)
    if mode == 'iid':
        parts = np.array_split(rng.permutation(n), clients)
        return [dataset.subset(np.sort(p)) for p in parts]
    if mode != 'dirichlet':
        raise ValueError(f"unknown partition mode {mode!r}")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")

    for attempt in range(max_attempts):
        buckets: List[List[int]] = [[] for _ in range(clients)]
        for label in range(dataset.classes):
            members = rng.permutation(np.flatnonzero(dataset.labels == label))
            proportions = rng.dirichlet(np.full(clients, alpha))
            cuts = (np.cumsum(proportions) * members.size).astype(np.int64)[:-1]
            for bucket, chunk in zip(buckets, np.split(members, cuts)):
                bucket.extend(chunk.tolist())
        if min(len(b) for b in buckets) > 0:
            return [dataset.subset(np.sort(b)) for b in buckets]
        logger.debug(f"Dirichlet draw {attempt + 1} left a client empty; redrawing")
    raise ValueError(f"no Dirichlet({alpha}) split gave every one of {clients} clients a sample")
