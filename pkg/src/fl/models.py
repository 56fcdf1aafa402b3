import logging
from typing import List, Optional, Tuple

import numpy as np
from sklearn.metrics import accuracy_score

from .data_loader import ToyDataset

logger = logging.getLogger(__name__)

ARCHITECTURES = ('logreg', 'mlp')


class ToyModel:
    """
    Softmax classifier with a flat parameter vector.

    ``logreg`` is multinomial logistic regression; ``mlp`` adds one tanh
    hidden layer. Parameters are laid out layer by layer, weights before
    biases.
    """

    def __init__(self, features: int, classes: int, arch: str = 'mlp', hidden: int = 32, seed: int = 0):
        if arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {arch!r}; choose from {ARCHITECTURES}")
        self.features = features
        self.classes = classes
        self.arch = arch
        self.hidden = hidden
        rng = np.random.default_rng(seed)
        blocks = []
        for fan_in, fan_out in self._layers():
            blocks.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=fan_in * fan_out))
            blocks.append(np.zeros(fan_out))
        self.params = np.concatenate(blocks)

    def _layers(self) -> List[Tuple[int, int]]:
        if self.arch == 'logreg':
            return [(self.features, self.classes)]
        return [(self.features, self.hidden), (self.hidden, self.classes)]

    @property
    def layer_sizes(self) -> List[int]:
        sizes = []
        for fan_in, fan_out in self._layers():
            sizes.extend([fan_in * fan_out, fan_out])
        return sizes

    @property
    def parameter_count(self) -> int:
        return int(self.params.size)

    def copy(self) -> 'ToyModel':
        clone = object.__new__(ToyModel)
        clone.__dict__.update(self.__dict__)
        clone.params = self.params.copy()
        return clone

    def _unpack(self, params: np.ndarray) -> List[np.ndarray]:
        arrays = []
        start = 0
        for fan_in, fan_out in self._layers():
            arrays.append(params[start:start + fan_in * fan_out].reshape(fan_in, fan_out))
            start += fan_in * fan_out
            arrays.append(params[start:start + fan_out])
            start += fan_out
        return arrays

    def _forward(self, X: np.ndarray, params: np.ndarray):
        arrays = self._unpack(params)
        if self.arch == 'logreg':
            return X @ arrays[0] + arrays[1], None
        hidden = np.tanh(X @ arrays[0] + arrays[1])
        return hidden @ arrays[2] + arrays[3], hidden

    def logits(self, X: np.ndarray, params: Optional[np.ndarray] = None) -> np.ndarray:
        return self._forward(X, self.params if params is None else params)[0]

    @staticmethod
    def _softmax(logits: np.ndarray) -> np.ndarray:
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        return exp / exp.sum(axis=1, keepdims=True)

    def loss(self, X: np.ndarray, y: np.ndarray, params: Optional[np.ndarray] = None) -> float:
        """Mean cross-entropy."""
        logits = self.logits(X, params)
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        return float(-log_probs[np.arange(len(y)), y].mean())

    def gradient(self, X: np.ndarray, y: np.ndarray, params: Optional[np.ndarray] = None) -> np.ndarray:
        """Analytic gradient of :meth:`loss` as a flat vector."""
        params = self.params if params is None else params
        logits, hidden = self._forward(X, params)
        delta = self._softmax(logits)
        delta[np.arange(len(y)), y] -= 1.0
        delta /= len(y)
        arrays = self._unpack(params)
        if self.arch == 'logreg':
            return np.concatenate([(X.T @ delta).ravel(), delta.sum(axis=0)])
        grad_w2 = hidden.T @ delta
        grad_b2 = delta.sum(axis=0)
        back = (delta @ arrays[2].T) * (1.0 - hidden ** 2)
        grad_w1 = X.T @ back
        grad_b1 = back.sum(axis=0)
        return np.concatenate([grad_w1.ravel(), grad_b1, grad_w2.ravel(), grad_b2])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.logits(X).argmax(axis=1)

    def accuracy(self, dataset: ToyDataset) -> float:
        if len(dataset) == 0:
            return 0.0
        return float(accuracy_score(dataset.labels, self.predict(dataset.features)))


def local_train(
    model: ToyModel,
    dataset: ToyDataset,
    epochs: int = 1,
    batch_size: int = 16,
    learning_rate: float = 0.05,
    momentum: float = 0.9,
    seed: int = 0,
    sign_flip: bool = False
) -> np.ndarray:
    """
    Mini-batch SGD with momentum starting from the global model.

    Args:
        model: Global model (left unchanged)
        dataset: Local data
        epochs: Passes over the local data
        batch_size: Mini-batch size
        learning_rate: Step size
        momentum: Momentum coefficient
        seed: Seed of the batch order
        sign_flip: Step along +gradient instead of -gradient

    Returns:
        Update g = w_local - w_global
    """
    params = model.params.copy()
    velocity = np.zeros_like(params)
    rng = np.random.default_rng(seed)
    direction = 1.0 if sign_flip else -1.0
    n = len(dataset)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start:start + batch_size]
            grad = model.gradient(dataset.features[batch], dataset.labels[batch], params)
            velocity = momentum * velocity + grad
            params += direction * learning_rate * velocity
    return params - model.params
